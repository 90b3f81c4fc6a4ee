"""Two-qubit ion-photon states, measurement settings and Born-rule probabilities.

Basis ordering is fixed as ``|up,H>, |up,V>, |down,H>, |down,V>`` (ion first).
Ion ``|up>`` is the D' Zeeman level and ``|down>`` is S (the D level is mapped
onto S before the travel time). Z eigenvalues: ``up -> +1``, ``down -> -1``,
``H -> +1``, ``V -> -1``.
"""

from __future__ import annotations

import itertools

import numpy as np

BASIS_LABELS = ("up,H", "up,V", "down,H", "down,V")
BASIS_HEADER = "# basis: |up,H>, |up,V>, |down,H>, |down,V>"

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# every ion basis paired with every photon basis
SETTINGS = tuple(itertools.product("XYZ", "XYZ"))
# outcome pairs in the order used for probability/count vectors
OUTCOMES = ((+1, +1), (+1, -1), (-1, +1), (-1, -1))

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-9


class InvalidStateError(ValueError):
    """Raised when a matrix violates one of the density-matrix invariants."""


def _eigenprojectors(axis: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the (+1, -1) eigenprojectors of a single-qubit Pauli axis."""
    s = 1 / np.sqrt(2)
    vecs = {
        "X": (np.array([s, s]), np.array([s, -s])),
        "Y": (np.array([s, 1j * s]), np.array([s, -1j * s])),
        "Z": (np.array([1, 0]), np.array([0, 1])),
    }
    if axis not in vecs:
        raise ValueError(f"unknown measurement basis {axis!r}; expected X, Y or Z")
    plus, minus = (np.asarray(v, dtype=complex) for v in vecs[axis])
    return np.outer(plus, plus.conj()), np.outer(minus, minus.conj())


_PROJECTOR_CACHE: dict[tuple[str, str], np.ndarray] = {}


def setting_projectors(setting: tuple[str, str]) -> np.ndarray:
    """Return the four 4x4 projectors of ``(ion_basis, photon_basis)`` in OUTCOMES order."""
    key = (str(setting[0]).upper(), str(setting[1]).upper())
    if key not in _PROJECTOR_CACHE:
        ion = _eigenprojectors(key[0])
        photon = _eigenprojectors(key[1])
        stack = np.array(
            [np.kron(ion[a], photon[b]) for a in range(2) for b in range(2)]
        )
        stack.setflags(write=False)
        _PROJECTOR_CACHE[key] = stack
    return _PROJECTOR_CACHE[key]


def validate_density_matrix(rho) -> np.ndarray:
    """Check the density-matrix invariants and return ``rho`` as a complex array.

    Raises
    ------
    InvalidStateError
        Naming the first violated invariant (shape, finiteness, hermiticity,
        trace or positivity).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"shape: expected (4, 4), got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("finite: matrix contains NaN or Inf entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITIAN_TOL:
        raise InvalidStateError(f"hermitian: max |rho - rho^dagger| = {herm:.3g}")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise InvalidStateError(f"trace: Tr(rho) = {tr.real:.12g}, expected 1")
    lowest = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lowest < POSITIVITY_TOL:
        raise InvalidStateError(f"positive: smallest eigenvalue {lowest:.3g} < -1e-9")
    return rho


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def bell_state(theta: float) -> np.ndarray:
    """Ideal ion-photon state ``(|up,V> + exp(i theta)|down,H>)/sqrt(2)``."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    s = 1 / np.sqrt(2)
    return np.array([0, s, np.exp(1j * theta) * s, 0], dtype=complex)


def product_state(ion, photon) -> np.ndarray:
    return np.kron(normalize(ion), normalize(photon))


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if abs(np.vdot(psi, psi).real - 1) > 1e-12:
        raise InvalidStateError("norm: pure state amplitudes must satisfy sum |a|^2 = 1")
    return np.outer(psi, psi.conj())


def maximally_mixed() -> np.ndarray:
    return np.eye(4, dtype=complex) / 4


def werner_state(p: float, theta: float = 0.0) -> np.ndarray:
    """``p |psi(theta)><psi(theta)| + (1 - p) I/4``."""
    if not 0 <= p <= 1:
        raise ValueError("Werner weight p must be in [0, 1]")
    return p * pure_density(bell_state(theta)) + (1 - p) * maximally_mixed()


def born_probabilities(rho, setting: tuple[str, str], *, validate: bool = True) -> np.ndarray:
    """Outcome probabilities ``Tr(rho P_a (x) P_b)`` for one measurement setting.

    Returned in :data:`OUTCOMES` order: ``(+,+), (+,-), (-,+), (-,-)``.
    """
    if validate:
        rho = validate_density_matrix(rho)
    projectors = setting_projectors(setting)
    probs = np.real(np.einsum("kij,ji->k", projectors, rho))
    # remove round-off negatives without touching the normalization
    return np.clip(probs, 0.0, None) / max(probs.clip(0.0).sum(), 1e-300)


def all_born_probabilities(rho, settings=SETTINGS) -> np.ndarray:
    """Probabilities for several settings as an array of shape ``(n_settings, 4)``."""
    rho = validate_density_matrix(rho)
    return np.array([born_probabilities(rho, s, validate=False) for s in settings])


def partial_trace(rho, keep: str) -> np.ndarray:
    """Reduced 2x2 state of the ``"ion"`` or the ``"photon"``."""
    rho = validate_density_matrix(rho)
    t = rho.reshape(2, 2, 2, 2)
    if keep == "ion":
        return np.einsum("ajbj->ab", t)
    if keep == "photon":
        return np.einsum("iaib->ab", t)
    raise ValueError(f"keep must be 'ion' or 'photon', got {keep!r}")


def trace_distance(rho, sigma) -> float:
    diff = np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex)
    diff = (diff + diff.conj().T) / 2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    """Random state from the Ginibre ensemble (full rank by default)."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


def format_density_matrix(rho) -> str:
    """Serialize to the text format: basis header plus 4 lines of 4 entries."""
    rho = np.asarray(rho, dtype=complex)
    lines = [BASIS_HEADER]
    for row in rho:
        lines.append(",".join(_format_complex(z) for z in row))
    return "\n".join(lines) + "\n"


def parse_density_matrix(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([complex(tok.strip().replace("i", "j")) for tok in line.split(",")])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse matrix entry ({exc})") from None
    rho = np.array(rows, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected 4 rows of 4 entries, got shape {rho.shape}")
    return rho


def write_density_matrix(path, rho) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_density_matrix(rho))


def read_density_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return parse_density_matrix(fh.read())
