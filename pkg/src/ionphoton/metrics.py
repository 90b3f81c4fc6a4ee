"""Figures of merit for ion-photon states and the local-rotation search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .qstate import PAULI, InvalidStateError, validate_density_matrix

_YY = np.kron(PAULI["Y"], PAULI["Y"])
COHERENCE_FLOOR = 1e-6
# index of |down,H> and |up,V> in the fixed basis ordering
_DOWN_H, _UP_V = 2, 1


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state.

    The square-rooted spectrum of ``sqrt(rho) rho~ sqrt(rho)`` is obtained as
    the singular values of ``A^T (Y x Y) A`` where ``rho = A A^dagger``. This
    avoids taking square roots of round-off eigenvalues, which would otherwise
    leak ~1e-8 errors into the result for pure states.
    """
    rho = validate_density_matrix(rho)
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    a = v * np.sqrt(np.clip(w, 0.0, None))
    tau = a.T @ _YY @ a
    lam = np.sort(np.linalg.svd(tau, compute_uv=False))[::-1]
    c = lam[0] - lam[1] - lam[2] - lam[3]
    if c < -1e-9:
        return 0.0
    return float(min(max(c, 0.0), 1.0))


def fidelity(rho, psi) -> float:
    """``<psi| rho |psi>`` for a density matrix and a pure target."""
    rho = np.asarray(rho, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    f = np.vdot(psi, rho @ psi)
    if abs(f.imag) > 1e-10:
        raise InvalidStateError("hermitian: fidelity has an imaginary part; rho is not Hermitian")
    return float(f.real)


def modulus_fidelity(rho, psi) -> float:
    """Fidelity of the entrywise modulus ``|rho_ij|`` with ``psi``.

    This is the variant reported for the absolute-value plots. The diagonal of a
    density matrix is already non-negative, so ``|rho|`` keeps unit trace and the
    renormalization is a no-op; it is applied anyway for non-ideal inputs.
    ``|rho|`` is not guaranteed to be positive semidefinite.
    """
    m = np.abs(np.asarray(rho, dtype=complex)).astype(complex)
    m /= np.trace(m).real
    return fidelity(m, psi)


def purity(rho) -> float:
    rho = validate_density_matrix(rho)
    return float(np.real(np.trace(rho @ rho)))


def coherence_phase(rho) -> float:
    """Argument of ``<down,H| rho |up,V>`` in ``(-pi, pi]``."""
    rho = np.asarray(rho, dtype=complex)
    element = rho[_DOWN_H, _UP_V]
    if abs(element) <= COHERENCE_FLOOR:
        raise ValueError(f"phase undefined: |<down,H|rho|up,V>| = {abs(element):.3g}")
    phase = float(np.angle(element))
    return np.pi if phase == -np.pi else phase


def su2(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``Rz(alpha) Ry(beta) Rz(gamma)`` as a special-unitary matrix."""
    rz = lambda a: np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])  # noqa: E731
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    ry = np.array([[c, -s], [s, c]], dtype=complex)
    return rz(alpha) @ ry @ rz(gamma)


@dataclass(frozen=True)
class LocalRotation:
    """Tensor product of an ion rotation and a photon rotation."""

    parameters: tuple[float, ...]

    @property
    def ion_rotation(self) -> np.ndarray:
        return su2(*self.parameters[:3])

    @property
    def photon_rotation(self) -> np.ndarray:
        return su2(*self.parameters[3:])

    @property
    def matrix(self) -> np.ndarray:
        return np.kron(self.ion_rotation, self.photon_rotation)

    def apply(self, rho) -> np.ndarray:
        r = self.matrix
        return r @ np.asarray(rho, dtype=complex) @ r.conj().T

    @classmethod
    def identity(cls) -> "LocalRotation":
        return cls((0.0,) * 6)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "LocalRotation":
        return cls(tuple(rng.uniform(-np.pi, np.pi, size=6)))


def optimize_local_rotation(rho, target, *, restarts: int = 8, seed: int = 0,
                            tol: float = 1e-8) -> tuple[LocalRotation, float]:
    """Search local rotations ``R`` maximizing ``<target| R rho R^dagger |target>``.

    Nelder-Mead over six Euler angles; restart 0 starts at the identity and the
    others at seeded random angles. The best restart wins (ties go to the lower
    index), and the identity is returned if nothing beats it.
    """
    rho = validate_density_matrix(rho)
    target = np.asarray(target, dtype=complex)

    def loss(x):
        r = np.kron(su2(*x[:3]), su2(*x[3:]))
        phi = r.conj().T @ target
        return -np.vdot(phi, rho @ phi).real

    rng = np.random.default_rng(seed)
    best = LocalRotation.identity()
    best_f = fidelity(rho, target)
    for i in range(restarts):
        x0 = np.zeros(6) if i == 0 else rng.uniform(-np.pi, np.pi, size=6)
        res = minimize(loss, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": tol * 1e-4, "maxiter": 40000,
                                "maxfev": 40000, "adaptive": True})
        f = -float(res.fun)
        if f > best_f + tol * 1e-4:
            best, best_f = LocalRotation(tuple(float(a) for a in res.x)), f
    return best, best_f
