"""Tomographic count simulation, maximum-likelihood reconstruction and bootstrap errors."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .qstate import (
    OUTCOMES,
    SETTINGS,
    born_probabilities,
    setting_projectors,
    validate_density_matrix,
)

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 20000
DEFAULT_RESAMPLES = 200


class TomographyError(ValueError):
    pass


@dataclass
class MeasurementRecord:
    """Counts per ``(setting, outcome pair)`` cell.

    ``counts[k]`` holds the four outcome counts of ``settings[k]`` in
    :data:`~ionphoton.qstate.OUTCOMES` order. Settings may appear in any order
    and may have different totals.
    """

    settings: tuple[tuple[str, str], ...]
    counts: np.ndarray

    def __post_init__(self):
        self.settings = tuple((str(a).upper(), str(b).upper()) for a, b in self.settings)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.settings), 4)
        if np.any(self.counts < 0):
            raise TomographyError("counts must be non-negative")
        if len(set(self.settings)) != len(self.settings):
            raise TomographyError("each measurement setting may appear only once")

    @property
    def shots_per_setting(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def validate(self) -> None:
        if len(self.settings) == 0 or self.total == 0:
            raise TomographyError("empty measurement record")
        missing = sorted(set(SETTINGS) - set(self.settings))
        if missing:
            raise TomographyError(f"record does not cover settings {missing}")
        for setting, n in zip(self.settings, self.shots_per_setting):
            if n == 0:
                raise TomographyError(f"setting {setting[0]}{setting[1]} has all-zero counts")

    def scaled(self, factor: int) -> "MeasurementRecord":
        return MeasurementRecord(self.settings, self.counts * int(factor))

    def count(self, setting, outcome) -> int:
        return int(self.counts[self.settings.index(tuple(setting)), OUTCOMES.index(tuple(outcome))])


@dataclass
class ReconstructionResult:
    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    derived: dict[str, tuple[float, float]] = field(default_factory=dict)
    history: list[float] | None = None


def record_from_probabilities(probabilities, total_per_setting: float,
                              settings=SETTINGS) -> MeasurementRecord:
    """Deterministic counts ``round(p * N)`` from exact probabilities."""
    probs = np.asarray(probabilities, dtype=float)
    return MeasurementRecord(tuple(settings), np.rint(probs * total_per_setting).astype(np.int64))


def simulate_counts(rho, shots_per_setting: int, seed: int,
                    settings=SETTINGS) -> MeasurementRecord:
    """Multinomial counts for every setting drawn from the Born probabilities of ``rho``."""
    if shots_per_setting < 1:
        raise TomographyError("shots must be >= 1")
    rho = validate_density_matrix(rho)
    rng = np.random.default_rng(seed)
    counts = [rng.multinomial(shots_per_setting, born_probabilities(rho, s, validate=False))
              for s in settings]
    return MeasurementRecord(tuple(settings), np.array(counts))


def _projector_stack(settings) -> np.ndarray:
    return np.concatenate([setting_projectors(s) for s in settings])


def log_likelihood(rho, record: MeasurementRecord) -> float:
    """Multinomial log-likelihood ``sum n_k log p_k`` (zero-count cells skipped)."""
    projectors = _projector_stack(record.settings)
    n = record.counts.ravel().astype(float)
    p = np.real(np.einsum("kij,ji->k", projectors, rho))
    mask = n > 0
    return float(np.sum(n[mask] * np.log(np.maximum(p[mask], 1e-300))))


def mle_reconstruct(record: MeasurementRecord, tolerance: float = DEFAULT_TOLERANCE,
                    max_iterations: int = DEFAULT_MAX_ITERATIONS, *,
                    track_history: bool = False) -> ReconstructionResult:
    """Maximum-likelihood state by the iterative ``R rho R`` fixed point.

    Starts from ``I/4``. When a full step lowers the likelihood the step is
    diluted, ``rho -> (1 + e R~) rho (1 + e R~)`` with ``e`` starting at 1 and
    halved until the likelihood no longer decreases. Iteration stops when the
    per-count log-likelihood changes by less than ``tolerance``.
    """
    if tolerance <= 0:
        raise TomographyError("tolerance must be positive")
    record.validate()
    projectors = _projector_stack(record.settings)
    n = record.counts.ravel().astype(float)
    total = n.sum()
    mask = n > 0
    ident = np.eye(4, dtype=complex)

    def probs(r):
        return np.real(np.einsum("kij,ji->k", projectors, r))

    def loglik(p):
        return float(np.sum(n[mask] * np.log(np.maximum(p[mask], 1e-300))))

    rho = ident / 4
    p = probs(rho)
    ll = loglik(p)
    history = [ll] if track_history else None
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        weights = np.where(mask, n / np.maximum(p, 1e-300), 0.0)
        r_op = np.einsum("k,kij->ij", weights, projectors) / total
        new = r_op @ rho @ r_op
        new = (new + new.conj().T) / 2
        new /= np.trace(new).real
        new_p = probs(new)
        new_ll = loglik(new_p)
        eps = 1.0
        while new_ll < ll and eps > 1e-12:
            step = ident + eps * r_op
            new = step @ rho @ step
            new = (new + new.conj().T) / 2
            new /= np.trace(new).real
            new_p = probs(new)
            new_ll = loglik(new_p)
            eps *= 0.5
        if new_ll < ll:
            # no ascent direction left at floating-point resolution
            converged = True
            break
        change = (new_ll - ll) / total
        rho, p, ll = new, new_p, new_ll
        if history is not None:
            history.append(ll)
        if change < tolerance:
            converged = True
            break
    if not converged:
        log.warning("MLE stopped at max_iterations=%d before reaching tolerance", max_iterations)
    rho = validate_density_matrix(rho)
    return ReconstructionResult(rho=rho, log_likelihood=ll, iterations=it,
                                converged=converged, history=history)


def poisson_resample(record: MeasurementRecord, rng: np.random.Generator) -> MeasurementRecord:
    return MeasurementRecord(record.settings, rng.poisson(record.counts))


def monte_carlo_uncertainty(record: MeasurementRecord, statistic: Callable[[np.ndarray], float],
                            resamples: int = DEFAULT_RESAMPLES, seed: int = 0, *,
                            tolerance: float = DEFAULT_TOLERANCE,
                            max_iterations: int = DEFAULT_MAX_ITERATIONS) -> tuple[float, float]:
    """Parametric bootstrap of a scalar statistic of the reconstructed state.

    Each resample redraws every cell from a Poisson law with the observed count
    as mean (resample ``i`` uses seed ``seed + i``), reconstructs and evaluates
    ``statistic``. Returns the statistic of the original record and the sample
    standard deviation over successful resamples.
    """
    if resamples < 2:
        raise TomographyError("resamples must be >= 2")
    value = float(statistic(mle_reconstruct(record, tolerance, max_iterations).rho))
    samples = []
    failures = 0
    for i in range(resamples):
        rng = np.random.default_rng(seed + i)
        try:
            rho = mle_reconstruct(poisson_resample(record, rng), tolerance, max_iterations).rho
            samples.append(float(statistic(rho)))
        except (ValueError, ArithmeticError) as exc:
            failures += 1
            log.info("bootstrap resample %d failed: %s", i, exc)
    if failures > 0.1 * resamples:
        raise TomographyError(f"{failures} of {resamples} bootstrap resamples failed")
    if len(samples) < 2:
        raise TomographyError("fewer than two successful bootstrap resamples")
    return value, float(np.std(samples, ddof=1))


def reconstruct_with_uncertainties(record: MeasurementRecord,
                                   statistics: dict[str, Callable[[np.ndarray], float]],
                                   resamples: int = DEFAULT_RESAMPLES, seed: int = 0, *,
                                   tolerance: float = DEFAULT_TOLERANCE,
                                   max_iterations: int = DEFAULT_MAX_ITERATIONS) -> ReconstructionResult:
    """Reconstruct once and attach ``(value, stddev)`` for each named statistic.

    All statistics share the same resampled reconstructions.
    """
    result = mle_reconstruct(record, tolerance, max_iterations)
    values = {name: [] for name in statistics}
    failures = 0
    for i in range(resamples):
        rng = np.random.default_rng(seed + i)
        try:
            rho = mle_reconstruct(poisson_resample(record, rng), tolerance, max_iterations).rho
            evaluated = {name: float(f(rho)) for name, f in statistics.items()}
        except (ValueError, ArithmeticError):
            failures += 1
            continue
        for name, v in evaluated.items():
            values[name].append(v)
    if failures > 0.1 * resamples:
        raise TomographyError(f"{failures} of {resamples} bootstrap resamples failed")
    result.derived = {
        name: (float(f(result.rho)), float(np.std(values[name], ddof=1)))
        for name, f in statistics.items()
    }
    return result


CSV_HEADER = ("ion_basis", "photon_basis", "ion_outcome", "photon_outcome", "count")


def _outcome_text(v: int) -> str:
    return "+1" if v > 0 else "-1"


def format_record(record: MeasurementRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for setting, row in zip(record.settings, record.counts):
        for (a, b), c in zip(OUTCOMES, row):
            writer.writerow([setting[0], setting[1], _outcome_text(a), _outcome_text(b), int(c)])
    return buf.getvalue()


def parse_record(text: str) -> MeasurementRecord:
    reader = csv.reader(io.StringIO(text))
    cells: dict[tuple[str, str], list[int]] = {}
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].startswith("#"):
            continue
        if lineno == 1 and row[0].strip() == CSV_HEADER[0]:
            continue
        if len(row) != 5:
            raise TomographyError(f"line {lineno}: expected 5 fields, got {len(row)}")
        ion, photon, a, b, c = (x.strip() for x in row)
        try:
            outcome = (int(a.replace("−", "-")), int(b.replace("−", "-")))
            count = int(c)
        except ValueError:
            raise TomographyError(f"line {lineno}: malformed outcome or count") from None
        if outcome not in OUTCOMES or count < 0:
            raise TomographyError(f"line {lineno}: outcomes must be +1/-1 and count >= 0")
        setting = (ion.upper(), photon.upper())
        if setting not in SETTINGS:
            raise TomographyError(f"line {lineno}: unknown setting {ion},{photon}")
        cells.setdefault(setting, [0, 0, 0, 0])[OUTCOMES.index(outcome)] += count
    settings = tuple(cells)
    return MeasurementRecord(settings, np.array([cells[s] for s in settings]).reshape(-1, 4))


def write_record(path, record: MeasurementRecord) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_record(record))


def read_record(path) -> MeasurementRecord:
    with open(path, encoding="utf-8") as fh:
        return parse_record(fh.read())
