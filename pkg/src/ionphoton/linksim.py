"""Attempt timing, detection statistics and a discrete-event model of the link.

Times are in microseconds unless a name says otherwise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

MULTIMODE_ATTEMPT_US = 757.0
SINGLE_ION_ATTEMPT_US = 633.0
TRAVEL_TIME_US = 494.0
MAX_ATTEMPTS = 15
INIT_US = 7000.0 + 20.0
MEASURE_US = 1500.0
PI_PULSE_US = 6.4
ECHO_DELAY_US = 243.6


@dataclass(frozen=True)
class AttemptSchedule:
    """Timed segments of one photon-generation attempt.

    ``segments`` lists ``(label, duration_us)`` in execution order. The sum of
    the parts can differ from the calibrated attempt length; when
    ``total_override_us`` is given it is the authoritative cycle time and the
    difference is absorbed by the final segment.
    """

    segments: tuple[tuple[str, float], ...]
    n_ions: int = 3
    max_attempts: int = MAX_ATTEMPTS
    init_duration: float = INIT_US
    measure_duration: float = MEASURE_US
    total_override_us: float | None = None

    def __post_init__(self):
        if self.n_ions < 1 or self.max_attempts < 1:
            raise ValueError("n_ions and max_attempts must be positive")
        for label, dur in self.segments:
            if dur <= 0:
                raise ValueError(f"segment {label!r} must have positive duration")
        if self.total_override_us is not None and self.total_override_us <= 0:
            raise ValueError("total_override_us must be positive")
        if self.init_duration < 0 or self.measure_duration < 0:
            raise ValueError("init and measurement durations must be >= 0")

    @property
    def segment_sum(self) -> float:
        return float(sum(d for _, d in self.segments))

    @property
    def attempt_duration(self) -> float:
        return float(self.total_override_us) if self.total_override_us is not None else self.segment_sum

    def segment_starts(self) -> dict[str, float]:
        starts, t = {}, 0.0
        for label, dur in self.segments:
            starts.setdefault(label, t)
            t += dur
        return starts

    def window_opens(self) -> list[float]:
        """Offset of each ion's photon arrival window from the attempt start."""
        opens, t = [], 0.0
        slots = 0
        for label, dur in self.segments:
            if label.startswith("generate"):
                opens.append(t)
                slots += 1
            t += dur
        return [o + TRAVEL_TIME_US for o in opens]


def multimode_schedule(n_ions: int = 3, calibrated: bool = True, **kwargs) -> AttemptSchedule:
    """Reinit 70, then 62 per ion (50 Raman + 12 deflector switch), then the 503 wait."""
    segments = [("reinit", 70.0)]
    segments += [(f"generate_{i + 1}", 62.0) for i in range(n_ions)]
    segments.append(("travel_wait", 503.0))
    total = MULTIMODE_ATTEMPT_US if calibrated and n_ions == 3 else None
    return AttemptSchedule(tuple(segments), n_ions=n_ions, total_override_us=total, **kwargs)


def single_ion_schedule(**kwargs) -> AttemptSchedule:
    segments = (("reinit", 70.0), ("generate_1", 62.0), ("travel_wait", TRAVEL_TIME_US),
                ("detection_margin", 7.0))
    return AttemptSchedule(segments, n_ions=1, **kwargs)


def _check_probabilities(p) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("per-window probabilities must lie in [0, 1]")
    return p


def success_probability(p) -> float:
    """Probability of at least one detection in independent windows."""
    p = _check_probabilities(p)
    return float(1.0 - np.prod(1.0 - p))


def multiplicity_distribution(p) -> tuple[float, ...]:
    """Probabilities of exactly 1, 2, ..., n detections in independent windows.

    Built by convolving the per-window Bernoulli laws, so the n=3 result is the
    familiar single/double/triple sums.
    """
    p = _check_probabilities(p)
    dist = np.array([1.0])
    for pi in p:
        dist = np.convolve(dist, [1.0 - pi, pi])
    return tuple(float(x) for x in dist[1:])


def mean_detections(p) -> float:
    return float(np.sum(_check_probabilities(p)))


def detection_probability_with_error(counts: int, attempts: int) -> tuple[float, float]:
    """Probability estimate ``n/A`` with Poissonian error ``sqrt(n)/A``."""
    if attempts <= 0:
        raise ValueError("attempts must be > 0")
    if counts < 0:
        raise ValueError("counts must be >= 0")
    return counts / attempts, math.sqrt(counts) / attempts


def effective_rate(P: float, tau_us: float) -> float:
    """Success rate in Hz for success probability ``P`` per attempt of ``tau_us``."""
    if tau_us <= 0:
        raise ValueError("tau must be > 0")
    return P / (tau_us * 1e-6)


def enhancement_factor(multi: tuple[float, float], single: tuple[float, float]) -> float:
    r_multi = effective_rate(*multi)
    r_single = effective_rate(*single)
    if r_multi <= 0 or r_single <= 0:
        raise ValueError("rates must be > 0")
    return r_multi / r_single


@dataclass
class DetectionStatistics:
    attempts: int
    per_window_probabilities: list[float]
    n_single: int
    n_double: int
    n_triple: int
    p_any: float
    mean_detections: float
    successes: int
    sequences: int
    multiplicity_counts: list[int]
    attempt_time_s: float
    elapsed_s: float
    events: list[tuple[float, str, int, str]] = field(default_factory=list, repr=False)

    @property
    def success_rate_hz(self) -> float:
        """Successes per second of attempt time (init and readout blocks excluded)."""
        return self.successes / self.attempt_time_s if self.attempt_time_s > 0 else 0.0

    @property
    def wall_rate_hz(self) -> float:
        return self.successes / self.elapsed_s if self.elapsed_s > 0 else 0.0


_BATCH = 4096


def run_link_simulation(schedule: AttemptSchedule, p, duration_s: float, seed: int, *,
                        log_level: str = "sequence") -> DetectionStatistics:
    """Discrete-event run of the init / attempt / measurement cycle.

    A sequence starts with the init block and repeats attempts. In each attempt
    every window clicks independently with probability ``p[i]``. The first
    attempt with at least one click aborts the sequence and appends the
    measurement block; after ``max_attempts`` failures the sequence restarts.
    The run stops when the next block would end after ``duration_s``.

    ``log_level`` is ``"none"``, ``"sequence"`` (init, successes, measurement,
    restarts) or ``"attempt"`` (adds every attempt start and the 729 nm pulses).
    """
    p = _check_probabilities(p)
    if len(p) != schedule.n_ions:
        raise ValueError(f"expected {schedule.n_ions} window probabilities, got {len(p)}")
    if log_level not in ("none", "sequence", "attempt"):
        raise ValueError("log_level must be 'none', 'sequence' or 'attempt'")
    tau = schedule.attempt_duration
    horizon = duration_s * 1e6
    if horizon <= tau:
        raise ValueError("duration must exceed one attempt")
    rng = np.random.default_rng(seed)
    n_win = schedule.n_ions
    window_opens = schedule.window_opens()
    wait_start = schedule.segment_starts().get("travel_wait", tau)
    log = log_level != "none"
    per_attempt = log_level == "attempt"

    events: list[tuple[float, str, int, str]] = []
    mult = np.zeros(n_win + 1, dtype=np.int64)
    window_clicks = np.zeros(n_win, dtype=np.int64)
    attempts = successes = sequences = 0
    t = 0.0
    attempt_time = 0.0
    done = False
    while not done:
        clicks = rng.random((_BATCH, schedule.max_attempts, n_win)) < p
        any_click = clicks.any(axis=2)
        for b in range(_BATCH):
            if t + schedule.init_duration + tau > horizon:
                done = True
                break
            sequences += 1
            if log and schedule.init_duration > 0:
                events.append((t, "init", -1, f"sequence {sequences}"))
            t += schedule.init_duration
            hits = np.flatnonzero(any_click[b])
            k_success = int(hits[0]) if hits.size else None
            n_tries = schedule.max_attempts if k_success is None else k_success + 1
            # attempts that fit before the horizon
            fit = min(n_tries, int((horizon - t) // tau))
            if per_attempt:
                for k in range(fit):
                    t0 = t + k * tau
                    events.append((t0, "attempt", -1, f"attempt {k + 1}"))
                    events.append((t0 + wait_start, "pi_729", -1, f"D->S transfer {PI_PULSE_US} us"))
                    events.append((t0 + wait_start + PI_PULSE_US + ECHO_DELAY_US, "echo_729", -1,
                                   f"spin echo {PI_PULSE_US} us"))
            attempts += fit
            attempt_time += fit * tau
            mult[0] += fit - (1 if (k_success is not None and fit == n_tries) else 0)
            t += fit * tau
            if fit < n_tries:
                done = True
                break
            if k_success is None:
                if log:
                    events.append((t, "restart", -1, f"{schedule.max_attempts} attempts failed"))
                continue
            pattern = clicks[b, k_success]
            n_clicks = int(pattern.sum())
            mult[n_clicks] += 1
            window_clicks += pattern
            successes += 1
            t_attempt = t - tau
            if log:
                for i in np.flatnonzero(pattern):
                    events.append((t_attempt + window_opens[i], "detection", int(i + 1),
                                   f"attempt {k_success + 1}"))
                events.append((t, "success", -1, f"{n_clicks} detection(s) after {k_success + 1} attempt(s)"))
            if t + schedule.measure_duration > horizon:
                done = True
                break
            if log and schedule.measure_duration > 0:
                events.append((t, "measure", -1, f"{schedule.measure_duration} us readout"))
            t += schedule.measure_duration

    counts = list(int(x) for x in mult[1:])
    padded = (counts + [0, 0, 0])[:3]
    emp_p = (window_clicks / attempts).tolist() if attempts else [0.0] * n_win
    stats = DetectionStatistics(
        attempts=attempts,
        per_window_probabilities=emp_p,
        n_single=padded[0], n_double=padded[1], n_triple=padded[2],
        p_any=successes / attempts if attempts else 0.0,
        mean_detections=float(np.dot(np.arange(1, n_win + 1), mult[1:]) / attempts) if attempts else 0.0,
        successes=successes,
        sequences=sequences,
        multiplicity_counts=counts,
        attempt_time_s=attempt_time * 1e-6,
        elapsed_s=t * 1e-6,
        events=events,
    )
    return stats


EVENT_LOG_HEADER = "time_us,event,ion_index,detail"


def format_event_log(events) -> str:
    buf = io.StringIO()
    buf.write(EVENT_LOG_HEADER + "\n")
    for time_us, event, ion, detail in sorted(events, key=lambda e: e[0]):
        ion_field = "" if ion < 0 else str(ion)
        buf.write(f"{time_us:.3f},{event},{ion_field},{detail}\n")
    return buf.getvalue()
