"""Reproduction checks: published numbers against values computed by the package."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import budget, geometry, linksim, metrics, noise, qstate, tomography, wavepacket
from .config import RunConfig, derive_seed, format_uncertainty

# per-window detection counts of the 854 nm experiment, A = 41645 attempts
DETECTION_COUNTS_854 = (13127, 14465, 13326)
DETECTION_PROBABILITIES_854 = (0.315, 0.347, 0.320)
ATTEMPTS_854 = 41645
MULTIPLICITY_854 = (18337, 9037, 1485)
SUCCESS_854 = (0.693, 0.004)
MEAN_DETECTIONS_854 = (0.981, 0.005)
ATTEMPTS_101KM = 882982
CLICKS_101KM = 693
SINGLE_ION_RATE = (1.59, 0.07)


@dataclass
class Check:
    criterion: int
    name: str
    published: str
    computed: str
    distance: str
    passed: bool


def _within(criterion, name, published, value, target, tol, fmt="{:.4g}"):
    d = abs(value - target)
    return Check(criterion, name, published, fmt.format(value), f"|d|={d:.3g} (tol {tol:g})", d <= tol)


def _sigma(criterion, name, published, value, target, sigma, limit, computed=None):
    z = abs(value - target) / sigma
    return Check(criterion, name, published, computed or f"{value:.4g}", f"{z:.2f} sigma (max {limit:g})",
                 z <= limit)


def rate_checks(cfg: RunConfig) -> list[Check]:
    probs = cfg["channel.measured_probabilities"]
    p_multi = linksim.success_probability(probs)
    p_single = max(probs)
    tau_m = cfg.schedule.attempt_duration
    tau_s = cfg.single_schedule.attempt_duration
    r_m = linksim.effective_rate(p_multi, tau_m)
    r_s = linksim.effective_rate(p_single, tau_s)
    r_lim = linksim.effective_rate(p_single, cfg["schedule.travel_us"])
    enh = linksim.enhancement_factor((p_multi, tau_m), (p_single, tau_s))
    return [
        _within(1, "multimode rate (Hz)", "2.85", r_m, 2.85, 0.01),
        _within(1, "single-ion rate (Hz)", "1.23", r_s, 1.23, 0.01),
        _sigma(1, "single-ion travel-time limit (Hz)", "1.59(7)", r_lim, *SINGLE_ION_RATE, 1.0),
        _within(1, "multimode enhancement", "2.3", enh, 2.3, 0.1),
    ]


def detection_checks(cfg: RunConfig) -> list[Check]:
    counts = np.array(DETECTION_COUNTS_854)
    p = np.array(DETECTION_PROBABILITIES_854)
    sig = np.sqrt(counts) / ATTEMPTS_854
    p_any = linksim.success_probability(p)
    # first-order propagation of the per-window Poisson errors
    others = np.array([np.prod(np.delete(1 - p, i)) for i in range(len(p))])
    s_any = float(np.sqrt(np.sum((others * sig) ** 2)))
    mean = linksim.mean_detections(p)
    s_mean = float(np.sqrt(np.sum(sig**2)))
    out = [
        _sigma(2, "success probability, 854 nm", "0.693(4)", p_any, SUCCESS_854[0],
               math.hypot(SUCCESS_854[1], s_any), 1.0, format_uncertainty(p_any, s_any)),
        _sigma(2, "mean detections per attempt", "0.981(5)", mean, MEAN_DETECTIONS_854[0],
               math.hypot(MEAN_DETECTIONS_854[1], s_mean), 1.0, format_uncertainty(mean, s_mean)),
    ]
    expected = np.array(linksim.multiplicity_distribution(p)) * ATTEMPTS_854
    for label, e, o in zip(("single", "double", "triple"), expected, MULTIPLICITY_854):
        out.append(_sigma(2, f"{label} detections at A={ATTEMPTS_854}", str(o), e, o, math.sqrt(e), 2.5,
                          f"{e:.0f}"))
    probs = cfg["channel.measured_probabilities"]
    p101 = linksim.success_probability(probs)
    out.append(_sigma(2, "success probability, 101 km", "2.16(5)e-3", p101, 2.16e-3, 5e-5, 1.0))
    return out


def poisson_checks(cfg: RunConfig) -> list[Check]:
    out = []
    for counts, attempts, quoted in ((DETECTION_COUNTS_854[0], ATTEMPTS_854, "0.315(3)"),
                                     (CLICKS_101KM, ATTEMPTS_101KM, "7.8(3)e-4")):
        text = format_uncertainty(*linksim.detection_probability_with_error(counts, attempts))
        out.append(Check(3, f"Poisson estimate {counts}/{attempts}", quoted, text, "exact text",
                         text == quoted))
    return out


def noise_checks(cfg: RunConfig) -> list[Check]:
    bell = qstate.bell_state(0.0)
    out = []
    for i, (model, target) in enumerate(zip(cfg.channels(), (0.88, 0.90, 0.90))):
        f = metrics.fidelity(noise.noisy_state(qstate.pure_density(bell), model), bell)
        out.append(_within(4, f"noisy Bell fidelity, window {i + 1}", f"{target:.2f}", f, target, 0.01))
    return out


def budget_checks(cfg: RunConfig) -> list[Check]:
    out = []
    for chain, quoted, target, model in (("854", "0.53(3)", (0.53, 0.03), budget.MODEL_EFFICIENCY_854),
                                         ("1550", "15(1.2)e-4", (1.5e-3, 1.2e-4), budget.MODEL_EFFICIENCY_1550)):
        v, s = budget.chain_product(budget.builtin_chain(chain))
        text = format_uncertainty(v, s)
        out.append(_sigma(5, f"{chain} nm chain product vs quoted total", quoted, v, target[0], target[1],
                          1.0, text))
        out.append(_sigma(5, f"{chain} nm chain vs model efficiency", f"{model:g}", v, model, s, 1.0, text))
    return out


def geometry_checks(cfg: RunConfig) -> list[Check]:
    g = geometry.StringGeometry()
    spacing = geometry.central_spacing(3, g.omega_z)
    angle = geometry.string_angle_from_projection(spacing, geometry.ANTINODE_SPACING_UM)
    centred_target = [0.83, 1.0, 0.83]
    shifted_target = [0.739, 0.987, 0.894]
    shifted = g.with_shift(-1.4)
    w = geometry.fit_waist([(g, centred_target), (shifted, shifted_target)])
    out = [
        _within(6, "3-ion spacing (um)", "5.26", spacing, 5.26, 0.02),
        _within(6, "string angle (deg)", "85.3", angle, 85.3, 0.1),
        Check(6, "fitted waist (um)", "in [11.5, 12.5]", f"{w:.4g}", "range", 11.5 <= w <= 12.5),
    ]
    for label, geo, target, tol in (("centred", g, centred_target, 0.01),
                                    ("shifted 1.4 um", shifted, shifted_target, 0.02)):
        x = geometry.gaussian_coupling(replace(geo, waist=w))
        d = float(np.max(np.abs(x - target)))
        out.append(Check(6, f"coupling factors, {label}", ", ".join(f"{t:g}" for t in target),
                         ", ".join(f"{v:.3f}" for v in x), f"max|d|={d:.3g} (tol {tol:g})", d <= tol))
    return out


def tomography_checks(cfg: RunConfig, resamples: int = 60) -> list[Check]:
    seed = derive_seed(cfg.seed, "tomography", "werner")
    rho = qstate.werner_state(0.8)
    record = tomography.simulate_counts(rho, 100_000, seed)
    result = tomography.mle_reconstruct(record, track_history=True)
    c = metrics.concurrence(result.rho)
    f = metrics.fidelity(result.rho, qstate.bell_state(0.0))
    boot_seed = derive_seed(cfg.seed, "tomography", "bootstrap")
    _, s1 = tomography.monte_carlo_uncertainty(record, metrics.concurrence, resamples, boot_seed)
    scaled = tomography.MeasurementRecord(record.settings, record.counts * 4)
    _, s4 = tomography.monte_carlo_uncertainty(scaled, metrics.concurrence, resamples, boot_seed)
    ratio = s4 / s1
    steps = np.diff(result.history)
    worst = float(steps.min()) if steps.size else 0.0
    return [
        _within(7, "Werner(0.8) concurrence", "0.7", c, 0.7, 0.02),
        _within(7, "Werner(0.8) fidelity", "0.85", f, 0.85, 0.01),
        Check(7, "bootstrap stddev ratio at 4x counts", "0.5", f"{ratio:.3f}",
              f"rel |d|={abs(ratio / 0.5 - 1):.3g} (tol 0.3)", abs(ratio / 0.5 - 1) <= 0.3),
        Check(7, "MLE log-likelihood monotone", "non-decreasing", f"min step {worst:.3g}",
              "min step >= -1e-9", worst >= -1e-9),
    ]


def rotation_checks(cfg: RunConfig, thetas=(0.0, 0.7, math.pi / 2, 2.0, math.pi, 4.5)) -> list[Check]:
    target = qstate.bell_state(0.0)
    worst_f, worst_c = 0.0, 0.0
    seed = derive_seed(cfg.seed, "metrics", "rotation")
    for theta in thetas:
        rho = qstate.pure_density(qstate.bell_state(theta))
        rot, f = metrics.optimize_local_rotation(rho, target, seed=seed)
        worst_f = max(worst_f, abs(1 - f))
        worst_c = max(worst_c, abs(metrics.concurrence(rot.apply(rho)) - metrics.concurrence(rho)))
    return [
        Check(8, "rotated fidelity of |psi(theta)>", "1", f"max|1-F|={worst_f:.2g}", "tol 1e-6", worst_f <= 1e-6),
        Check(8, "concurrence invariance", "exact", f"max|d|={worst_c:.2g}", "tol 1e-9", worst_c <= 1e-9),
    ]


def wavepacket_checks(cfg: RunConfig) -> list[Check]:
    scheme = cfg.level_scheme
    wp = wavepacket.integrate(scheme, cfg["level_scheme.pulse_us"], cfg["level_scheme.step_us"])
    trace_err = float(np.max(np.abs(wp.trace - 1)))
    book_err = float(np.max(np.abs(wp.bookkeeping_residual())))
    emissions = []
    for scale in (0.5, 0.75, 1.0):
        w = wavepacket.integrate(scheme.scaled_coupling(scale), cfg["level_scheme.pulse_us"],
                                 cfg["level_scheme.step_us"])
        emissions.append(w.emission_probability)
    monotone = all(b > a for a, b in zip(emissions, emissions[1:]))
    om = scheme.omega
    a, b = wavepacket.split_drive(om, scheme.drive_ratio)
    # exact up to floating-point rounding
    split_ok = math.isclose(math.hypot(a, b), om, rel_tol=1e-14) and math.isclose(
        a / b, scheme.drive_ratio, rel_tol=1e-14)
    shift = wavepacket.stark_shift(scheme)
    back = wavepacket.calibrate_rabi(shift, scheme)
    rt = abs(back / om - 1)
    o82 = wavepacket.calibrate_rabi(0.82 * wavepacket.MHZ, scheme)
    o88 = wavepacket.calibrate_rabi(0.88 * wavepacket.MHZ, scheme)
    ratio = o82 / o88
    return [
        Check(9, "trace preservation", "1", f"max|d|={trace_err:.2g}", "tol 1e-9", trace_err <= 1e-9),
        Check(9, "probability bookkeeping", "1", f"max|d|={book_err:.2g}", "tol 1e-6", book_err <= 1e-6),
        Check(9, "emission monotone in g", "increasing", ", ".join(f"{e:.3f}" for e in emissions),
              "strict", monotone),
        Check(9, "drive splitting algebra", "exact", "ok" if split_ok else "mismatch", "rel 1e-14", split_ok),
        Check(9, "Stark shift / Rabi round trip", "identity", f"rel |d|={rt:.2g}", "tol 1e-3", rt <= 1e-3),
        _within(9, "Rabi ratio at 0.82 vs 0.88 MHz shift", "0.966", ratio, 0.966, 0.02),
    ]


def link_checks(cfg: RunConfig, attempts: int = 1_000_000) -> list[Check]:
    probs = list(cfg["channel.measured_probabilities"])
    schedule = cfg.schedule
    per_seq = (schedule.init_duration + schedule.max_attempts * schedule.attempt_duration) / schedule.max_attempts
    duration = 1.05 * attempts * max(per_seq, schedule.attempt_duration) * 1e-6
    seed = derive_seed(cfg.seed, "linksim", "convergence")
    stats = linksim.run_link_simulation(schedule, probs, duration, seed, log_level="none")
    n = stats.attempts
    p = linksim.success_probability(probs)
    out = [_sigma(10, f"success probability over {n} attempts", f"{p:.4g}", stats.p_any, p,
                  math.sqrt(p * (1 - p) / n), 5.0)]
    worst = 0.0
    for pk, k in zip(linksim.multiplicity_distribution(probs), stats.multiplicity_counts):
        sd = math.sqrt(n * pk * (1 - pk))
        worst = max(worst, abs(k - n * pk) / sd if sd > 0 else (0.0 if k == 0 else math.inf))
    out.append(Check(10, "multiplicity distribution", "analytic", str(stats.multiplicity_counts),
                     f"{worst:.2f} sigma (max 5)", worst <= 5.0))
    logs = [linksim.format_event_log(
        linksim.run_link_simulation(schedule, probs, 5.0, seed, log_level="attempt").events) for _ in range(2)]
    out.append(Check(10, "event log reproducible", "byte-identical", f"{len(logs[0])} bytes",
                     "equal", logs[0] == logs[1]))
    out.insert(0, Check(10, "simulated attempts", ">= 1e6", str(n), "count", n >= attempts))
    return out


ALL_CHECKS = (rate_checks, detection_checks, poisson_checks, noise_checks, budget_checks,
              geometry_checks, tomography_checks, rotation_checks, wavepacket_checks, link_checks)


def run_checks(cfg: RunConfig) -> list[Check]:
    checks = []
    for fn in ALL_CHECKS:
        checks.extend(fn(cfg))
    return checks


def format_table(checks: list[Check]) -> str:
    header = ("criterion", "check", "published", "computed", "distance", "status")
    rows = [header] + [(str(c.criterion), c.name, c.published, c.computed, c.distance,
                        "PASS" if c.passed else "FAIL") for c in checks]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(checks: list[Check]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "check", "published", "computed", "distance", "passed"])
    for c in checks:
        w.writerow([c.criterion, c.name, c.published, c.computed, c.distance, int(c.passed)])
    return buf.getvalue()
