"""End-to-end acceptance criteria at their stated tolerances.

Each test records one pass/fail line, printed at the end of the session and
echoed to stdout as the test runs.
"""

import math

import numpy as np
import pytest

from ionphoton import budget, geometry, linksim, metrics, noise, qstate, tomography, wavepacket
from ionphoton.config import format_uncertainty

RESULTS: dict[int, tuple[bool, str]] = {}


def record(number, checks):
    """``checks`` maps a description to a boolean; the criterion passes if all do."""
    ok = all(checks.values())
    failed = [name for name, passed in checks.items() if not passed]
    detail = "all checks within tolerance" if ok else "failed: " + "; ".join(failed)
    RESULTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def within_sigma(value, target, sigma, n_sigma=1.0):
    return abs(value - target) <= n_sigma * sigma


def test_criterion_01_rates():
    r_multi = linksim.effective_rate(2.16e-3, 757)
    r_single = linksim.effective_rate(7.8e-4, 633)
    r_limit = linksim.effective_rate(7.8e-4, 494)
    enh = linksim.enhancement_factor((2.16e-3, 757), (7.8e-4, 633))
    record(1, {
        f"multimode rate {r_multi:.4f} Hz = 2.85 +- 0.01": abs(r_multi - 2.85) <= 0.01,
        f"single-ion rate {r_single:.4f} Hz = 1.23 +- 0.01": abs(r_single - 1.23) <= 0.01,
        f"travel-time limit {r_limit:.4f} Hz = 1.58, within 1.59(7)":
            abs(r_limit - 1.58) <= 0.005 and within_sigma(r_limit, 1.59, 0.07),
        f"enhancement {enh:.3f} = 2.3 +- 0.1": abs(enh - 2.3) <= 0.1,
    })


def test_criterion_02_detection_statistics():
    A = 41645
    counts = np.array([13127, 14465, 13326])
    p = np.array([0.315, 0.347, 0.320])
    sig = np.sqrt(counts) / A
    p_any = linksim.success_probability(p)
    others = np.array([np.prod(np.delete(1 - p, i)) for i in range(3)])
    s_any = float(np.sqrt(np.sum((others * sig) ** 2)))
    mean = linksim.mean_detections(p)
    s_mean = float(np.sqrt(np.sum(sig**2)))
    expected = np.array(linksim.multiplicity_distribution(p)) * A
    observed = np.array([18337, 9037, 1485])
    z_counts = np.abs(expected - observed) / np.sqrt(expected)

    A101 = 882982
    p101 = np.array([6.5e-4, 7.8e-4, 7.3e-4])
    s101 = np.sqrt(np.round(p101 * A101)) / A101
    P101 = linksim.success_probability(p101)
    o101 = np.array([np.prod(np.delete(1 - p101, i)) for i in range(3)])
    sP101 = float(np.sqrt(np.sum((o101 * s101) ** 2)))
    record(2, {
        f"success probability {p_any:.4f} = 0.696": round(p_any, 3) == 0.696,
        f"success probability within combined error of 0.693(4)":
            within_sigma(p_any, 0.693, math.hypot(0.004, s_any)),
        f"mean detections {mean:.4f} = 0.982": round(mean, 3) == 0.982,
        "mean detections within combined error of 0.981(5)": within_sigma(mean, 0.981, math.hypot(0.005, s_mean)),
        f"expected counts {np.round(expected).astype(int).tolist()} within 2.5 sigma of {observed.tolist()}":
            bool(np.all(z_counts <= 2.5)),
        f"101 km success probability {format_uncertainty(P101, sP101)} = 2.16(5)e-3":
            format_uncertainty(P101, sP101) == "2.16(5)e-3",
    })


def test_criterion_03_poisson_errors():
    a = format_uncertainty(*linksim.detection_probability_with_error(13127, 41645))
    b = format_uncertainty(*linksim.detection_probability_with_error(693, 882982))
    record(3, {f"13127/41645 -> {a}": a == "0.315(3)", f"693/882982 -> {b}": b == "7.8(3)e-4"})


def test_criterion_04_noise_model():
    bell = qstate.bell_state(0.0)
    checks = {}
    for p, target in zip((6.5e-4, 7.8e-4, 7.3e-4), (0.88, 0.90, 0.90)):
        model = noise.ChannelModel.from_measured(p, background_rate=2.0, window=50e-6)
        f = metrics.fidelity(noise.noisy_state(qstate.pure_density(bell), model), bell)
        checks[f"p = {p:g}: fidelity {f:.4f} = {target:.2f} +- 0.01"] = abs(f - target) <= 0.01
    record(4, checks)


def test_criterion_05_budget():
    v854, s854 = budget.chain_product(budget.builtin_chain("854"))
    v1550, s1550 = budget.chain_product(budget.builtin_chain("1550"))
    record(5, {
        f"854 nm chain {format_uncertainty(v854, s854)} = 0.53(3)":
            round(v854, 2) == 0.53 and round(s854, 2) == 0.03,
        f"1550 nm chain {v1550:.4g}({s1550:.2g}) = 15(1.2)e-4":
            within_sigma(v1550, 1.5e-3, 1.2e-4) and abs(s1550 - 1.2e-4) <= 0.1e-4,
        f"854 nm chain within 1 sigma of 0.518 ({abs(v854 - 0.518) / s854:.2f} sigma)":
            within_sigma(v854, budget.MODEL_EFFICIENCY_854, s854),
        f"1550 nm chain within 1 sigma of 1.26e-3 ({abs(v1550 - 1.26e-3) / s1550:.2f} sigma)":
            within_sigma(v1550, budget.MODEL_EFFICIENCY_1550, s1550),
    })


def test_criterion_06_geometry():
    omega = 2 * math.pi * 0.869e6
    spacing = geometry.central_spacing(3, omega)
    angle = geometry.string_angle_from_projection(spacing, 0.427)
    base = geometry.StringGeometry(omega_z=omega)
    centred_target = [0.83, 1.0, 0.83]
    shifted_target = [0.739, 0.987, 0.894]
    shifted = base.with_shift(-1.4)
    w = geometry.fit_waist([(base, centred_target), (shifted, shifted_target)])
    x_c = geometry.gaussian_coupling(geometry.StringGeometry(omega_z=omega, waist=w))
    x_s = geometry.gaussian_coupling(geometry.StringGeometry(omega_z=omega, waist=w, axial_shift=-1.4))
    record(6, {
        f"spacing {spacing:.4f} um = 5.26 +- 0.02": abs(spacing - 5.26) <= 0.02,
        f"angle {angle:.3f} deg = 85.3 +- 0.1": abs(angle - 85.3) <= 0.1,
        f"fitted waist {w:.3f} um in [11.5, 12.5]": 11.5 <= w <= 12.5,
        f"centred x {np.round(x_c, 3).tolist()}": bool(np.all(np.abs(x_c - centred_target) <= 0.01)),
        f"shifted x {np.round(x_s, 3).tolist()}": bool(np.all(np.abs(x_s - shifted_target) <= 0.02)),
    })


def test_criterion_07_tomography_pipeline():
    rec = tomography.simulate_counts(qstate.werner_state(0.8), 100_000, seed=2024)
    result = tomography.mle_reconstruct(rec, track_history=True)
    c = metrics.concurrence(result.rho)
    f = metrics.fidelity(result.rho, qstate.bell_state(0.0))
    _, s1 = tomography.monte_carlo_uncertainty(rec, metrics.concurrence, resamples=100, seed=7)
    _, s4 = tomography.monte_carlo_uncertainty(rec.scaled(4), metrics.concurrence, resamples=100, seed=7)
    steps = np.diff(result.history)
    record(7, {
        f"concurrence {c:.4f} = 0.7 +- 0.02": abs(c - 0.7) <= 0.02,
        f"fidelity {f:.4f} = 0.85 +- 0.01": abs(f - 0.85) <= 0.01,
        f"bootstrap stddev ratio {s4 / s1:.3f} = 0.5 within 30%": abs(s4 / s1 / 0.5 - 1) <= 0.3,
        "MLE log-likelihood non-decreasing": bool(np.all(steps >= 0)),
    })


def test_criterion_08_local_rotation():
    target = qstate.bell_state(0.0)
    rng = np.random.default_rng(8)
    thetas = np.concatenate([[0.0, np.pi / 2, np.pi, 3 * np.pi / 2], rng.uniform(0, 2 * np.pi, 6)])
    worst_f = worst_c = 0.0
    for theta in thetas:
        rho = qstate.pure_density(qstate.bell_state(theta))
        rot, f = metrics.optimize_local_rotation(rho, target)
        worst_f = max(worst_f, abs(1 - f))
        worst_c = max(worst_c, abs(metrics.concurrence(rot.apply(rho)) - metrics.concurrence(rho)))
    for _ in range(10):
        rho = qstate.random_density_matrix(rng)
        rot = metrics.LocalRotation.random(rng)
        worst_c = max(worst_c, abs(metrics.concurrence(rot.apply(rho)) - metrics.concurrence(rho)))
    record(8, {
        f"max |1 - F| = {worst_f:.2g} <= 1e-6": worst_f <= 1e-6,
        f"max concurrence change {worst_c:.2g} <= 1e-9": worst_c <= 1e-9,
    })


def test_criterion_09_wavepacket():
    scheme = wavepacket.scheme_for_ion()
    wp = wavepacket.integrate(scheme)
    trace_err = float(np.max(np.abs(wp.trace - 1)))
    book_err = float(np.max(np.abs(wp.bookkeeping_residual())))
    emitted = [wavepacket.integrate(scheme.scaled_coupling(f), pulse_duration=20.0).emission_probability
               for f in (0.25, 0.5, 0.75, 1.0)]
    o1, o2 = wavepacket.split_drive(scheme.omega, scheme.drive_ratio)
    split_ok = math.isclose(math.hypot(o1, o2), scheme.omega, rel_tol=1e-14) and math.isclose(
        o1 / o2, scheme.drive_ratio, rel_tol=1e-14)
    shift = wavepacket.stark_shift(scheme)
    back = wavepacket.calibrate_rabi(shift, scheme)
    ratio = (wavepacket.calibrate_rabi(0.82 * wavepacket.MHZ, scheme)
             / wavepacket.calibrate_rabi(0.88 * wavepacket.MHZ, scheme))
    record(9, {
        f"trace error {trace_err:.2g} <= 1e-9": trace_err <= 1e-9,
        f"bookkeeping error {book_err:.2g} <= 1e-6": book_err <= 1e-6,
        f"emission monotone in g {np.round(emitted, 3).tolist()}": all(np.diff(emitted) > 0),
        "drive splitting algebra exact": split_ok,
        f"Stark/Rabi round trip {abs(back / scheme.omega - 1):.2g} <= 1e-3": abs(back / scheme.omega - 1) <= 1e-3,
        f"Rabi ratio {ratio:.4f} = 0.966 +- 0.02": abs(ratio - 0.966) <= 0.02,
    })


def test_criterion_10_link_simulator():
    checks = {}
    for label, p, sched, duration in (
            ("101 km", [6.5e-4, 7.8e-4, 7.3e-4], linksim.multimode_schedule(), 1300.0),
            ("854 nm", [0.315, 0.347, 0.320], linksim.multimode_schedule(init_duration=0.0, measure_duration=0.0),
             760.0)):
        stats = linksim.run_link_simulation(sched, p, duration, seed=10, log_level="none")
        n = stats.attempts
        P = linksim.success_probability(p)
        z = abs(stats.p_any - P) / math.sqrt(P * (1 - P) / n)
        zk = [abs(k - n * q) / math.sqrt(n * q * (1 - q))
              for k, q in zip(stats.multiplicity_counts, linksim.multiplicity_distribution(p))]
        checks[f"{label}: {n} attempts >= 1e6"] = n >= 1_000_000
        checks[f"{label}: success probability {z:.2f} sigma <= 5"] = z <= 5
        checks[f"{label}: multiplicities max {max(zk):.2f} sigma <= 5"] = max(zk) <= 5
    sched = linksim.multimode_schedule()
    logs = [linksim.format_event_log(linksim.run_link_simulation(
        sched, [6.5e-4, 7.8e-4, 7.3e-4], 10.0, seed=99, log_level="attempt").events) for _ in range(2)]
    checks["event logs byte-identical per seed"] = logs[0].encode() == logs[1].encode()
    record(10, checks)


def test_report_exit_status_matches_acceptance(tmp_path):
    from ionphoton.cli import main

    if len(RESULTS) < 10:
        pytest.skip("needs the full acceptance run")
    expected = 0 if all(ok for ok, _ in RESULTS.values()) else 1
    assert main(["report", "--out", str(tmp_path)]) == expected
    failed_rows = [line for line in (tmp_path / "report" / "report.csv").read_text().splitlines()[1:]
                   if line.endswith(",0")]
    failed_criteria = {int(line.split(",")[0]) for line in failed_rows}
    assert failed_criteria == {n for n, (ok, _) in RESULTS.items() if not ok}
