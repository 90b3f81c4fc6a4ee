"""Command-line front end.

Every command writes its artifacts and a ``summary.txt`` under
``<out>/<command>/``. Exit status is 0 on success, 1 when a check fails and
2 for usage, parse or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import budget, geometry, linksim, metrics, noise, qstate, report, tomography, wavepacket
from .config import ConfigError, RunConfig, derive_seed, format_config, format_uncertainty, load_config

COMMANDS = ("geometry", "rates", "budget", "tomo-simulate", "tomo-reconstruct", "noise-fidelity",
            "wavepacket", "link-sim", "report")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _write(directory: str, name: str, text: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _summary(title: str, lines: list[str]) -> str:
    return "\n".join([title, "=" * len(title), *lines]) + "\n"


def parse_state(spec: str) -> np.ndarray:
    """``bell:THETA``, ``werner:P[:THETA]`` or ``mixed`` as a density matrix."""
    kind, _, rest = spec.partition(":")
    try:
        args = [float(a) for a in rest.split(":")] if rest else []
    except ValueError:
        raise UsageError(f"cannot parse state {spec!r}") from None
    if kind == "bell" and len(args) == 1:
        return qstate.pure_density(qstate.bell_state(args[0]))
    if kind == "werner" and len(args) in (1, 2):
        if not 0 <= args[0] <= 1:
            raise UsageError("Werner weight must be in [0, 1]")
        return qstate.werner_state(*args)
    if kind == "mixed" and not args:
        return qstate.maximally_mixed()
    raise UsageError(f"unknown state {spec!r}; use bell:THETA, werner:P[:THETA] or mixed")


# commands ---------------------------------------------------------------------


def cmd_geometry(args, cfg: RunConfig, out: str) -> int:
    geo = cfg.geometry
    if args.shift is not None:
        geo = geo.with_shift(args.shift)
    pos = geo.ion_positions()
    r = geometry.perpendicular_distances(geo)
    x = geometry.gaussian_coupling(geo)
    _write(out, "positions.csv", geometry.format_positions(pos))
    _write(out, "coupling.csv", _csv(["ion_index", "position_um", "distance_from_axis_um", "coupling_factor"],
                                     [(i + 1, f"{p:.9g}", f"{d:.9g}", f"{v:.9g}")
                                      for i, (p, d, v) in enumerate(zip(pos, r, x))]))
    lines = [f"ions: {geo.n_ions}", f"axial frequency: {geo.omega_z / (2 * math.pi * 1e6):.6g} MHz",
             f"length scale: {geometry.length_scale(geo.omega_z, geo.ion_mass):.6g} um"]
    if geo.n_ions >= 2:
        spacing = geometry.central_spacing(geo.n_ions, geo.omega_z, geo.ion_mass)
        lines.append(f"central spacing: {spacing:.6g} um")
        if geo.antinode_spacing <= spacing:
            angle = geometry.string_angle_from_projection(spacing, geo.antinode_spacing)
            lines.append(f"angle for {geo.antinode_spacing:g} um projection: {angle:.4g} deg")
        w = geometry.find_axial_frequency(geo.antinode_spacing, geo.angle, geo.ion_mass, geo.n_ions)
        lines.append(f"axial frequency for that projection at {geo.angle:g} deg: {w / (2 * math.pi * 1e6):.4g} MHz")
    lines.append(f"axial shift: {geo.axial_shift:g} um, waist: {geo.waist:g} um")
    lines.append("coupling factors: " + ", ".join(f"{v:.3f}" for v in x))
    _write(out, "summary.txt", _summary("Ion string geometry", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_rates(args, cfg: RunConfig, out: str) -> int:
    probs = cfg["channel.measured_probabilities"]
    p_multi = linksim.success_probability(probs)
    p_single = max(probs)
    rows = [
        ("multimode", f"{p_multi:.6g}", f"{cfg.schedule.attempt_duration:g}",
         f"{linksim.effective_rate(p_multi, cfg.schedule.attempt_duration):.4f}"),
        ("single_ion", f"{p_single:.6g}", f"{cfg.single_schedule.attempt_duration:g}",
         f"{linksim.effective_rate(p_single, cfg.single_schedule.attempt_duration):.4f}"),
        ("single_ion_travel_limit", f"{p_single:.6g}", f"{cfg['schedule.travel_us']:g}",
         f"{linksim.effective_rate(p_single, cfg['schedule.travel_us']):.4f}"),
    ]
    enh = linksim.enhancement_factor((p_multi, cfg.schedule.attempt_duration),
                                     (p_single, cfg.single_schedule.attempt_duration))
    _write(out, "rates.csv", _csv(["scenario", "success_probability", "attempt_us", "rate_hz"], rows))
    lines = [f"{name}: P = {p}, tau = {tau} us, rate = {float(rate):.2f} Hz" for name, p, tau, rate in rows]
    lines.append(f"multimode enhancement: {enh:.2f}")
    _write(out, "summary.txt", _summary("Entanglement distribution rates", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_budget(args, cfg: RunConfig, out: str) -> int:
    if args.file:
        chains = [(os.path.basename(args.file), budget.load_budget(args.file))]
    elif args.chain:
        chains = [(args.chain, budget.builtin_chain(args.chain))]
    elif cfg.budget_file:
        chains = [(os.path.basename(cfg.budget_file), budget.load_budget(cfg.budget_file))]
    else:
        chains = [(name, budget.builtin_chain(name)) for name in ("854", "1550")]
    seed = derive_seed(cfg.seed, "budget", "monte_carlo")
    lines, rows = [], []
    for name, entries in chains:
        v, s = budget.chain_product(entries)
        mc_v, mc_s = budget.monte_carlo_chain(entries, seed=seed)
        for e in entries:
            rows.append((name, e.name, f"{e.value:g}", f"{budget.implicit_sigma(e):g}"))
        rows.append((name, "total", f"{v:.6g}", f"{s:.6g}"))
        lines.append(f"{name}: {format_uncertainty(v, s)} (= {v:.4g} +- {s:.2g}); "
                     f"Monte Carlo {format_uncertainty(mc_v, mc_s)}")
    _write(out, "budget.csv", _csv(["chain", "element", "value", "sigma"], rows))
    _write(out, "summary.txt", _summary("Detection efficiency budget", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_tomo_simulate(args, cfg: RunConfig, out: str) -> int:
    rho = parse_state(args.state)
    seed = derive_seed(cfg.seed, "tomography", f"simulate/{args.state}/{args.shots}")
    record = tomography.simulate_counts(rho, args.shots, seed)
    _write(out, "record.csv", tomography.format_record(record))
    _write(out, "true_state.txt", qstate.format_density_matrix(rho))
    lines = [f"state: {args.state}", f"shots per setting: {args.shots}", f"settings: {len(record.settings)}",
             f"total counts: {record.total}",
             f"true concurrence: {metrics.concurrence(rho):.6f}",
             f"true fidelity with psi(0): {metrics.fidelity(rho, qstate.bell_state(0.0)):.6f}"]
    _write(out, "summary.txt", _summary("Simulated tomography record", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_tomo_reconstruct(args, cfg: RunConfig, out: str) -> int:
    record = tomography.read_record(args.record)
    target = qstate.bell_state(args.target_theta)
    stats = {
        "concurrence": metrics.concurrence,
        "fidelity": lambda r: metrics.fidelity(r, target),
        "purity": metrics.purity,
    }
    seed = derive_seed(cfg.seed, "tomography", "bootstrap")
    result = tomography.reconstruct_with_uncertainties(record, stats, args.resamples, seed)
    _write(out, "rho.txt", qstate.format_density_matrix(result.rho))
    rows = [(name, f"{v:.6f}", f"{s:.6f}", format_uncertainty(v, s)) for name, (v, s) in result.derived.items()]
    rot, best = metrics.optimize_local_rotation(result.rho, target, seed=derive_seed(cfg.seed, "metrics", "rotation"))
    rows.append(("fidelity_after_local_rotation", f"{best:.6f}", "", ""))
    try:
        phase = metrics.coherence_phase(result.rho)
        rows.append(("coherence_phase_rad", f"{phase:.6f}", "", ""))
    except ValueError:
        pass
    _write(out, "estimates.csv", _csv(["quantity", "value", "stddev", "notation"], rows))
    lines = [f"record: {args.record}", f"MLE iterations: {result.iterations} (converged: {result.converged})",
             f"bootstrap resamples: {args.resamples}"]
    lines += [f"{name}: {note or value}" for name, value, _, note in rows]
    _write(out, "summary.txt", _summary("Tomographic reconstruction", lines))
    print("\n".join(lines))
    return EXIT_OK if result.converged else EXIT_CHECK_FAILED


def cmd_noise_fidelity(args, cfg: RunConfig, out: str) -> int:
    bell = qstate.bell_state(0.0)
    ideal = qstate.pure_density(bell)
    rows, lines = [], []
    for i, (p, model) in enumerate(zip(cfg["channel.measured_probabilities"], cfg.channels()), start=1):
        lam = noise.background_fraction(model)
        rho = noise.noisy_state(ideal, model)
        f = metrics.fidelity(rho, bell)
        c = metrics.concurrence(rho)
        _write(out, f"noisy_state_{i}.txt", qstate.format_density_matrix(rho))
        rows.append((i, f"{p:.6g}", f"{lam:.6f}", f"{f:.6f}", f"{c:.6f}"))
        lines.append(f"window {i}: p = {p:g}, background fraction = {lam:.4f}, "
                     f"fidelity = {f:.4f}, concurrence = {c:.4f}")
    _write(out, "noise.csv", _csv(["window", "measured_probability", "background_fraction", "fidelity",
                                   "concurrence"], rows))
    _write(out, "summary.txt", _summary("Background-limited Bell-state fidelity", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_wavepacket(args, cfg: RunConfig, out: str) -> int:
    scheme = cfg.level_scheme
    if args.x is not None:
        ion = wavepacket.scheme_for_ion(args.x, cfg["level_scheme.gamma"], cfg["level_scheme.g0_mhz"] * wavepacket.MHZ)
        scheme = replace(scheme, g_h=ion.g_h, g_v=ion.g_v)
    if args.stark_mhz is not None:
        scheme = scheme.with_rabi(wavepacket.calibrate_rabi(args.stark_mhz * wavepacket.MHZ, scheme))
    wp = wavepacket.integrate(scheme, cfg["level_scheme.pulse_us"], cfg["level_scheme.step_us"])
    eff = cfg["level_scheme.path_efficiency"]
    _write(out, "wavepacket.csv", wp.to_csv())
    _write(out, "detected.csv", wp.detected(eff).to_csv())
    shift = wavepacket.stark_shift(scheme)
    trace_err = float(np.max(np.abs(wp.trace - 1)))
    book_err = float(np.max(np.abs(wp.bookkeeping_residual())))
    lines = [f"coupling g_H, g_V: {scheme.g_h / wavepacket.MHZ:.4f}, {scheme.g_v / wavepacket.MHZ:.4f} MHz",
             f"drive Rabi frequency: {scheme.omega / wavepacket.MHZ:.4f} MHz",
             f"Raman Stark shift: {shift / wavepacket.MHZ:.4f} MHz",
             f"emission probability: {wp.emission_probability:.4f} "
             f"(H {wp.cumulative_h[-1]:.4f}, V {wp.cumulative_v[-1]:.4f})",
             f"detected with path efficiency {eff:g}: {wp.emission_probability * eff:.4f}",
             f"peak time: {wp.peak_time_us:.3f} us",
             f"max trace error: {trace_err:.2e}", f"max bookkeeping residual: {book_err:.2e}"]
    _write(out, "summary.txt", _summary("Photon wavepacket", lines))
    print("\n".join(lines))
    ok = trace_err <= 1e-9 and book_err <= 1e-6
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_link_sim(args, cfg: RunConfig, out: str) -> int:
    probs = list(cfg["channel.measured_probabilities"])
    duration = args.duration if args.duration is not None else cfg["schedule.duration_s"]
    seed = derive_seed(cfg.seed, "linksim", "run")
    stats = linksim.run_link_simulation(cfg.schedule, probs, duration, seed, log_level=args.log_level)
    if args.log_level != "none":
        _write(out, "events.csv", linksim.format_event_log(stats.events))
    p = linksim.success_probability(probs)
    n = max(stats.attempts, 1)
    expected = [n * q for q in linksim.multiplicity_distribution(probs)]
    _write(out, "statistics.csv", _csv(
        ["quantity", "simulated", "analytic"],
        [("attempts", stats.attempts, ""), ("sequences", stats.sequences, ""),
         ("successes", stats.successes, f"{n * p:.1f}"),
         ("success_probability", f"{stats.p_any:.6g}", f"{p:.6g}")]
        + [(f"multiplicity_{k + 1}", c, f"{e:.1f}") for k, (c, e) in enumerate(zip(stats.multiplicity_counts, expected))]
        + [(f"window_{i + 1}_probability", f"{q:.6g}", f"{probs[i]:.6g}")
           for i, q in enumerate(stats.per_window_probabilities)]
        + [("success_rate_hz", f"{stats.success_rate_hz:.4f}",
            f"{linksim.effective_rate(p, cfg.schedule.attempt_duration):.4f}"),
           ("wall_clock_rate_hz", f"{stats.wall_rate_hz:.4f}", "")]))
    sd = math.sqrt(p * (1 - p) / n)
    lines = [f"simulated time: {duration:g} s (seed {cfg.seed})",
             f"attempts: {stats.attempts}, sequences: {stats.sequences}, successes: {stats.successes}",
             f"success probability: {stats.p_any:.5g} (analytic {p:.5g}, {abs(stats.p_any - p) / sd:.2f} sigma)",
             "multiplicity counts: " + ", ".join(str(c) for c in stats.multiplicity_counts)
             + " (expected " + ", ".join(f"{e:.1f}" for e in expected) + ")",
             f"success rate per attempt time: {stats.success_rate_hz:.4f} Hz",
             f"success rate including init and readout: {stats.wall_rate_hz:.4f} Hz"]
    _write(out, "summary.txt", _summary("Link simulation", lines))
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args, cfg: RunConfig, out: str) -> int:
    checks = report.run_checks(cfg)
    table = report.format_table(checks)
    failed = [c for c in checks if not c.passed]
    _write(out, "report.csv", report.format_csv(checks))
    tail = [f"{len(checks) - len(failed)} of {len(checks)} checks passed"]
    tail += [f"FAILED: criterion {c.criterion}, {c.name}" for c in failed]
    _write(out, "summary.txt", _summary("Reproduction report", [table] + tail))
    print(table + "\n".join(tail))
    return EXIT_CHECK_FAILED if failed else EXIT_OK


HANDLERS = {
    "geometry": cmd_geometry,
    "rates": cmd_rates,
    "budget": cmd_budget,
    "tomo-simulate": cmd_tomo_simulate,
    "tomo-reconstruct": cmd_tomo_reconstruct,
    "noise-fidelity": cmd_noise_fidelity,
    "wavepacket": cmd_wavepacket,
    "link-sim": cmd_link_sim,
    "report": cmd_report,
}


def dispatch(command: str, args, config: RunConfig) -> int:
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out = os.path.join(args.out or config.output_dir, command)
    return HANDLERS[command](args, config, out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="config file with 'section.key = value' lines")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", metavar="DIR", help="override run.output_dir")

    parser = argparse.ArgumentParser(prog="ionphoton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("config", parents=[common], help="show the resolved configuration")
    p.add_argument("action", choices=["show"])
    p = sub.add_parser("geometry", parents=[common], help="ion positions and cavity coupling factors")
    p.add_argument("--shift", type=float, help="axial string shift in um (overrides geometry.axial_shift_um)")
    sub.add_parser("rates", parents=[common], help="entanglement distribution rates")
    p = sub.add_parser("budget", parents=[common], help="detection efficiency budget")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--file", metavar="PATH", help="budget file with 'name,value,sigma' rows")
    g.add_argument("--chain", choices=["854", "1550"], help="built-in chain")
    p = sub.add_parser("tomo-simulate", parents=[common], help="simulate tomography counts")
    p.add_argument("--state", default="bell:0", help="bell:THETA, werner:P[:THETA] or mixed")
    p.add_argument("--shots", type=int, default=10_000, help="shots per measurement setting")
    p = sub.add_parser("tomo-reconstruct", parents=[common], help="MLE reconstruction with bootstrap errors")
    p.add_argument("--record", required=True, metavar="PATH", help="counts CSV")
    p.add_argument("--resamples", type=int, default=tomography.DEFAULT_RESAMPLES)
    p.add_argument("--target-theta", type=float, default=0.0, help="phase of the target Bell state")
    sub.add_parser("noise-fidelity", parents=[common], help="fidelity limit from background counts")
    p = sub.add_parser("wavepacket", parents=[common], help="integrate the photon-generation master equation")
    p.add_argument("--x", type=float, help="position coupling factor (overrides level_scheme.x)")
    p.add_argument("--stark-mhz", type=float, help="calibrate the drive to this Raman Stark shift")
    p = sub.add_parser("link-sim", parents=[common], help="discrete-event simulation of the link protocol")
    p.add_argument("--duration", type=float, help="simulated seconds (overrides schedule.duration_s)")
    p.add_argument("--log-level", choices=["none", "sequence", "attempt"], default="sequence")
    sub.add_parser("report", parents=[common], help="run every reproduction check")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["run.seed"] = args.seed
            cfg.seed = args.seed
        if args.command == "config":
            sys.stdout.write(format_config(cfg.values))
            return EXIT_OK
        return dispatch(args.command, args, cfg)
    except (ConfigError, UsageError, tomography.TomographyError, budget.BudgetError, qstate.InvalidStateError,
            geometry.GeometryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (wavepacket.IntegrationError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
