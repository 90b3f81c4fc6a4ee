"""Line-oriented run configuration (``section.key = value``) and seed fan-out.

Unset keys take the defaults below, which mirror the experiment. Frequencies
in the file are given in MHz as ordinary frequencies (``omega / 2 pi``).
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

from .geometry import ATOMIC_MASS_UNIT, StringGeometry
from .linksim import AttemptSchedule
from .noise import ChannelModel
from .wavepacket import MHZ, LevelScheme, scheme_for_ion


class ConfigError(ValueError):
    pass


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _text(text):
    return text


# key -> (parser, default text, description)
DEFAULTS: dict[str, tuple] = {
    "run.seed": (_int, "0", "global seed; sub-seeds are derived per module"),
    "run.output_dir": (_text, "out", "directory for artifact files"),
    "run.budget_file": (_text, "", "efficiency chain file; empty uses the built-in chains"),
    "channel.transmission": (_float, "0.0136", "101 km fiber transmission"),
    "channel.background_rate_cps": (_float, "2.0", "background clicks summed over both detectors"),
    "channel.window_us": (_float, "50", "photon detection window"),
    "channel.measured_probabilities": (_floats, "6.5e-4, 7.8e-4, 7.3e-4",
                                       "measured per-window click probabilities after 101 km"),
    "schedule.n_ions": (_int, "3", "ions used per attempt"),
    "schedule.reinit_us": (_float, "70", "cooling and pumping at the start of each attempt"),
    "schedule.slot_us": (_float, "62", "Raman pulse plus deflector switch per ion"),
    "schedule.wait_us": (_float, "503", "wait for the photons to cross the fiber"),
    "schedule.total_us": (_float, "757", "calibrated multimode attempt duration"),
    "schedule.single_ion_total_us": (_float, "633", "single-ion attempt duration"),
    "schedule.travel_us": (_float, "494", "photon travel time through the spool"),
    "schedule.max_attempts": (_int, "15", "attempts per sequence"),
    "schedule.init_us": (_float, "7020", "Doppler cooling and pumping before a sequence"),
    "schedule.measure_us": (_float, "1500", "ion readout after a success"),
    "schedule.duration_s": (_float, "1000", "simulated time for link-sim"),
    "geometry.n_ions": (_int, "3", "ions in the string"),
    "geometry.axial_frequency_mhz": (_float, "0.869", "axial centre-of-mass frequency"),
    "geometry.mass_u": (_float, "39.9626", "ion mass in atomic mass units"),
    "geometry.angle_deg": (_float, "85.3", "angle between string and cavity axis"),
    "geometry.antinode_spacing_um": (_float, "0.427", "antinode spacing of the 854 nm mode"),
    "geometry.waist_um": (_float, "12.06", "cavity mode waist"),
    "geometry.axial_shift_um": (_float, "0", "string displacement along the trap axis"),
    "level_scheme.g0_mhz": (_float, "1.53", "maximum ion-cavity coupling"),
    "level_scheme.gamma": (_float, "0.784", "coupling reduction from ion motion"),
    "level_scheme.x": (_float, "1.0", "position coupling factor of the simulated ion"),
    "level_scheme.omega_mhz": (_float, "31.47", "total sigma- Rabi frequency"),
    "level_scheme.drive_ratio": (_float, "0.81", "ratio of the two sigma- drive components"),
    "level_scheme.detuning_mhz": (_float, "367", "drive detuning from P"),
    "level_scheme.kappa_mhz": (_float, "0.07", "cavity field decay rate"),
    "level_scheme.gamma_p_mhz": (_float, "23.1", "P population decay rate"),
    "level_scheme.zeeman_d_mhz": (_float, "7.0", "D' - D splitting"),
    "level_scheme.pulse_us": (_float, "50", "Raman pulse length"),
    "level_scheme.step_us": (_float, "0.001", "integrator step"),
    "level_scheme.path_efficiency": (_float, "0.518", "detection path efficiency for the detected overlay"),
}


@dataclass
class RunConfig:
    values: dict[str, object]
    seed: int
    channel: ChannelModel
    schedule: AttemptSchedule
    single_schedule: AttemptSchedule
    geometry: StringGeometry
    level_scheme: LevelScheme
    budget_file: str | None
    output_dir: str
    sources: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def channels(self) -> list[ChannelModel]:
        """One channel model per measured window probability."""
        c = self.channel
        return [ChannelModel.from_measured(p, c.background_rate, c.window, c.transmission)
                for p in self.values["channel.measured_probabilities"]]


def parse_config(text: str) -> dict[str, object]:
    """Parse config text into typed values with defaults filled in."""
    values = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: key {key!r} already set on line {seen[key]}")
        parser = DEFAULTS[key][0]
        try:
            values[key] = parser(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: invalid value {value!r} for key {key!r}") from None
        seen[key] = lineno
    for key, (parser, default, _) in DEFAULTS.items():
        values.setdefault(key, parser(default))
    return values


def build_config(values: dict[str, object], sources: dict[str, int] | None = None) -> RunConfig:
    v = values

    def check(key, ok, what):
        if not ok:
            raise ConfigError(f"key {key!r}: {what}")

    for key in ("channel.transmission",):
        check(key, 0 <= v[key] <= 1, "must be a probability")
    check("channel.background_rate_cps", v["channel.background_rate_cps"] >= 0, "must be >= 0")
    check("channel.window_us", v["channel.window_us"] > 0, "must be > 0")
    probs = v["channel.measured_probabilities"]
    check("channel.measured_probabilities", len(probs) >= 1 and all(0 < p <= 1 for p in probs),
          "needs one or more probabilities in (0, 1]")
    for key in ("schedule.reinit_us", "schedule.slot_us", "schedule.wait_us", "schedule.total_us",
                "schedule.single_ion_total_us", "schedule.travel_us", "schedule.duration_s",
                "geometry.axial_frequency_mhz", "geometry.mass_u", "geometry.waist_um",
                "geometry.antinode_spacing_um", "level_scheme.pulse_us", "level_scheme.step_us",
                "level_scheme.detuning_mhz"):
        check(key, v[key] > 0, "must be > 0")
    for key in ("schedule.init_us", "schedule.measure_us", "level_scheme.kappa_mhz",
                "level_scheme.gamma_p_mhz", "level_scheme.omega_mhz", "level_scheme.g0_mhz"):
        check(key, v[key] >= 0, "must be >= 0")
    for key in ("schedule.n_ions", "schedule.max_attempts", "geometry.n_ions"):
        check(key, v[key] >= 1, "must be >= 1")
    for key in ("level_scheme.gamma", "level_scheme.x", "level_scheme.path_efficiency"):
        check(key, 0 <= v[key] <= 1, "must be in [0, 1]")
    check("level_scheme.drive_ratio", v["level_scheme.drive_ratio"] > 0, "must be > 0")
    check("geometry.angle_deg", 0 <= v["geometry.angle_deg"] <= 90, "must be in [0, 90]")
    budget_file = v["run.budget_file"] or None
    if budget_file is not None and not os.path.isfile(budget_file):
        raise ConfigError(f"key 'run.budget_file': file {budget_file!r} does not exist")

    channel = ChannelModel.from_measured(
        max(probs), v["channel.background_rate_cps"], v["channel.window_us"] * 1e-6,
        v["channel.transmission"])
    n = v["schedule.n_ions"]
    segments = [("reinit", v["schedule.reinit_us"])]
    segments += [(f"generate_{i + 1}", v["schedule.slot_us"]) for i in range(n)]
    segments.append(("travel_wait", v["schedule.wait_us"]))
    common = dict(max_attempts=v["schedule.max_attempts"], init_duration=v["schedule.init_us"],
                  measure_duration=v["schedule.measure_us"])
    schedule = AttemptSchedule(tuple(segments), n_ions=n, total_override_us=v["schedule.total_us"], **common)
    single = AttemptSchedule(
        (("reinit", v["schedule.reinit_us"]), ("generate_1", v["schedule.slot_us"]),
         ("travel_wait", v["schedule.travel_us"])),
        n_ions=1, total_override_us=v["schedule.single_ion_total_us"], **common)
    geometry = StringGeometry(
        n_ions=v["geometry.n_ions"],
        omega_z=2 * math.pi * v["geometry.axial_frequency_mhz"] * 1e6,
        ion_mass=v["geometry.mass_u"] * ATOMIC_MASS_UNIT,
        angle=v["geometry.angle_deg"],
        antinode_spacing=v["geometry.antinode_spacing_um"],
        waist=v["geometry.waist_um"],
        axial_shift=v["geometry.axial_shift_um"],
    )
    scheme = scheme_for_ion(
        v["level_scheme.x"], v["level_scheme.gamma"], v["level_scheme.g0_mhz"] * MHZ,
        omega=v["level_scheme.omega_mhz"] * MHZ, drive_ratio=v["level_scheme.drive_ratio"],
        detuning=v["level_scheme.detuning_mhz"] * MHZ, kappa=v["level_scheme.kappa_mhz"] * MHZ,
        gamma_p=v["level_scheme.gamma_p_mhz"] * MHZ, zeeman_d=v["level_scheme.zeeman_d_mhz"] * MHZ,
    )
    return RunConfig(values=dict(values), seed=v["run.seed"], channel=channel, schedule=schedule,
                     single_schedule=single, geometry=geometry, level_scheme=scheme,
                     budget_file=budget_file, output_dir=v["run.output_dir"], sources=sources or {})


def load_config(path=None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the defaults."""
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(parse_config(text))


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(f"{x:g}" for x in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def format_config(values: dict[str, object]) -> str:
    lines = []
    section = None
    for key, (_, _, description) in DEFAULTS.items():
        sec = key.split(".", 1)[0]
        if sec != section:
            if section is not None:
                lines.append("")
            section = sec
        lines.append(f"{key} = {_format_value(values[key])}  # {description}")
    return "\n".join(lines) + "\n"


def derive_seed(seed: int, module: str, purpose: str = "") -> int:
    """Stable 63-bit sub-seed for ``(seed, module, purpose)``."""
    digest = hashlib.sha256(f"{seed}/{module}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def format_uncertainty(value: float, sigma: float) -> str:
    """Compact ``value(sigma)`` notation, e.g. ``0.315(3)`` or ``7.8(3)e-4``.

    The uncertainty keeps two digits when its leading digit is 1, else one.
    """
    if not math.isfinite(value) or not math.isfinite(sigma) or sigma < 0:
        return f"{value:g}({sigma:g})"
    if sigma == 0:
        return f"{value:.6g}(0)"
    exp10 = 0
    if value != 0 and abs(value) < 1e-2:
        exp10 = math.floor(math.log10(abs(value)))
    v, s = value / 10**exp10, sigma / 10**exp10
    lead = math.floor(math.log10(s))
    digits = 2 if round(s / 10**lead) < 2 else 1
    decimals = max(0, -(lead - digits + 1))
    s_units = round(s * 10**decimals)
    if s_units >= 10**digits and decimals > 0:
        decimals -= 1
        s_units = round(s * 10**decimals)
    if decimals == 0:
        body = f"{v:.0f}({s_units})"
    else:
        body = f"{v:.{decimals}f}({s_units})"
    return body if exp10 == 0 else f"{body}e{exp10}"
