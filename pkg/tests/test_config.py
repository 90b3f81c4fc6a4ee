import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionphoton.config import (
    DEFAULTS, ConfigError, build_config, derive_seed, format_config, format_uncertainty, load_config,
    parse_config,
)
from ionphoton.linksim import effective_rate, success_probability


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.seed == 0
    assert cfg["schedule.total_us"] == 757
    assert cfg.channel.transmission == 0.0136
    assert cfg.channel.background_rate == 2.0
    assert cfg.schedule.attempt_duration == 757
    assert cfg.single_schedule.attempt_duration == 633
    assert cfg.budget_file is None


def test_default_schedule_reproduces_rate():
    cfg = load_config(None)
    p = success_probability(cfg["channel.measured_probabilities"])
    assert effective_rate(p, cfg.schedule.attempt_duration) == pytest.approx(2.85, abs=0.01)


def test_values_and_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# header\nrun.seed = 7   # trailing\n\nschedule.total_us=800\n"
                    "channel.measured_probabilities = 1e-3, 2e-3, 3e-3\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg.schedule.attempt_duration == 800
    assert cfg["channel.measured_probabilities"] == (1e-3, 2e-3, 3e-3)


def test_malformed_value_cites_line_and_key():
    with pytest.raises(ConfigError, match=r"line 2: invalid value 'banana' for key 'channel.transmission'"):
        parse_config("run.seed = 1\nchannel.transmission = banana\n")


@pytest.mark.parametrize("text, pattern", [
    ("channel.colour = red\n", "line 1: unknown key 'channel.colour'"),
    ("run.seed 4\n", "line 1: expected"),
    ("run.seed = 1\nrun.seed = 2\n", "line 2: key 'run.seed' already set on line 1"),
    ("run.seed = 1.5\n", "line 1: invalid value"),
])
def test_parse_errors(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text)


@pytest.mark.parametrize("key, value", [
    ("channel.transmission", 1.5), ("schedule.total_us", 0.0), ("geometry.n_ions", 0),
    ("level_scheme.x", 2.0), ("run.budget_file", "/no/such/file.budget"),
])
def test_invariant_violations_name_the_key(key, value):
    values = parse_config("")
    values[key] = value
    with pytest.raises(ConfigError, match=key):
        build_config(values)


def test_format_round_trip():
    values = parse_config("run.seed = 3\ngeometry.axial_shift_um = -1.4\n")
    assert parse_config(format_config(values)) == values
    assert len(format_config(values).splitlines()) >= len(DEFAULTS)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/no/such/run.cfg")


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "linksim", "run") == derive_seed(0, "linksim", "run")
    seeds = {derive_seed(s, m, p) for s in (0, 1) for m in ("a", "b") for p in ("x", "y")}
    assert len(seeds) == 8
    assert 0 <= derive_seed(123, "tomography") < 2**63


@pytest.mark.parametrize("value, sigma, text", [
    (0.315, 0.00275, "0.315(3)"),
    (7.848e-4, 2.98e-5, "7.8(3)e-4"),
    (0.52768, 0.02725, "0.53(3)"),
    (1.4634e-3, 1.1485e-4, "1.46(11)e-3"),
    (2.1584e-3, 5e-5, "2.16(5)e-3"),
    (2.85, 0.07, "2.85(7)"),
    (123.4, 12.0, "123(12)"),
])
def test_uncertainty_notation(value, sigma, text):
    assert format_uncertainty(value, sigma) == text


@given(st.floats(1e-6, 1e3), st.floats(1e-3, 0.5))
def test_uncertainty_notation_parses_back(value, rel):
    sigma = value * rel
    text = format_uncertainty(value, sigma)
    mantissa, _, exp = text.partition("e")
    digits = mantissa.split("(")[0]
    scale = 10.0 ** int(exp) if exp else 1.0
    assert float(digits) * scale == pytest.approx(value, abs=sigma)
