import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionphoton.wavepacket import (
    MHZ, LevelScheme, calibrate_rabi, collapse_operators, ground_light_shift, hamiltonian_parts,
    integrate, scheme_for_ion, split_drive, stark_shift,
)

SCHEME = scheme_for_ion()


@pytest.fixture(scope="module")
def packet():
    return integrate(SCHEME, pulse_duration=20.0)


@given(st.floats(1e3, 1e10), st.floats(1e-3, 1e3))
def test_split_drive_algebra(total, ratio):
    a, b = split_drive(total, ratio)
    assert math.hypot(a, b) == pytest.approx(total, rel=1e-14)
    assert a / b == pytest.approx(ratio, rel=1e-14)


def test_split_drive_rejects_nonpositive():
    with pytest.raises(ValueError):
        split_drive(0.0, 0.8)
    with pytest.raises(ValueError):
        split_drive(1.0, -1.0)


def test_scheme_couplings_and_validation():
    s = scheme_for_ion(0.83, 0.784, 1.53 * MHZ)
    assert s.g_h == pytest.approx(0.83 * 0.784 * 1.53 * MHZ * math.sqrt(0.3))
    assert s.g_v == pytest.approx(s.g_h)
    with pytest.raises(ValueError):
        replace(s, kappa=-1.0)
    with pytest.raises(ValueError):
        replace(s, branching=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        replace(s, detuning=0.0)


def test_hamiltonian_hermitian_and_operators():
    h0, h_beat = hamiltonian_parts(SCHEME, 0.0)
    assert np.allclose(h0, h0.conj().T)
    # S -> P for each of the three cavity occupations
    assert np.count_nonzero(h_beat) == 3
    ops = collapse_operators(SCHEME)
    total = sum(c.conj().T @ c for name, c in ops.items() if name.startswith("decay"))
    # all free-space channels together empty P at the full rate
    p_rows = np.diag(total).real
    assert p_rows.max() == pytest.approx(SCHEME.gamma_p)


def test_no_drive_no_shift():
    s = SCHEME.with_rabi(0.0)
    assert stark_shift(s) == 0.0
    assert ground_light_shift(s, include_tone2=True) == 0.0
    assert calibrate_rabi(0.0, SCHEME) == 0.0


def test_stark_shift_grows_with_drive():
    shifts = [stark_shift(SCHEME.with_rabi(w * MHZ)) for w in (10.0, 20.0, 31.47)]
    assert shifts[0] < shifts[1] < shifts[2]
    # far-detuned light shift ~ omega^2
    assert shifts[1] / shifts[0] == pytest.approx(4.0, rel=0.1)


def test_calibration_round_trip():
    omega = calibrate_rabi(0.88 * MHZ, SCHEME)
    assert omega / MHZ == pytest.approx(31.48, abs=0.02)
    assert stark_shift(SCHEME.with_rabi(omega)) == pytest.approx(0.88 * MHZ, rel=1e-6)
    back = calibrate_rabi(stark_shift(SCHEME), SCHEME)
    assert back == pytest.approx(SCHEME.omega, rel=1e-3)


def test_rabi_ratio_for_two_shifts():
    ratio = calibrate_rabi(0.82 * MHZ, SCHEME) / calibrate_rabi(0.88 * MHZ, SCHEME)
    assert ratio == pytest.approx(0.9653, abs=5e-4)
    assert ratio == pytest.approx(math.sqrt(0.82 / 0.88), abs=0.005)


def test_trace_and_bookkeeping(packet):
    assert np.max(np.abs(packet.trace - 1)) < 1e-9
    assert np.max(np.abs(packet.bookkeeping_residual())) < 1e-6
    assert np.all(np.diff(packet.cumulative) >= -1e-12)
    assert np.all(packet.density >= -1e-9)


def test_cumulative_is_integral_of_density(packet):
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (packet.density[1:] + packet.density[:-1]))]) * packet.step_us
    assert integral[-1] == pytest.approx(packet.emission_probability, rel=1e-4)


def test_default_ion_emission(packet):
    full = integrate(SCHEME)
    assert full.emission_probability == pytest.approx(0.872, abs=2e-3)
    assert full.peak_time_us == pytest.approx(4.89, abs=0.05)
    assert full.cumulative_h[-1] / full.cumulative_v[-1] == pytest.approx(1.78, abs=0.02)
    assert packet.emission_probability < full.emission_probability


def test_emission_monotone_in_coupling():
    emitted = [integrate(SCHEME.scaled_coupling(f), pulse_duration=20.0).emission_probability
               for f in (0.3, 0.6, 1.0)]
    assert emitted[0] < emitted[1] < emitted[2]


def test_weaker_coupling_peaks_later():
    strong = integrate(SCHEME, pulse_duration=20.0)
    weak = integrate(SCHEME.scaled_coupling(0.83), pulse_duration=20.0)
    assert weak.peak_time_us > strong.peak_time_us


def test_uncoupled_ion_emits_nothing():
    wp = integrate(SCHEME.scaled_coupling(0.0), pulse_duration=5.0)
    assert wp.emission_probability == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(wp.bookkeeping_residual())) < 1e-9


def test_step_refinement_converges():
    a = integrate(SCHEME, pulse_duration=10.0, step=1e-3)
    b = integrate(SCHEME, pulse_duration=10.0, step=5e-4)
    assert a.emission_probability == pytest.approx(b.emission_probability, abs=2e-6)


def test_detected_copy_and_csv(packet):
    det = packet.detected(0.5)
    assert det.emission_probability == pytest.approx(0.5 * packet.emission_probability)
    assert det.trace is packet.trace
    lines = packet.to_csv().splitlines()
    assert lines[0] == "time_us,density_H,density_V,cumulative"
    assert len(lines) == len(packet.times_us) + 1
    with pytest.raises(ValueError):
        packet.detected(1.5)


def test_integrate_argument_checks():
    with pytest.raises(ValueError):
        integrate(SCHEME, pulse_duration=0.0)
    with pytest.raises(ValueError):
        integrate(SCHEME, step=-1e-3)


def test_level_scheme_dimension():
    assert LevelScheme(g_h=1.0, g_v=1.0).dimension == 12


def test_drive_off_emits_nothing():
    wp = integrate(SCHEME.with_rabi(0.0), pulse_duration=5.0)
    assert np.max(np.abs(wp.cumulative)) == 0.0
    assert wp.ground[-1] == pytest.approx(1.0)


def test_closed_cavity_keeps_photon_inside():
    wp = integrate(replace(SCHEME, kappa=0.0), pulse_duration=10.0)
    assert wp.emission_probability == 0.0
    assert wp.photon.max() > 0.1
    assert np.max(np.abs(wp.trace - 1)) < 1e-9
    assert wp.photon.max() <= 1 + 1e-9


def test_shift_quadratic_at_small_drive():
    small = SCHEME.with_rabi(3.0 * MHZ)
    ratio = stark_shift(SCHEME.with_rabi(6.0 * MHZ)) / stark_shift(small)
    assert ratio == pytest.approx(4.0, rel=0.05)
