import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import sqrtm

from ionphoton.metrics import (
    LocalRotation, coherence_phase, concurrence, fidelity, modulus_fidelity, optimize_local_rotation,
    purity, su2,
)
from ionphoton.qstate import (
    PAULI, bell_state, maximally_mixed, product_state, pure_density, random_density_matrix, werner_state,
)


def wootters_reference(rho):
    """Textbook route through sqrt(sqrt(rho) rho~ sqrt(rho))."""
    yy = np.kron(PAULI["Y"], PAULI["Y"])
    tilde = yy @ rho.conj() @ yy
    s = sqrtm(rho)
    lam = np.sort(np.abs(np.linalg.eigvals(sqrtm(s @ tilde @ s))))[::-1]
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40)
@given(seeds)
def test_concurrence_matches_textbook_formula(seed):
    rho = random_density_matrix(np.random.default_rng(seed), rank=2)
    assert concurrence(rho) == pytest.approx(wootters_reference(rho), abs=1e-6)


def test_concurrence_known_values():
    assert concurrence(pure_density(bell_state(1.1))) == pytest.approx(1.0, abs=1e-12)
    assert concurrence(maximally_mixed()) == 0.0
    assert concurrence(pure_density(product_state([1, 1], [1, 0]))) == pytest.approx(0.0, abs=1e-12)
    # Werner: max(0, (3p - 1)/2)
    for p in (0.2, 1 / 3, 0.5, 0.8):
        assert concurrence(werner_state(p)) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-12)


def test_concurrence_of_partially_entangled_pure_state():
    # a|up,V> + b|down,H> has C = 2|ab|
    a, b = np.sqrt(0.2), np.sqrt(0.8)
    psi = np.array([0, a, b, 0], dtype=complex)
    assert concurrence(pure_density(psi)) == pytest.approx(2 * a * b, abs=1e-12)


def test_fidelity_and_purity():
    psi = bell_state(0.0)
    assert fidelity(werner_state(0.8), psi) == pytest.approx(0.85)
    assert fidelity(pure_density(bell_state(np.pi)), psi) == pytest.approx(0.0, abs=1e-15)
    assert purity(werner_state(0.8)) == pytest.approx((1 + 3 * 0.8**2) / 4)
    assert purity(maximally_mixed()) == pytest.approx(0.25)


def test_modulus_fidelity_removes_phase():
    rho = pure_density(bell_state(2.0))
    assert fidelity(rho, bell_state(0.0)) == pytest.approx((1 + np.cos(2.0)) / 2)
    assert modulus_fidelity(rho, bell_state(0.0)) == pytest.approx(1.0)


def test_coherence_phase():
    for theta in (0.0, 1.0, -2.5, np.pi):
        assert coherence_phase(pure_density(bell_state(theta))) == pytest.approx(theta)
    with pytest.raises(ValueError, match="phase undefined"):
        coherence_phase(maximally_mixed())


@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-6, 6))
def test_su2_is_special_unitary(a, b, c):
    u = su2(a, b, c)
    assert np.allclose(u @ u.conj().T, np.eye(2))
    assert np.linalg.det(u) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(seeds, seeds)
def test_local_rotation_preserves_concurrence(seed_state, seed_rot):
    rho = random_density_matrix(np.random.default_rng(seed_state))
    rot = LocalRotation.random(np.random.default_rng(seed_rot))
    assert concurrence(rot.apply(rho)) == pytest.approx(concurrence(rho), abs=1e-9)


@pytest.mark.parametrize("theta", [0.0, 0.4, np.pi / 2, 2.2, np.pi, 5.0])
def test_rotation_search_recovers_phase(theta):
    rho = pure_density(bell_state(theta))
    rot, f = optimize_local_rotation(rho, bell_state(0.0))
    assert f == pytest.approx(1.0, abs=1e-6)
    assert fidelity(rot.apply(rho), bell_state(0.0)) == pytest.approx(f, abs=1e-12)


def test_rotation_search_never_worse_than_identity():
    rho = werner_state(0.6)
    rot, f = optimize_local_rotation(rho, bell_state(0.0), restarts=2)
    assert f >= fidelity(rho, bell_state(0.0)) - 1e-15


def test_rotation_search_is_deterministic():
    rho = random_density_matrix(np.random.default_rng(3))
    a = optimize_local_rotation(rho, bell_state(0.0), seed=5, restarts=3)
    b = optimize_local_rotation(rho, bell_state(0.0), seed=5, restarts=3)
    assert a == b


def test_rotation_search_bound_for_werner():
    # local unitaries cannot raise Werner fidelity above (1 + 3p)/4
    rot, f = optimize_local_rotation(werner_state(0.5), bell_state(0.0), restarts=3)
    assert f == pytest.approx(0.625, abs=1e-8)
