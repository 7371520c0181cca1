import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aris_empc.channel import build_channels, snr_direct
from aris_empc.phase import (build_difference_system, build_target_vector, optimal_phases, rate_lower_bound,
                             snr_closed_form, surrogate_objective, true_rate_term, weights, wrap_phases)
from aris_empc.scenario import ScenarioConfig, UserSet

import oracles
from conftest import random_users

positions = st.tuples(st.floats(-1500, 2500), st.floats(-1500, 2500))


def one_user(x, y):
    return UserSet(np.array([[x, y, 0.0]]))


def test_difference_system_three_elements():
    sys = build_difference_system(3)
    expected = np.array([[1, -1, 0], [1, 0, -1], [0, 1, -1]], dtype=float)
    assert np.array_equal(sys.a_matrix, expected)
    assert sys.pair_order == ((0, 1), (0, 2), (1, 2))


def test_difference_system_two_elements():
    assert np.array_equal(build_difference_system(2).a_matrix, [[1.0, -1.0]])


def test_difference_system_single_element_is_empty():
    assert build_difference_system(1).a_matrix.shape == (0, 1)


@given(st.integers(2, 16))
def test_difference_system_structure(n):
    a = build_difference_system(n).a_matrix
    assert a.shape == (n * (n - 1) // 2, n)
    assert np.array_equal(a @ np.ones(n), np.zeros(a.shape[0]))
    assert np.linalg.matrix_rank(a) == n - 1
    assert np.all((a == 1).sum(axis=1) == 1)
    assert np.all((a == -1).sum(axis=1) == 1)
    assert np.array_equal(a, oracles.pair_matrix(n))


def _offset_geometry(delta, altitude=150.0):
    """UAV at x=0 (BS-side sine zero) and one user whose sine is ``delta``."""
    cfg = ScenarioConfig(num_ris_elements=2, altitude=altitude)
    dx = altitude * delta / np.sqrt(1 - delta**2)
    q = (0.0, 600.0)
    users = one_user(dx, 600.0)
    return q, users, cfg, build_channels(q, users, cfg, 0)


def test_target_vector_zero_for_matched_angles():
    cfg = ScenarioConfig(num_ris_elements=5)
    q = (0.0, 400.0)
    users = one_user(0.0, 400.0)
    ch = build_channels(q, users, cfg, 0)
    assert np.allclose(build_target_vector(q, 0, ch, cfg), 0.0, atol=1e-15)


def test_target_vector_two_elements_half_sine():
    q, users, cfg, ch = _offset_geometry(0.5)
    b = build_target_vector(q, 0, ch, cfg)
    assert b.shape == (1,)
    assert b[0] == pytest.approx(np.pi / 2, rel=1e-12)


def test_target_vector_sign_against_direct_snr():
    # Grid over theta_1 with theta_0 = 0: the best difference theta_0 - theta_1 is b.
    q, users, cfg, ch = _offset_geometry(0.5)
    grid = np.linspace(0, 2 * np.pi, 3600, endpoint=False)
    snr = [snr_direct(q, np.array([0.0, t]), 0, ch, cfg) for t in grid]
    best = grid[int(np.argmax(snr))]
    b = build_target_vector(q, 0, ch, cfg)[0]
    assert abs(oracles.wrap(0.0 - best - b)) < 2 * np.pi / 3600


def test_target_vector_linear_in_element_spacing(rng):
    users = random_users(rng, 2)
    q = (300.0, 250.0)
    c1 = ScenarioConfig(elem_sep_ris=0.05)
    c2 = ScenarioConfig(elem_sep_ris=0.1)
    b1 = build_target_vector(q, 1, build_channels(q, users, c1, 0), c1)
    b2 = build_target_vector(q, 1, build_channels(q, users, c2, 0), c2)
    assert np.allclose(b2, 2 * b1, rtol=1e-13, atol=1e-13)


@given(positions, st.integers(1, 10), st.integers(1, 4), st.integers(0, 10**6))
def test_closed_form_matches_direct(q, n, m, seed):
    cfg = ScenarioConfig(num_ris_elements=n, num_bs_antennas=m)
    rng = np.random.default_rng(seed)
    users = random_users(rng, 2)
    ch = build_channels(q, users, cfg, seed)
    theta = rng.uniform(0, 2 * np.pi, n)
    for k in range(2):
        ref = snr_direct(q, theta, k, ch, cfg)
        assert snr_closed_form(q, theta, k, ch, cfg) == pytest.approx(ref, rel=1e-9, abs=1e-30)


def test_closed_form_gain_factor(rng):
    cfg = ScenarioConfig(num_ris_elements=6, num_bs_antennas=4)
    users = random_users(rng, 1)
    q = (200.0, 900.0)
    ch = build_channels(q, users, cfg, 1)
    theta = rng.uniform(0, 2 * np.pi, 6)
    full = snr_closed_form(q, theta, 0, ch, cfg)
    unit = snr_closed_form(q, theta, 0, ch, cfg, gain=1)
    assert full == pytest.approx(4 * unit, rel=1e-12)


def test_closed_form_single_element(rng):
    cfg = ScenarioConfig(num_ris_elements=1)
    users = random_users(rng, 1)
    ch = build_channels((5.0, 5.0), users, cfg, 0)
    c = weights(ch, cfg).c[0]
    assert snr_closed_form((5.0, 5.0), np.array([1.0]), 0, ch, cfg) == pytest.approx(c, rel=1e-14)


def test_closed_form_matches_position_oracle(rng):
    cfg = ScenarioConfig(num_ris_elements=7)
    users = random_users(rng, 3)
    q = (812.0, 133.0)
    ch = build_channels(q, users, cfg, 4)
    theta = rng.uniform(0, 2 * np.pi, 7)
    for k in range(3):
        assert snr_closed_form(q, theta, k, ch, cfg) == pytest.approx(
            oracles.brute_force_snr(q, theta, k, users, cfg), rel=1e-10)


@given(positions, st.integers(1, 12), st.integers(0, 10**6))
def test_bound_below_true_rate(q, n, seed):
    cfg = ScenarioConfig(num_ris_elements=n)
    rng = np.random.default_rng(seed)
    users = random_users(rng, 3)
    ch = build_channels(q, users, cfg, 0)
    theta = rng.uniform(0, 2 * np.pi, n)
    for k in range(3):
        true = true_rate_term(q, theta, k, ch, cfg)
        assert rate_lower_bound(q, theta, k, ch, cfg) <= true + 1e-12
        assert rate_lower_bound(q, theta, k, ch, cfg, wrap=False) <= true + 1e-12


def test_bound_at_alignment(rng):
    cfg = ScenarioConfig(num_ris_elements=9)
    users = random_users(rng, 1)
    q = (640.0, 210.0)
    ch = build_channels(q, users, cfg, 0)
    theta = optimal_phases(q, ch, users, cfg)
    w = weights(ch, cfg)
    assert rate_lower_bound(q, theta, 0, ch, cfg) == pytest.approx(w.gamma[0] * 81, rel=1e-10)
    assert snr_direct(q, theta, 0, ch, cfg) == pytest.approx(w.c[0] * 81, rel=1e-9)
    assert rate_lower_bound(q, theta, 0, ch, cfg) <= true_rate_term(q, theta, 0, ch, cfg)


def test_single_element_bound_and_rate(rng):
    cfg = ScenarioConfig(num_ris_elements=1)
    users = random_users(rng, 2)
    ch = build_channels((50.0, 50.0), users, cfg, 0)
    w = weights(ch, cfg)
    theta = np.array([2.0])
    assert rate_lower_bound((50.0, 50.0), theta, 1, ch, cfg) == pytest.approx(w.gamma[1], rel=1e-14)
    assert true_rate_term((50.0, 50.0), theta, 1, ch, cfg) == pytest.approx(
        cfg.bandwidth / 2 * np.log1p(w.c[1]) / np.log(2), rel=1e-12)


def test_single_user_phases_zero_residual(rng):
    cfg = ScenarioConfig(num_ris_elements=6)
    users = random_users(rng, 1)
    q = (100.0, 1000.0)
    ch = build_channels(q, users, cfg, 0)
    theta = optimal_phases(q, ch, users, cfg, wrap=False)
    a = build_difference_system(6).a_matrix
    assert np.allclose(a @ theta, build_target_vector(q, 0, ch, cfg), atol=1e-9)
    assert surrogate_objective(q, theta, ch, users, cfg) == pytest.approx(0.0, abs=1e-12)


def test_colocated_users_match_single_user(rng):
    cfg = ScenarioConfig(num_ris_elements=5)
    q = (420.0, 380.0)
    one = one_user(700.0, 200.0)
    many = UserSet(np.tile([700.0, 200.0, 0.0], (4, 1)))
    t1 = optimal_phases(q, build_channels(q, one, cfg, 0), one, cfg)
    t4 = optimal_phases(q, build_channels(q, many, cfg, 0), many, cfg)
    assert np.allclose(oracles.wrap(t1 - t4), 0.0, atol=1e-10)


def test_phases_wrapped_into_range(rng):
    cfg = ScenarioConfig(num_ris_elements=32)
    users = random_users(rng, 10)
    q = (1200.0, 50.0)
    theta = optimal_phases(q, build_channels(q, users, cfg, 0), users, cfg)
    assert np.all((theta >= 0) & (theta < 2 * np.pi))
    assert np.all(wrap_phases(np.array([-1e-17, 2 * np.pi, -2 * np.pi])) < 2 * np.pi)


def test_phases_single_user_gain_invariant(rng):
    cfg = ScenarioConfig(num_ris_elements=8)
    users = random_users(rng, 1)
    q = (900.0, 700.0)
    ch = build_channels(q, users, cfg, 0)
    a = optimal_phases(q, ch, users, cfg, gain=1)
    b = optimal_phases(q, ch, users, cfg, gain=cfg.num_bs_antennas)
    assert np.allclose(oracles.wrap(a - b), 0.0, atol=1e-12)


def test_phases_gain_dependence_is_weak(shipped_config, shipped_users):
    # The weights scale nonlinearly with the gain, so with many users the
    # optimum moves, but only slightly in the low-SNR regime.
    q = (600.0, 600.0)
    ch = build_channels(q, shipped_users, shipped_config, 0)
    a = optimal_phases(q, ch, shipped_users, shipped_config, gain=1, wrap=False)
    b = optimal_phases(q, ch, shipped_users, shipped_config, wrap=False)
    assert np.max(np.abs(a - b)) < 0.05 * np.max(np.abs(a))


@given(positions, st.floats(-10, 10))
def test_global_phase_shift_invariance(q, shift):
    cfg = ScenarioConfig(num_ris_elements=6)
    rng = np.random.default_rng(0)
    users = random_users(rng, 3)
    ch = build_channels(q, users, cfg, 0)
    theta = rng.uniform(0, 2 * np.pi, 6)
    s0 = surrogate_objective(q, theta, ch, users, cfg, wrap=False)
    s1 = surrogate_objective(q, theta + shift, ch, users, cfg, wrap=False)
    assert s1 == pytest.approx(s0, rel=1e-9, abs=1e-9)
    assert snr_closed_form(q, theta + shift, 1, ch, cfg) == pytest.approx(
        snr_closed_form(q, theta, 1, ch, cfg), rel=1e-9)


def test_surrogate_matches_oracle(rng):
    cfg = ScenarioConfig(num_ris_elements=5)
    users = random_users(rng, 4)
    q = (333.0, 444.0)
    ch = build_channels(q, users, cfg, 0)
    theta = rng.uniform(0, 2 * np.pi, 5)
    assert surrogate_objective(q, theta, ch, users, cfg, wrap=False) == pytest.approx(
        oracles.unwrapped_surrogate(theta, q, users, cfg), rel=1e-12)


@pytest.mark.parametrize("n,k", [(3, 2), (5, 4), (8, 6)])
def test_least_squares_matches_projected_gradient(n, k):
    cfg = ScenarioConfig(num_ris_elements=n)
    rng = np.random.default_rng(n * 100 + k)
    users = random_users(rng, k)
    q = (500.0, 450.0)
    ch = build_channels(q, users, cfg, 0)
    ls = optimal_phases(q, ch, users, cfg, wrap=False)
    pgd = oracles.pgd_minimize(q, users, cfg)
    f_ls = surrogate_objective(q, ls, ch, users, cfg, wrap=False)
    f_pgd = oracles.unwrapped_surrogate(pgd, q, users, cfg)
    assert f_ls == pytest.approx(f_pgd, rel=1e-8)
    assert np.allclose(ls - ls.mean(), pgd, atol=1e-6)


def test_random_phases_never_beat_least_squares():
    cfg = ScenarioConfig(num_ris_elements=6)
    rng = np.random.default_rng(77)
    users = random_users(rng, 5)
    q = (700.0, 300.0)
    ch = build_channels(q, users, cfg, 0)
    best = surrogate_objective(q, optimal_phases(q, ch, users, cfg, wrap=False), ch, users, cfg, wrap=False)
    samples = rng.uniform(0, 2 * np.pi, (1000, 6))
    vals = [surrogate_objective(q, t, ch, users, cfg, wrap=False) for t in samples]
    assert min(vals) >= best


def test_two_element_grid_matches_surrogate(rng):
    cfg = ScenarioConfig(num_ris_elements=2)
    users = random_users(rng, 3)
    q = (250.0, 820.0)
    ch = build_channels(q, users, cfg, 0)
    vals, axis = oracles.surrogate_two_element_grid(q, users, cfg, 36)
    for i, j in [(0, 0), (3, 17), (35, 2)]:
        theta = np.array([axis[i], axis[j]])
        assert vals[i, j] == pytest.approx(surrogate_objective(q, theta, ch, users, cfg), rel=1e-10)
