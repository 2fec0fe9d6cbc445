import numpy as np
import pytest

from numpy.testing import assert_allclose
from scipy import integrate
from scipy.stats import norm

from cvxmdp.errors import ArgumentError, ConfigurationError
from cvxmdp.mdp_knr import (
    KnrEstimate,
    KnrTruth,
    StateActionFeature,
    StateGrid,
    elliptical_potential,
    exploration_bonus,
    gaussian_chi_square,
    knr_radius,
    knr_sample_step,
    ridge_fit,
    update_confidence,
)


@pytest.fixture
def phi() -> StateActionFeature:
    return StateActionFeature("random-projection", state_dim=2, num_actions=2, dim=3, seed=4)


# HH: Features and dynamics


@pytest.mark.parametrize("kind", ["identity", "tabular-onehot", "random-projection"])
def test_feature_norms_are_bounded(kind, rng):
    phi = StateActionFeature(kind, state_dim=2, num_actions=3, dim=5)
    states = rng.normal(scale=3.0, size=(500, 2))
    actions = rng.integers(0, 3, 500)
    values = phi(states, actions)
    assert values.shape == (500, phi.dim)
    assert np.linalg.norm(values, axis=1).max() <= 1.0 + 1e-12


def test_unknown_feature_kind():
    with pytest.raises(ConfigurationError):
        StateActionFeature("fourier", 1, 2)


def test_truth_rejects_large_operator_norm(phi):
    with pytest.raises(ConfigurationError):
        KnrTruth(np.full((2, 3), 2.0), phi, 0.1, 3, np.zeros(2))


def test_sample_step_without_noise_is_the_mean(phi, rng):
    truth = KnrTruth.random(phi, sigma=0.0, horizon=3, seed=1)
    s = np.array([0.3, -0.2])
    assert_allclose(knr_sample_step(truth, s, 1, rng), truth.W @ phi(s, [1])[0])


@pytest.mark.slow
def test_sample_step_mean(phi):
    truth = KnrTruth.random(phi, sigma=0.5, horizon=3, seed=2)
    s = np.array([0.1, 0.4])
    n = 10**5
    sampler = truth.sampler(phi.as_feature_map(3))
    draws = sampler.sample_next(0, np.tile(s, (n, 1)), np.zeros(n, dtype=np.int64), np.random.default_rng(3))
    expected = truth.W @ phi(s, [0])[0]
    assert np.all(np.abs(draws.mean(axis=0) - expected) <= 4 * truth.sigma / np.sqrt(n))


# HH: Ridge regression


def test_ridge_recovers_noiseless_dynamics(rng):
    W = rng.normal(size=(2, 3))
    phis = rng.normal(size=(20, 3))
    transitions = [(p, W @ p) for p in phis]
    estimate = ridge_fit(transitions, lam=1e-8)
    assert np.linalg.norm(estimate.W_hat - W) <= 1e-5


def test_ridge_with_no_data_is_the_prior():
    estimate = ridge_fit([], lam=2.0, dim_phi=3, state_dim=2)
    assert_allclose(estimate.W_hat, 0.0)
    assert_allclose(estimate.Lambda, 2.0 * np.eye(3))
    with pytest.raises(ArgumentError):
        ridge_fit([], lam=1.0)


def test_incremental_updates_match_batch_fit(rng):
    W = rng.normal(size=(2, 3))
    phis = rng.normal(size=(12, 3))
    nexts = phis @ W.T + 0.1 * rng.normal(size=(12, 2))
    batch = ridge_fit(list(zip(phis, nexts)), lam=1.0)
    incremental = KnrEstimate.prior(2, 3, 1.0)
    for i in range(0, 12, 4):
        incremental = incremental.updated(phis[i : i + 4], nexts[i : i + 4])
    assert_allclose(incremental.W_hat, batch.W_hat, atol=1e-12)
    assert incremental.n == 12


def test_radius_grows_with_t_and_shrinks_with_delta():
    assert knr_radius(10, 2, 1.0, 0.1, 0.1) > knr_radius(2, 2, 1.0, 0.1, 0.1)
    assert knr_radius(10, 2, 1.0, 0.1, 0.01) > knr_radius(10, 2, 1.0, 0.1, 0.1)


def test_radius_with_zero_noise_is_two_lambda():
    assert knr_radius(5, 3, 1.5, 0.0, 0.1) == pytest.approx(3.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(t=0, d=1, lam=1.0, sigma=1.0, delta=0.1),
        dict(t=1, d=1, lam=1.0, sigma=1.0, delta=1.5),
        dict(t=1, d=1, lam=0.0, sigma=1.0, delta=0.1),
        dict(t=1, d=1, lam=1.0, sigma=1.0, delta=0.1, det_ratio=0.5),
    ],
)
def test_radius_rejects_bad_inputs(kwargs):
    with pytest.raises(ConfigurationError):
        knr_radius(**kwargs)


@pytest.mark.slow
def test_ellipsoid_covers_the_truth(phi):
    runs, T, H, delta = 200, 100, 4, 0.1
    covered = 0
    for seed in range(runs):
        truth = KnrTruth.random(phi, sigma=0.1, horizon=H, seed=seed)
        rng = np.random.default_rng(seed + 10_000)
        estimate = KnrEstimate.prior(2, phi.dim, 1.0, truth.sigma)
        estimate = update_confidence(estimate, np.empty((0, phi.dim)), np.empty((0, 2)), 1, delta)
        ok = estimate.contains(truth.W)
        for t in range(1, T + 1):
            s = truth.initial_state
            phis, nexts = [], []
            for _ in range(H):
                a = int(rng.integers(2))
                s_next = knr_sample_step(truth, s, a, rng)
                phis.append(phi(s, [a])[0])
                nexts.append(s_next)
                s = s_next
            estimate = update_confidence(estimate, phis, nexts, t + 1, delta)
            ok = ok and estimate.contains(truth.W)
        covered += ok
    assert covered >= 0.9 * runs


# HH: Bonus


def test_bonus_vanishes_without_uncertainty(phi):
    estimate = KnrEstimate.prior(2, 3, 1.0, sigma=0.1)
    assert exploration_bonus(estimate, np.ones(3) / 3, 1.0) == 0.0


def test_bonus_is_clipped(phi):
    estimate = KnrEstimate(np.zeros((2, 3)), np.eye(3), 1.0, R=100.0, sigma=0.01)
    assert exploration_bonus(estimate, np.array([1.0, 0.0, 0.0]), 3.0) == pytest.approx(6.0)


def test_bonus_with_zero_noise(phi):
    estimate = KnrEstimate(np.zeros((2, 3)), np.eye(3), 1.0, R=1e-6, sigma=0.0)
    values = exploration_bonus(estimate, np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]), 1.0)
    assert_allclose(values, [2.0, 0.0])


def test_bonus_dominates_model_error_inside_the_ellipsoid(phi, rng):
    truth = KnrTruth.random(phi, sigma=0.2, horizon=3, seed=8)
    estimate = KnrEstimate.prior(2, 3, 1.0, truth.sigma)
    states = rng.normal(size=(40, 2))
    actions = rng.integers(0, 2, 40)
    feats = phi(states, actions)
    nexts = feats @ truth.W.T + truth.sigma * rng.normal(size=(40, 2))
    estimate = update_confidence(estimate, feats, nexts, 2, 0.1)
    assert estimate.contains(truth.W)

    query = phi(rng.normal(size=(200, 2)), rng.integers(0, 2, 200))
    bonus = exploration_bonus(estimate, query, 1.0)
    error = np.linalg.norm(query @ (estimate.W_hat - truth.W).T, axis=1)
    assert np.all(bonus >= np.minimum(error / truth.sigma, 2.0) - 1e-12)


# HH: Potential and chi-square


def _chi_square_by_quadrature(mu1, mu2, sigma):
    scale = np.sqrt(2.0) * sigma
    p = norm(mu1, scale).pdf
    q = norm(mu2, scale).pdf
    lo = min(mu1, mu2) - 12 * scale
    hi = max(mu1, mu2) + 12 * scale
    value, _ = integrate.quad(
        lambda x: (p(x) - q(x)) ** 2 / p(x), lo, hi, points=[mu1, mu2], limit=400, epsabs=1e-12
    )
    return value


def test_chi_square_unit_example():
    assert gaussian_chi_square([0.0], [1.0], 1.0) == pytest.approx(np.exp(0.5) - 1.0, abs=1e-15)
    assert _chi_square_by_quadrature(0.0, 1.0, 1.0) == pytest.approx(np.exp(0.5) - 1.0, abs=1e-6)


def test_chi_square_matches_quadrature(rng):
    for _ in range(20):
        sigma = rng.uniform(0.3, 2.0)
        mu1 = rng.uniform(-1.0, 1.0)
        mu2 = mu1 + rng.uniform(-1.5, 1.5) * sigma
        expected = _chi_square_by_quadrature(mu1, mu2, sigma)
        assert gaussian_chi_square([mu1], [mu2], sigma) == pytest.approx(expected, abs=1e-6)


def test_chi_square_of_equal_means_is_zero():
    assert gaussian_chi_square([1.0, 2.0], [1.0, 2.0], 0.5) == 0.0
    with pytest.raises(ArgumentError):
        gaussian_chi_square([0.0], [1.0], 0.0)


def test_elliptical_potential_bound(rng):
    for _ in range(100):
        H, d, T = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(5, 40))
        batches = []
        for _ in range(T):
            batch = rng.normal(size=(H, d))
            batch /= np.maximum(1.0, np.linalg.norm(batch, axis=1, keepdims=True))
            batches.append(batch)
        total, bound = elliptical_potential(batches, lam=1.0)
        assert total <= bound + 1e-9


# HH: Grid


def test_grid_nearest_node():
    grid = StateGrid(np.array([-1.0]), np.array([1.0]), 5)
    assert_allclose(grid.nearest(np.array([[-0.9], [0.26], [5.0]])), [0, 3, 4])


def test_grid_kernel_rows_sum_to_one(rng):
    grid = StateGrid(np.array([-2.0, -2.0]), np.array([2.0, 2.0]), 11)
    probs, escaped = grid.gaussian_kernel(rng.uniform(-1, 1, (6, 2)), 0.25)
    assert probs.shape == (6, 121)
    assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(escaped < 1e-3)


def test_grid_kernel_without_noise_hits_one_node():
    grid = StateGrid(np.array([-1.0]), np.array([1.0]), 21)
    probs, escaped = grid.gaussian_kernel(np.array([[0.5]]), 0.0)
    assert probs[0, 15] == 1.0
    assert escaped[0] == 0.0


def test_grid_reports_escaped_mass():
    grid = StateGrid(np.array([-1.0]), np.array([1.0]), 21)
    _, escaped = grid.gaussian_kernel(np.array([[1.0]]), 0.5)
    assert escaped[0] == pytest.approx(0.5 + norm.cdf(-4.0), abs=1e-9)


def test_grid_rejects_four_dims():
    with pytest.raises(ConfigurationError):
        StateGrid(np.zeros(4) - 1, np.ones(4), 3)


def test_auto_grid_sizes():
    assert StateGrid.auto(np.zeros(1), 0.1, 4).nodes_per_axis == 41
    assert StateGrid.auto(np.zeros(3), 0.1, 4).nodes_per_axis == 15


def test_dynamics_model_is_stochastic(phi):
    truth = KnrTruth.random(phi, sigma=0.1, horizon=3, seed=0)
    grid = StateGrid.auto(truth.initial_state, truth.sigma, truth.horizon, nodes_per_axis=9)
    model, escaped = grid.dynamics_model(truth.W, phi, truth.sigma, 3, truth.initial_state)
    assert model.transitions.shape == (3, 81, 2, 81)
    assert escaped < 1e-3
    assert model.initial_state == int(grid.nearest(truth.initial_state)[0])
