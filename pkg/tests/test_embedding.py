import numpy as np
import pytest

from numpy.testing import assert_allclose

from conftest import doubly_stochastic
from cvxmdp.errors import ArgumentError, ConfigurationError
from cvxmdp.mdp_embedding import (
    FeatureMap,
    FiniteModel,
    KernelEmbedding,
    OccupancyMeasure,
    compute_occupancy,
    kernel_embedding,
    monte_carlo_embedding,
    policy_embedding,
    rollout,
    stage_stream,
)
from cvxmdp.mdp_policy import StagePolicy


# HH: Policies


def test_deterministic_policy_table():
    policy = StagePolicy.deterministic([[0, 1], [1, 1]], 2)
    assert policy.is_deterministic()
    assert_allclose(policy.table[0], [[1, 0], [0, 1]])
    assert_allclose(policy.greedy_actions(), [[0, 1], [1, 1]])


def test_policy_rows_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        StagePolicy(np.array([[[0.5, 0.6]]]))


def test_policy_sampling_frequencies(rng):
    policy = StagePolicy.uniform(1, 1, 2)
    actions = policy.sample(0, np.zeros(10_000, dtype=np.int64), rng)
    se = np.sqrt(0.25 / 10_000)
    assert abs(actions.mean() - 0.5) <= 3 * se


# HH: Occupancy


def test_occupancy_two_state_example():
    # s0 = 0, pi_1 always a = 0, P_1(.|0, 0) = (0.3, 0.7), H = 2
    P = np.full((2, 2, 2, 2), 0.5)
    P[0, 0, 0] = [0.3, 0.7]
    policy = StagePolicy.deterministic([[0, 0], [0, 0]], 2)
    occ = compute_occupancy(policy, FiniteModel(P))
    assert_allclose(occ.table[0], [[1, 0], [0, 0]])
    assert_allclose(occ.table[1], [[0.3, 0], [0.7, 0]])


def test_occupancy_stage_mass_is_one(small_model, rng):
    table = rng.dirichlet(np.ones(2), size=(3, 3))
    occ = compute_occupancy(StagePolicy(table), small_model)
    assert_allclose(occ.table.sum(axis=(1, 2)), 1.0, atol=1e-12)


def test_occupancy_rejects_shape_mismatch(small_model):
    with pytest.raises(ConfigurationError):
        compute_occupancy(StagePolicy.uniform(2, 3, 2), small_model)


def test_occupancy_with_horizon_one():
    model = FiniteModel(np.full((1, 2, 2, 2), 0.5), initial_state=1)
    occ = compute_occupancy(StagePolicy.uniform(1, 2, 2), model)
    assert_allclose(occ.table[0], [[0, 0], [0.5, 0.5]])


@pytest.mark.slow
def test_occupancy_matches_monte_carlo_frequencies():
    rng = np.random.default_rng(5)
    H, S, A = 3, 2, 2
    P = np.stack([np.stack([doubly_stochastic(rng, S) for _ in range(A)], axis=1) for _ in range(H)])
    model = FiniteModel(P)
    policy = StagePolicy.uniform(H, S, A)
    occ = compute_occupancy(policy, model).table

    n = 10**5
    traj = rollout(model.sampler(FeatureMap.tabular_onehot(S, A, H)), policy, n, 9)
    for h in range(H):
        counts = np.zeros((S, A))
        np.add.at(counts, (traj.states[h], traj.actions[h]), 1.0)
        freq = counts / n
        se = np.sqrt(occ[h] * (1 - occ[h]) / n)
        assert np.all(np.abs(freq - occ[h]) <= 4 * se + 1e-12)


# HH: Embedding


def test_onehot_embedding_is_occupancy(small_model, onehot, rng):
    policy = StagePolicy(rng.dirichlet(np.ones(2), size=(3, 3)))
    occ = compute_occupancy(policy, small_model)
    psi = kernel_embedding(occ, onehot)
    assert_allclose(psi.blocks, occ.table.reshape(3, 6))


def test_constant_features_give_constant_blocks(small_model):
    v = np.array([0.6, -0.8])
    psi = policy_embedding(StagePolicy.uniform(3, 3, 2), small_model, FeatureMap.constant(v, 3))
    assert_allclose(psi.blocks, np.tile(v, (3, 1)), atol=1e-12)


def test_embedding_matches_direct_summation(rng):
    H, S, A, d = 2, 3, 2, 4
    table = rng.normal(size=(H, S, A, d))
    table /= np.linalg.norm(table, axis=3, keepdims=True)
    features = FeatureMap.from_table(table)
    occ = OccupancyMeasure(rng.dirichlet(np.ones(S * A), size=H).reshape(H, S, A))

    expected = np.zeros((H, d))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                expected[h] += occ.table[h, s, a] * table[h, s, a]
    assert_allclose(kernel_embedding(occ, features).blocks, expected, atol=1e-12)


def test_embedding_block_norm_bounded(small_model, rng):
    table = rng.normal(size=(3, 3, 2, 5))
    features = FeatureMap.from_table(table)
    psi = policy_embedding(StagePolicy.uniform(3, 3, 2), small_model, features)
    assert psi.max_block_norm() <= features.bound + 1e-12


def test_embedding_is_affine_in_occupancy(small_model, onehot, rng):
    pi1 = StagePolicy(rng.dirichlet(np.ones(2), size=(3, 3)))
    pi2 = StagePolicy(rng.dirichlet(np.ones(2), size=(3, 3)))
    d1 = compute_occupancy(pi1, small_model).table
    d2 = compute_occupancy(pi2, small_model).table
    mixed = OccupancyMeasure(0.3 * d1 + 0.7 * d2)
    expected = 0.3 * kernel_embedding(OccupancyMeasure(d1), onehot).vector + 0.7 * kernel_embedding(
        OccupancyMeasure(d2), onehot
    ).vector
    assert_allclose(kernel_embedding(mixed, onehot).vector, expected, atol=1e-12)


def test_feature_bound_violation_is_rejected():
    features = FeatureMap(1, 1, 0.5, lambda h, s, a: np.ones((len(a), 1)))
    with pytest.raises(ArgumentError):
        features.evaluate(0, np.zeros(2, dtype=int), np.zeros(2, dtype=int))


def test_average_embedding():
    a = KernelEmbedding(np.array([1.0, 0.0]), 1, 2)
    b = KernelEmbedding(np.array([0.0, 1.0]), 1, 2)
    assert_allclose(KernelEmbedding.average([a, b]).vector, [0.5, 0.5])
    with pytest.raises(ArgumentError):
        KernelEmbedding.average([])


# HH: Monte Carlo


def test_monte_carlo_is_reproducible(small_model, onehot):
    sampler = small_model.sampler(onehot)
    policy = StagePolicy.uniform(3, 3, 2)
    first = monte_carlo_embedding(sampler, policy, 5000, 3, block_size=1000)
    second = monte_carlo_embedding(sampler, policy, 5000, 3, block_size=1000)
    assert_allclose(first.vector, second.vector, rtol=0, atol=0)


def test_stage_streams_are_independent_of_order():
    first = stage_stream(7, 2, 1).random(4)
    stage_stream(7, 0, 0).random(100)
    assert_allclose(stage_stream(7, 2, 1).random(4), first)
    with pytest.raises(ArgumentError):
        stage_stream(-1, 0, 0)


@pytest.mark.slow
def test_monte_carlo_agrees_with_dynamic_programming(small_model, onehot):
    policy = StagePolicy.uniform(3, 3, 2)
    n = 10**5
    exact = policy_embedding(policy, small_model, onehot)
    estimate = monte_carlo_embedding(small_model.sampler(onehot), policy, n, 11)
    assert np.all(np.abs(estimate.vector - exact.vector) <= 3 * onehot.bound / np.sqrt(n))


def test_monte_carlo_rejects_zero_samples(small_model, onehot):
    with pytest.raises(ArgumentError):
        monte_carlo_embedding(small_model.sampler(onehot), StagePolicy.uniform(3, 3, 2), 0, 0)


# HH: Model files


def test_model_text_round_trip(small_model):
    parsed = FiniteModel.from_text(small_model.to_text())
    assert_allclose(parsed.transitions, small_model.transitions, rtol=0, atol=0)
    assert parsed.initial_state == small_model.initial_state


def test_model_text_rejects_wrong_token_count():
    with pytest.raises(ConfigurationError):
        FiniteModel.from_text("2 1 1\n0.5 0.5\n0")


def test_model_rejects_non_stochastic_rows():
    with pytest.raises(ConfigurationError):
        FiniteModel(np.full((1, 2, 1, 2), 0.4))
