import numpy as np
import pytest

from numpy.testing import assert_allclose

from cvxmdp.errors import ConfigurationError
from cvxmdp.mdp_embedding import FeatureMap, policy_embedding
from cvxmdp.mdp_policy import StagePolicy
from cvxmdp.presets import (
    PRESETS,
    fold_features,
    get_preset,
    preset_apprenticeship,
    preset_multiobjective,
)

FINITE_PRESETS = [name for name in PRESETS if name != "multiobjective_knr"]


def _oracle_vector(oracle) -> np.ndarray:
    return oracle.pinned if oracle.pinned is not None else oracle.center


def test_fold_features_projects_onto_objective_rows(rng):
    base = FeatureMap.tabular_onehot(3, 2, 2)
    xi = rng.uniform(-1, 1, (2, 2, 6))
    folded = fold_features(base, xi)
    states, actions = np.array([0, 1, 2]), np.array([1, 0, 1])
    for h in range(2):
        assert_allclose(folded.evaluate(h, states, actions), base.evaluate(h, states, actions) @ xi[:, h, :].T)
    # uniform rows in [-1, 1]^d keep the bound below B sqrt(I d)
    assert folded.bound <= base.bound * np.sqrt(2 * 6) + 1e-12
    with pytest.raises(ConfigurationError):
        fold_features(base, np.ones((2, 3, 6)))


@pytest.mark.parametrize("name", FINITE_PRESETS)
def test_presets_are_deterministic(name):
    a = get_preset(name).build(seed=3)
    b = get_preset(name).build(seed=3)
    assert_allclose(_oracle_vector(a.f_oracle), _oracle_vector(b.f_oracle))
    assert a.Gamma == b.Gamma
    assert a.name == name


@pytest.mark.parametrize("name", FINITE_PRESETS)
def test_presets_validate_across_seeds(name):
    for seed in range(5):
        spec = get_preset(name).build(seed, T=7)
        assert spec.T == 7
        assert spec.Gamma > 0
        if spec.g_oracle is not None:
            model, features = spec.environment.reference()
            uniform = StagePolicy.uniform(model.horizon, model.num_states, model.num_actions)
            slater = policy_embedding(uniform, model, features).vector
            assert spec.g_oracle.value(slater) <= 0.0


def test_apprenticeship_target_is_an_occupancy():
    spec = preset_apprenticeship(2, T=5)
    assert spec.g_oracle is None
    assert spec.f_oracle.kind == "dist_point"
    # one-hot features: each stage block is a distribution over (s, a)
    blocks = spec.f_oracle.center.reshape(3, -1)
    assert np.all(blocks >= -1e-12)
    assert_allclose(blocks.sum(axis=1), 1.0)
    assert spec.f_oracle.value(spec.f_oracle.center) == pytest.approx(0.0)

    constrained = preset_apprenticeship(2, constrained=True, T=5)
    assert constrained.g_oracle is not None
    assert constrained.name == "apprenticeship_tabular_constrained"


def test_reduction_is_a_linear_constrained_problem():
    spec = preset_multiobjective(0, "known", reduction=True)
    assert spec.f_oracle.kind == "linear"
    assert spec.g_oracle.kind == "linear"
    assert spec.features.dim == 2


def test_unknown_preset_and_environment():
    with pytest.raises(ConfigurationError):
        get_preset("missing")
    with pytest.raises(ConfigurationError):
        preset_multiobjective(0, "continuous")


@pytest.mark.slow
def test_knr_preset_builds():
    spec = get_preset("multiobjective_knr").build(seed=0)
    assert spec.T == 100
    assert spec.environment.kind == "knr"
    assert spec.Gamma > 0
