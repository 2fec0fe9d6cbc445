import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, replace
from typing import Callable

from cvxmdp.errors import ConfigurationError
from cvxmdp.mdp_embedding import (
    FeatureMap,
    FiniteModel,
    KernelEmbedding,
    monte_carlo_embedding,
    policy_embedding,
)
from cvxmdp.mdp_fenchel import (
    make_distance_to_ball_oracle,
    make_distance_to_point_oracle,
    make_linear_oracle,
)
from cvxmdp.mdp_knr import KnrTruth, StateActionFeature
from cvxmdp.mdp_lowrank import ModelClass
from cvxmdp.mdp_planner import LinearCost, plan_known_model
from cvxmdp.mdp_policy import StagePolicy
from cvxmdp.mdp_vpdpo import (
    ExperimentSpec,
    KnownEnvironment,
    KnrEnvironment,
    LowRankEnvironment,
    bound_gamma,
)


@dataclass()
class Preset:
    name: str
    description: str
    generator: Callable[[int], ExperimentSpec]

    def build(self, seed: int, T: int | None = None) -> ExperimentSpec:
        spec = self.generator(seed)
        return spec if T is None else replace(spec, T=T)

    def __str__(self) -> str:
        return f"{self.name:38s} {self.description}"


def fold_features(base: FeatureMap, xi: npt.ArrayLike, name: str = "folded") -> FeatureMap:
    """
    psi'_h(s, a) = (theta^i_h . psi_h(s, a))_i for xi of shape (I, H, d).

    Psi' is then the per-stage value profile of the I objectives.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 3 or xi.shape[1:] != (base.horizon, base.dim):
        raise ConfigurationError(f"Xi must have shape (I, H, d) = (I, {base.horizon}, {base.dim})")
    bound = base.bound * max(np.linalg.norm(xi[:, h, :], 2) for h in range(base.horizon))

    def evaluator(h, states, actions):
        return base.evaluate(h, states, actions) @ xi[:, h, :].T

    return FeatureMap(xi.shape[0], base.horizon, max(bound, 1e-12), evaluator, name)


def _finite_spec(
    name: str,
    seed: int,
    environment: KnownEnvironment | LowRankEnvironment,
    model: FiniteModel,
    features: FeatureMap,
    T: int,
) -> ExperimentSpec:
    """Objective at a reachable target profile, ball constraint around a Slater policy."""
    rng = np.random.default_rng([seed, 1])
    target = plan_known_model(
        model, LinearCost(rng.uniform(-1, 1, features.horizon * features.dim), features)
    ).embedding.vector
    slater = policy_embedding(
        StagePolicy.uniform(model.horizon, model.num_states, model.num_actions), model, features
    ).vector
    f = make_distance_to_point_oracle(target)
    radius = _ball_radius(target, slater)
    g = make_distance_to_ball_oracle(slater, radius)
    Gamma = bound_gamma(f.value(slater), 0.0, -radius)
    return ExperimentSpec(environment, f, g, Gamma=Gamma, T=T, seed=seed, name=name)


def _ball_radius(target: npt.NDArray, slater: npt.NDArray) -> float:
    """Half the target distance, so the constraint is active at the optimum."""
    return max(0.5 * float(np.linalg.norm(target - slater)), 0.05)


# HH: Apprenticeship learning


def preset_apprenticeship(seed: int, constrained: bool = False, T: int = 1000) -> ExperimentSpec:
    """
    Known 4-state model; f = distance to the embedding of the greedy policy
    for a random linear cost, so f(Psi*) = 0. The constrained variant adds a
    ball around the uniform policy's embedding.
    """
    rng = np.random.default_rng(seed)
    S, A, H = 4, 2, 3
    model = FiniteModel.random(S, A, H, rng, name=f"apprenticeship-{seed}")
    features = FeatureMap.tabular_onehot(S, A, H)
    environment = KnownEnvironment(model, features)
    if constrained:
        return _finite_spec("apprenticeship_tabular_constrained", seed, environment, model, features, T)

    expert_cost = LinearCost(rng.uniform(-1, 1, H * S * A), features)
    expert = plan_known_model(model, expert_cost).embedding
    return ExperimentSpec(
        environment,
        make_distance_to_point_oracle(expert.vector),
        T=T,
        seed=seed,
        name="apprenticeship_tabular",
    )


# HH: Multi-objective


def preset_multiobjective(
    seed: int,
    environment: str = "known",
    reduction: bool = False,
    objectives: int = 2,
    T: int = 500,
) -> ExperimentSpec:
    """
    Multi-objective instance with Xi folded into the features.

    Rows of Xi are uniform in [-1, 1]^d, so ||theta^i_h|| <= sqrt(d). With
    `reduction` there is one objective row and one constraint row and both
    h's are the identity: f is linear and g is an affine threshold, i.e. a
    constrained MDP.
    """
    rng = np.random.default_rng(seed)
    rows = 2 if reduction else objectives
    name = f"multiobjective_{environment}" + ("_cmdp" if reduction else "")

    match environment:
        case "known" | "lowrank":
            S, A, H = (4, 2, 3) if environment == "known" else (3, 2, 3)
            base = FeatureMap.tabular_onehot(S, A, H)
            xi = rng.uniform(-1.0, 1.0, (rows, H, base.dim))
            features = fold_features(base, xi, "multiobjective")
            if environment == "known":
                model = FiniteModel.random(S, A, H, rng, name=f"multiobjective-{seed}")
                env = KnownEnvironment(model, features)
            else:
                classes = ModelClass.random(S, A, H, 2, 2, 3, seed)
                model = classes.truth
                env = LowRankEnvironment(classes, features)
            slater = policy_embedding(StagePolicy.uniform(H, S, A), model, features)

        case "knr":
            H, A = 3, 2
            phi = StateActionFeature("identity", state_dim=1, num_actions=A)
            truth = KnrTruth.random(phi, sigma=0.1, horizon=H, seed=seed)
            xi = rng.uniform(-1.0, 1.0, (rows, H, phi.dim))
            features = fold_features(phi.as_feature_map(H), xi, "multiobjective")
            env = KnrEnvironment(truth, features, truth_rollouts=10**4, rollouts=1000)
            uniform = StagePolicy(np.full((H, env.grid.size, A), 1.0 / A), env.grid.nearest)
            slater = monte_carlo_embedding(truth.sampler(features), uniform, 10**4, seed)

        case _:
            raise ConfigurationError(f"Unknown environment '{environment}'")

    if reduction:
        return _reduction_spec(name, seed, env, features, slater, T)

    if environment == "knr":
        model, grid_features = env.reference()
        target = plan_known_model(
            model, LinearCost(rng.uniform(-1, 1, H * features.dim), grid_features)
        ).embedding.vector
    else:
        target = plan_known_model(
            model, LinearCost(rng.uniform(-1, 1, H * features.dim), features)
        ).embedding.vector
    f = make_distance_to_point_oracle(target)
    radius = _ball_radius(target, slater.vector)
    g = make_distance_to_ball_oracle(slater.vector, radius)
    Gamma = bound_gamma(f.value(slater.vector), 0.0, -radius)
    return ExperimentSpec(env, f, g, Gamma=Gamma, T=T, seed=seed, name=name)


def _reduction_spec(
    name: str, seed: int, env, features: FeatureMap, slater: KernelEmbedding, T: int
) -> ExperimentSpec:
    """f = sum_h Psi'_h[0]; g = sum_h Psi'_h[1] - tau with a Slater margin of 1/4."""
    H = features.horizon
    c_f = np.tile([1.0, 0.0], H)
    c_g = np.tile([0.0, 1.0], H)
    margin = 0.25
    tau = float(c_g @ slater.vector) + margin
    f = make_linear_oracle(c_f)
    g = make_linear_oracle(c_g, -tau)
    # |Psi'_h[0]| <= B per stage, so f(Psi*) >= -H B
    Gamma = bound_gamma(f.value(slater.vector), -H * features.bound, g.value(slater.vector))
    return ExperimentSpec(env, f, g, Gamma=Gamma, T=T, seed=seed, name=name)


PRESETS: dict[str, Preset] = {
    preset.name: preset
    for preset in [
        Preset(
            "apprenticeship_tabular",
            "known 4-state model, f = distance to a reachable expert embedding",
            lambda seed: preset_apprenticeship(seed),
        ),
        Preset(
            "apprenticeship_tabular_constrained",
            "apprenticeship with a ball constraint around a Slater policy",
            lambda seed: preset_apprenticeship(seed, constrained=True),
        ),
        Preset(
            "multiobjective_tabular",
            "known model, distance objective and ball constraint on value profiles",
            lambda seed: preset_multiobjective(seed, "known"),
        ),
        Preset(
            "multiobjective_tabular_cmdp",
            "identity h's: linear objective with an affine constraint",
            lambda seed: preset_multiobjective(seed, "known", reduction=True),
        ),
        Preset(
            "multiobjective_lowrank",
            "low-rank MDP with a 6-model class, MLE confidence sets",
            lambda seed: preset_multiobjective(seed, "lowrank"),
        ),
        Preset(
            "multiobjective_knr",
            "1-D KNR with identity features, grid planning with bonuses",
            lambda seed: preset_multiobjective(seed, "knr", T=100),
        ),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown preset '{name}', expected one of {sorted(PRESETS)}"
        ) from None
