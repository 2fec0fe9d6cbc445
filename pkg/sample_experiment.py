import numpy as np

from cvxmdp import (
    ExperimentSpec,
    FeatureMap,
    FiniteModel,
    KnownEnvironment,
    StagePolicy,
    make_distance_to_ball_oracle,
    make_distance_to_point_oracle,
    policy_embedding,
)
from cvxmdp.mdp_vpdpo import bound_gamma


def sample_experiment(seed: int = 0, T: int = 500) -> ExperimentSpec:
    rng = np.random.default_rng(seed)

    # Model
    S, A, H = 3, 2, 3
    model = FiniteModel.random(S, A, H, rng, name="sample")
    features = FeatureMap.tabular_onehot(S, A, H)

    # Target: a deterministic policy's occupancy
    expert = StagePolicy.deterministic(rng.integers(0, A, size=(H, S)), A)
    target = policy_embedding(expert, model, features).vector

    # Slater policy and a ball constraint around it
    slater = policy_embedding(StagePolicy.uniform(H, S, A), model, features).vector
    radius = max(0.5 * float(np.linalg.norm(target - slater)), 0.05)

    f = make_distance_to_point_oracle(target)
    g = make_distance_to_ball_oracle(slater, radius)
    # signed distance of the Slater point to the ball boundary is -radius
    Gamma = bound_gamma(f.value(slater), 0.0, -radius)

    return ExperimentSpec(
        KnownEnvironment(model, features), f, g, Gamma=Gamma, T=T, seed=seed, name="sample"
    )
