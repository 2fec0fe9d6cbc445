import itertools

import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field
from typing import Sequence

from cvxmdp.errors import BudgetError, ConfigurationError
from cvxmdp.log import get_logger
from cvxmdp.mdp_embedding import (
    FeatureMap,
    FiniteModel,
    KernelEmbedding,
    compute_occupancy,
    kernel_embedding,
    monte_carlo_embedding,
)
from cvxmdp.mdp_knr import KnrEstimate, KnrSampler, StateActionFeature, StateGrid, exploration_bonus
from cvxmdp.mdp_lowrank import ModelClass
from cvxmdp.mdp_policy import StagePolicy

logger = get_logger()

__all__ = [
    "LinearCost",
    "PlanResult",
    "StagePolicy",
    "StateGrid",
    "optimistic_plan_knr",
    "optimistic_plan_lowrank",
    "plan_known_model",
    "policy_evaluation",
    "value_difference_check",
    "value_iteration",
]


# HH: Costs


@dataclass()
class LinearCost:
    """
    Stage costs c_h(s, a) = theta_h . psi_h(s, a).

    Attributes:
        theta: Concatenated per-stage weights of length H*d
        features: Feature map psi
    """

    theta: npt.NDArray[np.float64]
    features: FeatureMap

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        expected = self.features.horizon * self.features.dim
        if self.theta.shape[0] != expected:
            raise ConfigurationError(
                f"Cost vector has length {self.theta.shape[0]}, expected H*d = {expected}"
            )

    @property
    def blocks(self) -> npt.NDArray[np.float64]:
        return self.theta.reshape(self.features.horizon, self.features.dim)

    @property
    def bound(self) -> float:
        """max_h ||theta_h|| * B, an upper bound on |c_h(s, a)|."""
        return float(np.linalg.norm(self.blocks, axis=1).max() * self.features.bound)

    def evaluate(self, h: int, states: npt.NDArray, actions: npt.NDArray) -> npt.NDArray:
        return self.features.evaluate(h, states, actions) @ self.blocks[h]

    def table(self, states: npt.NDArray, num_actions: int) -> npt.NDArray[np.float64]:
        """Costs of every (h, state, action) as an (H, N, A) array."""
        feats = self.features.table(states, num_actions)
        return np.einsum("hnad,hd->hna", feats, self.blocks)


def _cost_table(model: FiniteModel, cost: "LinearCost | npt.ArrayLike") -> npt.NDArray:
    if isinstance(cost, LinearCost):
        if cost.features.horizon != model.horizon:
            raise ConfigurationError(
                f"Cost horizon {cost.features.horizon} != model horizon {model.horizon}"
            )
        return cost.table(np.arange(model.num_states), model.num_actions)
    table = np.asarray(cost, dtype=float)
    if table.shape != (model.horizon, model.num_states, model.num_actions):
        raise ConfigurationError(
            f"Cost table shape {table.shape} does not match (H, S, A) of {model}"
        )
    return table


# HH: Dynamic programming


def value_iteration(
    model: FiniteModel, cost: "LinearCost | npt.ArrayLike"
) -> tuple[npt.NDArray, npt.NDArray, StagePolicy]:
    """
    Backward recursion Q_h = c_h + P_h V_{h+1}, V_h = min_a Q_h, V_H = 0.

    Returns V of shape (H+1, S), Q of shape (H, S, A) and the greedy policy
    (ties go to the lowest action index).
    """
    c = _cost_table(model, cost)
    H, S, A = c.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = c[h] + model.transitions[h] @ V[h + 1]
        V[h] = Q[h].min(axis=1)
    return V, Q, StagePolicy.deterministic(np.argmin(Q, axis=2), A)


def policy_evaluation(
    model: FiniteModel, cost: "LinearCost | npt.ArrayLike", policy: StagePolicy
) -> npt.NDArray[np.float64]:
    """V^pi of shape (H+1, S) under `model`."""
    c = _cost_table(model, cost)
    H = c.shape[0]
    V = np.zeros((H + 1, model.num_states))
    for h in range(H - 1, -1, -1):
        Q = c[h] + model.transitions[h] @ V[h + 1]
        V[h] = np.sum(policy.table[h] * Q, axis=1)
    return V


# HH: Planning


@dataclass()
class PlanResult:
    """
    Outcome of one planning call.

    Attributes:
        policy: Planned policy
        V1: Planned value at the initial state
        embedding: Planned embedding Psi under the planning model
        model: Model the policy was planned in
        model_id: Label of the planning model
    """

    policy: StagePolicy
    V1: float
    embedding: KernelEmbedding
    model: FiniteModel | None = field(default=None, repr=False)
    model_id: str = "known"

    def __str__(self) -> str:
        return f"PlanResult model={self.model_id} V1={self.V1:.6g} |Psi|={np.linalg.norm(self.embedding.vector):.4g}"


def plan_known_model(model: FiniteModel, cost: LinearCost) -> PlanResult:
    """Value iteration on the given model; Psi is exact."""
    V, _, policy = value_iteration(model, cost)
    embedding = kernel_embedding(compute_occupancy(policy, model), cost.features)
    return PlanResult(policy, float(V[0, model.initial_state]), embedding, model, model.name)


def _compose(models: ModelClass, choice: npt.NDArray[np.int64]) -> npt.NDArray:
    """Transitions taking P_h(.|s, a) from candidate choice[h, s, a]."""
    H, S, A = choice.shape
    h, s, a = np.meshgrid(np.arange(H), np.arange(S), np.arange(A), indexing="ij")
    return models.stacked[choice, h, s, a]


def optimistic_plan_lowrank(
    members: Sequence[npt.ArrayLike],
    models: ModelClass,
    cost: LinearCost,
    mode: str = "factored",
    budget: int = 10**4,
) -> PlanResult:
    """
    argmin over policies and member models of the planned value.

    `factored` takes the minimum over stage-h members inside each Bellman
    backup, per (s, a); this is never above the `enumerate` optimum and equals
    it when members agree off a single row. `enumerate` runs value iteration
    for every stage-wise combination of members.
    """
    members = [np.asarray(m, dtype=np.int64) for m in members]
    if len(members) != models.horizon or any(m.size == 0 for m in members):
        raise ConfigurationError("Every stage needs a nonempty member set")

    s0 = models.models[0].initial_state
    match mode:
        case "factored":
            c = _cost_table(models.models[0], cost)
            H, S, A = c.shape
            V = np.zeros((H + 1, S))
            Q = np.empty((H, S, A))
            choice = np.empty((H, S, A), dtype=np.int64)
            for h in range(H - 1, -1, -1):
                candidates = c[h] + models.stacked[members[h], h] @ V[h + 1]
                best = np.argmin(candidates, axis=0)
                choice[h] = members[h][best]
                Q[h] = np.take_along_axis(candidates, best[None], axis=0)[0]
                V[h] = Q[h].min(axis=1)
            policy = StagePolicy.deterministic(np.argmin(Q, axis=2), A)
            model = FiniteModel(_compose(models, choice), s0, "optimistic")
            embedding = kernel_embedding(compute_occupancy(policy, model), cost.features)
            return PlanResult(policy, float(V[0, s0]), embedding, model, "factored")

        case "enumerate":
            count = int(np.prod([m.size for m in members], dtype=float))
            if count > budget:
                logger.error(f"Low-rank enumeration of {count} combinations exceeds {budget}")
                raise BudgetError(
                    f"{count} model combinations exceed the budget {budget}; "
                    "use a smaller model class or the factored planner"
                )
            best: PlanResult | None = None
            H = models.horizon
            for combo in itertools.product(*members):
                transitions = models.stacked[list(combo), np.arange(H)]
                model = FiniteModel(transitions, s0, "-".join(map(str, combo)))
                plan = plan_known_model(model, cost)
                if best is None or plan.V1 < best.V1:
                    best = plan
            return best

        case _:
            raise ConfigurationError(f"Unknown low-rank planner mode '{mode}'")


def optimistic_plan_knr(
    estimate: KnrEstimate,
    cost: LinearCost,
    grid: StateGrid,
    phi: StateActionFeature,
    initial_state: npt.ArrayLike,
    bonus_scale: float,
    kappa: float = 1.0,
    rollouts: int = 2000,
    rng_seed: int = 0,
    escape_tolerance: float = 1e-3,
) -> PlanResult:
    """
    Plan on the grid under W_hat with cost c - bonus, then estimate Psi by
    Monte Carlo under (W_hat, policy).

    The per-step bound at 0-based stage h is bonus_scale * (H - h).
    """
    H, A = cost.features.horizon, phi.num_actions
    model, escaped = grid.dynamics_model(
        estimate.W_hat, phi, estimate.sigma, H, initial_state, "knr-grid"
    )
    if escaped > escape_tolerance:
        logger.warning(
            f"Grid discretization loses {escaped:.3g} Gaussian mass at some node "
            f"(tolerance {escape_tolerance}); widen the grid"
        )

    nodes = np.repeat(grid.points, A, axis=0)
    actions = np.tile(np.arange(A), grid.size)
    unit = np.asarray(exploration_bonus(estimate, phi(nodes, actions), 1.0, kappa))
    remaining = bonus_scale * (H - np.arange(H))
    bonus = remaining[:, None, None] * unit.reshape(grid.size, A)[None]

    V, _, greedy = value_iteration(model, cost.table(grid.points, A) - bonus)
    policy = StagePolicy(greedy.table, grid.nearest)

    sampler = KnrSampler(
        estimate.W_hat, phi, estimate.sigma, H, np.asarray(initial_state, float), cost.features
    )
    embedding = monte_carlo_embedding(sampler, policy, rollouts, rng_seed)
    return PlanResult(policy, float(V[0, model.initial_state]), embedding, model, "knr-grid")


# HH: Checks


def value_difference_check(
    model1: FiniteModel,
    model2: FiniteModel,
    cost: "LinearCost | npt.ArrayLike",
    policy: StagePolicy,
) -> tuple[float, float]:
    """
    lhs = V^pi_{P1} - V^pi_{P2} at the initial state;
    rhs = E_{pi, P2}[sum_h ((P1_h - P2_h) V^pi_{P1, h+1})(s_h, a_h)].
    """
    if model1.transitions.shape != model2.transitions.shape:
        raise ConfigurationError("Models must share (H, S, A)")
    V1 = policy_evaluation(model1, cost, policy)
    V2 = policy_evaluation(model2, cost, policy)
    lhs = float(V1[0, model1.initial_state] - V2[0, model2.initial_state])

    occupancy = compute_occupancy(policy, model2).table
    H = model1.horizon
    gaps = np.stack(
        [(model1.transitions[h] - model2.transitions[h]) @ V1[h + 1] for h in range(H)]
    )
    return lhs, float(np.sum(occupancy * gaps))


def main() -> None:
    rng = np.random.default_rng(3)
    model = FiniteModel.random(3, 2, 3, rng)
    features = FeatureMap.tabular_onehot(3, 2, 3)
    cost = LinearCost(rng.uniform(-1, 1, 3 * 6), features)

    plan = plan_known_model(model, cost)
    print(model)
    print(plan)
    print(f"theta . Psi = {plan.embedding.dot(cost.theta):.6g}")

    other = FiniteModel.random(3, 2, 3, rng)
    lhs, rhs = value_difference_check(model, other, cost, plan.policy)
    print(f"value difference: {lhs:.6g} vs {rhs:.6g}")


if __name__ == "__main__":
    main()
