import csv
import itertools

import cvxpy as cp
import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar, Protocol

from cvxmdp.errors import (
    BudgetError,
    ConfigurationError,
    NumericalError,
    SlaterViolationError,
)
from cvxmdp.log import get_logger, setup_logging
from cvxmdp.mdp_dualopt import DualState, StepSchedule, dual_step, initial_dual_state
from cvxmdp.mdp_embedding import (
    FeatureMap,
    FiniteModel,
    KernelEmbedding,
    Trajectories,
    monte_carlo_embedding,
    policy_embedding,
    rollout,
)
from cvxmdp.mdp_fenchel import ConvexOracle
from cvxmdp.mdp_knr import KnrEstimate, KnrTruth, StateGrid, knr_radius, update_confidence
from cvxmdp.mdp_lowrank import (
    MemberSet,
    ModelClass,
    StageDataset,
    collect_augmented_tuples,
    covers_truth,
    update_members,
)
from cvxmdp.mdp_planner import (
    LinearCost,
    PlanResult,
    optimistic_plan_knr,
    optimistic_plan_lowrank,
    plan_known_model,
    value_iteration,
)
from cvxmdp.mdp_policy import StagePolicy

logger = get_logger()


def episode_seed(seed: int, t: int, stream: int) -> int:
    """Independent 32-bit seed for (run seed, episode, purpose)."""
    return int(np.random.SeedSequence([seed, t, stream]).generate_state(1)[0])


# HH: Environments


class Environment(Protocol):
    """What the runner needs from an environment."""

    kind: str
    features: FeatureMap

    def reset(self, delta: float) -> None: ...

    def plan(self, cost: LinearCost, bonus_scale: float, rng_seed: int) -> PlanResult: ...

    def observe(self, policy: StagePolicy, t: int, T: int, delta: float, rng_seed: int) -> Trajectories: ...

    def true_embedding(self, policy: StagePolicy, rng_seed: int) -> KernelEmbedding: ...

    def covered(self) -> bool: ...

    def reference(self) -> tuple[FiniteModel, FeatureMap]: ...


@dataclass()
class KnownEnvironment:
    """Exact planning on a known finite model."""

    kind: ClassVar[str] = "known"

    model: FiniteModel
    features: FeatureMap

    def __post_init__(self) -> None:
        if self.features.horizon != self.model.horizon:
            raise ConfigurationError("Feature horizon does not match the model horizon")

    def reset(self, delta):
        pass

    def plan(self, cost, bonus_scale, rng_seed):
        return plan_known_model(self.model, cost)

    def observe(self, policy, t, T, delta, rng_seed):
        return rollout(self.model.sampler(self.features), policy, 1, rng_seed)

    def true_embedding(self, policy, rng_seed):
        return policy_embedding(policy, self.model, self.features)

    def covered(self) -> bool:
        return True

    def reference(self):
        return self.model, self.features

    def __str__(self) -> str:
        return f"KnownEnvironment {self.model} {self.features}"


@dataclass()
class LowRankEnvironment:
    """
    Low-rank MDP with a finite candidate class; the learner sees only augmented tuples.

    Attributes:
        models: Candidate class (its true index is used for rollouts and coverage)
        features: Kernel feature map
        c: Radius constant
        planner_mode: `factored` or `enumerate`
        budget: Combination cap for `enumerate`
    """

    kind: ClassVar[str] = "lowrank"

    models: ModelClass
    features: FeatureMap
    c: float = 2.0
    planner_mode: str = "factored"
    budget: int = 10**4

    def __post_init__(self) -> None:
        if self.features.horizon != self.models.horizon:
            raise ConfigurationError("Feature horizon does not match the model class horizon")
        self.reset(0.1)

    def reset(self, delta):
        """Forget all data; every candidate is a member again."""
        self.dataset = StageDataset(
            self.models.horizon, self.models.num_states, self.models.num_actions
        )
        self.confidence = MemberSet.full(self.models)

    def plan(self, cost, bonus_scale, rng_seed):
        return optimistic_plan_lowrank(
            self.confidence.members, self.models, cost, self.planner_mode, self.budget
        )

    def observe(self, policy, t, T, delta, rng_seed):
        rng = np.random.default_rng(rng_seed)
        self.dataset.extend(collect_augmented_tuples(self.models.truth, policy, rng))
        self.confidence = update_members(self.models, self.dataset, t, T, delta, self.c)
        return rollout(self.models.truth.sampler(self.features), policy, 1, rng_seed)

    def true_embedding(self, policy, rng_seed):
        return policy_embedding(policy, self.models.truth, self.features)

    def covered(self) -> bool:
        return covers_truth(self.models, self.confidence.members)

    def reference(self):
        return self.models.truth, self.features

    def __str__(self) -> str:
        return f"LowRankEnvironment {self.models} planner={self.planner_mode}"


@dataclass()
class KnrEnvironment:
    """
    KNR dynamics with ridge confidence ellipsoids and grid planning.

    Attributes:
        truth: True dynamics (hidden from the learner)
        features: Kernel feature map over continuous states
        lam: Ridge parameter; defaults to max(sigma^2, 1)
        kappa: Total-variation constant of the bonus
        grid: Planning grid; auto-sized when omitted
        rollouts: Monte Carlo size for planned embeddings
        truth_rollouts: Monte Carlo size for the privileged true embeddings
    """

    kind: ClassVar[str] = "knr"

    truth: KnrTruth
    features: FeatureMap
    lam: float | None = None
    kappa: float = 1.0
    grid: StateGrid | None = None
    rollouts: int = 2000
    truth_rollouts: int = 10**5

    def __post_init__(self) -> None:
        if self.features.horizon != self.truth.horizon:
            raise ConfigurationError("Feature horizon does not match the KNR horizon")
        if self.lam is None:
            self.lam = max(self.truth.sigma**2, 1.0)
        if self.grid is None:
            self.grid = StateGrid.auto(self.truth.initial_state, self.truth.sigma, self.truth.horizon)
        self.reset(0.1)

    def reset(self, delta):
        """Back to the prior ridge estimate with the radius of the data-free set."""
        prior = KnrEstimate.prior(
            self.truth.state_dim, self.truth.phi.dim, self.lam, self.truth.sigma
        )
        R = knr_radius(1, self.truth.state_dim, self.lam, self.truth.sigma, delta)
        self.estimate = replace(prior, R=R)

    def plan(self, cost, bonus_scale, rng_seed):
        return optimistic_plan_knr(
            self.estimate,
            cost,
            self.grid,
            self.truth.phi,
            self.truth.initial_state,
            bonus_scale,
            self.kappa,
            self.rollouts,
            rng_seed,
        )

    def observe(self, policy, t, T, delta, rng_seed):
        traj = rollout(self.truth.sampler(self.features), policy, 1, rng_seed)
        H = self.truth.horizon
        phis = np.vstack([self.truth.phi(traj.states[h], traj.actions[h]) for h in range(H)])
        nexts = np.vstack([traj.states[h + 1] for h in range(H)])
        self.estimate = update_confidence(self.estimate, phis, nexts, t + 1, delta)
        return traj

    def true_embedding(self, policy, rng_seed):
        return monte_carlo_embedding(
            self.truth.sampler(self.features), policy, self.truth_rollouts, rng_seed
        )

    def covered(self) -> bool:
        return self.estimate.contains(self.truth.W)

    def reference(self):
        model, _ = self.grid.dynamics_model(
            self.truth.W,
            self.truth.phi,
            self.truth.sigma,
            self.truth.horizon,
            self.truth.initial_state,
            "knr-truth-grid",
        )
        table = self.features.table(self.grid.points, self.truth.num_actions)
        return model, FeatureMap.from_table(table, f"{self.features.name}-grid")

    def __str__(self) -> str:
        return f"KnrEnvironment {self.truth} {self.grid}"


# HH: Experiment description


@dataclass()
class ExperimentSpec:
    """
    One experiment: environment, objective, optional constraint and loop knobs.

    Attributes:
        environment: Known, low-rank or KNR environment
        f_oracle: Convex objective f
        g_oracle: Convex constraint g (None runs unconstrained)
        Gamma: Cap on the Lagrange multiplier
        T: Number of episodes
        delta: Confidence level of the model sets
        schedule: `anytime` or `fixed-horizon` dual step sizes
        seed: Run seed
        truth_mode: Ground-truth solver mode, `auto`, `enumerate`, `frank_wolfe` or `none`
        truth_tol: Ground-truth tolerance
        eps_gamma: Clamp for the perspective near gamma = 0
        log_every: Episode summary period in the log
        name: Label used in reports and file names
    """

    environment: KnownEnvironment | LowRankEnvironment | KnrEnvironment
    f_oracle: ConvexOracle
    g_oracle: ConvexOracle | None = None
    Gamma: float = 1.0
    T: int = 100
    delta: float = 0.1
    schedule: str = "anytime"
    seed: int = 0
    truth_mode: str = "auto"
    truth_tol: float = 1e-7
    eps_gamma: float = 1e-8
    log_every: int = 100
    name: str = "experiment"

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigurationError(f"T must be >= 1, got {self.T}")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.Gamma > 0:
            raise ConfigurationError(f"Gamma must be positive, got {self.Gamma}")
        if self.seed < 0:
            raise ConfigurationError(f"Seeds must be non-negative, got {self.seed}")
        n = self.features.horizon * self.features.dim
        for label, oracle in (("objective", self.f_oracle), ("constraint", self.g_oracle)):
            if oracle is None:
                continue
            size = oracle.pinned.shape[0] if oracle.pinned is not None else oracle.center.shape[0]
            if size != n:
                raise ConfigurationError(f"{label} vector has length {size}, expected H*d = {n}")

    @property
    def features(self) -> FeatureMap:
        return self.environment.features

    @property
    def constrained(self) -> bool:
        return self.g_oracle is not None

    @property
    def bonus_scale(self) -> float:
        """B (L_f + Gamma L_g), the per-stage cost magnitude bound."""
        L_g = self.g_oracle.lipschitz if self.g_oracle is not None else 0.0
        return self.features.bound * (self.f_oracle.lipschitz + self.Gamma * L_g)

    def __str__(self) -> str:
        constraint = self.g_oracle.kind if self.g_oracle is not None else "none"
        return (
            f"ExperimentSpec '{self.name}' env={self.environment.kind} f={self.f_oracle.kind} "
            f"g={constraint} Gamma={self.Gamma:.4g} T={self.T} delta={self.delta} seed={self.seed}"
        )


# HH: Ground truth


@dataclass()
class GroundTruth:
    """
    Constrained optimum over the true model's achievable embeddings.

    Attributes:
        embedding: Psi*
        f_value: f(Psi*)
        g_value: g(Psi*) (0 without a constraint)
        weights: Mixture weights of the certificate policies
        policies: Deterministic actions (H, S) of the certificate policies
        gamma_star: Optimal multiplier reported by the solver
        gap: Largest decrease of the linearized Lagrangian at any vertex
        mode: Solver mode used
        penalty_rho: Penalty used for the near-feasibility certificate
        penalty_violation: [g]_+ at the penalized solution
    """

    embedding: KernelEmbedding
    f_value: float
    g_value: float
    weights: npt.NDArray[np.float64]
    policies: list[npt.NDArray[np.int64]] = field(repr=False)
    gamma_star: float = 0.0
    gap: float = 0.0
    mode: str = "enumerate"
    penalty_rho: float = float("nan")
    penalty_violation: float = float("nan")

    def __str__(self) -> str:
        return (
            f"GroundTruth ({self.mode}) f*={self.f_value:.10g} g*={self.g_value:.3e} "
            f"gamma*={self.gamma_star:.4g} support={len(self.policies)} gap={self.gap:.2e}"
        )


def bound_gamma(f_at_slater: float, f_at_opt: float, g_at_slater: float) -> float:
    """Gamma = -(f(slater) - f(opt)) / g(slater); needs g(slater) < 0."""
    if g_at_slater >= 0:
        raise SlaterViolationError(
            f"The Slater point must satisfy g < 0 strictly, got g = {g_at_slater}"
        )
    return -(f_at_slater - f_at_opt) / g_at_slater


_ACCEPTED = ("optimal", "optimal_inaccurate")

# Interior-point settings for the re-solve when the default pass leaves g above tol
_TIGHT_SOLVE = {"solver": cp.CLARABEL, "tol_feas": 1e-11, "tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11}


def _solve_master(
    vertices: npt.NDArray,
    f_oracle: ConvexOracle | None,
    g_oracle: ConvexOracle | None,
    penalty: float | None = None,
    margin: float = 0.0,
) -> tuple[npt.NDArray, npt.NDArray, float, float]:
    """
    min over the simplex of f(V^T w) s.t. g(V^T w) <= 0. With f_oracle None
    minimize g instead; with a penalty minimize f + rho [g]_+. A positive
    margin tightens the constraint to g <= -margin and solves at tight tolerances.

    Returns (weights, x, objective value, multiplier of g).
    """
    w = cp.Variable(vertices.shape[0], nonneg=True)
    x = vertices.T @ w
    constraints = [cp.sum(w) == 1]
    g_constraint = None
    if f_oracle is None:
        objective = g_oracle.cvx_expression(x)
    elif penalty is not None:
        objective = f_oracle.cvx_expression(x) + penalty * cp.pos(g_oracle.cvx_expression(x))
    else:
        objective = f_oracle.cvx_expression(x)
        if g_oracle is not None:
            if margin > 0:
                g_constraint = g_oracle.cvx_signed(x) <= -margin
            else:
                g_constraint = g_oracle.cvx_expression(x) <= 0
            constraints.append(g_constraint)

    problem = cp.Problem(cp.Minimize(objective), constraints)
    problem.solve(**(_TIGHT_SOLVE if margin > 0 else {}))
    if problem.status in ("infeasible", "infeasible_inaccurate"):
        raise SlaterViolationError("No mixture of policies satisfies the constraint")
    if problem.status not in _ACCEPTED:
        raise NumericalError("Ground-truth master problem failed", {"status": problem.status})

    weights = np.clip(np.asarray(w.value, dtype=float), 0.0, None)
    weights /= weights.sum()
    multiplier = 0.0
    if g_constraint is not None and g_constraint.dual_value is not None:
        multiplier = max(float(np.asarray(g_constraint.dual_value).ravel()[0]), 0.0)
    return weights, weights @ vertices, float(problem.value), multiplier


def _lmo(model: FiniteModel, features: FeatureMap, direction: npt.NDArray):
    """Vertex minimizing direction . Psi: value iteration on the linear cost."""
    _, _, policy = value_iteration(model, LinearCost(direction, features))
    return policy, policy_embedding(policy, model, features).vector


def _lagrangian_gradient(f_oracle, g_oracle, x, multiplier):
    grad = f_oracle.subgradient(x)
    if g_oracle is not None:
        grad = grad + multiplier * g_oracle.subgradient(x)
    return grad


def ground_truth_solve(
    model: FiniteModel,
    features: FeatureMap,
    f_oracle: ConvexOracle,
    g_oracle: ConvexOracle | None = None,
    tol: float = 1e-7,
    mode: str = "auto",
    budget: int = 10**5,
    max_columns: int = 500,
) -> GroundTruth:
    """
    Solve min f(Psi) s.t. g(Psi) <= 0 over the true model's policies.

    `enumerate` builds every deterministic policy's embedding and solves the
    convex program over mixture weights. `frank_wolfe` generates vertices by
    value iteration on the linearized Lagrangian and re-solves the restricted
    problem until the gap is <= tol. `auto` enumerates when within budget.
    """
    H, S, A = model.horizon, model.num_states, model.num_actions
    count = float(A) ** (S * H)
    if mode == "auto":
        mode = "enumerate" if count <= budget else "frank_wolfe"

    try:
        match mode:
            case "enumerate":
                if count > budget:
                    raise BudgetError(
                        f"{A}^{S * H} deterministic policies exceed the budget {budget}; "
                        "use the frank_wolfe mode"
                    )
                actions = [
                    np.asarray(combo, dtype=np.int64).reshape(H, S)
                    for combo in itertools.product(range(A), repeat=S * H)
                ]
                vertices = np.stack(
                    [
                        policy_embedding(StagePolicy.deterministic(act, A), model, features).vector
                        for act in actions
                    ]
                )

            case "frank_wolfe":
                if f_oracle.pinned is not None and g_oracle is None:
                    policy, vertex = _lmo(model, features, f_oracle.pinned)
                    actions, vertices = [policy.greedy_actions()], vertex[None]
                else:
                    actions, vertices = _column_generation(
                        model, features, f_oracle, g_oracle, tol, max_columns
                    )

            case _:
                raise ConfigurationError(f"Unknown ground-truth mode '{mode}'")

        weights, x, _, multiplier = _solve_master(vertices, f_oracle, g_oracle)
        if g_oracle is not None and g_oracle.value(x) > tol:
            logger.warning(
                f"Master solve left g = {g_oracle.value(x):.3g} > tol = {tol:.3g}; re-solving tightly"
            )
            try:
                weights, x, _, multiplier = _solve_master(
                    vertices, f_oracle, g_oracle, margin=0.5 * tol
                )
            except SlaterViolationError:
                logger.warning("No mixture clears the tightened constraint; keeping the first solve")
        grad = _lagrangian_gradient(f_oracle, g_oracle, x, multiplier)
        gap = float(np.max(vertices @ -grad) + grad @ x)
        if mode == "frank_wolfe":
            _, vertex = _lmo(model, features, grad)
            gap = max(gap, float(grad @ (x - vertex)))

        truth = GroundTruth(
            KernelEmbedding(x, H, features.dim),
            f_oracle.value(x),
            g_oracle.value(x) if g_oracle is not None else 0.0,
            weights[weights > 1e-12],
            [actions[i] for i in np.flatnonzero(weights > 1e-12)],
            multiplier,
            gap,
            mode,
        )
        if g_oracle is not None:
            _penalty_certificate(truth, vertices, f_oracle, g_oracle, tol)
            if truth.g_value > tol:
                raise NumericalError(
                    "Ground-truth optimum violates the constraint", {"g": truth.g_value}
                )

        logger.info(f"Ground truth: {truth}")
        return truth

    except Exception as e:
        logger.error(f"Ground-truth solve failed: {e}")
        raise


def _column_generation(model, features, f_oracle, g_oracle, tol, max_columns):
    """Fully corrective Frank-Wolfe; a feasibility phase runs first when constrained."""
    policy, vertex = _lmo(model, features, np.zeros(model.horizon * features.dim))
    actions, vertices = [policy.greedy_actions()], [vertex]

    def add(direction) -> bool:
        policy, vertex = _lmo(model, features, direction)
        if any(np.allclose(vertex, v, rtol=0.0, atol=1e-12) for v in vertices):
            return False
        actions.append(policy.greedy_actions())
        vertices.append(vertex)
        return True

    if g_oracle is not None:
        for _ in range(max_columns):
            _, x, value, _ = _solve_master(np.stack(vertices), None, g_oracle)
            if value <= 0.0 or not add(g_oracle.subgradient(x)):
                break
        if value > 0.0:
            raise SlaterViolationError(f"Constraint infeasible on the true model (min g = {value:.3e})")

    for _ in range(max_columns):
        _, x, _, multiplier = _solve_master(np.stack(vertices), f_oracle, g_oracle)
        grad = _lagrangian_gradient(f_oracle, g_oracle, x, multiplier)
        _, vertex = _lmo(model, features, grad)
        if grad @ (x - vertex) <= tol or not add(grad):
            break
    else:
        raise NumericalError("Column generation hit its column cap", {"columns": len(vertices)})
    return actions, np.stack(vertices)


def _penalty_certificate(truth, vertices, f_oracle, g_oracle, tol) -> None:
    """Near-feasibility from the exact penalty: [g]_+ <= 2 tol / rho once rho >= 2 gamma*."""
    rhos = [10.0**k for k in range(5)]
    rho = next((r for r in rhos if r >= 2.0 * truth.gamma_star), rhos[-1])
    _, x, _, _ = _solve_master(vertices, f_oracle, g_oracle, penalty=rho)
    truth.penalty_rho = rho
    truth.penalty_violation = max(g_oracle.value(x), 0.0)
    if truth.penalty_violation > 2.0 * tol / rho + tol:
        logger.warning(
            f"Penalty certificate loose: [g]_+ = {truth.penalty_violation:.3e} at rho = {rho:g}"
        )


# HH: Episode log


@dataclass()
class EpisodeRecord:
    """
    Bookkeeping for episode t.

    Attributes:
        t: Episode index (1-based)
        dual: Dual state whose theta produced the plan of episode t
        V1_plan: Planned value
        model_id: Planning model label
        planned: Planned embedding Psi^t
        true_embedding: Embedding of pi_t in the true environment
        trajectory_features: psi_h(s_h, a_h) of the executed episode, (H, d)
        planned_mean: Running mean of planned embeddings
        mixed_mean: Running mean of true embeddings (the mixed policy)
        f_hat, g_hat: Objective and constraint at planned_mean
        f_mixed, g_mixed: Objective and constraint at mixed_mean
        regret_avg: f_mixed - f(Psi*) (nan without ground truth)
        violation_avg: g_mixed (nan without constraint)
        coverage: Whether the confidence set used for the plan held the truth
        policy: Planned policy
    """

    t: int
    dual: DualState
    V1_plan: float
    model_id: str
    planned: KernelEmbedding
    true_embedding: KernelEmbedding
    trajectory_features: npt.NDArray[np.float64] = field(repr=False)
    planned_mean: npt.NDArray[np.float64] = field(repr=False)
    mixed_mean: npt.NDArray[np.float64] = field(repr=False)
    f_hat: float = float("nan")
    g_hat: float = float("nan")
    f_mixed: float = float("nan")
    g_mixed: float = float("nan")
    regret_avg: float = float("nan")
    violation_avg: float = float("nan")
    coverage: bool = True
    policy: StagePolicy | None = field(default=None, repr=False)

    def row(self) -> dict[str, float]:
        return {
            "t": self.t,
            "f_hat": self.f_hat,
            "g_hat": self.g_hat,
            "f_mixed": self.f_mixed,
            "g_mixed": self.g_mixed,
            "regret_avg": self.regret_avg,
            "violation_avg": self.violation_avg,
            "gamma": self.dual.gamma,
            "alpha_norm": float(np.linalg.norm(self.dual.alpha)),
            "beta_norm": float(np.linalg.norm(self.dual.beta)),
            "V1_plan": self.V1_plan,
            "coverage_flag": int(self.coverage),
        }

    def __str__(self) -> str:
        return (
            f"t={self.t:5d} f_hat={self.f_hat:.6g} f_mixed={self.f_mixed:.6g} "
            f"g_mixed={self.g_mixed:.4g} V1={self.V1_plan:.6g} {self.dual}"
        )


@dataclass()
class RegretReport:
    """Regret(T), Violation(T) and per-t curves t*(f(mixed_t) - f*), t*g(mixed_t)."""

    regret: float
    violation: float
    regret_curve: npt.NDArray[np.float64]
    violation_curve: npt.NDArray[np.float64]
    proxy_regret_curve: npt.NDArray[np.float64]
    proxy_violation_curve: npt.NDArray[np.float64]


def regret_violation(
    records: list[EpisodeRecord],
    truth: GroundTruth,
    f_oracle: ConvexOracle,
    g_oracle: ConvexOracle | None = None,
) -> RegretReport:
    """
    Regret(T) = T (f(Psi^mixed) - f(Psi*)), Violation(T) = T g(Psi^mixed), with
    Psi^mixed the mean of the true episode embeddings. Proxy curves use the
    planned embeddings instead. Violation is nan without a constraint.
    """
    if not records:
        raise ConfigurationError("No episode records to evaluate")
    n = len(records)
    t = np.arange(1, n + 1, dtype=float)
    true = np.cumsum(np.stack([r.true_embedding.vector for r in records]), axis=0) / t[:, None]
    planned = np.cumsum(np.stack([r.planned.vector for r in records]), axis=0) / t[:, None]

    regret = t * (np.array([f_oracle.value(x) for x in true]) - truth.f_value)
    proxy_regret = t * (np.array([f_oracle.value(x) for x in planned]) - truth.f_value)
    if g_oracle is None:
        violation = np.full(n, np.nan)
        proxy_violation = np.full(n, np.nan)
    else:
        violation = t * np.array([g_oracle.value(x) for x in true])
        proxy_violation = t * np.array([g_oracle.value(x) for x in planned])
    return RegretReport(
        float(regret[-1]), float(violation[-1]), regret, violation, proxy_regret, proxy_violation
    )


def optimism_gap(records: list[EpisodeRecord], truth: GroundTruth) -> float:
    """sum_t theta^t . (Psi^t - Psi*)."""
    return float(
        sum(r.dual.theta @ (r.planned.vector - truth.embedding.vector) for r in records)
    )


# HH: Results files

CSV_COLUMNS = (
    "t",
    "f_hat",
    "g_hat",
    "f_mixed",
    "g_mixed",
    "regret_avg",
    "violation_avg",
    "gamma",
    "alpha_norm",
    "beta_norm",
    "V1_plan",
    "coverage_flag",
)


def _fmt(value: float | int) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_episode_csv(records: list[EpisodeRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            row = record.row()
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return path


def read_episode_csv(path: str | Path) -> list[dict[str, float]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [{key: float(value) for key, value in row.items()} for row in reader]


def write_ground_truth(truth: GroundTruth, path: str | Path) -> Path:
    """Sidecar text file: one `key value...` line per field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"mode {truth.mode}",
        f"f_star {_fmt(truth.f_value)}",
        f"g_star {_fmt(truth.g_value)}",
        f"gamma_star {_fmt(truth.gamma_star)}",
        f"gap {_fmt(truth.gap)}",
        f"penalty_rho {_fmt(truth.penalty_rho)}",
        f"penalty_violation {_fmt(truth.penalty_violation)}",
        "psi_star " + " ".join(_fmt(v) for v in truth.embedding.vector),
        "weights " + " ".join(_fmt(v) for v in truth.weights),
    ]
    for i, actions in enumerate(truth.policies):
        lines.append(f"policy_{i} " + " ".join(str(int(a)) for a in actions.ravel()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# HH: Runner


@dataclass()
class VPDPO:
    """
    Episode loop alternating dual ascent on (alpha, beta, gamma) with
    optimistic planning for the cost theta = alpha + beta.
    """

    spec: ExperimentSpec

    def __post_init__(self) -> None:
        self.records: list[EpisodeRecord] = []
        self.ground_truth: GroundTruth | None = None
        self.report: RegretReport | None = None
        self.logger = setup_logging()
        self.logger.info(f"Created {self.spec}")
        self.logger.info(f"Environment: {self.spec.environment}")

    def solve_ground_truth(self) -> GroundTruth | None:
        if self.spec.truth_mode == "none":
            return None
        model, features = self.spec.environment.reference()
        self.ground_truth = ground_truth_solve(
            model,
            features,
            self.spec.f_oracle,
            self.spec.g_oracle,
            self.spec.truth_tol,
            self.spec.truth_mode,
        )
        return self.ground_truth

    def run(self) -> list[EpisodeRecord]:
        spec = self.spec
        env, f, g = spec.environment, spec.f_oracle, spec.g_oracle
        features = spec.features
        H, d = features.horizon, features.dim

        try:
            if self.ground_truth is None:
                self.solve_ground_truth()
            f_star = self.ground_truth.f_value if self.ground_truth is not None else np.nan

            schedule = StepSchedule(spec.schedule, spec.Gamma, H, spec.T)
            env.reset(spec.delta)
            state = initial_dual_state(f, g, spec.Gamma, H * d)
            coverage = env.covered()
            plan = env.plan(
                LinearCost(state.theta, features), spec.bonus_scale, episode_seed(spec.seed, 0, 0)
            )

            planned_sum = np.zeros(H * d)
            true_sum = np.zeros(H * d)
            for t in range(1, spec.T + 1):
                true = env.true_embedding(plan.policy, episode_seed(spec.seed, t, 1))
                planned_sum += plan.embedding.vector
                true_sum += true.vector
                planned_mean, mixed_mean = planned_sum / t, true_sum / t

                # dual update on Psi^t, then data from pi_t, then the next plan
                next_state = dual_step(
                    state, plan.embedding, f, g, schedule.eta(t), spec.eps_gamma
                )
                next_state.check(f, g)
                traj = env.observe(plan.policy, t, spec.T, spec.delta, episode_seed(spec.seed, t, 2))

                record = EpisodeRecord(
                    t,
                    state,
                    plan.V1,
                    plan.model_id,
                    plan.embedding,
                    true,
                    traj.features[:, 0, :],
                    planned_mean,
                    mixed_mean,
                    f.value(planned_mean),
                    g.value(planned_mean) if g is not None else np.nan,
                    f.value(mixed_mean),
                    g.value(mixed_mean) if g is not None else np.nan,
                    f.value(mixed_mean) - f_star,
                    g.value(mixed_mean) if g is not None else np.nan,
                    coverage,
                    plan.policy,
                )
                self.records.append(record)
                if t % spec.log_every == 0 or t == spec.T:
                    self.logger.info(f"Episode {record}")

                state = next_state
                if t < spec.T:
                    coverage = env.covered()
                    plan = env.plan(
                        LinearCost(state.theta, features),
                        spec.bonus_scale,
                        episode_seed(spec.seed, t, 0),
                    )

            if self.ground_truth is not None:
                self.report = regret_violation(self.records, self.ground_truth, f, g)
            return self.records

        except Exception as e:
            self.logger.error(f"Run '{spec.name}' aborted after {len(self.records)} episodes: {e}")
            raise

    def summary(self) -> dict[str, float]:
        """Final metrics, including the cumulative optimism gap and Lagrangian surrogate."""
        if not self.records:
            return {}
        last = self.records[-1]
        out = {
            "T": float(last.t),
            "f_hat": last.f_hat,
            "f_mixed": last.f_mixed,
            "g_mixed": last.g_mixed,
            "coverage_all": float(all(r.coverage for r in self.records)),
        }
        if self.ground_truth is not None and self.report is not None:
            gamma = last.dual.gamma
            g_hat = 0.0 if np.isnan(last.g_hat) else last.g_hat
            out |= {
                "f_star": self.ground_truth.f_value,
                "regret": self.report.regret,
                "violation": self.report.violation,
                "optimism_gap": optimism_gap(self.records, self.ground_truth),
                "lagrangian_surrogate": last.f_hat + gamma * g_hat - self.ground_truth.f_value,
            }
        return out

    def __str__(self) -> str:
        separator = "=" * 50
        output = [f"\n{separator}\n", "Run Summary:", str(self.spec)]
        if self.ground_truth is not None:
            output.append(str(self.ground_truth))
        for key, value in self.summary().items():
            output.append(f"{key}: {value:.10g}")
        output.append(f"\n{separator}\n")
        return "\n".join(output)


def run(spec: ExperimentSpec) -> list[EpisodeRecord]:
    """Run the episode loop for `spec` and return its records."""
    return VPDPO(spec).run()


def main() -> None:
    from cvxmdp.mdp_fenchel import make_distance_to_point_oracle

    rng = np.random.default_rng(0)
    model = FiniteModel.random(3, 2, 3, rng)
    features = FeatureMap.tabular_onehot(3, 2, 3)
    target = policy_embedding(StagePolicy.uniform(3, 3, 2), model, features)
    spec = ExperimentSpec(
        KnownEnvironment(model, features), make_distance_to_point_oracle(target.vector), T=200
    )

    runner = VPDPO(spec)
    runner.run()
    print(runner)


if __name__ == "__main__":
    main()
