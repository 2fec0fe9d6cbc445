import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Protocol, Sequence

from scipy.optimize import minimize

from cvxmdp.errors import ArgumentError, NumericalError
from cvxmdp.log import get_logger
from cvxmdp.mdp_embedding import KernelEmbedding
from cvxmdp.mdp_fenchel import ConvexOracle, PerspectiveTerm, perspective_subgrads

logger = get_logger()


# HH: Dual state and step sizes


@dataclass(frozen=True)
class DualState:
    """
    Dual iterate of the saddle problem.

    Attributes:
        alpha: Fenchel dual of the objective, ||alpha|| <= L_f
        beta: Scaled Fenchel dual of the constraint, ||beta|| <= gamma * L_g
        gamma: Lagrange multiplier, 0 <= gamma <= Gamma
        Gamma: Cap on the multiplier
    """

    alpha: npt.NDArray[np.float64]
    beta: npt.NDArray[np.float64]
    gamma: float
    Gamma: float
    theta: npt.NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).ravel())
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "theta", self.alpha + self.beta)

    def check(
        self, f_oracle: ConvexOracle, g_oracle: ConvexOracle | None, tol: float = 1e-9
    ) -> None:
        """Raise NumericalError when the feasibility invariants fail."""
        problems = []
        if f_oracle.pinned is None and np.linalg.norm(self.alpha) > f_oracle.lipschitz + tol:
            problems.append(f"||alpha||={np.linalg.norm(self.alpha):.3e}")
        if not -tol <= self.gamma <= self.Gamma + tol:
            problems.append(f"gamma={self.gamma:.3e}")
        if g_oracle is not None and g_oracle.pinned is None:
            if np.linalg.norm(self.beta) > self.gamma * g_oracle.lipschitz + tol:
                problems.append(f"||beta||={np.linalg.norm(self.beta):.3e}")
        if problems:
            raise NumericalError("Dual state left its feasible set", {"violations": problems})

    def __str__(self) -> str:
        return (
            f"DualState |alpha|={np.linalg.norm(self.alpha):.4f} "
            f"|beta|={np.linalg.norm(self.beta):.4f} gamma={self.gamma:.4f}/{self.Gamma:.4g}"
        )


def initial_dual_state(
    f_oracle: ConvexOracle, g_oracle: ConvexOracle | None, Gamma: float, dim: int
) -> DualState:
    """alpha = 0 (or c for linear f), beta = 0, gamma = Gamma/2; gamma = 0 without a constraint."""
    alpha = f_oracle.pinned.copy() if f_oracle.pinned is not None else np.zeros(dim)
    if g_oracle is None:
        return DualState(alpha, np.zeros(dim), 0.0, Gamma)
    gamma = Gamma / 2.0
    beta = gamma * g_oracle.pinned if g_oracle.pinned is not None else np.zeros(dim)
    return DualState(alpha, beta, gamma, Gamma)


@dataclass()
class StepSchedule:
    """
    eta_t = 2 Gamma / (H sqrt(t)) (anytime) or 2 Gamma / (H sqrt(T)) (fixed-horizon).
    """

    mode: Literal["anytime", "fixed-horizon"]
    Gamma: float
    horizon: int
    T: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("anytime", "fixed-horizon"):
            raise ArgumentError(f"Unknown step schedule mode '{self.mode}'")
        if self.mode == "fixed-horizon" and (self.T is None or self.T < 1):
            raise ArgumentError("A fixed-horizon schedule needs T >= 1")
        if self.Gamma <= 0 or self.horizon < 1:
            raise ArgumentError(f"Need Gamma > 0 and H >= 1, got {self.Gamma}, {self.horizon}")

    def eta(self, t: int) -> float:
        if t < 1:
            raise ArgumentError(f"Step index starts at 1, got {t}")
        n = t if self.mode == "anytime" else self.T
        return 2.0 * self.Gamma / (self.horizon * np.sqrt(n))


# HH: Projections


def project_ball(v: npt.ArrayLike, radius: float) -> npt.NDArray[np.float64]:
    if radius < 0:
        raise ArgumentError(f"Ball radius must be non-negative, got {radius}")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v.copy()
    return v * (radius / norm)


def _project_cone(
    beta: npt.NDArray[np.float64], gamma: float, L: float
) -> tuple[npt.NDArray[np.float64], float]:
    """Closed-form projection onto {(beta, gamma): ||beta|| <= L gamma}."""
    norm = np.linalg.norm(beta)
    if norm <= L * gamma:
        return beta.copy(), gamma
    if L * norm <= -gamma:
        return np.zeros_like(beta), 0.0
    scale = (L * norm + gamma) / (L * L + 1.0)
    return (L * scale / norm) * beta, scale


def project_cone_slab(
    beta: npt.ArrayLike,
    gamma: float,
    Gamma: float,
    L_g: float,
    tol: float = 1e-10,
    max_sweeps: int = 1000,
) -> tuple[npt.NDArray[np.float64], float]:
    """
    Euclidean projection onto G = {||beta|| <= gamma L_g, 0 <= gamma <= Gamma}
    by Dykstra's alternating projections between the cone and the slab.
    """
    if Gamma <= 0 or L_g <= 0:
        raise ArgumentError(f"Need Gamma > 0 and L_g > 0, got {Gamma}, {L_g}")

    x = np.append(np.asarray(beta, dtype=float), float(gamma))
    if np.linalg.norm(x[:-1]) <= L_g * x[-1] and 0.0 <= x[-1] <= Gamma:
        return x[:-1].copy(), float(x[-1])

    p = np.zeros_like(x)
    q = np.zeros_like(x)
    y = x.copy()
    for sweep in range(1, max_sweeps + 1):
        b, g = _project_cone((x + p)[:-1], float((x + p)[-1]), L_g)
        y_new = np.append(b, g)
        p = x + p - y_new

        x_new = y_new + q
        x_new[-1] = min(max(x_new[-1], 0.0), Gamma)
        q = y_new + q - x_new

        moved = np.linalg.norm(x_new - x) + np.linalg.norm(y_new - y)
        x, y = x_new, y_new
        if moved <= tol:
            beta_out, gamma_out = x[:-1], float(x[-1])
            # land exactly inside the cone so a second projection is a no-op
            norm = np.linalg.norm(beta_out)
            if norm > L_g * gamma_out:
                beta_out = beta_out * (L_g * gamma_out / norm)
            return beta_out, gamma_out

    diagnostics = {
        "sweeps": max_sweeps,
        "last_displacement": float(moved),
        "cone_violation": float(np.linalg.norm(x[:-1]) - L_g * x[-1]),
    }
    logger.error(f"Cone-slab projection did not converge: {diagnostics}")
    raise NumericalError("Dykstra projection onto G did not converge", diagnostics)


# HH: Dual ascent


def dual_step(
    state: DualState,
    embedding: KernelEmbedding,
    f_oracle: ConvexOracle,
    g_oracle: ConvexOracle | None,
    eta: float,
    eps_gamma: float = 1e-8,
) -> DualState:
    """
    One projected subgradient ascent step on (alpha, beta, gamma).

    alpha <- Proj_{L_f ball}(alpha + eta (Psi - df*(alpha))) (pinned for linear f);
    (beta, gamma) <- Proj_G(beta + eta (Psi - d_beta), gamma - eta d_gamma).
    Without a constraint beta and gamma stay at zero.
    """
    if eta < 0:
        raise ArgumentError(f"Step size must be non-negative, got {eta}")
    if eta == 0:
        return state

    psi = embedding.vector
    if f_oracle.pinned is not None:
        alpha = f_oracle.pinned.copy()
    else:
        step = psi - f_oracle.conjugate_subgrad(state.alpha)
        alpha = project_ball(state.alpha + eta * step, f_oracle.lipschitz)

    if g_oracle is None:
        return replace(state, alpha=alpha)

    if g_oracle.pinned is not None:
        # dom g* = {c}: beta = gamma c, so the saddle term is gamma * g(Psi)
        gamma = float(np.clip(state.gamma + eta * g_oracle.value(psi), 0.0, state.Gamma))
        return DualState(alpha, gamma * g_oracle.pinned, gamma, state.Gamma)

    term = PerspectiveTerm(g_oracle, eps_gamma)
    grad_beta, grad_gamma = perspective_subgrads(term, state.beta, state.gamma)
    beta, gamma = project_cone_slab(
        state.beta + eta * (psi - grad_beta),
        state.gamma - eta * grad_gamma,
        state.Gamma,
        g_oracle.lipschitz,
    )
    return DualState(alpha, beta, gamma, state.Gamma)


# HH: Online projected subgradient


class ConcaveReward(Protocol):
    def value(self, x: npt.NDArray[np.float64]) -> float: ...

    def supergradient(self, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]: ...


@dataclass()
class LinearReward:
    c: npt.NDArray[np.float64]

    def value(self, x):
        return float(np.dot(self.c, x))

    def supergradient(self, x):
        return np.asarray(self.c, dtype=float)


@dataclass()
class BallDomain:
    """Euclidean ball {x : ||x - center|| <= radius}; its diameter is 2 * radius."""

    center: npt.NDArray[np.float64]
    radius: float

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float).ravel()
        if self.radius <= 0:
            raise ArgumentError(f"Domain radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return self.center + project_ball(x - self.center, self.radius)


@dataclass()
class OnlineSchedule:
    """eta_t = R / (G sqrt(t)), or R / (G sqrt(T)) when T is known; R is the diameter."""

    R: float
    G: float
    T: int | None = None

    def eta(self, t: int) -> float:
        n = t if self.T is None else self.T
        return self.R / (self.G * np.sqrt(n))


@dataclass()
class OnlineResult:
    iterates: npt.NDArray[np.float64]
    rewards: npt.NDArray[np.float64]
    comparator: npt.NDArray[np.float64]
    comparator_value: float
    regret: float

    def __str__(self) -> str:
        return (
            f"OnlineResult T={self.rewards.shape[0]} regret={self.regret:.6g} "
            f"(comparator value {self.comparator_value:.6g})"
        )


def _best_fixed_point(
    domain: BallDomain, reward_fns: Sequence[ConcaveReward]
) -> npt.NDArray[np.float64]:
    if all(isinstance(fn, LinearReward) for fn in reward_fns):
        total = np.sum([np.asarray(fn.c, dtype=float) for fn in reward_fns], axis=0)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            return domain.center.copy()
        return domain.center + domain.radius * total / norm

    def negative_total(x):
        return -sum(fn.value(x) for fn in reward_fns)

    def negative_gradient(x):
        return -np.sum([fn.supergradient(x) for fn in reward_fns], axis=0)

    constraint = {
        "type": "ineq",
        "fun": lambda x: domain.radius**2 - np.sum((x - domain.center) ** 2),
        "jac": lambda x: -2.0 * (x - domain.center),
    }
    result = minimize(
        negative_total,
        domain.center,
        jac=negative_gradient,
        constraints=[constraint],
        method="SLSQP",
    )
    return domain.project(result.x)


def online_projected_subgradient(
    domain: BallDomain,
    reward_fns: Sequence[ConcaveReward],
    schedule: OnlineSchedule,
    x0: npt.ArrayLike | None = None,
    comparator: Callable[[BallDomain, Sequence[ConcaveReward]], npt.NDArray] | None = None,
) -> OnlineResult:
    """
    Play x_{t+1} = Proj(x_t + eta_t g_t) against concave rewards and report
    regret max_x sum f_t(x) - sum f_t(x_t).
    """
    if not reward_fns:
        raise ArgumentError("Need at least one reward function")

    x = domain.center.copy() if x0 is None else domain.project(np.asarray(x0, dtype=float))
    iterates = []
    rewards = []
    for t, fn in enumerate(reward_fns, start=1):
        iterates.append(x)
        rewards.append(fn.value(x))
        x = domain.project(x + schedule.eta(t) * fn.supergradient(x))

    best = (comparator or _best_fixed_point)(domain, reward_fns)
    best_value = float(sum(fn.value(best) for fn in reward_fns))
    rewards = np.asarray(rewards)
    return OnlineResult(
        np.asarray(iterates), rewards, best, best_value, best_value - float(rewards.sum())
    )
