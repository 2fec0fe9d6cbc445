import cvxpy as cp
import numpy as np
import numpy.typing as npt

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

from cvxmdp.errors import ArgumentError, DomainError


class ConvexOracle(ABC):
    """
    Convex function f on R^{H*d} with its Fenchel conjugate.

    The conjugate domain is either the ball of radius `lipschitz` (`pinned` is
    None) or the singleton {pinned} for affine functions. Outside its domain
    the conjugate is +inf.
    """

    kind: ClassVar[str] = "convex"
    domain_slack: ClassVar[float] = 1e-9

    lipschitz: float
    pinned: npt.NDArray[np.float64] | None = None

    @abstractmethod
    def value(self, x: npt.ArrayLike) -> float: ...

    @abstractmethod
    def conjugate(self, alpha: npt.ArrayLike) -> float: ...

    @abstractmethod
    def conjugate_subgrad(self, alpha: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """A primal point attaining sup_x alpha.x - f(x)."""

    @abstractmethod
    def conjugate_argmax(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """A dual point attaining max_alpha alpha.x - f*(alpha) (= f(x))."""

    @abstractmethod
    def subgradient(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]: ...

    @abstractmethod
    def cvx_expression(self, x: cp.Expression) -> cp.Expression: ...

    def cvx_signed(self, x: cp.Expression) -> cp.Expression:
        """Convex h with {h <= 0} = {f <= 0} that can go negative; used for tightened constraints."""
        return self.cvx_expression(x)

    def in_dual_domain(self, alpha: npt.ArrayLike) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        if self.pinned is not None:
            return bool(np.allclose(alpha, self.pinned, rtol=0.0, atol=self.domain_slack))
        return float(np.linalg.norm(alpha)) <= self.lipschitz + self.domain_slack

    def reconstruct(self, x: npt.ArrayLike) -> float:
        """max over the dual domain of alpha.x - f*(alpha), via the closed-form maximizer."""
        x = np.asarray(x, dtype=float)
        alpha = self.conjugate_argmax(x)
        return float(alpha @ x - self.conjugate(alpha))

    def __str__(self) -> str:
        return f"{type(self).__name__} ({self.kind}) L={self.lipschitz:.4g}"


@dataclass(eq=False)
class LinearOracle(ConvexOracle):
    """f(x) = c.x + offset; dom f* = {c}, f*(c) = -offset."""

    kind: ClassVar[str] = "linear"

    c: npt.NDArray[np.float64]
    offset: float = 0.0

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        if not np.all(np.isfinite(self.c)):
            raise ArgumentError("Linear oracle coefficients must be finite")
        self.pinned = self.c
        self.lipschitz = float(np.linalg.norm(self.c))

    def value(self, x):
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    def conjugate(self, alpha):
        return -self.offset if self.in_dual_domain(alpha) else np.inf

    def conjugate_subgrad(self, alpha):
        return np.zeros_like(self.c)

    def conjugate_argmax(self, x):
        return self.c.copy()

    def subgradient(self, x):
        return self.c.copy()

    def cvx_expression(self, x):
        return self.c @ x + self.offset


@dataclass(eq=False)
class DistanceToBallOracle(ConvexOracle):
    """
    f(x) = max(||x - center||_2 - radius, 0); f*(alpha) = alpha.center + r||alpha||
    on the unit ball. radius = 0 is the distance to a point.
    """

    kind: ClassVar[str] = "dist_ball"

    center: npt.NDArray[np.float64]
    radius: float = 0.0

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float).ravel()
        if self.radius < 0:
            raise ArgumentError(f"Ball radius must be non-negative, got {self.radius}")
        self.radius = float(self.radius)
        self.lipschitz = 1.0
        self.pinned = None

    def value(self, x):
        gap = float(np.linalg.norm(np.asarray(x, dtype=float) - self.center)) - self.radius
        return max(gap, 0.0)

    def conjugate(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if not self.in_dual_domain(alpha):
            return np.inf
        return float(alpha @ self.center + self.radius * np.linalg.norm(alpha))

    def conjugate_subgrad(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        norm = np.linalg.norm(alpha)
        if norm == 0.0 or self.radius == 0.0:
            return self.center.copy()
        return self.center + self.radius * alpha / norm

    def conjugate_argmax(self, x):
        diff = np.asarray(x, dtype=float) - self.center
        norm = np.linalg.norm(diff)
        if norm <= self.radius or norm == 0.0:
            return np.zeros_like(self.center)
        return diff / norm

    def subgradient(self, x):
        return self.conjugate_argmax(x)

    def cvx_expression(self, x):
        if self.radius == 0.0:
            return cp.norm(x - self.center, 2)
        return cp.pos(cp.norm(x - self.center, 2) - self.radius)

    def cvx_signed(self, x):
        return cp.norm(x - self.center, 2) - self.radius


@dataclass(eq=False)
class DistanceToPointOracle(DistanceToBallOracle):
    """f(x) = ||x - psi0||_2; f*(alpha) = alpha.psi0 on the unit ball."""

    kind: ClassVar[str] = "dist_point"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.radius != 0.0:
            raise ArgumentError("A distance-to-point oracle has radius 0")

    @property
    def target(self) -> npt.NDArray[np.float64]:
        return self.center


def make_linear_oracle(c: npt.ArrayLike, offset: float = 0.0) -> LinearOracle:
    return LinearOracle(np.asarray(c, dtype=float), float(offset))


def make_distance_to_point_oracle(psi0: npt.ArrayLike) -> DistanceToPointOracle:
    return DistanceToPointOracle(np.asarray(psi0, dtype=float), 0.0)


def make_distance_to_ball_oracle(
    center: npt.ArrayLike, radius: float
) -> DistanceToBallOracle:
    if radius < 0:
        raise ArgumentError(f"Ball radius must be non-negative, got {radius}")
    return DistanceToBallOracle(np.asarray(center, dtype=float), float(radius))


def make_oracle(kind: str, vector: npt.ArrayLike, scalar: float = 0.0) -> ConvexOracle:
    """Build an oracle from its config tag: `linear`, `dist_point` or `dist_ball`."""
    match kind:
        case "linear":
            return make_linear_oracle(vector, scalar)
        case "dist_point":
            return make_distance_to_point_oracle(vector)
        case "dist_ball":
            return make_distance_to_ball_oracle(vector, scalar)
        case _:
            raise ArgumentError(f"Unknown oracle kind '{kind}'")


# HH: Perspective


@dataclass()
class PerspectiveTerm:
    """
    The jointly convex map (beta, gamma) -> gamma * g*(beta / gamma).

    Attributes:
        oracle: Underlying convex function g
        eps_gamma: Clamp applied to gamma near the cone apex
    """

    oracle: ConvexOracle
    eps_gamma: float = 1e-8

    def __post_init__(self) -> None:
        if not self.eps_gamma > 0:
            raise ArgumentError(f"eps_gamma must be positive, got {self.eps_gamma}")

    def _scaled_point(self, beta: npt.ArrayLike, gamma: float) -> tuple[npt.NDArray, float]:
        beta = np.asarray(beta, dtype=float)
        slack = ConvexOracle.domain_slack
        if gamma < -slack:
            raise DomainError(f"gamma must be non-negative, got {gamma}")
        g = self.oracle
        if g.pinned is not None:
            ok = np.allclose(beta, gamma * g.pinned, rtol=0.0, atol=slack)
        else:
            ok = float(np.linalg.norm(beta)) <= max(gamma, 0.0) * g.lipschitz + slack
        if not ok:
            raise DomainError(
                f"beta (norm {np.linalg.norm(beta):.6g}) outside gamma * dom g* "
                f"(gamma={gamma:.6g}, L={g.lipschitz:.6g})"
            )
        clamped = max(gamma, self.eps_gamma)
        u = beta / clamped
        # clamping can push u marginally past the ball; pull it back
        if g.pinned is None:
            norm = np.linalg.norm(u)
            if norm > g.lipschitz:
                u = u * (g.lipschitz / norm)
        else:
            u = g.pinned
        return u, clamped


def perspective_value(term: PerspectiveTerm, beta: npt.ArrayLike, gamma: float) -> float:
    """gamma' * g*(beta / gamma') with gamma' = max(gamma, eps); 0 at the apex."""
    beta = np.asarray(beta, dtype=float)
    if gamma == 0.0 and not np.any(beta):
        return 0.0
    u, clamped = term._scaled_point(beta, gamma)
    return float(clamped * term.oracle.conjugate(u))


def perspective_subgrads(
    term: PerspectiveTerm, beta: npt.ArrayLike, gamma: float
) -> tuple[npt.NDArray[np.float64], float]:
    """
    Subgradients of (beta, gamma) -> gamma g*(beta/gamma):
    d_beta = dg*(u), d_gamma = g*(u) - u.dg*(u) with u = beta / gamma'.
    """
    u, _ = term._scaled_point(beta, gamma)
    g = term.oracle
    grad_beta = g.conjugate_subgrad(u)
    grad_gamma = float(g.conjugate(u) - u @ grad_beta)
    return grad_beta, grad_gamma


def main() -> None:
    f = make_distance_to_ball_oracle(np.zeros(2), 1.0)
    x = np.array([2.0, 0.0])
    print(f)
    print(f"f(x) = {f.value(x):.3f}, reconstruction = {f.reconstruct(x):.3f}")

    term = PerspectiveTerm(f)
    beta, gamma = np.array([0.3, 0.4]), 2.0
    print(f"gamma g*(beta/gamma) = {perspective_value(term, beta, gamma):.3f}")


if __name__ == "__main__":
    main()
