import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field, replace
from typing import ClassVar, Sequence

from scipy import linalg
from scipy.stats import norm

from cvxmdp.errors import ArgumentError, ConfigurationError
from cvxmdp.log import get_logger
from cvxmdp.mdp_embedding import FeatureMap, FiniteModel

logger = get_logger()


# HH: State-action features


@dataclass()
class StateActionFeature:
    """
    Stage-independent feature phi(s, a) for continuous states, ||phi|| <= 1.

    Kinds:
        identity: [s / max(1, ||s||); e_a] / sqrt(2)
        tabular-onehot: one-hot of (cell(s), a), cells from `bins` per axis on [-extent, extent]
        random-projection: cos(M [s; e_a] + b) / sqrt(dim), seeded
    """

    kinds: ClassVar[tuple[str, ...]] = ("identity", "tabular-onehot", "random-projection")

    kind: str
    state_dim: int
    num_actions: int
    dim: int = 0
    seed: int = 0
    bins: int = 4
    extent: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in self.kinds:
            raise ConfigurationError(f"Unknown feature kind '{self.kind}', expected {self.kinds}")
        if self.state_dim < 1 or self.num_actions < 1:
            raise ConfigurationError("Feature needs state_dim >= 1 and num_actions >= 1")

        match self.kind:
            case "identity":
                self.dim = self.state_dim + self.num_actions
            case "tabular-onehot":
                self.dim = self.bins**self.state_dim * self.num_actions
            case "random-projection":
                if self.dim < 1:
                    raise ConfigurationError("random-projection features need dim >= 1")
                rng = np.random.default_rng(self.seed)
                self._M = rng.standard_normal((self.dim, self.state_dim + self.num_actions))
                self._b = rng.uniform(0.0, 2.0 * np.pi, self.dim)

    def __call__(self, states: npt.ArrayLike, actions: npt.ArrayLike) -> npt.NDArray[np.float64]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.asarray(actions, dtype=np.int64).ravel()
        n = states.shape[0]
        onehot = np.zeros((n, self.num_actions))
        onehot[np.arange(n), actions] = 1.0

        match self.kind:
            case "identity":
                scale = np.maximum(1.0, np.linalg.norm(states, axis=1, keepdims=True))
                return np.hstack([states / scale, onehot]) / np.sqrt(2.0)
            case "tabular-onehot":
                width = 2.0 * self.extent / self.bins
                cells = np.clip(
                    np.floor((states + self.extent) / width), 0, self.bins - 1
                ).astype(np.int64)
                flat = np.ravel_multi_index(cells.T, (self.bins,) * self.state_dim)
                out = np.zeros((n, self.dim))
                out[np.arange(n), flat * self.num_actions + actions] = 1.0
                return out
            case _:
                z = np.hstack([states, onehot])
                return np.cos(z @ self._M.T + self._b) / np.sqrt(self.dim)

    def as_feature_map(self, horizon: int) -> FeatureMap:
        """Use phi as the (stage-independent) kernel feature psi."""

        def evaluator(h, states, actions):
            return self(states, actions)

        return FeatureMap(self.dim, horizon, 1.0, evaluator, self.kind)


# HH: Environment


@dataclass()
class KnrTruth:
    """
    Kernelized nonlinear regulator s' = W* phi(s, a) + eps, eps ~ N(0, sigma^2 I).

    Attributes:
        W: Transition matrix of shape (state_dim, phi.dim), ||W||_2 <= 1
        phi: Dynamics feature
        sigma: Noise level
        horizon: Episode length H
        initial_state: Fixed s_1
    """

    norm_slack: ClassVar[float] = 1e-12

    W: npt.NDArray[np.float64]
    phi: StateActionFeature
    sigma: float
    horizon: int
    initial_state: npt.NDArray[np.float64] = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self) -> None:
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.initial_state = np.asarray(self.initial_state, dtype=float).ravel()
        if self.W.shape != (self.phi.state_dim, self.phi.dim):
            raise ConfigurationError(
                f"W has shape {self.W.shape}, expected {(self.phi.state_dim, self.phi.dim)}"
            )
        if self.initial_state.shape[0] != self.state_dim:
            raise ConfigurationError("Initial state dimension does not match W")
        if np.linalg.norm(self.W, 2) > 1.0 + self.norm_slack:
            raise ConfigurationError(f"||W*||_2 = {np.linalg.norm(self.W, 2):.6g} exceeds 1")
        if self.sigma < 0 or self.horizon < 1:
            raise ConfigurationError("Need sigma >= 0 and H >= 1")

    @property
    def state_dim(self) -> int:
        return self.W.shape[0]

    @property
    def num_actions(self) -> int:
        return self.phi.num_actions

    @classmethod
    def random(
        cls,
        phi: StateActionFeature,
        sigma: float,
        horizon: int,
        seed: int,
        scale: float = 0.9,
        initial_state: npt.ArrayLike | None = None,
    ) -> "KnrTruth":
        """Seeded Gaussian draw rescaled to ||W*||_2 = scale."""
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((phi.state_dim, phi.dim))
        W *= scale / np.linalg.norm(W, 2)
        s0 = np.zeros(phi.state_dim) if initial_state is None else initial_state
        return cls(W, phi, sigma, horizon, np.asarray(s0, dtype=float))

    def sampler(self, features: FeatureMap) -> "KnrSampler":
        return KnrSampler(self.W, self.phi, self.sigma, self.horizon, self.initial_state, features)

    def __str__(self) -> str:
        return (
            f"KnrTruth state_dim={self.state_dim} d_phi={self.phi.dim} "
            f"A={self.num_actions} H={self.horizon} sigma={self.sigma:.3g}"
        )


@dataclass()
class KnrSampler:
    """Trajectory sampler for s' = W phi(s, a) + N(0, sigma^2 I)."""

    W: npt.NDArray[np.float64]
    phi: StateActionFeature
    sigma: float
    horizon: int
    initial_state: npt.NDArray[np.float64]
    features: FeatureMap

    def initial_states(self, n: int) -> npt.NDArray[np.float64]:
        return np.tile(self.initial_state, (n, 1))

    def sample_next(self, h, states, actions, rng) -> npt.NDArray[np.float64]:
        means = self.phi(states, actions) @ self.W.T
        if self.sigma == 0.0:
            return means
        return means + self.sigma * rng.standard_normal(means.shape)


def knr_sample_step(
    truth: KnrTruth, s: npt.ArrayLike, a: int, rng: np.random.Generator
) -> npt.NDArray[np.float64]:
    """s' = W* phi(s, a) + eps for a single state."""
    s = np.asarray(s, dtype=float).reshape(1, -1)
    mean = (truth.phi(s, [a]) @ truth.W.T)[0]
    if truth.sigma == 0.0:
        return mean
    return mean + truth.sigma * rng.standard_normal(mean.shape[0])


# HH: Ridge estimate and confidence ellipsoid


@dataclass()
class KnrEstimate:
    """
    Ridge estimate W_hat = (sum s' phi^T) Lambda^{-1}, Lambda = lam I + sum phi phi^T.

    Attributes:
        W_hat: Estimated transition matrix
        Lambda: Regularized design matrix
        lam: Ridge parameter
        n: Number of transitions seen
        R: Squared ellipsoid radius
        cross: Accumulated sum of s' phi^T
        sigma: Noise level assumed by the bonus
    """

    W_hat: npt.NDArray[np.float64]
    Lambda: npt.NDArray[np.float64]
    lam: float
    n: int = 0
    R: float = 0.0
    cross: npt.NDArray[np.float64] | None = None
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ArgumentError(f"Ridge parameter must be positive, got {self.lam}")
        if self.cross is None:
            self.cross = self.W_hat @ self.Lambda
        self._factor = linalg.cho_factor(self.Lambda)

    @property
    def dim_phi(self) -> int:
        return self.Lambda.shape[0]

    @property
    def state_dim(self) -> int:
        return self.W_hat.shape[0]

    @classmethod
    def prior(cls, state_dim: int, dim_phi: int, lam: float, sigma: float = 1.0) -> "KnrEstimate":
        return cls(
            np.zeros((state_dim, dim_phi)),
            lam * np.eye(dim_phi),
            lam,
            0,
            0.0,
            np.zeros((state_dim, dim_phi)),
            sigma,
        )

    def updated(self, phis: npt.ArrayLike, next_states: npt.ArrayLike) -> "KnrEstimate":
        """New estimate with the transitions (phi_i, s'_i) added."""
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=float))
        Lambda = self.Lambda + phis.T @ phis
        cross = self.cross + next_states.T @ phis
        W_hat = linalg.solve(Lambda, cross.T, assume_a="pos").T
        return replace(
            self, W_hat=W_hat, Lambda=Lambda, n=self.n + phis.shape[0], cross=cross
        )

    def log_det_ratio(self) -> float:
        """log det(Lambda) - log det(lam I)."""
        sign, logdet = np.linalg.slogdet(self.Lambda)
        return float(logdet - self.dim_phi * np.log(self.lam))

    def inverse_norms(self, phis: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """||phi||_{Lambda^{-1}} for each row."""
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        solved = linalg.cho_solve(self._factor, phis.T)
        return np.sqrt(np.maximum(np.einsum("ij,ji->i", phis, solved), 0.0))

    def ellipsoid_error(self, W: npt.ArrayLike) -> float:
        """||(W_hat - W) Lambda^{1/2}||_2^2."""
        diff = self.W_hat - np.asarray(W, dtype=float)
        return float(np.linalg.eigvalsh(diff @ self.Lambda @ diff.T).max())

    def contains(self, W: npt.ArrayLike) -> bool:
        return self.ellipsoid_error(W) <= self.R

    def __str__(self) -> str:
        return f"KnrEstimate n={self.n} lam={self.lam:.3g} R={self.R:.4g}"


def ridge_fit(
    transitions: Sequence[tuple[npt.ArrayLike, npt.ArrayLike]],
    lam: float,
    dim_phi: int | None = None,
    state_dim: int | None = None,
    sigma: float = 1.0,
) -> KnrEstimate:
    """argmin_W sum ||W phi - s'||^2 + lam ||W||_F^2; dims are needed for empty data."""
    if lam <= 0:
        raise ArgumentError(f"Ridge parameter must be positive, got {lam}")
    if not transitions:
        if dim_phi is None or state_dim is None:
            raise ArgumentError("Empty data needs dim_phi and state_dim")
        return KnrEstimate.prior(state_dim, dim_phi, lam, sigma)

    phis = np.array([np.asarray(p, dtype=float).ravel() for p, _ in transitions])
    nexts = np.array([np.asarray(s, dtype=float).ravel() for _, s in transitions])
    prior = KnrEstimate.prior(nexts.shape[1], phis.shape[1], lam, sigma)
    return prior.updated(phis, nexts)


def knr_radius(
    t: int,
    d: int,
    lam: float,
    sigma: float,
    delta: float,
    det_ratio: float = 1.0,
    log_det_ratio: float | None = None,
) -> float:
    """
    R^t = 2 lam + 8 sigma^2 (d log 5 + 2 log t + log 4 + log(det_ratio pi^2 t^2 / (3 delta))).

    The 2 lam term uses ||W*||_2 <= 1; the per-round failure budget is
    delta_t = (3 delta / pi^2) / t^2. Pass `log_det_ratio` to avoid overflow.
    """
    log_ratio = np.log(det_ratio) if log_det_ratio is None else log_det_ratio
    if t < 1:
        raise ConfigurationError(f"Radius index t must be >= 1, got {t}")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if lam <= 0 or sigma < 0 or d < 1:
        raise ConfigurationError(f"Need lam > 0, sigma >= 0, d >= 1; got {lam}, {sigma}, {d}")
    if log_ratio < -1e-12:
        raise ConfigurationError(f"det_ratio must be >= 1, got exp({log_ratio})")

    noise = (
        d * np.log(5.0)
        + 2.0 * np.log(t)
        + np.log(4.0)
        + log_ratio
        + np.log(np.pi**2 * t**2 / (3.0 * delta))
    )
    return float(2.0 * lam + 8.0 * sigma**2 * noise)


def update_confidence(
    estimate: KnrEstimate,
    phis: npt.ArrayLike,
    next_states: npt.ArrayLike,
    t: int,
    delta: float,
) -> KnrEstimate:
    """Add one episode of data and set the radius of the confidence set C^t."""
    updated = estimate.updated(phis, next_states)
    R = knr_radius(
        t,
        updated.state_dim,
        updated.lam,
        updated.sigma,
        delta,
        log_det_ratio=updated.log_det_ratio(),
    )
    logger.debug(f"KNR confidence at t={t}: n={updated.n} R={R:.4g}")
    return replace(updated, R=R)


def exploration_bonus(
    estimate: KnrEstimate,
    phi: npt.ArrayLike,
    per_step_cost_bound: float,
    kappa: float = 1.0,
) -> float | npt.NDArray[np.float64]:
    """
    b(s, a) = min(kappa 2 sqrt(R) ||phi||_{Lambda^{-1}} / sigma, 2) * bound.

    The TV factor is clipped at 2; with sigma = 0 any nonzero width gives 2.
    Accepts one feature vector or a stack of them.
    """
    phi = np.asarray(phi, dtype=float)
    width = 2.0 * np.sqrt(max(estimate.R, 0.0)) * estimate.inverse_norms(phi)
    if estimate.sigma == 0.0:
        tv = np.where(width > 0.0, 2.0, 0.0)
    else:
        tv = np.minimum(kappa * width / estimate.sigma, 2.0)
    bonus = tv * per_step_cost_bound
    return float(bonus[0]) if phi.ndim == 1 else bonus


def gaussian_chi_square(mu1: npt.ArrayLike, mu2: npt.ArrayLike, sigma: float) -> float:
    """
    exp(||mu1 - mu2||^2 / (2 sigma^2)) - 1.

    Equals the chi-square divergence int (N1 - N2)^2 / N1 between
    N(mu1, 2 sigma^2 I) and N(mu2, 2 sigma^2 I). At variance sigma^2 the
    divergence is exp(||mu1 - mu2||^2 / sigma^2) - 1, which upper-bounds this.
    """
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    diff = np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float)
    return float(np.expm1(diff @ diff / (2.0 * sigma**2)))


def elliptical_potential(
    feature_batches: Sequence[npt.ArrayLike], lam: float
) -> tuple[float, float]:
    """
    Sum over episodes t and stages h of ||phi_{t,h}||^2_{(Lambda^t)^{-1}}, where
    Lambda^t holds episodes before t, and the bound 2 H log(det Lambda^T / det Lambda^0).
    """
    if not feature_batches:
        return 0.0, 0.0
    first = np.atleast_2d(np.asarray(feature_batches[0], dtype=float))
    H, dim = first.shape
    estimate = KnrEstimate.prior(1, dim, lam)
    total = 0.0
    for batch in feature_batches:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        total += float(np.sum(estimate.inverse_norms(batch) ** 2))
        estimate = estimate.updated(batch, np.zeros((batch.shape[0], 1)))
    return total, 2.0 * H * estimate.log_det_ratio()


# HH: Planning grid


@dataclass()
class StateGrid:
    """
    Uniform rectangular grid over [lower, upper] with `nodes_per_axis` nodes per axis.

    Nodes are numbered in C order over the axes. Each node owns the cell of
    points nearest to it; the outer cells extend to infinity.
    """

    max_dims: ClassVar[int] = 3

    lower: npt.NDArray[np.float64]
    upper: npt.NDArray[np.float64]
    nodes_per_axis: int = 41

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ConfigurationError("Grid bounds must satisfy lower < upper per axis")
        if self.dims > self.max_dims:
            raise ConfigurationError(
                f"Grid planning supports at most {self.max_dims} state dims, got {self.dims}"
            )
        if self.nodes_per_axis < 2:
            raise ConfigurationError("A grid needs at least 2 nodes per axis")

        self.axes = [
            np.linspace(lo, hi, self.nodes_per_axis) for lo, hi in zip(self.lower, self.upper)
        ]
        self.step = (self.upper - self.lower) / (self.nodes_per_axis - 1)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def dims(self) -> int:
        return self.lower.shape[0]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @classmethod
    def auto(
        cls,
        initial_state: npt.ArrayLike,
        sigma: float,
        horizon: int,
        nodes_per_axis: int | None = None,
    ) -> "StateGrid":
        """
        Cover the reachable set estimate +-(max(1, |s_1|) + 4 sigma sqrt(H)).

        Defaults to 41 nodes per axis up to 2 dims and 15 in 3 dims.
        """
        s0 = np.asarray(initial_state, dtype=float).ravel()
        if nodes_per_axis is None:
            nodes_per_axis = 41 if s0.shape[0] <= 2 else 15
        extent = max(1.0, float(np.abs(s0).max(initial=0.0))) + 4.0 * sigma * np.sqrt(horizon)
        return cls(np.full(s0.shape, -extent), np.full(s0.shape, extent), nodes_per_axis)

    def nearest(self, states: npt.ArrayLike) -> npt.NDArray[np.int64]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        index = np.floor((states - self.lower) / self.step + 0.5).astype(np.int64)
        index = np.clip(index, 0, self.nodes_per_axis - 1)
        return np.ravel_multi_index(index.T, (self.nodes_per_axis,) * self.dims)

    def _axis_masses(self, means: npt.NDArray, sigma: float, axis: int) -> npt.NDArray:
        n = self.nodes_per_axis
        if sigma == 0.0:
            index = np.clip(
                np.floor((means - self.lower[axis]) / self.step[axis] + 0.5), 0, n - 1
            ).astype(np.int64)
            out = np.zeros((means.shape[0], n))
            out[np.arange(means.shape[0]), index] = 1.0
            return out
        mids = self.axes[axis][:-1] + 0.5 * self.step[axis]
        cdf = norm.cdf((mids[None, :] - means[:, None]) / sigma)
        edges = np.hstack([np.zeros((means.shape[0], 1)), cdf, np.ones((means.shape[0], 1))])
        return np.diff(edges, axis=1)

    def gaussian_kernel(
        self, means: npt.ArrayLike, sigma: float
    ) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """
        Nearest-node quadrature of N(mean, sigma^2 I) for each row of `means`.

        Returns the (M, N) probability matrix and the Gaussian mass falling
        outside the grid box per row.
        """
        means = np.atleast_2d(np.asarray(means, dtype=float))
        probs = np.ones((means.shape[0], 1))
        inside = np.ones(means.shape[0])
        for axis in range(self.dims):
            masses = self._axis_masses(means[:, axis], sigma, axis)
            probs = np.einsum("mi,mj->mij", probs, masses).reshape(means.shape[0], -1)
            if sigma > 0.0:
                inside *= norm.cdf((self.upper[axis] - means[:, axis]) / sigma) - norm.cdf(
                    (self.lower[axis] - means[:, axis]) / sigma
                )
        probs /= probs.sum(axis=1, keepdims=True)
        return probs, 1.0 - inside

    def dynamics_model(
        self,
        W: npt.ArrayLike,
        phi: StateActionFeature,
        sigma: float,
        horizon: int,
        initial_state: npt.ArrayLike,
        name: str = "grid",
    ) -> tuple[FiniteModel, float]:
        """Discretize s' = W phi(s, a) + noise on the grid; returns the model and the worst escaped mass."""
        W = np.asarray(W, dtype=float)
        N, A = self.size, phi.num_actions
        nodes = np.repeat(self.points, A, axis=0)
        actions = np.tile(np.arange(A), N)
        means = phi(nodes, actions) @ W.T
        kernel, escaped = self.gaussian_kernel(means, sigma)
        s0 = int(self.nearest(initial_state)[0])
        model = FiniteModel.stationary(kernel.reshape(N, A, N), horizon, s0, name)
        return model, float(escaped.max(initial=0.0))

    def __str__(self) -> str:
        return f"StateGrid dims={self.dims} nodes/axis={self.nodes_per_axis} box=[{self.lower}, {self.upper}]"


def main() -> None:
    phi = StateActionFeature("random-projection", state_dim=2, num_actions=2, dim=3, seed=1)
    truth = KnrTruth.random(phi, sigma=0.1, horizon=4, seed=0)
    rng = np.random.default_rng(0)

    estimate = KnrEstimate.prior(truth.state_dim, phi.dim, lam=1.0, sigma=truth.sigma)
    s = truth.initial_state
    for t in range(1, 51):
        a = int(rng.integers(truth.num_actions))
        s_next = knr_sample_step(truth, s, a, rng)
        estimate = update_confidence(estimate, phi(s, [a]), s_next[None, :], t + 1, 0.1)
        s = s_next

    print(truth)
    print(estimate)
    print(f"W* inside the ellipsoid: {estimate.contains(truth.W)}")


if __name__ == "__main__":
    main()
