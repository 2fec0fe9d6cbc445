import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, ClassVar, Protocol

from cvxmdp.errors import ArgumentError, ConfigurationError
from cvxmdp.mdp_policy import StagePolicy

# (h, states, actions) -> array of shape (n, d)
Evaluator = Callable[[int, npt.NDArray, npt.NDArray], npt.NDArray[np.float64]]


# HH: Feature map


@dataclass()
class FeatureMap:
    """
    Per-stage kernel feature map psi_h(s, a) in R^d with ||psi_h(s, a)||_2 <= B.

    The evaluator is vectorized: it receives a stage index, an array of n
    states and an array of n actions and returns an (n, d) array.

    Attributes:
        dim: Feature dimension d
        horizon: Number of stages H
        bound: Norm bound B
        evaluator: Vectorized feature evaluator
        name: Label used in reports
    """

    slack: ClassVar[float] = 1e-9

    dim: int
    horizon: int
    bound: float
    evaluator: Evaluator = field(repr=False)
    name: str = "features"

    def __post_init__(self) -> None:
        if self.dim < 1 or self.horizon < 1:
            raise ConfigurationError(
                f"Feature map needs d >= 1 and H >= 1, got d={self.dim}, H={self.horizon}"
            )
        if not self.bound > 0:
            raise ConfigurationError(f"Feature bound must be positive, got {self.bound}")
        self._tables: dict[tuple, npt.NDArray[np.float64]] = {}

    def evaluate(
        self, h: int, states: npt.NDArray, actions: npt.NDArray
    ) -> npt.NDArray[np.float64]:
        values = np.asarray(self.evaluator(h, states, actions), dtype=float)
        if values.ndim != 2 or values.shape[1] != self.dim:
            raise ConfigurationError(
                f"Feature evaluator returned shape {values.shape}, expected (n, {self.dim})"
            )
        norms = np.linalg.norm(values, axis=1)
        if norms.size and norms.max() > self.bound * (1 + self.slack) + self.slack:
            raise ArgumentError(
                f"Feature norm {norms.max():.6g} exceeds the bound B={self.bound}"
            )
        return values

    def table(self, states: npt.NDArray, num_actions: int) -> npt.NDArray[np.float64]:
        """Features of every (h, state, action) as an (H, N, A, d) array."""
        states = np.asarray(states)
        key = (states.shape, states.dtype.str, states.tobytes(), num_actions)
        cached = self._tables.get(key)
        if cached is not None:
            return cached

        n = states.shape[0]
        out = np.empty((self.horizon, n, num_actions, self.dim))
        for h in range(self.horizon):
            for a in range(num_actions):
                out[h, :, a] = self.evaluate(h, states, np.full(n, a, dtype=np.int64))
        out.setflags(write=False)
        self._tables[key] = out
        return out

    @classmethod
    def from_table(cls, table: npt.ArrayLike, name: str = "tabular") -> "FeatureMap":
        """Features given explicitly for finite states as an (H, S, A, d) array."""
        values = np.array(table, dtype=float)
        if values.ndim != 4:
            raise ConfigurationError(
                f"Feature table must have shape (H, S, A, d), got {values.shape}"
            )
        values.setflags(write=False)
        bound = max(float(np.linalg.norm(values, axis=3).max()), 1e-12)

        def evaluator(h, states, actions):
            return values[h, np.asarray(states, dtype=np.int64), actions]

        return cls(values.shape[3], values.shape[0], bound, evaluator, name)

    @classmethod
    def tabular_onehot(cls, num_states: int, num_actions: int, horizon: int) -> "FeatureMap":
        """Canonical embedding psi(s, a) = e_{s*A + a}; Psi is the occupancy table."""
        d = num_states * num_actions

        def evaluator(h, states, actions):
            index = np.asarray(states, dtype=np.int64) * num_actions + actions
            out = np.zeros((index.shape[0], d))
            out[np.arange(index.shape[0]), index] = 1.0
            return out

        return cls(d, horizon, 1.0, evaluator, "tabular-onehot")

    @classmethod
    def constant(cls, vector: npt.ArrayLike, horizon: int) -> "FeatureMap":
        v = np.asarray(vector, dtype=float)
        bound = max(float(np.linalg.norm(v)), 1e-12)

        def evaluator(h, states, actions):
            return np.broadcast_to(v, (np.asarray(actions).shape[0], v.shape[0]))

        return cls(v.shape[0], horizon, bound, evaluator, "constant")

    def __str__(self) -> str:
        return f"FeatureMap ({self.name}) d={self.dim} H={self.horizon} B={self.bound:.4g}"


# HH: Occupancy and embedding


@dataclass()
class OccupancyMeasure:
    """
    Per-stage state-action occupancy d_h(s, a) of a policy on a finite model.

    Attributes:
        table: Occupancy probabilities of shape (H, S, A)
    """

    tolerance: ClassVar[float] = 1e-12

    table: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 3:
            raise ConfigurationError(f"Occupancy must be (H, S, A), got {self.table.shape}")
        if np.any(self.table < 0):
            raise ConfigurationError("Occupancy entries must be non-negative")
        mass_error = np.max(np.abs(self.table.sum(axis=(1, 2)) - 1.0))
        if mass_error > self.tolerance * self.table[0].size:
            raise ConfigurationError(f"Occupancy stage mass deviates from 1 by {mass_error:.3e}")

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def state_marginals(self) -> npt.NDArray[np.float64]:
        """sum_a d_h(s, a) with shape (H, S)."""
        return self.table.sum(axis=2)


@dataclass()
class KernelEmbedding:
    """
    Kernel embedding Psi = (Psi_1; ...; Psi_H), stored flat with H blocks of d.

    Attributes:
        vector: Flat vector of length H*d
        horizon: Number of blocks H
        dim: Block length d
    """

    vector: npt.NDArray[np.float64]
    horizon: int
    dim: int

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=float).ravel()
        if self.vector.shape[0] != self.horizon * self.dim:
            raise ConfigurationError(
                f"Embedding length {self.vector.shape[0]} != H*d = {self.horizon * self.dim}"
            )

    @property
    def blocks(self) -> npt.NDArray[np.float64]:
        return self.vector.reshape(self.horizon, self.dim)

    def block(self, h: int) -> npt.NDArray[np.float64]:
        return self.blocks[h]

    def dot(self, theta: npt.ArrayLike) -> float:
        return float(np.dot(self.vector, np.asarray(theta, dtype=float).ravel()))

    def max_block_norm(self) -> float:
        return float(np.linalg.norm(self.blocks, axis=1).max())

    @classmethod
    def average(
        cls, embeddings: list["KernelEmbedding"], weights: npt.ArrayLike | None = None
    ) -> "KernelEmbedding":
        """Weighted average; the embedding of the episode-level mixed policy."""
        if not embeddings:
            raise ArgumentError("Cannot average an empty list of embeddings")
        stacked = np.stack([e.vector for e in embeddings])
        w = (
            np.full(len(embeddings), 1.0 / len(embeddings))
            if weights is None
            else np.asarray(weights, dtype=float)
        )
        first = embeddings[0]
        return cls(w @ stacked, first.horizon, first.dim)

    def __str__(self) -> str:
        norms = ", ".join(f"{n:.3f}" for n in np.linalg.norm(self.blocks, axis=1))
        return f"KernelEmbedding H={self.horizon} d={self.dim} block norms [{norms}]"


# HH: Finite model


@dataclass()
class FiniteModel:
    """
    Finite-horizon tabular transition model.

    Attributes:
        transitions: P_h(s'|s, a) with shape (H, S, A, S)
        initial_state: Index of the fixed initial state
        name: Label used in reports
    """

    max_entries: ClassVar[int] = 10**6
    tolerance: ClassVar[float] = 1e-12

    transitions: npt.NDArray[np.float64]
    initial_state: int = 0
    name: str = "model"

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        P = self.transitions
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ConfigurationError(f"Transitions must be (H, S, A, S), got {P.shape}")
        if P.shape[0] * P.shape[1] * P.shape[2] > self.max_entries:
            raise ConfigurationError(
                f"Instance too large: S*A*H = {P.shape[0] * P.shape[1] * P.shape[2]} "
                f"exceeds {self.max_entries}"
            )
        if not 0 <= self.initial_state < P.shape[1]:
            raise ConfigurationError(
                f"Initial state {self.initial_state} outside [0, {P.shape[1]})"
            )
        if np.any(P < 0):
            raise ConfigurationError("Transition probabilities must be non-negative")
        row_error = np.max(np.abs(P.sum(axis=3) - 1.0))
        if row_error > self.tolerance * P.shape[3]:
            raise ConfigurationError(f"Transition rows deviate from 1 by {row_error:.3e}")

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @classmethod
    def stationary(
        cls, kernel: npt.ArrayLike, horizon: int, initial_state: int = 0, name: str = "model"
    ) -> "FiniteModel":
        """Time-homogeneous model; the (S, A, S) kernel is shared, not copied."""
        kernel = np.asarray(kernel, dtype=float)
        return cls(np.broadcast_to(kernel, (horizon,) + kernel.shape), initial_state, name)

    @classmethod
    def random(
        cls,
        num_states: int,
        num_actions: int,
        horizon: int,
        rng: np.random.Generator,
        concentration: float = 1.0,
        name: str = "random",
    ) -> "FiniteModel":
        P = rng.dirichlet(
            np.full(num_states, concentration), size=(horizon, num_states, num_actions)
        )
        P /= P.sum(axis=3, keepdims=True)
        return cls(P, 0, name)

    @classmethod
    def from_text(cls, text: str, name: str = "model") -> "FiniteModel":
        """
        Parse the text format: a header line `S A H`, then H row-major
        (S*A) x S stochastic matrices (rows ordered by s, then a), then the
        initial state index. Lines starting with `#` are ignored.
        """
        tokens = [
            tok
            for line in text.splitlines()
            if not line.lstrip().startswith("#")
            for tok in line.split()
        ]
        try:
            S, A, H = (int(tok) for tok in tokens[:3])
        except ValueError as e:
            raise ConfigurationError(f"Bad model header: {tokens[:3]}") from e

        expected = 3 + H * S * A * S + 1
        if len(tokens) != expected:
            raise ConfigurationError(
                f"Model text has {len(tokens)} tokens, expected {expected} for S={S} A={A} H={H}"
            )
        try:
            values = np.array([float(tok) for tok in tokens[3:-1]])
            s0 = int(tokens[-1])
        except ValueError as e:
            raise ConfigurationError(f"Non-numeric entry in model text: {e}") from e
        return cls(values.reshape(H, S, A, S), s0, name)

    @classmethod
    def load(cls, path: str | Path) -> "FiniteModel":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), path.stem)

    def to_text(self) -> str:
        H, S, A, _ = self.transitions.shape
        lines = [f"{S} {A} {H}"]
        for h in range(H):
            lines.append(f"# stage {h}")
            for s in range(S):
                for a in range(A):
                    lines.append(" ".join(format(p, ".17g") for p in self.transitions[h, s, a]))
        lines.append(str(self.initial_state))
        return "\n".join(lines) + "\n"

    def sampler(self, features: FeatureMap) -> "FiniteSampler":
        return FiniteSampler(self, features)

    def __str__(self) -> str:
        return (
            f"FiniteModel ({self.name}) S={self.num_states} A={self.num_actions} "
            f"H={self.horizon} s0={self.initial_state}"
        )


# HH: Samplers


class TransitionSampler(Protocol):
    """Anything that can roll trajectories: finite models, KNR dynamics."""

    features: FeatureMap

    @property
    def horizon(self) -> int: ...

    def initial_states(self, n: int) -> npt.NDArray: ...

    def sample_next(
        self, h: int, states: npt.NDArray, actions: npt.NDArray, rng: np.random.Generator
    ) -> npt.NDArray: ...


@dataclass()
class FiniteSampler:
    model: FiniteModel
    features: FeatureMap

    def __post_init__(self) -> None:
        cumulative = np.cumsum(self.model.transitions, axis=3)
        cumulative[..., -1] = 1.0
        self._cumulative = cumulative

    @property
    def horizon(self) -> int:
        return self.model.horizon

    def initial_states(self, n: int) -> npt.NDArray[np.int64]:
        return np.full(n, self.model.initial_state, dtype=np.int64)

    def sample_next(self, h, states, actions, rng) -> npt.NDArray[np.int64]:
        u = rng.random(states.shape[0])
        cumulative = self._cumulative[h, states, actions]
        return np.minimum(
            (cumulative <= u[:, None]).sum(axis=1), self.model.num_states - 1
        ).astype(np.int64)


def stage_stream(seed: int, block: int, stage: int) -> np.random.Generator:
    """
    Counter-based stream for one (seed, block, stage) triple.

    Streams are addressed by position, so any block of episodes can be
    regenerated on its own regardless of the order blocks are evaluated in.
    """
    if seed < 0 or block < 0 or stage < 0:
        raise ArgumentError(f"Stream coordinates must be non-negative: {(seed, block, stage)}")
    counter = np.array([0, 0, block, stage], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


@dataclass()
class Trajectories:
    """
    Batch of n rolled-out trajectories.

    Attributes:
        states: Per-stage state arrays (length H + 1, the last is s_{H+1})
        actions: Actions with shape (H, n)
        features: psi_h(s_h, a_h) with shape (H, n, d)
    """

    states: list[npt.NDArray]
    actions: npt.NDArray[np.int64]
    features: npt.NDArray[np.float64]

    @property
    def size(self) -> int:
        return self.actions.shape[1]


def rollout(
    sampler: TransitionSampler,
    policy: StagePolicy,
    n: int,
    rng_seed: int,
    block: int = 0,
) -> Trajectories:
    """Roll n trajectories; stage h draws from stage_stream(rng_seed, block, h)."""
    H = sampler.horizon
    if policy.horizon != H:
        raise ConfigurationError(f"Policy horizon {policy.horizon} != sampler horizon {H}")

    states = [sampler.initial_states(n)]
    actions = np.empty((H, n), dtype=np.int64)
    features = np.empty((H, n, sampler.features.dim))
    for h in range(H):
        rng = stage_stream(rng_seed, block, h)
        actions[h] = policy.sample(h, states[h], rng)
        features[h] = sampler.features.evaluate(h, states[h], actions[h])
        states.append(sampler.sample_next(h, states[h], actions[h], rng))
    return Trajectories(states, actions, features)


# HH: Operations


def compute_occupancy(policy: StagePolicy, model: FiniteModel) -> OccupancyMeasure:
    """Forward dynamic programming for d_h(s, a) = P_pi[(s_h, a_h) = (s, a)]."""
    H, S, A = model.horizon, model.num_states, model.num_actions
    if policy.table.shape != (H, S, A):
        raise ConfigurationError(
            f"Policy shape {policy.table.shape} does not match model (H, S, A) = {(H, S, A)}"
        )

    table = np.empty((H, S, A))
    state_dist = np.zeros(S)
    state_dist[model.initial_state] = 1.0
    for h in range(H):
        table[h] = state_dist[:, None] * policy.table[h]
        if h < H - 1:
            state_dist = np.einsum("sa,sat->t", table[h], model.transitions[h])
    return OccupancyMeasure(table)


def kernel_embedding(occ: OccupancyMeasure, features: FeatureMap) -> KernelEmbedding:
    """Psi_h = sum_{s,a} d_h(s, a) psi_h(s, a)."""
    H, S, A = occ.table.shape
    if features.horizon != H:
        raise ConfigurationError(f"Feature horizon {features.horizon} != occupancy horizon {H}")
    feats = features.table(np.arange(S), A)
    return KernelEmbedding(np.einsum("hsa,hsad->hd", occ.table, feats), H, features.dim)


def policy_embedding(
    policy: StagePolicy, model: FiniteModel, features: FeatureMap
) -> KernelEmbedding:
    return kernel_embedding(compute_occupancy(policy, model), features)


def monte_carlo_embedding(
    sampler: TransitionSampler,
    policy: StagePolicy,
    n: int,
    rng_seed: int,
    block_size: int = 4096,
) -> KernelEmbedding:
    """
    Sample mean of psi_h(s_h, a_h) over n trajectories.

    Trajectories are generated in blocks of `block_size`; block b at stage h
    uses stage_stream(rng_seed, b, h), so shards can run anywhere.
    """
    if n < 1:
        raise ArgumentError(f"Monte Carlo embedding needs n >= 1, got {n}")

    H, d = sampler.horizon, sampler.features.dim
    total = np.zeros((H, d))
    for block, start in enumerate(range(0, n, block_size)):
        batch = rollout(sampler, policy, min(block_size, n - start), rng_seed, block)
        total += batch.features.sum(axis=1)
    return KernelEmbedding(total / n, H, d)


def main() -> None:
    rng = np.random.default_rng(0)
    model = FiniteModel.random(2, 2, 3, rng)
    features = FeatureMap.tabular_onehot(2, 2, 3)
    policy = StagePolicy.uniform(3, 2, 2)

    exact = policy_embedding(policy, model, features)
    estimate = monte_carlo_embedding(model.sampler(features), policy, 10_000, 7)

    print(model)
    print(exact)
    print(f"max |MC - DP| = {np.abs(exact.vector - estimate.vector).max():.4f}")


if __name__ == "__main__":
    main()
