import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field
from typing import ClassVar, Sequence

from cvxmdp.errors import ArgumentError, ConfigurationError
from cvxmdp.log import get_logger
from cvxmdp.mdp_embedding import FiniteModel
from cvxmdp.mdp_policy import StagePolicy

logger = get_logger()


# HH: Model class


@dataclass()
class ModelClass:
    """
    Finite class of candidate transition tensors for a low-rank MDP.

    Candidates built from factor families are numbered theta-major:
    index = i * n_upsilon + j for the pair (phi_i, mu_j).

    Attributes:
        models: Candidate models sharing (H, S, A) and the initial state
        true_index: Index of the environment's model (harness-side only)
        n_theta: Size of the phi family
        n_upsilon: Size of the mu family
    """

    models: list[FiniteModel]
    true_index: int = 0
    n_theta: int = 1
    n_upsilon: int = 0

    def __post_init__(self) -> None:
        if not self.models:
            raise ConfigurationError("A model class needs at least one candidate")
        shape = self.models[0].transitions.shape
        s0 = self.models[0].initial_state
        for k, model in enumerate(self.models):
            if model.transitions.shape != shape or model.initial_state != s0:
                raise ConfigurationError(
                    f"Candidate {k} has shape {model.transitions.shape} / s0 {model.initial_state}, "
                    f"expected {shape} / {s0}"
                )
        if not 0 <= self.true_index < len(self.models):
            raise ConfigurationError(
                f"True index {self.true_index} outside [0, {len(self.models)})"
            )
        if self.n_upsilon == 0:
            self.n_upsilon = len(self.models) // self.n_theta
        if self.n_theta < 1 or self.n_upsilon < 1:
            raise ConfigurationError("Class sizes |Theta| and |Upsilon| must be positive")
        self.stacked = np.stack([m.transitions for m in self.models])

    def __len__(self) -> int:
        return len(self.models)

    @property
    def truth(self) -> FiniteModel:
        return self.models[self.true_index]

    @property
    def horizon(self) -> int:
        return self.stacked.shape[1]

    @property
    def num_states(self) -> int:
        return self.stacked.shape[2]

    @property
    def num_actions(self) -> int:
        return self.stacked.shape[3]

    @classmethod
    def from_factors(
        cls,
        phis: Sequence[npt.ArrayLike],
        mus: Sequence[npt.ArrayLike],
        true_pair: tuple[int, int] = (0, 0),
        initial_state: int = 0,
    ) -> "ModelClass":
        """
        Materialize P_h(s'|s, a) = <phi_h(s, a), mu_h(s')> for every pair.

        Each phi has shape (H, S, A, r) with rows on the simplex; each mu has
        shape (H, S, r) with columns summing to 1 over s'.
        """
        models = []
        for i, phi in enumerate(phis):
            for j, mu in enumerate(mus):
                P = np.einsum("hsar,htr->hsat", np.asarray(phi, float), np.asarray(mu, float))
                models.append(FiniteModel(P, initial_state, f"phi{i}-mu{j}"))
        i, j = true_pair
        return cls(models, i * len(mus) + j, len(phis), len(mus))

    @classmethod
    def random(
        cls,
        num_states: int,
        num_actions: int,
        horizon: int,
        rank: int,
        n_theta: int,
        n_upsilon: int,
        seed: int,
        concentration: float = 1.0,
    ) -> "ModelClass":
        """Dirichlet factor families; the true pair is drawn from the same seed."""
        rng = np.random.default_rng(seed)
        phis = [
            rng.dirichlet(np.full(rank, concentration), size=(horizon, num_states, num_actions))
            for _ in range(n_theta)
        ]
        mus = [
            np.moveaxis(
                rng.dirichlet(np.full(num_states, concentration), size=(horizon, rank)), 2, 1
            )
            for _ in range(n_upsilon)
        ]
        for phi in phis:
            phi /= phi.sum(axis=3, keepdims=True)
        for mu in mus:
            mu /= mu.sum(axis=1, keepdims=True)
        true_pair = (int(rng.integers(n_theta)), int(rng.integers(n_upsilon)))
        return cls.from_factors(phis, mus, true_pair)

    @classmethod
    def perturbed(
        cls,
        base: FiniteModel,
        size: int,
        magnitude: float,
        seed: int,
        true_index: int = 0,
    ) -> "ModelClass":
        """`size` candidates (1 - m) P_base + m P_noise; the candidate at `true_index` is the base."""
        if not 0 <= magnitude <= 1:
            raise ConfigurationError(f"Perturbation magnitude must lie in [0, 1], got {magnitude}")
        rng = np.random.default_rng(seed)
        H, S, A, _ = base.transitions.shape
        models = []
        for k in range(size):
            if k == true_index:
                models.append(FiniteModel(np.array(base.transitions), base.initial_state, "base"))
                continue
            noise = rng.dirichlet(np.ones(S), size=(H, S, A))
            P = (1.0 - magnitude) * base.transitions + magnitude * noise
            P /= P.sum(axis=3, keepdims=True)
            models.append(FiniteModel(P, base.initial_state, f"perturbed{k}"))
        return cls(models, true_index, size, 1)

    def __str__(self) -> str:
        return (
            f"ModelClass |Theta|={self.n_theta} |Upsilon|={self.n_upsilon} "
            f"S={self.num_states} A={self.num_actions} H={self.horizon}"
        )


# HH: Data


@dataclass()
class StageDataset:
    """
    Per-stage (s, a, s') tuples collected with uniformly drawn actions.

    Attributes:
        horizon: Number of stages H
        num_states: S
        num_actions: A
        augmented: True when a_h is drawn uniformly after rolling the policy
    """

    horizon: int
    num_states: int
    num_actions: int
    augmented: bool = True
    _chunks: list[list[npt.NDArray[np.int64]]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self._chunks:
            self._chunks = [[] for _ in range(self.horizon)]
        self._cache: dict[int, npt.NDArray[np.int64]] = {}

    def add(self, h: int, tuples: npt.ArrayLike) -> None:
        """Append an (n, 3) array of (s, a, s') rows to stage h."""
        rows = np.atleast_2d(np.asarray(tuples, dtype=np.int64))
        if rows.shape[1] != 3:
            raise ArgumentError(f"Tuples must have 3 columns (s, a, s'), got {rows.shape}")
        upper = np.array([self.num_states, self.num_actions, self.num_states])
        if np.any(rows < 0) or np.any(rows >= upper):
            raise ArgumentError(f"Tuple indices out of range for S={self.num_states}, A={self.num_actions}")
        self._chunks[h].append(rows)
        self._cache.pop(h, None)

    def extend(self, batch: Sequence[npt.ArrayLike]) -> None:
        for h, rows in enumerate(batch):
            self.add(h, rows)

    def stage(self, h: int) -> npt.NDArray[np.int64]:
        if h not in self._cache:
            chunks = self._chunks[h]
            self._cache[h] = np.vstack(chunks) if chunks else np.empty((0, 3), dtype=np.int64)
        return self._cache[h]

    def size(self, h: int) -> int:
        return self.stage(h).shape[0]

    def __str__(self) -> str:
        sizes = [self.size(h) for h in range(self.horizon)]
        return f"StageDataset H={self.horizon} tuples per stage={sizes}"


def _draw_next(
    kernel: npt.NDArray, states: npt.NDArray, actions: npt.NDArray, rng: np.random.Generator
) -> npt.NDArray[np.int64]:
    cumulative = np.cumsum(kernel[states, actions], axis=1)
    u = rng.random(states.shape[0])
    return np.minimum((cumulative <= u[:, None]).sum(axis=1), kernel.shape[-1] - 1)


def collect_augmented_tuples(
    truth: FiniteModel,
    policy: StagePolicy,
    rng: np.random.Generator,
    episodes: int = 1,
) -> list[npt.NDArray[np.int64]]:
    """
    For each stage h: roll `policy` for h steps, draw a_h uniformly, then
    s_{h+1} ~ P_h(.|s_h, a_h). Returns one (episodes, 3) array per stage.
    """
    H, A = truth.horizon, truth.num_actions
    out = []
    for h in range(H):
        states = np.full(episodes, truth.initial_state, dtype=np.int64)
        for i in range(h):
            actions = policy.sample(i, states, rng)
            states = _draw_next(truth.transitions[i], states, actions, rng)
        actions = rng.integers(A, size=episodes)
        nexts = _draw_next(truth.transitions[h], states, actions, rng)
        out.append(np.stack([states, actions, nexts], axis=1))
    return out


# HH: Estimation


def stage_log_likelihoods(dataset: StageDataset, models: ModelClass, h: int) -> npt.NDArray:
    """sum log P_k(s'|s, a) over stage-h tuples for every candidate k."""
    rows = dataset.stage(h)
    if rows.shape[0] == 0:
        return np.zeros(len(models))
    p = models.stacked[:, h, rows[:, 0], rows[:, 1], rows[:, 2]]
    with np.errstate(divide="ignore"):
        logs = np.where(p > 0.0, np.log(np.maximum(p, 1e-300)), -np.inf)
    return logs.sum(axis=1)


def mle_fit(dataset: StageDataset, models: ModelClass) -> npt.NDArray[np.int64]:
    """Per-stage maximum-likelihood candidate; ties and all -inf go to the lowest index."""
    return np.array(
        [int(np.argmax(stage_log_likelihoods(dataset, models, h))) for h in range(models.horizon)],
        dtype=np.int64,
    )


def l1_sq_empirical(
    dataset: StageDataset, h: int, P1: npt.ArrayLike, P2: npt.ArrayLike
) -> float:
    """Mean over stage-h tuples of ||P1(.|s, a) - P2(.|s, a)||_1^2 for (S, A, S) kernels."""
    rows = dataset.stage(h)
    if rows.shape[0] == 0:
        raise ArgumentError(f"Stage {h} has no data for the empirical distance")
    P1, P2 = np.asarray(P1, dtype=float), np.asarray(P2, dtype=float)
    diff = P1[rows[:, 0], rows[:, 1]] - P2[rows[:, 0], rows[:, 1]]
    return float(np.mean(np.abs(diff).sum(axis=1) ** 2))


def lowrank_radius(
    t: int, T: int, H: int, n_theta: int, n_upsilon: int, delta: float, c: float = 2.0
) -> float:
    """R^t = c log(T H |Upsilon| |Theta| / delta) / t."""
    if t < 1:
        raise ConfigurationError(f"Radius index t must be >= 1, got {t}")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    return float(c * np.log(T * H * n_upsilon * n_theta / delta) / t)


def confidence_members(
    models: ModelClass,
    dataset: StageDataset,
    mle_index: Sequence[int],
    R: float,
) -> list[npt.NDArray[np.int64]]:
    """Per stage, candidates within empirical squared L1 distance R of the MLE."""
    members = []
    for h in range(models.horizon):
        rows = dataset.stage(h)
        if rows.shape[0] == 0:
            members.append(np.arange(len(models)))
            continue
        kernels = models.stacked[:, h, rows[:, 0], rows[:, 1]]
        diff = kernels - kernels[mle_index[h]]
        distances = np.mean(np.abs(diff).sum(axis=2) ** 2, axis=1)
        members.append(np.flatnonzero(distances <= R))
    return members


def covers_truth(models: ModelClass, members: Sequence[npt.NDArray[np.int64]]) -> bool:
    return all(models.true_index in stage for stage in members)


@dataclass()
class MemberSet:
    """
    Low-rank confidence set: per-stage candidate subsets around the MLE.

    Attributes:
        members: Candidate indices per stage
        mle_index: MLE candidate per stage
        R: Radius used for the membership test
    """

    members: list[npt.NDArray[np.int64]]
    mle_index: npt.NDArray[np.int64]
    R: float = np.inf

    default_c: ClassVar[float] = 2.0

    @classmethod
    def full(cls, models: ModelClass) -> "MemberSet":
        """Before any data every candidate is plausible."""
        everything = [np.arange(len(models)) for _ in range(models.horizon)]
        return cls(everything, np.zeros(models.horizon, dtype=np.int64))

    def __str__(self) -> str:
        return f"MemberSet R={self.R:.4g} sizes={[len(m) for m in self.members]}"


def update_members(
    models: ModelClass,
    dataset: StageDataset,
    t: int,
    T: int,
    delta: float,
    c: float = MemberSet.default_c,
) -> MemberSet:
    """MLE per stage then membership at radius R^t."""
    mle = mle_fit(dataset, models)
    R = lowrank_radius(t, T, models.horizon, models.n_theta, models.n_upsilon, delta, c)
    members = MemberSet(confidence_members(models, dataset, mle, R), mle, R)
    logger.debug(f"Low-rank confidence at t={t}: {members}")
    return members


def main() -> None:
    models = ModelClass.random(3, 2, 3, rank=2, n_theta=2, n_upsilon=3, seed=0)
    policy = StagePolicy.uniform(3, 3, 2)
    rng = np.random.default_rng(1)

    dataset = StageDataset(3, 3, 2)
    for t in range(1, 101):
        dataset.extend(collect_augmented_tuples(models.truth, policy, rng))
    confidence = update_members(models, dataset, 100, 100, 0.1)

    print(models)
    print(dataset)
    print(confidence)
    print(f"truth index {models.true_index}, covered: {covers_truth(models, confidence.members)}")


if __name__ == "__main__":
    main()
