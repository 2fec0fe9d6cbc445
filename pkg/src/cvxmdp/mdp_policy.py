import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field
from typing import Callable, ClassVar

from cvxmdp.errors import ConfigurationError


def _identity_index(states: npt.NDArray) -> npt.NDArray[np.int64]:
    return np.asarray(states, dtype=np.int64)


@dataclass()
class StagePolicy:
    """
    Non-stationary policy pi_h: state -> distribution over actions.

    Stages are 0-based (h = 0, ..., H-1). States are looked up through
    `state_index`, which is the identity for finite models and the nearest
    grid node for continuous states.

    Attributes:
        table: Action distributions of shape (H, S, A)
        state_index: Maps an array of states to row indices of `table`
    """

    tolerance: ClassVar[float] = 1e-12

    table: npt.NDArray[np.float64]
    state_index: Callable[[npt.NDArray], npt.NDArray[np.int64]] = field(
        default=_identity_index, repr=False
    )

    def __post_init__(self) -> None:
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 3:
            raise ConfigurationError(
                f"Policy table must have shape (H, S, A), got {self.table.shape}"
            )
        if np.any(self.table < 0):
            raise ConfigurationError("Policy probabilities must be non-negative")
        row_error = np.max(np.abs(self.table.sum(axis=2) - 1.0))
        if row_error > self.tolerance * self.num_actions:
            raise ConfigurationError(
                f"Policy rows must sum to 1 (max deviation {row_error:.3e})"
            )
        self._cumulative = np.cumsum(self.table, axis=2)
        self._cumulative[:, :, -1] = 1.0

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    @property
    def num_states(self) -> int:
        return self.table.shape[1]

    @property
    def num_actions(self) -> int:
        return self.table.shape[2]

    @classmethod
    def deterministic(
        cls,
        actions: npt.ArrayLike,
        num_actions: int,
        state_index: Callable[[npt.NDArray], npt.NDArray[np.int64]] = _identity_index,
    ) -> "StagePolicy":
        """Build a policy from an (H, S) array of action indices."""
        actions = np.asarray(actions, dtype=np.int64)
        table = np.zeros(actions.shape + (num_actions,))
        np.put_along_axis(table, actions[..., None], 1.0, axis=2)
        return cls(table, state_index)

    @classmethod
    def uniform(cls, horizon: int, num_states: int, num_actions: int) -> "StagePolicy":
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def mixture(
        cls, first: "StagePolicy", second: "StagePolicy", weight: float
    ) -> "StagePolicy":
        """
        Per-state mixture w*pi1 + (1-w)*pi2 of two Markov policies.

        This is NOT the episode-level mixture (pick pi_i once per episode);
        the latter has no Markov representation in general and is handled by
        averaging embeddings.
        """
        return cls(weight * first.table + (1.0 - weight) * second.table, first.state_index)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.table == 0.0) | (self.table == 1.0)))

    def greedy_actions(self) -> npt.NDArray[np.int64]:
        """Most likely action per (h, s); ties go to the lowest index."""
        return np.argmax(self.table, axis=2)

    def distribution(self, h: int, states: npt.NDArray) -> npt.NDArray[np.float64]:
        return self.table[h, self.state_index(states)]

    def sample(
        self, h: int, states: npt.NDArray, rng: np.random.Generator
    ) -> npt.NDArray[np.int64]:
        """Draw one action per state by inverse-CDF sampling."""
        rows = self.state_index(states)
        u = rng.random(rows.shape[0])
        cumulative = self._cumulative[h, rows]
        return np.minimum(
            (cumulative <= u[:, None]).sum(axis=1), self.num_actions - 1
        ).astype(np.int64)

    def __str__(self) -> str:
        kind = "deterministic" if self.is_deterministic() else "stochastic"
        return (
            f"StagePolicy ({kind}) H={self.horizon} S={self.num_states} "
            f"A={self.num_actions}"
        )
