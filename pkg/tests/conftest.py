import numpy as np
import pytest

from cvxmdp.mdp_embedding import FeatureMap, FiniteModel


@pytest.fixture(autouse=True)
def _work_in_tmp(tmp_path, monkeypatch):
    # the file logger writes logs/ relative to the working directory
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_model(rng) -> FiniteModel:
    return FiniteModel.random(3, 2, 3, rng, name="small")


@pytest.fixture
def onehot() -> FeatureMap:
    return FeatureMap.tabular_onehot(3, 2, 3)


def doubly_stochastic(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random doubly-stochastic matrix by Sinkhorn scaling."""
    M = rng.uniform(0.1, 1.0, (size, size))
    for _ in range(500):
        M /= M.sum(axis=1, keepdims=True)
        M /= M.sum(axis=0, keepdims=True)
    return M / M.sum(axis=1, keepdims=True)
