import numpy as np
import pytest

from numpy.testing import assert_allclose

from cvxmdp.errors import ArgumentError, DomainError
from cvxmdp.mdp_fenchel import (
    PerspectiveTerm,
    make_distance_to_ball_oracle,
    make_distance_to_point_oracle,
    make_linear_oracle,
    make_oracle,
    perspective_subgrads,
    perspective_value,
)


def _oracles(rng, n):
    return [
        make_linear_oracle(rng.normal(size=n), 0.3),
        make_distance_to_point_oracle(rng.normal(size=n)),
        make_distance_to_ball_oracle(rng.normal(size=n), 0.7),
    ]


# HH: Reconstruction


def test_reconstruction_closed_form(rng):
    n = 6
    points = rng.uniform(-2.0, 2.0, size=(1000, n))
    for oracle in _oracles(rng, n):
        for x in points:
            assert abs(oracle.reconstruct(x) - oracle.value(x)) <= 1e-7


def test_reconstruction_by_random_search(rng):
    # along a ray t*u the dual objective is linear in t, so the sup over the
    # unit ball is attained at the origin or on the sphere
    angles = np.linspace(0.0, 2 * np.pi, 100_000, endpoint=False)
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    for oracle in _oracles(rng, 2)[1:]:
        for x in rng.uniform(-2.0, 2.0, size=(20, 2)):
            values = directions @ x - np.array([oracle.conjugate(u) for u in directions])
            best = max(float(values.max()), -oracle.conjugate(np.zeros(2)))
            assert abs(best - oracle.value(x)) <= 1e-3


def test_linear_oracle():
    f = make_linear_oracle([1.0, -2.0])
    assert f.value([3.0, 1.0]) == pytest.approx(1.0)
    assert f.conjugate([1.0, -2.0]) == 0.0
    assert f.conjugate([1.0, -1.9]) == np.inf
    assert f.in_dual_domain([1.0, -2.0])


def test_linear_oracle_offset():
    f = make_linear_oracle([1.0, 0.0], offset=-0.5)
    assert f.value([2.0, 7.0]) == pytest.approx(1.5)
    assert f.conjugate([1.0, 0.0]) == pytest.approx(0.5)
    assert f.reconstruct([2.0, 7.0]) == pytest.approx(1.5)


def test_distance_to_point_example():
    f = make_distance_to_point_oracle([0.0, 0.0])
    x = np.array([3.0, 4.0])
    assert f.value(x) == pytest.approx(5.0)
    assert_allclose(f.conjugate_argmax(x), [0.6, 0.8])
    assert f.conjugate([0.6, 0.8]) == pytest.approx(0.0)
    assert f.conjugate([1.0, 1.0]) == np.inf


def test_distance_to_point_at_target():
    target = np.array([0.5, -0.5])
    f = make_distance_to_point_oracle(target)
    assert f.value(target) == 0.0
    assert f.reconstruct(target) == pytest.approx(0.0)


def test_distance_to_ball_example():
    f = make_distance_to_ball_oracle([0.0, 0.0], 1.0)
    x = np.array([2.0, 0.0])
    assert f.value(x) == pytest.approx(1.0)
    assert_allclose(f.conjugate_argmax(x), [1.0, 0.0])
    assert f.reconstruct(x) == pytest.approx(1.0)
    assert f.value([0.5, 0.0]) == 0.0


def test_ball_of_radius_zero_is_distance_to_point(rng):
    center = rng.normal(size=4)
    ball = make_distance_to_ball_oracle(center, 0.0)
    point = make_distance_to_point_oracle(center)
    for _ in range(50):
        x = rng.normal(size=4)
        alpha = rng.normal(size=4)
        alpha /= max(1.0, np.linalg.norm(alpha))
        assert ball.value(x) == pytest.approx(point.value(x), abs=1e-14)
        assert ball.conjugate(alpha) == pytest.approx(point.conjugate(alpha), abs=1e-14)


def test_negative_radius_is_rejected():
    with pytest.raises(ArgumentError):
        make_distance_to_ball_oracle([0.0], -0.1)


def test_unknown_oracle_kind():
    with pytest.raises(ArgumentError):
        make_oracle("huber", [0.0])


def test_lipschitz_constants_hold_empirically(rng):
    for oracle in _oracles(rng, 5):
        for _ in range(500):
            x, y = rng.normal(size=(2, 5)) * 2
            assert abs(oracle.value(x) - oracle.value(y)) <= (oracle.lipschitz + 1e-6) * np.linalg.norm(x - y)


def test_conjugate_subgrad_attains_the_supremum(rng):
    f = make_distance_to_ball_oracle(rng.normal(size=3), 0.4)
    for _ in range(100):
        alpha = rng.normal(size=3)
        alpha /= 1.5 * np.linalg.norm(alpha)
        x = f.conjugate_subgrad(alpha)
        assert alpha @ x - f.value(x) == pytest.approx(f.conjugate(alpha), abs=1e-12)


# HH: Perspective


def test_perspective_of_ball_is_scaled_norm(rng):
    r = 0.8
    term = PerspectiveTerm(make_distance_to_ball_oracle(np.zeros(3), r))
    for _ in range(100):
        beta = rng.normal(size=3)
        gamma = np.linalg.norm(beta) * rng.uniform(1.0, 3.0)
        assert perspective_value(term, beta, gamma) == pytest.approx(r * np.linalg.norm(beta))


def test_perspective_apex_is_zero():
    term = PerspectiveTerm(make_distance_to_point_oracle(np.ones(2)))
    assert perspective_value(term, np.zeros(2), 0.0) == 0.0


def test_perspective_domain_error():
    term = PerspectiveTerm(make_distance_to_point_oracle(np.zeros(2)))
    with pytest.raises(DomainError):
        perspective_value(term, np.array([2.0, 0.0]), 1.0)
    with pytest.raises(DomainError):
        perspective_value(term, np.zeros(2), -1.0)


def test_perspective_of_linear_oracle():
    c = np.array([1.0, 2.0])
    term = PerspectiveTerm(make_linear_oracle(c, -0.5))
    assert perspective_value(term, 3.0 * c, 3.0) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        perspective_value(term, np.array([3.0, 0.0]), 3.0)


def test_perspective_is_convex_on_segments(rng):
    term = PerspectiveTerm(make_distance_to_ball_oracle(rng.normal(size=3), 0.5))

    def point():
        gamma = rng.uniform(0.1, 2.0)
        beta = rng.normal(size=3)
        beta *= gamma * rng.uniform(0.0, 1.0) / np.linalg.norm(beta)
        return beta, gamma

    for _ in range(200):
        (b1, g1), (b2, g2) = point(), point()
        lam = rng.uniform()
        mid = perspective_value(term, lam * b1 + (1 - lam) * b2, lam * g1 + (1 - lam) * g2)
        ends = lam * perspective_value(term, b1, g1) + (1 - lam) * perspective_value(term, b2, g2)
        assert mid <= ends + 1e-10


def test_perspective_subgradient_inequality(rng):
    term = PerspectiveTerm(make_distance_to_ball_oracle(rng.normal(size=3), 0.5))

    def point():
        gamma = rng.uniform(0.1, 2.0)
        beta = rng.normal(size=3)
        beta *= gamma * rng.uniform(0.0, 1.0) / np.linalg.norm(beta)
        return beta, gamma

    for _ in range(1000):
        (b1, g1), (b2, g2) = point(), point()
        d_beta, d_gamma = perspective_subgrads(term, b1, g1)
        lower = perspective_value(term, b1, g1) + d_beta @ (b2 - b1) + d_gamma * (g2 - g1)
        assert perspective_value(term, b2, g2) >= lower - 1e-9
