import numpy as np
import pytest

from ctcr import factors as fac, lie
from ctcr.errors import BadDimensions, DimensionMismatch, OutOfRange
from ctcr.state import (
    REORTHONORMALIZE_EVERY,
    NodeState,
    StateGrid,
    apply_perturbation,
    flat_index,
    initialize_straight,
    node_of,
)

import oracles as orc


def test_initialize_straight_two_nodes():
    g = initialize_straight(2, 1, 1.0, 0.1)
    T = g.node(1, 0).T
    assert np.allclose(T[:3, :3], np.eye(3))
    assert np.allclose(np.abs(T[:3, 3]), [1, 0, 0])
    assert np.all(g.varpi == 0)


def test_initialize_straight_satisfies_space_prior():
    g = initialize_straight(5, 3, 2.0, 0.05, axis=2)
    for k in range(3):
        for n in range(4):
            e = fac.space_error(g.node(n, k), g.node(n + 1, k), g.s[n + 1] - g.s[n])
            assert np.allclose(e, 0, atol=1e-14)


@pytest.mark.parametrize("args", [(1, 1, 1.0, 0.1), (3, 0, 1.0, 0.1), (3, 1, 0.0, 0.1), (3, 1, 1.0, -1.0)])
def test_initialize_straight_rejects(args):
    with pytest.raises(BadDimensions):
        initialize_straight(*args)


def test_grid_validation():
    with pytest.raises(BadDimensions):
        StateGrid([0, 0], [0], np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 6)), np.zeros((1, 2, 6)))
    with pytest.raises(BadDimensions):
        StateGrid([0, 1], [0], np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 6)), np.zeros((1, 3, 6)))


def test_apply_zero_perturbation():
    g = initialize_straight(4, 3, 1.0, 0.1)
    h = apply_perturbation(g, np.zeros(18 * 12))
    assert np.array_equal(h.T, g.T) and np.array_equal(h.eps, g.eps)


def test_apply_perturbation_pose_update(rng):
    g = initialize_straight(3, 2, 1.0, 0.1)
    d = 0.1 * rng.standard_normal(18 * 6)
    h = apply_perturbation(g, d)
    blocks = d.reshape(2, 3, 18)
    for k in range(2):
        for n in range(3):
            xi = lie.log_rel(g.T[k, n], h.T[k, n])
            assert np.allclose(xi, blocks[k, n, :6], atol=1e-12)
            assert np.allclose(h.eps[k, n] - g.eps[k, n], blocks[k, n, 6:12])
            assert np.allclose(h.varpi[k, n] - g.varpi[k, n], blocks[k, n, 12:])


def test_successive_perturbations_compose(rng):
    g = initialize_straight(2, 1, 1.0, 0.1)
    a, b = 0.2 * rng.standard_normal(36), 0.2 * rng.standard_normal(36)
    h = apply_perturbation(apply_perturbation(g, a), b)
    for n in range(2):
        T = orc.exp6(b[18 * n : 18 * n + 6]) @ orc.exp6(a[18 * n : 18 * n + 6]) @ g.T[0, n]
        assert np.allclose(h.T[0, n], T, atol=1e-12)


def test_apply_perturbation_dimension_mismatch():
    g = initialize_straight(2, 2, 1.0, 0.1)
    with pytest.raises(DimensionMismatch):
        apply_perturbation(g, np.zeros(18))


def test_reorthonormalization_bounds_drift(rng):
    g = initialize_straight(3, 2, 1.0, 0.1)
    for _ in range(3 * REORTHONORMALIZE_EVERY):
        g = apply_perturbation(g, 0.3 * rng.standard_normal(18 * 6), in_place=True)
    assert lie.is_transform(g.T, 1e-9)


def test_flat_index():
    N, K = 4, 3
    assert flat_index(1, 1, N) == 0
    assert flat_index(N, 1, N) + 1 == flat_index(1, 2, N)
    assert flat_index(N, K, N, K) == N * K - 1
    assert flat_index(2, 1, N) + N == flat_index(2, 2, N)
    seen = set()
    for k in range(1, K + 1):
        for n in range(1, N + 1):
            i = flat_index(n, k, N, K)
            assert node_of(i, N, K) == (n, k)
            seen.add(i)
    assert seen == set(range(N * K))
    with pytest.raises(OutOfRange):
        flat_index(0, 1, N)
    with pytest.raises(OutOfRange):
        flat_index(1, K + 1, N, K)
    with pytest.raises(OutOfRange):
        node_of(N * K, N, K)


def test_flat_order_matches_grid(rng):
    g = initialize_straight(3, 2, 1.0, 0.1)
    g.eps = rng.standard_normal(g.eps.shape)
    flat = g.flat()
    for k in range(2):
        for n in range(3):
            assert np.array_equal(flat.eps[flat_index(n + 1, k + 1, 3)], g.eps[k, n])


def test_node_state_perturbed(rng):
    x = NodeState(*orc.random_state(rng))
    d = 0.1 * rng.standard_normal(18)
    y = x.perturbed(d)
    assert np.allclose(y.T, orc.exp6(d[:6]) @ x.T, atol=1e-13)
    assert np.allclose(y.eps, x.eps + d[6:12])
