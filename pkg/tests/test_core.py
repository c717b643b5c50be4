"""Core model: interference evaluation, utilities, factor graph."""
import numpy as np
import pytest

from bpcoord.core import (
    InterferenceSystem,
    SchedulingProfile,
    SchedulingSet,
    build_factor_graph,
    compute_interference,
    total_utility,
)
from bpcoord.errors import ConfigurationError, EvaluationError
from bpcoord.utility import CallableUtility


def scalar_system(n, mixing, utilities=None, candidates=None):
    sets = [
        SchedulingSet(np.asarray(candidates[i] if candidates else [[0.0], [1.0]]))
        for i in range(n)
    ]
    if utilities is None:
        utilities = [CallableUtility(lambda x, z: 0.0) for _ in range(n)]
    mix = {k: np.atleast_2d(v) for k, v in mixing.items()}
    return InterferenceSystem(sets, mix, n_z=1, utilities=utilities)


class TestSchedulingSet:
    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            SchedulingSet(np.empty((0, 1)))

    def test_order_is_identity(self):
        s = SchedulingSet(np.array([[3.0], [1.0], [2.0]]))
        assert s.candidates[0, 0] == 3.0
        assert len(s) == 3 and s.n_x == 1

    def test_candidate_cap(self):
        with pytest.raises(ConfigurationError):
            SchedulingSet(np.zeros((5000, 1)))


class TestComputeInterference:
    def test_no_interferers(self):
        sys_ = scalar_system(2, {})
        z = compute_interference(sys_, SchedulingProfile((1, 1)), 0)
        assert z.shape == (1,) and z[0] == 0.0

    def test_two_interferers(self):
        # direct evaluation: 1.0 * 0.5 + 2.0 * 0.5 = 1.5
        sys_ = scalar_system(
            3, {(0, 1): [[1.0]], (0, 2): [[2.0]]},
            candidates=[[[0.0], [0.5]]] * 3,
        )
        z = compute_interference(sys_, SchedulingProfile((1, 1, 1)), 0)
        assert z[0] == pytest.approx(1.5, rel=1e-12)

    def test_diagonal_subband_mixing(self):
        gains = np.array([0.5, 1.5, 2.5, 3.5])
        mask = np.array([1.0, 0.0, 1.0, 0.0])
        sets = [SchedulingSet(np.vstack([np.zeros(4), mask])) for _ in range(2)]
        sys_ = InterferenceSystem(
            sets, {(0, 1): np.diag(gains)}, n_z=4,
            utilities=[CallableUtility(lambda x, z: 0.0)] * 2,
        )
        z = compute_interference(sys_, SchedulingProfile((0, 1)), 0)
        np.testing.assert_allclose(z, gains * mask, rtol=1e-12)

    def test_self_term_excluded(self):
        with pytest.raises(ConfigurationError):
            scalar_system(2, {(0, 0): [[1.0]]})

    def test_self_exclusion_property(self):
        rng = np.random.default_rng(0)
        sys_ = scalar_system(
            3, {(0, 1): [[rng.uniform()]], (0, 2): [[rng.uniform()]],
                (1, 0): [[rng.uniform()]]},
        )
        base = compute_interference(sys_, SchedulingProfile((0, 1, 1)), 0)
        flipped = compute_interference(sys_, SchedulingProfile((1, 1, 1)), 0)
        assert base[0] == flipped[0]

    def test_linearity(self):
        rng = np.random.default_rng(7)
        n, n_x, n_z = 3, 2, 3
        x = [rng.normal(size=n_x) for _ in range(n)]
        y = [rng.normal(size=n_x) for _ in range(n)]
        alpha, beta = rng.normal(), rng.normal()
        combo = [alpha * xi + beta * yi for xi, yi in zip(x, y)]
        sets = [SchedulingSet(np.vstack([xi, yi, ci]))
                for xi, yi, ci in zip(x, y, combo)]
        mixing = {(i, j): rng.normal(size=(n_z, n_x))
                  for i in range(n) for j in range(n) if i != j}
        sys_ = InterferenceSystem(
            sets, mixing, n_z=n_z,
            utilities=[CallableUtility(lambda x, z: 0.0)] * n,
        )
        zx = compute_interference(sys_, SchedulingProfile((0,) * n), 0)
        zy = compute_interference(sys_, SchedulingProfile((1,) * n), 0)
        zc = compute_interference(sys_, SchedulingProfile((2,) * n), 0)
        np.testing.assert_allclose(zc, alpha * zx + beta * zy, rtol=1e-12, atol=1e-14)


class TestTotalUtility:
    def test_zero_utilities(self):
        sys_ = scalar_system(3, {(0, 1): [[1.0]]})
        assert total_utility(sys_, SchedulingProfile((0, 0, 0))) == 0.0

    def test_single_link_identity(self):
        sys_ = scalar_system(
            1, {}, utilities=[CallableUtility(lambda x, z: float(x[0]))],
            candidates=[[[0.0], [3.0]]],
        )
        assert total_utility(sys_, SchedulingProfile((1,))) == 3.0

    def test_two_link_rate_oracle(self):
        # hand-computed log(1 + SINR) rates for an on-off pair
        g = [2.0, 3.0]
        a = {(0, 1): 0.5, (1, 0): 0.25}
        noise = 0.1

        def make(i):
            return CallableUtility(
                lambda x, z, i=i: np.log1p(g[i] * x[0] / (z[0] + noise)))

        sys_ = scalar_system(2, {k: [[v]] for k, v in a.items()},
                             utilities=[make(0), make(1)])
        val = total_utility(sys_, SchedulingProfile((1, 1)))
        expected = np.log1p(2.0 / (0.5 + 0.1)) + np.log1p(3.0 / (0.25 + 0.1))
        assert val == pytest.approx(expected, rel=1e-12)

    def test_naive_double_loop_oracle(self):
        rng = np.random.default_rng(3)
        n, n_x, n_z, m = 4, 2, 2, 3
        sets = [SchedulingSet(rng.normal(size=(m, n_x))) for _ in range(n)]
        mixing = {(i, j): rng.normal(size=(n_z, n_x))
                  for i in range(n) for j in range(n)
                  if i != j and rng.random() < 0.7}
        tables = rng.normal(size=(n, 3))

        def make(i):
            return CallableUtility(
                lambda x, z, i=i: tables[i, 0] * x.sum()
                + tables[i, 1] * z.sum() + tables[i, 2] * (z**2).sum())

        sys_ = InterferenceSystem(sets, mixing, n_z=n_z,
                                  utilities=[make(i) for i in range(n)])
        for _ in range(10):
            prof = SchedulingProfile(tuple(rng.integers(0, m, size=n)))
            # independent naive evaluation
            expected = 0.0
            for i in range(n):
                z = np.zeros(n_z)
                for j in range(n):
                    if i != j and (i, j) in mixing:
                        z = z + mixing[(i, j)] @ sets[j].candidates[prof.indices[j]]
                expected += sys_.utilities[i].value(
                    sets[i].candidates[prof.indices[i]], z)
            assert total_utility(sys_, prof) == pytest.approx(expected, rel=1e-12)

    def test_nonfinite_utility_flagged(self):
        sys_ = scalar_system(
            2, {}, utilities=[CallableUtility(lambda x, z: 0.0),
                              CallableUtility(lambda x, z: float("nan"))],
        )
        with pytest.raises(EvaluationError) as err:
            total_utility(sys_, SchedulingProfile((0, 0)))
        assert err.value.link == 1


class TestFactorGraph:
    def test_diagonal_only(self):
        sys_ = scalar_system(3, {})
        g = build_factor_graph(sys_)
        assert g.edges == frozenset({(0, 0), (1, 1), (2, 2)})

    def test_dense(self):
        n = 4
        mixing = {(i, j): [[1.0]] for i in range(n) for j in range(n) if i != j}
        g = build_factor_graph(scalar_system(n, mixing))
        assert all(len(g.rx_neighbors[i]) == n for i in range(n))

    def test_one_absent_pair(self):
        n = 3
        mixing = {(i, j): [[1.0]] for i in range(n) for j in range(n)
                  if i != j and (i, j) != (0, 1)}
        g = build_factor_graph(scalar_system(n, mixing))
        assert (0, 1) not in g.edges
        expected = {(i, j) for i in range(n) for j in range(n)} - {(0, 1)}
        assert g.edges == frozenset(expected)

    def test_explicit_zero_matrix_omitted(self):
        g = build_factor_graph(scalar_system(2, {(0, 1): [[0.0]]}))
        assert (0, 1) not in g.edges

    def test_neighbor_edge_consistency(self):
        rng = np.random.default_rng(11)
        n = 5
        mixing = {(i, j): [[rng.uniform()]] for i in range(n) for j in range(n)
                  if i != j and rng.random() < 0.5}
        g = build_factor_graph(scalar_system(n, mixing))
        for (i, j) in g.edges:
            assert j in g.rx_neighbors[i]
            assert i in g.tx_neighbors[j]
        for i in range(n):
            assert (i, i) in g.edges
