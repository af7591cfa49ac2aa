import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import connected_components

from conftest import random_contractive, random_sdd
from diteration import baselines
from diteration.conditions import (
    SingularDiagonalError,
    fluid_reduction,
    fluid_reduction_rows,
    is_irreducible,
    is_sdd_columns,
    is_sdd_rows,
    normalize_diagonal_sign,
    strongly_connected_components,
    theorem1_c_bound,
    theorem2_check,
    weak_fluid_reduction,
)
from diteration.core import OperatorSpec, RankOne, SparseMatrix
from diteration.transforms import build_eigen_shift, build_pc


def dense(rows):
    return SparseMatrix.from_dense(np.array(rows, dtype=float))


class TestDominance:
    def test_golden_columns(self, a35):
        rep = is_sdd_columns(a35)
        assert rep.satisfied
        assert rep.margins.tolist() == [3.0, 2.0, 1.0, 2.0]
        assert rep.witness is None

    def test_golden_rows_equality_fails(self, a35):
        rep = is_sdd_rows(a35)
        assert not rep.satisfied
        assert rep.witness == 0  # 5 vs 3 + 2
        assert rep.margins[0] == 0.0

    def test_identity(self):
        assert is_sdd_columns(SparseMatrix.identity(3)).margins.tolist() == [1.0] * 3
        assert is_sdd_rows(SparseMatrix.identity(3)).satisfied

    def test_all_ones_fails(self):
        assert not is_sdd_columns(dense([[1, 1], [1, 1]])).satisfied

    def test_off_diagonal_too_large(self):
        assert not is_sdd_rows(dense([[2, 3], [0, 2]])).satisfied

    def test_zero_diagonal_is_not_an_error(self):
        rep = is_sdd_columns(dense([[0, 1], [2, 3]]))
        assert rep.margins[0] == -2.0 and rep.witness == 0


class TestFluidReduction:
    def test_zero_operator(self):
        rep = fluid_reduction(SparseMatrix.zeros(3))
        assert rep.satisfied and rep.margins.tolist() == [1.0] * 3

    def test_damped_stochastic(self, eigen_p):
        rep = fluid_reduction(eigen_p.scale(0.85))
        assert rep.satisfied
        assert np.allclose(rep.margins, 0.15)

    def test_shifted_example_fails_strict(self, eigen_p):
        op = OperatorSpec(eigen_p, RankOne(-0.5, np.ones(2), np.ones(2)))
        rep = fluid_reduction(op)
        assert not rep.satisfied and rep.witness == 1

    def test_shifted_example_is_reducible(self, eigen_p):
        # column 0 of P - (1/2)J vanishes, so node 0 cannot reach node 1
        op = OperatorSpec(eigen_p, RankOne(-0.5, np.ones(2), np.ones(2)))
        rep = weak_fluid_reduction(op)
        assert not rep.satisfied and rep.detail == "reducible pattern"

    def test_rows_variant(self):
        m = dense([[0.5, 0.6], [0.1, 0.1]])
        assert fluid_reduction(m).satisfied
        rep = fluid_reduction_rows(m)
        assert not rep.satisfied and rep.witness == 0
        assert fluid_reduction_rows(dense([[0.5, 0.4], [0.1, 0.1]])).satisfied


class TestWeakFluidReduction:
    def test_boundary_with_cycle(self):
        assert weak_fluid_reduction(dense([[0.4, 0.3], [0.5, 0.7]])).satisfied

    def test_all_equal_to_one(self):
        rep = weak_fluid_reduction(dense([[0.5, 0.5], [0.5, 0.5]]))
        assert not rep.satisfied and rep.detail == "no column sum below 1"

    def test_reducible(self):
        # no link from node 0 to node 1
        assert not weak_fluid_reduction(dense([[0.9, 0.3], [0.0, 0.7]])).satisfied

    def test_column_above_one(self):
        rep = weak_fluid_reduction(dense([[0.9, 0.6], [0.0, 0.7]]))
        assert not rep.satisfied and rep.witness == 1


class TestIrreducible:
    def test_two_cycle(self):
        assert is_irreducible(dense([[0, 1], [1, 0]]))

    def test_upper_triangular(self):
        assert not is_irreducible(dense([[1, 1, 1], [0, 1, 1], [0, 0, 1]]))

    def test_single_node(self):
        assert is_irreducible(dense([[1]]))
        assert is_irreducible(SparseMatrix.zeros(1))

    def test_components_partition_nodes(self):
        comps = strongly_connected_components(dense([[0, 1, 0, 0], [1, 0, 0, 0], [1, 0, 0, 1], [0, 0, 1, 0]]))
        assert sorted(sorted(c) for c in comps) == [[0, 1], [2, 3]]

    def test_long_chain_no_recursion_limit(self):
        n = 20000
        m = SparseMatrix(n, np.r_[np.arange(1, n), 0], np.arange(n), np.ones(n))
        assert is_irreducible(m)

    @settings(max_examples=150, deadline=None)
    @given(st.integers(1, 40), st.floats(0.0, 0.3), st.integers(0, 2**31 - 1))
    def test_component_count_matches_scipy(self, n, density, seed):
        rng = np.random.default_rng(seed)
        pattern = (rng.random((n, n)) < density).astype(float)
        m = SparseMatrix.from_dense(pattern)
        expected, labels = connected_components(m.to_scipy(), directed=True, connection="strong")
        comps = strongly_connected_components(m)
        assert len(comps) == expected
        for comp in comps:
            assert len({labels[v] for v in comp}) == 1


class TestTheorem1:
    def test_golden(self, a35):
        assert theorem1_c_bound(a35) == 0.125

    def test_simple(self):
        assert theorem1_c_bound(SparseMatrix.identity(3)) == 1.0
        assert theorem1_c_bound(SparseMatrix.diagonal_matrix([4.0, 2.0])) == 0.25

    def test_zero_matrix(self):
        with pytest.raises(ValueError):
            theorem1_c_bound(SparseMatrix.zeros(2))

    def test_sdd_failure_breaks_every_c(self, rng):
        hits = 0
        for _ in range(200):
            n = 6
            d = rng.uniform(-1, 1, (n, n))
            np.fill_diagonal(d, 0.0)
            np.fill_diagonal(d, np.abs(d).sum(axis=0) * rng.uniform(0.5, 1.5, n))
            a = SparseMatrix.from_dense(d)
            if is_sdd_columns(a).satisfied:
                continue
            hits += 1
            bound = theorem1_c_bound(a)
            for c in np.linspace(bound / 50, bound, 7):
                assert not fluid_reduction(build_pc(a, np.ones(n), c).operator).satisfied
        assert hits > 20


class TestTheorem2:
    def test_eigen_example(self, eigen_p):
        rep = theorem2_check(eigen_p, 1.0)
        assert rep.margins.tolist() == [1.0, 0.0]  # counts [2, 1] minus N/2
        assert not rep.satisfied
        assert rep.weak

    def test_uniform(self):
        n = 5
        rep = theorem2_check(SparseMatrix.from_dense(np.full((n, n), 1.0 / n)), 1.0)
        assert rep.satisfied and np.all(rep.margins == n - n / 2)

    def test_permutation(self):
        perm = SparseMatrix(4, [1, 2, 3, 0], [0, 1, 2, 3], np.ones(4))
        assert not theorem2_check(perm, 1.0).satisfied

    def test_errors(self, eigen_p):
        with pytest.raises(ValueError):
            theorem2_check(eigen_p, 0.0)
        with pytest.raises(ValueError):
            theorem2_check(eigen_p.scale(0.5), 1.0)

    def test_tolerates_rounding_noise(self):
        p = SparseMatrix.from_dense(np.array([[0.5 + 1e-14, 1.0], [0.5, 0.0]]))
        theorem2_check(p, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 9), st.floats(0.05, 1.0), st.floats(0.1, 5.0), st.integers(0, 2**31 - 1))
    def test_implies_fluid_reduction_of_shift(self, n, alpha, conc, seed):
        rng = np.random.default_rng(seed)
        cols = rng.dirichlet(np.full(n, conc), size=n).T
        p = SparseMatrix.from_dense(cols / cols.sum(axis=0))
        rep = theorem2_check(p, alpha)
        if rep.satisfied:
            assert fluid_reduction(build_eigen_shift(p, alpha).operator).satisfied


class TestNormalizeSign:
    def test_positive_unchanged(self, a35, ones4):
        a, b = normalize_diagonal_sign(a35, ones4)
        assert a == a35 and b.tolist() == [1.0] * 4

    def test_involution(self, a35, ones4):
        d = a35.to_dense()
        d[1] *= -1
        b = ones4.copy()
        b[1] = -1
        a, b2 = normalize_diagonal_sign(SparseMatrix.from_dense(d), b)
        assert a == a35 and b2.tolist() == [1.0] * 4

    def test_zero_diagonal(self):
        with pytest.raises(SingularDiagonalError) as err:
            normalize_diagonal_sign(dense([[0, 1], [1, 1]]), np.ones(2))
        assert err.value.index == 0

    def test_solution_preserved(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 12))
            a = random_sdd(rng, n)
            d = a.to_dense() * rng.choice([-1.0, 1.0], size=(n, 1))
            b = rng.normal(size=n)
            flipped = SparseMatrix.from_dense(d)
            rhs = b * np.sign(np.diag(d)) * np.sign(np.diag(a.to_dense()))
            a2, b2 = normalize_diagonal_sign(flipped, rhs)
            assert np.all(a2.diagonal() > 0)
            assert np.allclose(baselines.dense_solve(a2, b2), baselines.dense_solve(flipped, rhs), atol=1e-10)
