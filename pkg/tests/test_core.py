import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import A35_ROWS, X_STAR, exact_solve, random_contractive
from diteration.core import (
    FixedPointProblem,
    OperatorSpec,
    RankOne,
    SparseMatrix,
    as_vector,
    column_abs_sums,
    degrees,
    matvec,
)


def shifted(p, alpha=1.0):
    n = p.n
    return OperatorSpec(p, RankOne(-alpha / n, np.ones(n), np.ones(n)))


class TestSparseMatrix:
    def test_duplicates_summed_and_zeros_dropped(self):
        m = SparseMatrix(3, [0, 0, 1, 2], [0, 0, 1, 2], [1.0, 2.0, 5.0, 0.0])
        assert m.get(0, 0) == 3.0
        assert m.nnz == 2
        assert m.get(2, 2) == 0.0

    def test_cancelling_duplicates_vanish(self):
        m = SparseMatrix(2, [0, 0], [1, 1], [1.5, -1.5])
        assert m.nnz == 0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            SparseMatrix(0, [], [], [])
        with pytest.raises(IndexError):
            SparseMatrix(2, [2], [0], [1.0])
        with pytest.raises(ValueError):
            SparseMatrix(2, [0], [0], [np.nan])

    def test_column_holds_out_links(self):
        # p_ji is the weight of the link i -> j
        m = SparseMatrix(3, [1, 2], [0, 0], [0.25, 0.75])
        rows, vals = m.column(0)
        assert rows.tolist() == [1, 2]
        assert vals.tolist() == [0.25, 0.75]
        assert m.out_degrees.tolist() == [2, 0, 0]
        assert m.in_degrees.tolist() == [0, 1, 1]

    def test_immutable(self):
        m = SparseMatrix.identity(3)
        with pytest.raises(ValueError):
            m.data[0] = 4.0

    def test_dense_round_trip(self, a35):
        assert np.array_equal(a35.to_dense(), np.array(A35_ROWS, dtype=float))
        assert SparseMatrix.from_dense(a35.to_dense()) == a35

    def test_row_and_column_views_agree(self, rng):
        for _ in range(20):
            m = random_contractive(rng, int(rng.integers(1, 30)))
            assert sorted(m.triples()) == sorted(m.row_triples())

    def test_transpose_and_scale(self, a35):
        assert np.array_equal(a35.transpose().to_dense(), a35.to_dense().T)
        assert np.array_equal(a35.scale(0.5).to_dense(), 0.5 * a35.to_dense())


class TestMatvec:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.5])
        assert np.array_equal(matvec(SparseMatrix.identity(3), x), x)

    def test_stationary_vector(self, eigen_p):
        x = np.array([2 / 3, 1 / 3])
        assert np.allclose(matvec(eigen_p, x), x, atol=1e-15)

    def test_golden_system(self, a35):
        assert np.allclose(matvec(a35, X_STAR), np.ones(4), atol=1e-14)

    def test_golden_system_exact(self):
        x = exact_solve(A35_ROWS, [1, 1, 1, 1])
        assert [sum(a * xi for a, xi in zip(row, x)) for row in A35_ROWS] == [1, 1, 1, 1]

    def test_dimension_mismatch(self, a35):
        with pytest.raises(ValueError):
            matvec(a35, np.ones(3))

    def test_rank_one_applied_implicitly(self, eigen_p):
        op = shifted(eigen_p)
        x = np.array([0.3, -1.1])
        assert np.allclose(matvec(op, x), op.to_dense() @ x)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 2**31 - 1), st.booleans())
    def test_basis_vectors_give_columns(self, n, seed, with_rank_one):
        rng = np.random.default_rng(seed)
        m = random_contractive(rng, n)
        op = OperatorSpec(m, RankOne(rng.normal(), rng.normal(size=n), rng.normal(size=n))) if with_rank_one \
            else OperatorSpec(m)
        dense = op.to_dense()
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            assert np.allclose(matvec(op, e), dense[:, i], rtol=0, atol=1e-13)


class TestColumnAbsSums:
    def test_zero_matrix(self):
        assert np.array_equal(column_abs_sums(SparseMatrix.zeros(3)), np.zeros(3))

    def test_shifted_example(self, eigen_p):
        # P - (1/2)J has rows [0, 0.5] and [0, -0.5]
        op = shifted(eigen_p)
        assert np.allclose(op.to_dense(), [[0.0, 0.5], [0.0, -0.5]])
        assert np.allclose(column_abs_sums(op), [0.0, 1.0])

    def test_stochastic(self, eigen_p):
        assert np.allclose(column_abs_sums(eigen_p), [1.0, 1.0])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 2**31 - 1), st.booleans(), st.booleans())
    def test_matches_brute_force(self, n, seed, with_rank_one, weighted):
        rng = np.random.default_rng(seed)
        m = random_contractive(rng, n)
        op = OperatorSpec(m, RankOne(rng.normal(), rng.normal(size=n), rng.normal(size=n))) if with_rank_one \
            else OperatorSpec(m)
        w = rng.uniform(0.5, 2.0, n) if weighted else np.ones(n)
        brute = (w[:, None] * np.abs(op.to_dense())).sum(axis=0)
        assert np.allclose(column_abs_sums(op, w if weighted else None), brute, atol=1e-12)


class TestDegrees:
    def test_diagonal(self):
        in_d, out_d = degrees(SparseMatrix.diagonal_matrix([1.0, 2.0, 3.0]))
        assert in_d.tolist() == [1, 1, 1] and out_d.tolist() == [1, 1, 1]

    def test_eigen_example(self, eigen_p):
        in_d, out_d = degrees(eigen_p)
        assert out_d.tolist() == [2, 1]
        assert in_d.tolist() == [2, 1]

    def test_empty(self):
        in_d, out_d = degrees(SparseMatrix.zeros(4))
        assert in_d.tolist() == [0] * 4 and out_d.tolist() == [0] * 4

    def test_operator_with_rank_one_counts_effective_pattern(self, eigen_p):
        # column 0 of P - (1/2)J is zero, column 1 has two entries
        in_d, out_d = degrees(shifted(eigen_p))
        assert out_d.tolist() == [0, 2]


class TestProblem:
    def test_vectors_validated(self):
        with pytest.raises(ValueError):
            as_vector([1.0, np.inf])
        with pytest.raises(ValueError):
            FixedPointProblem(SparseMatrix.identity(2), [1.0])
        with pytest.raises(ValueError):
            FixedPointProblem(SparseMatrix.identity(2), [1.0, 1.0], recover_scale=[1.0, 0.0])

    def test_recover(self):
        prob = FixedPointProblem(SparseMatrix.zeros(2), [1.0, 1.0], recover_scale=[2.0, 4.0])
        assert prob.recover(np.array([2.0, 2.0])).tolist() == [1.0, 0.5]

    @given(arrays(np.float64, 3, elements=st.floats(-10, 10)))
    def test_with_f0_keeps_metadata(self, f0):
        prob = FixedPointProblem(SparseMatrix.zeros(3), np.ones(3), recover_scale=[1.0, 2.0, 3.0], origin="qprime")
        other = prob.with_f0(f0)
        assert other.origin == "qprime"
        assert np.array_equal(other.recover_scale, prob.recover_scale)
        assert np.array_equal(other.f0, f0)
