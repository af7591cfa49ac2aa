import numpy as np
import pytest
import scipy.io
from hypothesis import given, settings, strategies as st

from conftest import random_contractive
from diteration.core import SparseMatrix
from diteration.mmio import (
    DanglingNodeWarning,
    FormatError,
    read_edge_list,
    read_matrix_market,
    read_vector,
    write_matrix_market,
    write_vector,
)

HEADER = "%%MatrixMarket matrix coordinate real general\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestMatrixMarket:
    def test_one_by_one(self, tmp_path):
        m = read_matrix_market(write(tmp_path, "a.mtx", HEADER + "1 1 1\n1 1 2.0\n"))
        assert m.to_dense().tolist() == [[2.0]]

    def test_golden_round_trip(self, tmp_path, a35):
        path = tmp_path / "a.mtx"
        write_matrix_market(path, a35)
        assert read_matrix_market(path) == a35

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 2**31 - 1))
    def test_round_trip_bit_exact(self, tmp_path_factory, n, seed):
        m = random_contractive(np.random.default_rng(seed), n)
        path = tmp_path_factory.mktemp("mm") / "m.mtx"
        write_matrix_market(path, m)
        back = read_matrix_market(path)
        assert list(back.triples()) == list(m.triples())

    def test_scipy_reads_our_output(self, tmp_path, a35):
        path = tmp_path / "a.mtx"
        write_matrix_market(path, a35)
        assert np.array_equal(scipy.io.mmread(str(path)).toarray(), a35.to_dense())

    def test_reads_scipy_output(self, tmp_path, a35):
        path = tmp_path / "s.mtx"
        scipy.io.mmwrite(str(path), a35.to_scipy())
        assert read_matrix_market(path) == a35

    def test_comments_and_duplicates(self, tmp_path):
        text = HEADER + "% a comment\n\n2 2 3\n1 1 1.5\n1 1 0.5\n2 1 -1\n"
        m = read_matrix_market(write(tmp_path, "a.mtx", text))
        assert m.get(0, 0) == 2.0 and m.get(1, 0) == -1.0

    def test_symmetric_expanded(self, tmp_path):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4\n2 1 -1\n"
        m = read_matrix_market(write(tmp_path, "s.mtx", text))
        assert m.to_dense().tolist() == [[4.0, -1.0], [-1.0, 0.0]]

    def test_skew_symmetric(self, tmp_path):
        text = "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 3\n"
        assert read_matrix_market(write(tmp_path, "s.mtx", text)).to_dense().tolist() == [[0.0, -3.0], [3.0, 0.0]]

    def test_pattern_rejected(self, tmp_path):
        text = "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 2\n"
        with pytest.raises(FormatError, match="real values required"):
            read_matrix_market(write(tmp_path, "p.mtx", text))

    def test_non_square(self, tmp_path):
        with pytest.raises(FormatError, match="not square"):
            read_matrix_market(write(tmp_path, "n.mtx", HEADER + "2 3 1\n1 1 1\n"))

    @pytest.mark.parametrize(
        "body, line",
        [
            ("2 2 1\n1 1\n", 3),
            ("2 2 1\n1 x 1\n", 3),
            ("2 2 1\n3 1 1\n", 3),
            ("two 2 1\n", 2),
        ],
    )
    def test_malformed_lines_report_number(self, tmp_path, body, line):
        with pytest.raises(FormatError) as err:
            read_matrix_market(write(tmp_path, "m.mtx", HEADER + body))
        assert err.value.lineno == line
        assert f":{line}:" in str(err.value)

    def test_bad_header(self, tmp_path):
        with pytest.raises(FormatError):
            read_matrix_market(write(tmp_path, "m.mtx", "%%MatrixMarket tensor\n1 1 1\n1 1 1\n"))
        with pytest.raises(FormatError):
            read_matrix_market(write(tmp_path, "e.mtx", ""))

    def test_entry_count_checked(self, tmp_path):
        with pytest.raises(FormatError, match="declared 2"):
            read_matrix_market(write(tmp_path, "m.mtx", HEADER + "2 2 2\n1 1 1\n"))


class TestVectors:
    def test_round_trip(self, tmp_path):
        v = np.array([0.1, -1 / 3, 1e-300, 2.5e10])
        path = tmp_path / "v.mtx"
        write_vector(path, v)
        assert np.array_equal(read_vector(path), v)

    def test_plain_numbers(self, tmp_path):
        assert read_vector(write(tmp_path, "v.txt", "1\n2.5\n# note\n-3\n")).tolist() == [1.0, 2.5, -3.0]

    def test_array_count(self, tmp_path):
        text = "%%MatrixMarket matrix array real general\n3 1\n1\n2\n"
        with pytest.raises(FormatError):
            read_vector(write(tmp_path, "v.mtx", text))


class TestEdgeList:
    def test_two_cycle(self, tmp_path):
        m = read_edge_list(write(tmp_path, "e.tsv", "0\t1\n1\t0\n"))
        assert m.get(1, 0) == 1.0 and m.get(0, 1) == 1.0

    def test_uniform_split(self, tmp_path):
        m = read_edge_list(write(tmp_path, "e.tsv", "0\t1\n0\t2\n1\t0\n2\t0\n"))
        assert m.get(1, 0) == 0.5 and m.get(2, 0) == 0.5

    def test_dangling_warned(self, tmp_path):
        with pytest.warns(DanglingNodeWarning):
            m = read_edge_list(write(tmp_path, "e.tsv", "0\t1\n"))
        assert m.column(1)[0].size == 0

    def test_given_weights(self, tmp_path):
        m = read_edge_list(write(tmp_path, "e.tsv", "0\t1\t0.3\n1\t0\t0.9\n"), "given")
        assert m.get(1, 0) == 0.3 and m.get(0, 1) == 0.9

    def test_errors(self, tmp_path):
        with pytest.raises(FormatError, match="negative"):
            read_edge_list(write(tmp_path, "a.tsv", "0\t1\t-1\n1\t0\n"))
        with pytest.raises(FormatError) as err:
            read_edge_list(write(tmp_path, "b.tsv", "0\t1\n1\n"))
        assert err.value.lineno == 2
        with pytest.raises(FormatError):
            read_edge_list(write(tmp_path, "c.tsv", "0\t1\n"), "given")
        with pytest.raises(ValueError):
            read_edge_list(write(tmp_path, "d.tsv", "0\t1\n1\t0\n"), "fancy")
