import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qcqpd import (
    CommStats,
    dist_matvec,
    dist_quadform,
    dist_transpose_matvec,
    partition_columns,
)
from qcqpd.dist import dist_dot


class TestPartition:
    def test_one_column_each(self):
        assert partition_columns(3, 3).ranges == ((0, 1), (1, 2), (2, 3))

    def test_balanced_split(self):
        assert partition_columns(5, 2).ranges == ((0, 3), (3, 5))

    def test_more_workers_than_columns(self):
        part = partition_columns(2, 4)
        sizes = [hi - lo for lo, hi in part.ranges]
        assert sizes == [1, 1, 0, 0]

    @given(n=st.integers(0, 500), w=st.integers(1, 64))
    @settings(max_examples=200, deadline=None)
    def test_partition_properties(self, n, w):
        part = partition_columns(n, w)
        sizes = [hi - lo for lo, hi in part.ranges]
        assert sum(sizes) == n
        assert part.ranges == partition_columns(n, w).ranges
        assert max(sizes) - min(sizes) <= 1
        if w > n:
            assert min(sizes) == 0
        pos = 0
        for lo, hi in part.ranges:
            assert lo == pos
            pos = hi

    def test_zero_workers_rejected(self):
        with pytest.raises(ValueError):
            partition_columns(4, 0)


class TestMatvec:
    def test_toy(self):
        M = np.asfortranarray([[1.0, 2.0], [3.0, 4.0]])
        out = dist_matvec(M, np.array([1.0, 1.0]), partition_columns(2, 2))
        np.testing.assert_array_equal(out, [3.0, 7.0])

    def test_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(7)
        out = dist_matvec(np.eye(7), x, partition_columns(7, 3))
        np.testing.assert_allclose(out, x, rtol=1e-15)

    @pytest.mark.parametrize("workers", [1, 2, 3, 8])
    def test_matches_single_worker(self, workers):
        rng = np.random.default_rng(1)
        M = np.asfortranarray(rng.standard_normal((64, 64)))
        x = rng.standard_normal(64)
        serial = dist_matvec(M, x, partition_columns(64, 1))
        out = dist_matvec(M, x, partition_columns(64, workers))
        np.testing.assert_allclose(out, serial, rtol=1e-12)

    @pytest.mark.parametrize("n1", [64, 257, 1000])
    @pytest.mark.parametrize("sparse", [False, True])
    def test_parallel_serial_equivalence(self, n1, sparse):
        rng = np.random.default_rng(n1)
        if sparse:
            M = sp.random(n1, n1, density=0.05, random_state=np.random.RandomState(3), format="csc")
        else:
            M = np.asfortranarray(rng.standard_normal((n1, n1)))
        x = rng.standard_normal(n1)
        serial = dist_matvec(M, x, partition_columns(n1, 1))
        for w in (2, 7, 32, n1):
            out = dist_matvec(M, x, partition_columns(n1, w))
            np.testing.assert_allclose(out, serial, rtol=1e-12, atol=1e-14)

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(2)
        M = np.asfortranarray(rng.standard_normal((33, 33)))
        x = rng.standard_normal(33)
        part = partition_columns(33, 5)
        a = dist_matvec(M, x, part)
        b = dist_matvec(M, x, part)
        assert np.array_equal(a, b)

    def test_comm_accounting(self):
        stats = CommStats()
        M = np.asfortranarray(np.eye(6))
        dist_matvec(M, np.ones(6), partition_columns(6, 3), stats)
        assert stats.reduce_ops == 1
        assert stats.scatter_ops == 1
        assert stats.bytes_reduced == 6 * 8
        assert stats.bytes_scattered == 6 * 8
        dist_matvec(M, np.ones(6), partition_columns(6, 3), stats, scatter=False)
        assert stats.reduce_ops == 2
        assert stats.scatter_ops == 1

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dist_matvec(np.eye(3), np.ones(4), partition_columns(3, 1))
        with pytest.raises(ValueError):
            dist_matvec(np.eye(3), np.ones(3), partition_columns(4, 2))


class TestQuadform:
    def test_toy(self):
        M = np.asfortranarray([[1.0, 2.0], [3.0, 4.0]])
        assert dist_quadform(M, np.array([1.0, 1.0]), partition_columns(2, 2)) == pytest.approx(10.0)

    def test_zero_vector(self):
        assert dist_quadform(np.eye(4), np.zeros(4), partition_columns(4, 2)) == 0.0

    def test_psd_nonnegative_and_matches_serial(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((40, 40))
        M = np.asfortranarray(M.T @ M)
        x = rng.standard_normal(40)
        expected = float(x @ (M @ x))
        for w in (1, 4, 9):
            val = dist_quadform(M, x, partition_columns(40, w))
            assert val >= 0.0
            assert val == pytest.approx(expected, rel=1e-12)

    def test_reuses_matvec_one_scalar_reduce(self):
        stats = CommStats()
        part = partition_columns(5, 2)
        M = np.asfortranarray(np.eye(5))
        x = np.arange(5.0)
        Mx = dist_matvec(M, x, part, stats)
        before = stats.as_dict()
        val = dist_quadform(M, x, part, stats, Mx=Mx)
        assert val == pytest.approx(float(x @ x))
        after = stats.as_dict()
        assert after["reduce_ops"] == before["reduce_ops"] + 1
        assert after["bytes_reduced"] == before["bytes_reduced"] + 8
        assert after["scatter_ops"] == before["scatter_ops"]


class TestTransposeMatvec:
    def test_identity(self):
        out = dist_transpose_matvec(np.eye(2), np.array([2.0, 3.0]), partition_columns(2, 2))
        np.testing.assert_array_equal(out, [2.0, 3.0])

    def test_zero(self):
        out = dist_transpose_matvec(np.ones((3, 4)), np.zeros(3), partition_columns(4, 2))
        np.testing.assert_array_equal(out, np.zeros(4))

    @pytest.mark.parametrize("workers", [1, 2, 5])
    def test_matches_serial(self, workers):
        rng = np.random.default_rng(4)
        A = np.asfortranarray(rng.standard_normal((6, 17)))
        g = rng.standard_normal(6)
        out = dist_transpose_matvec(A, g, partition_columns(17, workers))
        np.testing.assert_allclose(out, A.T @ g, rtol=1e-12)

    def test_no_communication(self):
        stats = CommStats()
        dist_transpose_matvec(np.eye(4), np.ones(4), partition_columns(4, 2), stats)
        assert stats.as_dict() == CommStats().as_dict()

    def test_sparse(self):
        rng = np.random.default_rng(5)
        A = sp.random(8, 12, density=0.3, random_state=np.random.RandomState(6), format="csc")
        g = rng.standard_normal(8)
        out = dist_transpose_matvec(A, g, partition_columns(12, 3))
        np.testing.assert_allclose(out, A.T @ g, rtol=1e-12)


class TestDot:
    def test_matches_numpy(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(31)
        y = rng.standard_normal(31)
        for w in (1, 2, 7):
            assert dist_dot(x, y, partition_columns(31, w)) == pytest.approx(float(x @ y), rel=1e-12)

    def test_counts_one_scalar_reduce(self):
        stats = CommStats()
        dist_dot(np.ones(4), np.ones(4), partition_columns(4, 2), stats)
        assert stats.reduce_ops == 1
        assert stats.bytes_reduced == 8
