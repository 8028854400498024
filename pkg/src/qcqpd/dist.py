"""Column-partitioned linear-algebra kernels with communication accounting.

Matrices are split by columns across ``n_workers`` execution contexts; a
matrix-vector product is computed as a sum of per-worker partials
(``M @ x = sum_w M[:, lo_w:hi_w] @ x[lo_w:hi_w]``), reduced at a
coordinator, and the result scattered back so each worker holds its
slice.  Quadratic forms reuse the scattered slices and reduce a single
scalar.  Products against the transpose (``A' g``) need no communication
at all: each worker's slice of the result only involves its own columns.

Workers here are simulated: the per-worker local-compute phases run
sequentially in worker order inside one process, separated by the same
reduce / scatter points a message-passing deployment would have.  The
testable artifact is the communication contract, not the transport:
``CommStats`` counts every collective and its byte volume exactly as the
distributed run would issue them, and the reduction order is a fixed
left-to-right pairwise tree over worker index, so results are bitwise
reproducible for a fixed partition.  (Across *different* worker counts
only floating-point-tolerance agreement is possible, since partial sums
group differently.)  The single-worker path degenerates to plain serial
products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ColumnPartition",
    "CommStats",
    "partition_columns",
    "dist_matvec",
    "dist_quadform",
    "dist_transpose_matvec",
    "dist_dot",
]

_FLOAT_BYTES = 8


@dataclass
class CommStats:
    """Counters for the modeled reduce/scatter traffic of one solve."""

    reduce_ops: int = 0
    scatter_ops: int = 0
    bytes_reduced: int = 0
    bytes_scattered: int = 0

    def record_reduce(self, n_values: int):
        self.reduce_ops += 1
        self.bytes_reduced += _FLOAT_BYTES * n_values

    def record_scatter(self, n_values: int):
        self.scatter_ops += 1
        self.bytes_scattered += _FLOAT_BYTES * n_values

    def as_dict(self):
        return {
            "reduce_ops": self.reduce_ops,
            "scatter_ops": self.scatter_ops,
            "bytes_reduced": self.bytes_reduced,
            "bytes_scattered": self.bytes_scattered,
        }


@dataclass(frozen=True)
class ColumnPartition:
    """Half-open column ranges ``[lo_w, hi_w)`` assigned to each worker.

    Ranges are contiguous, sorted, disjoint and cover ``[0, n_cols)``
    exactly once; a range may be empty only when there are more workers
    than columns.
    """

    n_cols: int
    ranges: tuple = field(default_factory=tuple)

    @property
    def n_workers(self) -> int:
        return len(self.ranges)

    def __post_init__(self):
        pos = 0
        for lo, hi in self.ranges:
            if lo != pos or hi < lo:
                raise ValueError(f"ranges must tile [0, {self.n_cols}) in order, got {self.ranges}")
            pos = hi
        if pos != self.n_cols:
            raise ValueError(f"ranges cover [0, {pos}), expected [0, {self.n_cols})")


def partition_columns(n_cols: int, n_workers: int) -> ColumnPartition:
    """Split ``n_cols`` columns across workers into balanced contiguous blocks.

    Block sizes differ by at most one; the first ``n_cols % n_workers``
    workers take the larger blocks.  Deterministic.
    """
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    base, extra = divmod(n_cols, n_workers)
    ranges = []
    lo = 0
    for w in range(n_workers):
        hi = lo + base + (1 if w < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ColumnPartition(n_cols, tuple(ranges))


def _tree_sum(parts):
    """Pairwise left-to-right tree reduction; fixed, deterministic order."""
    while len(parts) > 1:
        nxt = []
        for i in range(0, len(parts) - 1, 2):
            nxt.append(parts[i] + parts[i + 1])
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _check_cols(M, partition):
    if M.shape[1] != partition.n_cols:
        raise ValueError(f"matrix has {M.shape[1]} columns, partition covers {partition.n_cols}")


def dist_matvec(M, x, partition: ColumnPartition, stats: CommStats | None = None, scatter: bool = True):
    """``M @ x`` from per-worker column slices.

    Accounts one reduce of ``M.shape[0]`` doubles, plus one scatter of the
    same volume when the result is handed back to the workers (the case
    for the Hessian products; row evaluations destined for the dual side
    pass ``scatter=False``).
    """
    _check_cols(M, partition)
    x = np.asarray(x)
    if x.shape != (partition.n_cols,):
        raise ValueError(f"vector has shape {x.shape}, expected ({partition.n_cols},)")
    n_rows = M.shape[0]
    if partition.n_workers == 1:
        full = M @ x
        if sp.issparse(M):
            full = np.asarray(full).reshape(n_rows)
    else:
        parts = []
        for lo, hi in partition.ranges:
            if hi == lo:
                parts.append(np.zeros(n_rows))
                continue
            part = M[:, lo:hi] @ x[lo:hi]
            if sp.issparse(M):
                part = np.asarray(part).reshape(n_rows)
            parts.append(part)
        full = _tree_sum(parts)
    if stats is not None:
        stats.record_reduce(n_rows)
        if scatter:
            stats.record_scatter(n_rows)
    return full


def dist_dot(x, y, partition: ColumnPartition, stats: CommStats | None = None) -> float:
    """``x @ y`` over partitioned slices; one reduce of a single double."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != (partition.n_cols,) or y.shape != (partition.n_cols,):
        raise ValueError("vectors must match the partition length")
    if partition.n_workers == 1:
        total = float(x @ y)
    else:
        parts = [float(x[lo:hi] @ y[lo:hi]) if hi > lo else 0.0 for lo, hi in partition.ranges]
        total = float(_tree_sum(parts))
    if stats is not None:
        stats.record_reduce(1)
    return total


def dist_quadform(M, x, partition: ColumnPartition, stats: CommStats | None = None, Mx=None) -> float:
    """``x' M x`` reusing the scattered slices of ``M @ x`` when available.

    Costs one scalar reduce on top of the matvec (which is performed, and
    accounted, only if ``Mx`` is not supplied).
    """
    if Mx is None:
        Mx = dist_matvec(M, x, partition, stats)
    return dist_dot(np.asarray(x), np.asarray(Mx), partition, stats)


def dist_transpose_matvec(A, g, partition: ColumnPartition, stats: CommStats | None = None):
    """``A' g`` computed worker-locally; no communication.

    Each worker owns the columns ``A[:, lo:hi]`` and therefore the slice
    ``(A' g)[lo:hi] = A[:, lo:hi]' g`` outright.
    """
    _check_cols(A, partition)
    g = np.asarray(g)
    if g.shape != (A.shape[0],):
        raise ValueError(f"vector has shape {g.shape}, expected ({A.shape[0]},)")
    if partition.n_workers == 1:
        out = A.T @ g
        return np.asarray(out).reshape(partition.n_cols) if sp.issparse(A) else out
    out = np.empty(partition.n_cols)
    for lo, hi in partition.ranges:
        if hi == lo:
            continue
        part = A[:, lo:hi].T @ g
        out[lo:hi] = np.asarray(part).reshape(hi - lo) if sp.issparse(A) else part
    return out
