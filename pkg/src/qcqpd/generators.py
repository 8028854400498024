"""Reproducible test-instance builders.

Three families:

* random dense convex QCQPs with prescribed constraint-matrix condition
  number (each Hessian is ``Q' D Q`` with a Haar-random orthogonal ``Q``
  and controlled diagonal ``D``),
* deliberately pathological instances: an infeasible two-constraint
  problem (one constraint is bounded below by 100 everywhere) and an
  unbounded one (the objective decreases forever along a direction the
  constraint cannot see),
* soft-margin SVM training problems with a learned combination of
  kernels, mapped onto the box-constrained QCQP form.

All randomness flows through PCG64 streams derived from the instance
seed; matrix ``i`` of a random QCQP draws from the child stream
``SeedSequence(seed, spawn_key=(i,))``, so instances are bitwise
reproducible and individual matrices are independent of how many others
exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import QcqpProblem

__all__ = [
    "RandomQcqpSpec",
    "MklSpec",
    "Kernel",
    "MklArtifacts",
    "EIGENVALUE_RANGES",
    "gen_random_qcqp",
    "gen_infeasible",
    "gen_unbounded",
    "kernel_eval",
    "gram_matrix",
    "build_mkl_qcqp",
    "gen_twonorm",
    "load_csv_dataset",
]

# Benchmark eigenvalue ranges (d_min, d_max) by condition number.
EIGENVALUE_RANGES = {
    1.25: (4.0, 5.0),
    1e2: (0.1, 10.0),
    1e4: (0.003, 30.0),
    1e6: (0.00002, 20.0),
}

_KAPPA_RTOL = 1e-12


@dataclass(frozen=True)
class RandomQcqpSpec:
    """Parameters of one random PSD instance.

    Every Hessian gets eigenvalues in ``[d_min, d_max]`` with both
    endpoints attained, so its condition number is exactly
    ``kappa = d_max / d_min``.  ``r_range`` must stay nonpositive so the
    origin is feasible for every generated constraint.
    """

    n1: int
    m1: int
    d_min: float = 4.0
    d_max: float = 5.0
    kappa: float | None = None
    q_range: tuple = (-1.0, 1.0)
    r_range: tuple = (-1.0, 0.0)
    seed: int = 0
    box_upper: float | None = None

    def __post_init__(self):
        if self.n1 < 1 or self.m1 < 0:
            raise ValueError("need n1 >= 1 and m1 >= 0")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("need 0 < d_min <= d_max")
        ratio = self.d_max / self.d_min
        if self.kappa is None:
            object.__setattr__(self, "kappa", ratio)
        elif abs(self.kappa - ratio) > _KAPPA_RTOL * ratio:
            raise ValueError(f"kappa={self.kappa} inconsistent with d_max/d_min={ratio}")
        if self.n1 == 1 and self.kappa != 1.0:
            raise ValueError("kappa > 1 needs n1 >= 2 (both extreme eigenvalues must be attained)")
        if self.r_range[1] > 0:
            raise ValueError("r_range must be nonpositive so the origin stays feasible")
        if self.box_upper is not None and self.box_upper <= 0:
            raise ValueError("box_upper must be > 0")


def _stream(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _haar_orthogonal(rng, n):
    """Haar-distributed orthogonal matrix: QR of a Gaussian with sign-fixed R."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.where(np.diag(R) >= 0, 1.0, -1.0)
    return Q * signs


def _random_psd(rng, n, d_min, d_max):
    """``Q' D Q`` with eigenvalues exactly spanning ``[d_min, d_max]``."""
    Q = _haar_orthogonal(rng, n)
    d = np.empty(n)
    d[0] = d_max
    if n > 1:
        d[1] = d_min
        d[2:] = rng.uniform(d_min, d_max, size=n - 2)
    P = (Q.T * d) @ Q
    return np.asfortranarray(0.5 * (P + P.T))


def gen_random_qcqp(spec: RandomQcqpSpec) -> QcqpProblem:
    """Random convex QCQP: ``m1`` quadratic constraints, no equalities.

    Matrix ``i`` (0 = objective) draws, in order, the Gaussian entries of
    its orthogonal factor, the interior diagonal entries, then ``qi`` and
    ``ri``, all from child stream ``i`` of the seed.  Box upper bounds
    default to ``+inf`` (so only ``x >= 0`` binds).
    """
    s = spec
    P, q, r = [], [], []
    for i in range(s.m1 + 1):
        rng = _stream(s.seed, i)
        P.append(_random_psd(rng, s.n1, s.d_min, s.d_max))
        q.append(rng.uniform(s.q_range[0], s.q_range[1], size=s.n1))
        r.append(rng.uniform(s.r_range[0], s.r_range[1]))
    assert all(ri <= 0 for ri in r[1:]), "origin must be feasible for every constraint"
    upper = np.full(s.n1, np.inf if s.box_upper is None else s.box_upper)
    return QcqpProblem(
        n1=s.n1,
        n2=0,
        m1=s.m1,
        m2=0,
        P=P,
        q=q,
        c=[np.zeros(0)] * (s.m1 + 1),
        r=np.array(r),
        x_upper=upper,
    )


def gen_infeasible(n1: int, seed: int = 0) -> QcqpProblem:
    """Two-constraint instance whose second constraint can never hold.

    Constraint 2 is ``0.5 (x + q2)'(x + q2) + (r2 + 1) + 100 <= 0``: a
    nonnegative quadratic plus a nonnegative shift plus 100, so its value
    is at least 100 everywhere.  The objective and first constraint are
    drawn like a random instance, so the problem is well formed (all
    Hessians PSD) yet infeasible.
    """
    if n1 < 1:
        raise ValueError("need n1 >= 1")
    base = gen_random_qcqp(RandomQcqpSpec(n1=n1, m1=1, seed=seed))
    rng = _stream(seed, 2)
    q2 = rng.uniform(-1.0, 1.0, size=n1)
    r2 = rng.uniform(-1.0, 0.0)
    P = list(base.P) + [sp.identity(n1, format="csc")]
    q = list(base.q) + [q2]
    r = np.append(base.r, 0.5 * float(q2 @ q2) + (r2 + 1.0) + 100.0)
    return QcqpProblem(
        n1=n1,
        n2=0,
        m1=2,
        m2=0,
        P=P,
        q=q,
        c=[np.zeros(0)] * 3,
        r=r,
        x_upper=np.full(n1, np.inf),
    )


def gen_unbounded(n1: int, seed: int = 0) -> QcqpProblem:
    """Single-constraint instance with an unbounded objective ray.

    The shared Hessian is ``diag(1, ..., 1, 0)``; the objective's linear
    term is ``-1`` on the last coordinate only, while the constraint's
    linear term ignores it.  Along the feasible ray ``x = t * e_last``
    (``t -> +inf``) the objective is ``-t + r0`` but the constraint value
    never changes, so the problem is unbounded below.
    """
    if n1 < 2:
        raise ValueError("need n1 >= 2")
    D0 = sp.diags(np.append(np.ones(n1 - 1), 0.0), format="csc")
    q0 = np.zeros(n1)
    q0[-1] = -1.0
    q1 = np.ones(n1)
    q1[-1] = 0.0
    rng = _stream(seed, 0)
    r0, r1 = rng.uniform(-1.0, 0.0, size=2)
    return QcqpProblem(
        n1=n1,
        n2=0,
        m1=1,
        m2=0,
        P=[D0, D0],
        q=[q0, q1],
        c=[np.zeros(0)] * 2,
        r=np.array([r0, r1]),
        x_upper=np.full(n1, np.inf),
    )


# --- kernels and SVM instances ----------------------------------------------


@dataclass(frozen=True)
class Kernel:
    """Kernel function descriptor: linear, squared polynomial, or Gaussian."""

    kind: str
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and (self.sigma2 is None or self.sigma2 <= 0):
            raise ValueError("gaussian kernel needs sigma2 > 0")

    def label(self) -> str:
        return f"gaussian:{self.sigma2:g}" if self.kind == "gaussian" else self.kind


DEFAULT_MKL_KERNELS = tuple(Kernel("gaussian", s2) for s2 in (0.01, 0.1, 1.0, 10.0, 100.0))


def kernel_eval(kernel: Kernel, d, dp) -> float:
    """Kernel value for a single pair of points."""
    d = np.asarray(d, dtype=np.float64)
    dp = np.asarray(dp, dtype=np.float64)
    if kernel.kind == "linear":
        return float(d @ dp)
    if kernel.kind == "polynomial":
        return float((1.0 + d @ dp) ** 2)
    diff = d - dp
    return float(np.exp(-(diff @ diff) / (2.0 * kernel.sigma2)))


def gram_matrix(kernel: Kernel, X, Y=None):
    """Gram block ``K[j, j'] = k(X_j, Y_j')``; symmetric with unit Gaussian diagonal when ``Y`` is ``X``."""
    X = np.asarray(X, dtype=np.float64)
    symmetric = Y is None
    Y = X if symmetric else np.asarray(Y, dtype=np.float64)
    inner = X @ Y.T
    if kernel.kind == "linear":
        K = inner
    elif kernel.kind == "polynomial":
        K = (1.0 + inner) ** 2
    else:
        sq = np.maximum((X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * inner, 0.0)
        if symmetric:
            np.fill_diagonal(sq, 0.0)
        K = np.exp(-sq / (2.0 * kernel.sigma2))
    if symmetric:
        K = 0.5 * (K + K.T)
    return K


@dataclass(frozen=True)
class MklSpec:
    """Parameters of one kernel-combination SVM training instance.

    ``R`` bounds the total kernel weight (it multiplies the auxiliary
    variable in the objective); with every Gram matrix normalized to unit
    trace it defaults to the number of kernels.
    """

    dataset: str = "twonorm"
    csv_path: str | None = None
    n_tr: int = 160
    n_t: int = 40
    kernels: tuple = DEFAULT_MKL_KERNELS
    svm: str = "sm2"
    margin_c: float = 1.0
    R: float | None = None
    seed: int = 0
    dim: int = 20
    mean_scale: float | None = None

    def __post_init__(self):
        if self.dataset not in ("twonorm", "csv"):
            raise ValueError(f"dataset must be 'twonorm' or 'csv', got {self.dataset!r}")
        if self.dataset == "csv" and not self.csv_path:
            raise ValueError("csv dataset needs csv_path")
        if self.n_tr < 2 or self.n_t < 1:
            raise ValueError("need n_tr >= 2 and n_t >= 1")
        if self.svm not in ("sm1", "sm2"):
            raise ValueError(f"svm must be 'sm1' or 'sm2', got {self.svm!r}")
        if self.margin_c <= 0:
            raise ValueError("margin_c must be > 0")
        if not self.kernels:
            raise ValueError("need at least one kernel")
        if self.R is None:
            object.__setattr__(self, "R", float(len(self.kernels)))
        elif self.R <= 0:
            raise ValueError("R must be > 0")
        object.__setattr__(self, "kernels", tuple(self.kernels))


@dataclass
class MklArtifacts:
    """Everything needed to score a trained instance on its test split."""

    spec: MklSpec
    labels_train: np.ndarray
    labels_test: np.ndarray
    gram_train: list
    gram_cross: list
    train_indices: np.ndarray
    test_indices: np.ndarray
    points: np.ndarray = None
    labels_all: np.ndarray = None

    def sidecar_dict(self):
        return {
            "seed": self.spec.seed,
            "dataset": self.spec.dataset,
            "svm": self.spec.svm,
            "margin_c": self.spec.margin_c,
            "R": self.spec.R,
            "n_tr": self.spec.n_tr,
            "n_t": self.spec.n_t,
            "kernels": [k.label() for k in self.spec.kernels],
            "train_indices": [int(i) for i in self.train_indices],
            "test_indices": [int(i) for i in self.test_indices],
        }


def gen_twonorm(n_points: int, dim: int, a: float, seed: int = 0):
    """Two-class Gaussian point cloud: half at mean ``(a, ..., a)`` labeled
    +1, half at ``(-a, ..., -a)`` labeled -1, unit covariance."""
    if n_points % 2:
        raise ValueError("n_points must be even")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = _stream(seed, 0)
    half = n_points // 2
    X = np.vstack([
        rng.standard_normal((half, dim)) + a,
        rng.standard_normal((half, dim)) - a,
    ])
    y = np.concatenate([np.ones(half), -np.ones(half)])
    return X, y


def load_csv_dataset(path):
    """Load ``label,feat1,...,featk`` rows; labels must be +-1."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need a label column plus at least one feature")
    y = data[:, 0]
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError(f"{path}: labels must be -1 or +1")
    return data[:, 1:], y


def build_mkl_qcqp(spec: MklSpec):
    """Map a soft-margin SVM with learned kernel weights onto the QCQP form.

    The decision variable is the coefficient vector (box ``[0, C]`` for
    the 1-norm margin, ``[0, inf)`` for the 2-norm margin); a scalar
    auxiliary variable carries the kernel-weight budget ``R``.  Each
    kernel contributes one quadratic constraint
    ``0.5 a' G_i a - a0 <= 0`` with ``G_i`` the label-signed training
    Gram block of the trace-normalized kernel; the label-balance equality
    becomes the single equality row.  The weights themselves are the
    multipliers of the quadratic constraints at the solution.

    Returns the problem plus :class:`MklArtifacts` for scoring.
    """
    s = spec
    n_total = s.n_tr + s.n_t
    if s.dataset == "twonorm":
        a = s.mean_scale if s.mean_scale is not None else 2.0 / np.sqrt(s.dim)
        X, y = gen_twonorm(n_total + (n_total % 2), s.dim, a, seed=s.seed)
        X, y = X[:n_total], y[:n_total]
    else:
        X, y = load_csv_dataset(s.csv_path)
        if X.shape[0] < n_total:
            raise ValueError(f"dataset has {X.shape[0]} rows, need n_tr + n_t = {n_total}")
    rng = _stream(s.seed, 1)
    perm = rng.permutation(X.shape[0])[:n_total]
    train_idx, test_idx = perm[: s.n_tr], perm[s.n_tr :]
    ltr, lte = y[train_idx], y[test_idx]
    if np.all(ltr == ltr[0]):
        raise ValueError("training split contains a single class; reseed or enlarge n_tr")

    # order points train-first so Gram blocks slice contiguously
    ordered = np.concatenate([train_idx, test_idx])
    Xo, yo = X[ordered], y[ordered]
    gram_train, gram_cross, G = [], [], []
    for kern in s.kernels:
        K = gram_matrix(kern, Xo)
        tr = np.trace(K)
        if tr <= 0:
            raise ValueError(f"kernel {kern.label()} has nonpositive Gram trace; cannot normalize")
        K = K / tr
        Ktr = K[: s.n_tr, : s.n_tr]
        gram_train.append(Ktr)
        gram_cross.append(K[: s.n_tr, s.n_tr :])
        G.append(np.asfortranarray(Ktr * np.outer(ltr, ltr)))

    n_tr, C = s.n_tr, s.margin_c
    if s.svm == "sm1":
        P0 = sp.csc_matrix((n_tr, n_tr))
        upper = np.full(n_tr, C)
    else:
        P0 = sp.identity(n_tr, format="csc") / C
        upper = np.full(n_tr, np.inf)
    m = len(s.kernels)
    problem = QcqpProblem(
        n1=n_tr,
        n2=1,
        m1=m,
        m2=1,
        P=[P0] + G,
        q=[-np.ones(n_tr)] + [np.zeros(n_tr)] * m,
        c=[np.array([s.R])] + [np.array([-1.0])] * m,
        r=np.zeros(m + 1),
        A=ltr.reshape(1, n_tr),
        B=np.zeros((1, 1)),
        b=np.zeros(1),
        x_upper=upper,
    )
    artifacts = MklArtifacts(
        spec=s,
        labels_train=ltr,
        labels_test=lte,
        gram_train=gram_train,
        gram_cross=gram_cross,
        train_indices=train_idx,
        test_indices=test_idx,
        points=Xo,
        labels_all=yo,
    )
    return problem, artifacts
