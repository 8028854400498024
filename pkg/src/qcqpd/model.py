"""Problem container for box-constrained convex QCQPs.

The problem solved throughout this package is

    minimize    0.5 x'P0 x + q0'x + c0'u + r0
    subject to  0.5 x'Pi x + qi'x + ci'u + ri <= 0,   i = 1..m1
                A x + B u = b
                0 <= x_j <= x_upper_j

with every Pi symmetric positive semidefinite.  ``u`` is an auxiliary
unconstrained block carrying the linear-only terms; it may be empty.
Upper bounds may be ``+inf``, in which case the box degenerates to the
half-line ``x_j >= 0``.

Matrices are kept column-major (dense Fortran order, or CSC for sparse)
so that per-worker column slices are contiguous.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "QcqpProblem",
    "ProblemNorms",
    "ValidationReport",
    "ProblemFormatError",
    "validate",
    "compute_norms",
    "load_problem",
    "save_problem",
]

# Relative tolerances for the well-formedness checks.  PSD acceptance uses a
# smallest-eigenvalue estimate because an exact check is ill-posed in floats.
SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-8


class ProblemFormatError(ValueError):
    """Raised when a problem file cannot be parsed into a valid shape."""


def _as_matrix(M, rows, cols, fortran=True):
    """Coerce ``M`` to a float64 matrix of the given shape (dense or CSC)."""
    if sp.issparse(M):
        out = M.tocsc().astype(np.float64)
    else:
        out = np.asarray(M, dtype=np.float64)
        if fortran:
            out = np.asfortranarray(out)
    if out.shape != (rows, cols):
        raise ValueError(f"expected shape {(rows, cols)}, got {out.shape}")
    return out


@dataclass
class QcqpProblem:
    """Data of one box-constrained convex QCQP.

    Attributes
    ----------
    n1, n2 : int
        Dimensions of the ``x`` and ``u`` blocks (``n2`` may be 0).
    m1, m2 : int
        Number of quadratic inequality and linear equality constraints.
    P : list of matrices
        ``m1 + 1`` symmetric PSD matrices ``P[0]..P[m1]``, each ``n1 x n1``.
        Dense matrices are stored Fortran-ordered; sparse ones as CSC.
    q : list of ndarray
        ``m1 + 1`` vectors of length ``n1``.
    c : list of ndarray
        ``m1 + 1`` vectors of length ``n2``.
    r : ndarray
        ``m1 + 1`` scalars.
    A, B : matrices
        Equality constraint blocks, ``m2 x n1`` and ``m2 x n2``.
    b : ndarray
        Equality right-hand side, length ``m2``.
    x_upper : ndarray
        Box upper bounds, all > 0, entries may be ``+inf``.

    Instances are immutable by convention after construction and safe to
    share read-only across workers.
    """

    n1: int
    n2: int
    m1: int
    m2: int
    P: list = field(default_factory=list)
    q: list = field(default_factory=list)
    c: list = field(default_factory=list)
    r: np.ndarray = None
    A: np.ndarray = None
    B: np.ndarray = None
    b: np.ndarray = None
    x_upper: np.ndarray = None

    def __post_init__(self):
        n1, n2, m1, m2 = self.n1, self.n2, self.m1, self.m2
        if min(n1, n2, m1, m2) < 0:
            raise ValueError("dimensions must be nonnegative")
        if len(self.P) != m1 + 1:
            raise ValueError(f"expected {m1 + 1} P matrices, got {len(self.P)}")
        if len(self.q) != m1 + 1 or len(self.c) != m1 + 1:
            raise ValueError("q and c must both have m1 + 1 entries")
        self.P = [_as_matrix(Pi, n1, n1) for Pi in self.P]
        self.q = [np.asarray(qi, dtype=np.float64).reshape(n1) for qi in self.q]
        self.c = [np.asarray(ci, dtype=np.float64).reshape(n2) for ci in self.c]
        self.r = np.asarray(self.r, dtype=np.float64).reshape(m1 + 1)
        self.A = _as_matrix(self.A if self.A is not None else np.zeros((m2, n1)), m2, n1)
        self.B = _as_matrix(self.B if self.B is not None else np.zeros((m2, n2)), m2, n2)
        self.b = np.asarray(self.b if self.b is not None else np.zeros(m2), dtype=np.float64).reshape(m2)
        if self.x_upper is None:
            self.x_upper = np.full(n1, np.inf)
        self.x_upper = np.asarray(self.x_upper, dtype=np.float64).reshape(n1)

    def constraint_values(self, x, u):
        """Values of the m1 quadratic constraints at ``(x, u)``."""
        vals = np.empty(self.m1)
        for i in range(1, self.m1 + 1):
            vals[i - 1] = (
                0.5 * float(x @ (self.P[i] @ x))
                + float(self.q[i] @ x)
                + float(self.c[i] @ u)
                + self.r[i]
            )
        return vals

    def equality_residual(self, x, u):
        """``A x + B u - b`` (length m2)."""
        return self.A @ x + self.B @ u - self.b

    def objective(self, x, u):
        """``0.5 x'P0 x + q0'x + c0'u + r0``."""
        return (
            0.5 * float(x @ (self.P[0] @ x))
            + float(self.q[0] @ x)
            + float(self.c[0] @ u)
            + float(self.r[0])
        )

    def project_box(self, x):
        """Project onto the box ``0 <= x_j <= x_upper_j``."""
        return np.clip(x, 0.0, self.x_upper)

    def lagrangian_grad_x(self, x, lam, gam, Px=None, ATgam=None):
        """``P0 x + q0 + sum_i lam_i (Pi x + qi) + A' gam``.

        ``Px`` may carry precomputed products ``[P0 x, ..., Pm1 x]`` and
        ``ATgam`` a precomputed ``A' gam``.
        """
        if Px is None:
            Px = [self.P[i] @ x for i in range(self.m1 + 1)]
        g = Px[0] + self.q[0]
        for i in range(1, self.m1 + 1):
            li = lam[i - 1]
            if li != 0.0:
                g = g + li * (Px[i] + self.q[i])
        if self.m2:
            g = g + (self.A.T @ gam if ATgam is None else ATgam)
        return g

    def lagrangian_grad_u(self, lam, gam):
        """``c0 + sum_i lam_i ci + B' gam``."""
        g = self.c[0].copy()
        for i in range(1, self.m1 + 1):
            g += lam[i - 1] * self.c[i]
        if self.m2:
            g += self.B.T @ gam
        return g


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`: a list of violation messages."""

    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class ProblemNorms:
    """Frobenius norms used by the adaptive step-size rule.

    ``frob_P_stacked`` is the norm of the vertically stacked constraint
    matrices ``(P1; ...; Pm1)``; ``frob_Q`` / ``frob_C`` stack the
    constraint vectors ``qi`` / ``ci`` (i >= 1) as rows.
    """

    frob_P0: float
    frob_Pi: np.ndarray
    frob_P_stacked: float
    frob_Q: float
    frob_C: float
    frob_A: float
    frob_B: float


def _frob(M) -> float:
    if sp.issparse(M):
        return math.sqrt(M.multiply(M).sum())
    return float(np.linalg.norm(M, "fro")) if M.ndim == 2 else float(np.linalg.norm(M))


def smallest_eigenvalue_estimate(M, max_iter: int = 200) -> float:
    """Estimate the smallest eigenvalue of a symmetric matrix.

    Dense inputs use a direct symmetric eigensolve.  Sparse inputs try a
    bounded-iteration Lanczos solve and fall back to a shifted power
    iteration (power-iterate ``s*I - M`` with ``s`` an upper bound on the
    spectrum) if it does not converge.
    """
    n = M.shape[0]
    if n == 0:
        return 0.0
    if not sp.issparse(M):
        return float(np.linalg.eigvalsh(M)[0])
    if n < 200:
        return float(np.linalg.eigvalsh(M.toarray())[0])
    try:
        vals = sp.linalg.eigsh(M, k=1, which="SA", maxiter=max_iter, return_eigenvectors=False)
        return float(vals[0])
    except Exception:
        # shifted power iteration: largest eigenvalue of s*I - M is s - lambda_min
        rng = np.random.default_rng(0)
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        shift = _frob(M)  # ||M||_F >= spectral radius
        lam = 0.0
        for _ in range(max_iter):
            w = shift * v - M @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return shift
            v = w / nw
            lam = nw
        return shift - lam


def validate(problem: QcqpProblem) -> ValidationReport:
    """Check well-formedness of a problem; returns a report, never raises.

    Detects dimension mismatches, asymmetric or non-PSD constraint
    matrices (smallest-eigenvalue estimate below ``-1e-8 * ||Pi||_F``),
    and nonpositive box upper bounds.
    """
    v = []
    p = problem
    for i, Pi in enumerate(p.P):
        if Pi.shape != (p.n1, p.n1):
            v.append(f"P[{i}] has shape {Pi.shape}, expected {(p.n1, p.n1)}")
            continue
        nrm = _frob(Pi)
        gap = _frob(Pi - Pi.T)
        if gap > SYMMETRY_RTOL * max(nrm, 1.0):
            v.append(f"P[{i}] is not symmetric (||P - P'||_F = {gap:.3e})")
            continue
        lo = smallest_eigenvalue_estimate(Pi)
        if lo < -PSD_RTOL * max(nrm, 1.0):
            v.append(f"P[{i}] is not PSD (smallest eigenvalue ~ {lo:.3e})")
    for i, qi in enumerate(p.q):
        if qi.shape != (p.n1,):
            v.append(f"q[{i}] has length {qi.shape[0]}, expected {p.n1}")
    for i, ci in enumerate(p.c):
        if ci.shape != (p.n2,):
            v.append(f"c[{i}] has length {ci.shape[0]}, expected {p.n2}")
    if p.r.shape != (p.m1 + 1,):
        v.append(f"r has length {p.r.shape[0]}, expected {p.m1 + 1}")
    if p.A.shape != (p.m2, p.n1):
        v.append(f"A has shape {p.A.shape}, expected {(p.m2, p.n1)}")
    if p.B.shape != (p.m2, p.n2):
        v.append(f"B has shape {p.B.shape}, expected {(p.m2, p.n2)}")
    if p.b.shape != (p.m2,):
        v.append(f"b has length {p.b.shape[0]}, expected {p.m2}")
    if p.x_upper.shape != (p.n1,):
        v.append(f"x_upper has length {p.x_upper.shape[0]}, expected {p.n1}")
    else:
        bad = np.nonzero(~(p.x_upper > 0))[0]
        if bad.size:
            v.append(f"x_upper must be > 0; offending indices {bad[:5].tolist()}")
    return ValidationReport(v)


def compute_norms(problem: QcqpProblem) -> ProblemNorms:
    """Precompute the Frobenius norms consumed by the step-size rule.

    Empty stacks (m1 = 0, or empty blocks) contribute zero norms.
    """
    p = problem
    frob_Pi = np.array([_frob(p.P[i]) for i in range(1, p.m1 + 1)])
    return ProblemNorms(
        frob_P0=_frob(p.P[0]),
        frob_Pi=frob_Pi,
        frob_P_stacked=math.sqrt(float(np.sum(frob_Pi**2))),
        frob_Q=_frob(np.array([p.q[i] for i in range(1, p.m1 + 1)]).reshape(p.m1, p.n1)),
        frob_C=_frob(np.array([p.c[i] for i in range(1, p.m1 + 1)]).reshape(p.m1, p.n2)),
        frob_A=_frob(p.A),
        frob_B=_frob(p.B),
    )


# --- serialization ---------------------------------------------------------
#
# Problem files are a single JSON document.  Matrices are either
# {"dense": [[...], ...]} with row-major rows, or {"cols": {"j": [[row, val],
# ...]}} column-sparse.  Infinite upper bounds serialize as the string "inf".
# Floats round-trip exactly (Python emits shortest exact repr).


def _matrix_to_json(M):
    if sp.issparse(M):
        M = M.tocsc()
        cols = {}
        for j in range(M.shape[1]):
            start, end = M.indptr[j], M.indptr[j + 1]
            if start == end:
                continue
            cols[str(j)] = [[int(r), float(val)] for r, val in zip(M.indices[start:end], M.data[start:end])]
        return {"cols": cols}
    return {"dense": [[float(v) for v in row] for row in np.asarray(M)]}


def _matrix_from_json(obj, rows, cols, where):
    if not isinstance(obj, dict) or ("dense" not in obj) == ("cols" not in obj):
        raise ProblemFormatError(f"{where}: matrix must have exactly one of 'dense' or 'cols'")
    if "dense" in obj:
        data = obj["dense"]
        if len(data) != rows or any(len(row) != cols for row in data):
            raise ProblemFormatError(f"{where}: dense matrix is not {rows}x{cols}")
        return np.asfortranarray(np.asarray(data, dtype=np.float64).reshape(rows, cols))
    entries = obj["cols"]
    data, ri, ci = [], [], []
    for jstr, pairs in entries.items():
        j = int(jstr)
        if not 0 <= j < cols:
            raise ProblemFormatError(f"{where}: column index {j} out of range")
        for pair in pairs:
            row, val = int(pair[0]), float(pair[1])
            if not 0 <= row < rows:
                raise ProblemFormatError(f"{where}: row index {row} out of range")
            ri.append(row)
            ci.append(j)
            data.append(val)
    return sp.csc_matrix((data, (ri, ci)), shape=(rows, cols))


def _bound_to_json(v):
    return "inf" if math.isinf(v) else float(v)


def _bound_from_json(v, where):
    if v == "inf":
        return math.inf
    if isinstance(v, (int, float)):
        return float(v)
    raise ProblemFormatError(f"{where}: bound must be a number or 'inf', got {v!r}")


def save_problem(problem: QcqpProblem, path) -> None:
    """Write a problem to a JSON file (see module notes for the format)."""
    p = problem
    doc = {
        "n1": p.n1,
        "n2": p.n2,
        "m1": p.m1,
        "m2": p.m2,
        "P": [_matrix_to_json(Pi) for Pi in p.P],
        "q": [[float(v) for v in qi] for qi in p.q],
        "c": [[float(v) for v in ci] for ci in p.c],
        "r": [float(v) for v in p.r],
        "A": [[float(v) for v in row] for row in np.asarray(p.A.toarray() if sp.issparse(p.A) else p.A)],
        "B": [[float(v) for v in row] for row in np.asarray(p.B.toarray() if sp.issparse(p.B) else p.B)],
        "b": [float(v) for v in p.b],
        "x_upper": [_bound_to_json(v) for v in p.x_upper],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, allow_nan=False)
        fh.write("\n")


def load_problem(path) -> QcqpProblem:
    """Read a problem JSON file; raises :class:`ProblemFormatError` on bad input."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        n1, n2, m1, m2 = (int(doc[k]) for k in ("n1", "n2", "m1", "m2"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"{path}: missing or bad dimension field ({exc})") from exc
    for name, count in (("P", m1 + 1), ("q", m1 + 1), ("c", m1 + 1), ("r", m1 + 1), ("b", m2), ("x_upper", n1)):
        if name not in doc:
            raise ProblemFormatError(f"{path}: missing field '{name}'")
        if len(doc[name]) != count:
            raise ProblemFormatError(f"{path}: field '{name}' has {len(doc[name])} entries, expected {count}")
    P = [_matrix_from_json(obj, n1, n1, f"{path}: P[{i}]") for i, obj in enumerate(doc["P"])]
    try:
        problem = QcqpProblem(
            n1=n1,
            n2=n2,
            m1=m1,
            m2=m2,
            P=P,
            q=doc["q"],
            c=doc["c"],
            r=doc["r"],
            A=_matrix_from_json({"dense": doc["A"]}, m2, n1, f"{path}: A"),
            B=_matrix_from_json({"dense": doc["B"]}, m2, n2, f"{path}: B"),
            b=doc["b"],
            x_upper=[_bound_from_json(v, f"{path}: x_upper") for v in doc["x_upper"]],
        )
    except (ValueError, TypeError) as exc:
        raise ProblemFormatError(f"{path}: {exc}") from exc
    return problem
