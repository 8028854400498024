"""Predictor-corrector proximal-multiplier solver for convex QCQPs.

Each iteration performs four closed-form update groups from the current
iterate ``(x, u, lam, gam)``:

* dual predictors ``(mu, nu)`` from the constraint values at the iterate,
* primal predictors ``(y, v)`` from the Lagrangian gradient at the
  iterate, projected onto the box,
* primal correctors ``(x+, u+)`` anchored at the iterate but with the
  gradient re-evaluated at the predictors,
* dual correctors ``(lam+, gam+)`` anchored at the iterate with the
  constraints re-evaluated at the primal predictors.

All updates are component-wise, so the ``x`` block can be partitioned by
coordinates; the Hessian products they need run through the
column-partitioned kernels in :mod:`qcqpd.dist`, two matvec sweeps per
iteration (one per pass, with the products cached and shared by every
consumer in the pass).

The step size is recomputed every iteration as the minimum of eight
bounds driven by precomputed Frobenius norms and the current iterate;
each bound ``s`` owns a budget fraction ``eps_s`` of ``1 - eps0``, and a
multiplicative weight rule shifts budget toward whichever bound is
currently binding.  Scalars derived from reduced vectors (norms, the
step size, the weights) are computed redundantly from the same reduced
values, so every worker agrees on them bitwise.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    ResidualReport,
    TerminationStatus,
    classify_termination,
    compute_residuals,
)
from .dist import CommStats, dist_dot, dist_matvec, dist_transpose_matvec, partition_columns
from .model import QcqpProblem, compute_norms

__all__ = [
    "WeightMode",
    "SolverConfig",
    "SolveReport",
    "TraceRow",
    "solve",
    "dual_predictor",
    "dual_corrector",
    "primal_predictor_x",
    "primal_corrector_x",
    "primal_predictor_u",
    "primal_corrector_u",
    "gradient_x",
    "gradient_u",
    "compute_step_size",
    "update_epsilons",
    "update_weights",
    "analytic_comm_stats",
    "WEIGHT_FLOOR",
]

# Floor applied to weights after the multiplicative update so no eps_s can
# underflow to exactly 0 (the step-size rule requires eps_s > 0).
WEIGHT_FLOOR = 1e-12

N_STEP_COMPONENTS = 8


class WeightMode(enum.Enum):
    """Budget allocation across the eight step-size bounds."""

    ADAPTIVE = "adaptive"
    EQUAL = "equal"


@dataclass
class SolverConfig:
    """Solve parameters.

    ``tol`` is the residual tolerance for convergence; ``trace_every``
    the residual-check cadence in iterations (residual evaluation costs
    as much as an update, so it is not done every iteration).  The
    divergence/plateau fields drive the infeasibility / unboundedness
    classification, see :func:`qcqpd.diagnostics.classify_termination`.
    """

    tol: float = 1e-3
    max_iters: int = 200_000
    n_workers: int = 1
    eps0: float = 0.0
    weight_mode: WeightMode = WeightMode.ADAPTIVE
    big_M: float = 1e12
    trace_every: int = 10
    divergence_window: int = 50
    divergence_threshold: float = 1e6
    plateau_rel_change: float = 1e-6

    def __post_init__(self):
        if isinstance(self.weight_mode, str):
            self.weight_mode = WeightMode(self.weight_mode)
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if not 0.0 <= self.eps0 < 1.0:
            raise ValueError("eps0 must lie in [0, 1)")
        if self.big_M <= 0:
            raise ValueError("big_M must be > 0")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")


# --- closed-form updates ----------------------------------------------------
#
# Each helper accepts optional precomputed pieces (constraint values,
# gradients) so the solve loop can feed it the cached distributed products;
# when omitted they are computed serially, which is what the unit tests and
# the proximal-equivalence checks exercise.


def gradient_x(problem, x, lam, gam, Px=None, ATgam=None):
    """``P0 x + q0 + sum_i lam_i (Pi x + qi) + A' gam``."""
    return problem.lagrangian_grad_x(x, lam, gam, Px=Px, ATgam=ATgam)


def gradient_u(problem, lam, gam):
    """``c0 + sum_i lam_i ci + B' gam``."""
    return problem.lagrangian_grad_u(lam, gam)


def dual_predictor(problem, x, u, lam, gam, rho, cons=None, eq=None):
    """Provisional multipliers from the constraint values at ``(x, u)``.

    ``mu_i = max(0, lam_i + rho * cons_i)`` and ``nu = gam + rho * (Ax + Bu - b)``.
    """
    if cons is None:
        cons = problem.constraint_values(x, u)
    if eq is None:
        eq = problem.equality_residual(x, u)
    mu = np.maximum(0.0, lam + rho * cons)
    nu = gam + rho * eq
    return mu, nu


def primal_predictor_x(problem, x, lam, gam, rho, grad=None):
    """Projected gradient step from ``x`` using the multipliers at the iterate."""
    if grad is None:
        grad = gradient_x(problem, x, lam, gam)
    return problem.project_box(x - rho * grad)


def primal_corrector_x(problem, x, y, mu, nu, rho, grad=None):
    """Step anchored at ``x`` with the gradient re-evaluated at ``(y, mu, nu)``."""
    if grad is None:
        grad = gradient_x(problem, y, mu, nu)
    return problem.project_box(x - rho * grad)


def primal_predictor_u(problem, u, lam, gam, rho, grad=None):
    """Unprojected step on the auxiliary block (``u`` is unconstrained)."""
    if grad is None:
        grad = gradient_u(problem, lam, gam)
    return u - rho * grad


def primal_corrector_u(problem, u, mu, nu, rho, grad=None):
    """Corrector step on ``u`` with multipliers replaced by their predictors."""
    if grad is None:
        grad = gradient_u(problem, mu, nu)
    return u - rho * grad


def dual_corrector(problem, lam, gam, y, v, rho, cons=None, eq=None):
    """Multiplier step anchored at ``(lam, gam)``, constraints evaluated at ``(y, v)``."""
    if cons is None:
        cons = problem.constraint_values(y, v)
    if eq is None:
        eq = problem.equality_residual(y, v)
    lam_next = np.maximum(0.0, lam + rho * cons)
    gam_next = gam + rho * eq
    return lam_next, gam_next


# --- adaptive step size -----------------------------------------------------


def _root_rule(a, b, c):
    """Positive root of ``a t^2 + b t - c = 0`` for a, b >= 0, c > 0.

    Degenerates to ``c / b`` when ``a = 0`` and to ``None`` when both
    ``a`` and ``b`` vanish (callers substitute their own cap then).
    """
    if a > 0.0:
        return (-b + math.sqrt(b * b + 4.0 * a * c)) / (2.0 * a)
    if b > 0.0:
        return c / b
    return None


def compute_step_size(problem, norms, x, u, lam, gam, epsilons, big_M, cons=None, grad=None):
    """Evaluate the eight step-size bounds at the current iterate.

    Returns ``(rho, components)`` with ``rho = min(components)`` exactly.
    Five bounds are static ratios ``eps_s / norm`` (falling back to
    ``eps_s`` when the norm vanishes); the remaining three depend on the
    iterate:

    * per-constraint quadratic-root bound with ``a_i`` the absolute
      constraint value, ``b_i = lam_i``, ``c_i = eps_2 / (m1 ||Pi||_F)``
      (minimum over constraints; an arbitrary large ``big_M`` when a
      constraint has ``a_i = b_i = 0``, and ``big_M`` outright when
      ``m1 = 0``),
    * a quadratic-root bound capped at ``2 eps_3`` with ``a`` the
      Lagrangian-gradient norm, ``b = 2 ||x||`` and ``c`` scaled by the
      stacked constraint-Hessian norm,
    * ``eps_5 / (||x|| ||P_stacked||)``.

    When the stacked norm is zero (no quadratic constraints: a plain QP)
    the latter two degenerate to their ``c -> inf`` limits ``2 eps_3``
    and ``eps_5``.
    """
    p = problem
    e1, e2, e3, e4, e5, e6, e7, e8 = (float(e) for e in epsilons)
    if cons is None:
        cons = p.constraint_values(x, u)
    if grad is None:
        grad = gradient_x(problem, x, lam, gam)

    rho1 = e1 / norms.frob_P0 if norms.frob_P0 != 0.0 else e1

    if p.m1 == 0:
        rho2 = big_M
    else:
        rho2 = math.inf
        for i in range(p.m1):
            nPi = norms.frob_Pi[i]
            ci = e2 / (p.m1 * nPi) if nPi != 0.0 else e2 / p.m1
            ri = _root_rule(abs(float(cons[i])), float(lam[i]), ci)
            rho2 = min(rho2, big_M if ri is None else ri)

    x_norm = float(np.linalg.norm(x))
    if norms.frob_P_stacked == 0.0:
        rho3 = 2.0 * e3
        rho5 = e5
    else:
        r = _root_rule(float(np.linalg.norm(grad)), 2.0 * x_norm, 2.0 * e3 / norms.frob_P_stacked)
        rho3 = 2.0 * e3 if r is None else min(2.0 * e3, r)
        rho5 = e5 if x_norm == 0.0 else e5 / (x_norm * norms.frob_P_stacked)

    rho4 = e4 / norms.frob_Q if norms.frob_Q != 0.0 else e4
    rho6 = e6 / norms.frob_C if norms.frob_C != 0.0 else e6
    rho7 = e7 / norms.frob_A if norms.frob_A != 0.0 else e7
    rho8 = e8 / norms.frob_B if norms.frob_B != 0.0 else e8

    components = np.array([rho1, rho2, rho3, rho4, rho5, rho6, rho7, rho8])
    return float(components.min()), components


def update_epsilons(weights, eps0):
    """Split the budget ``1 - eps0`` across the bounds proportionally to weight."""
    w = np.asarray(weights, dtype=np.float64)
    return (w / w.sum()) * (1.0 - eps0)


def update_weights(rho, components, weights, floor=WEIGHT_FLOOR):
    """Shrink each weight by the ratio of the chosen step to its own bound.

    The binding component keeps its weight (ratio exactly 1); every other
    weight shrinks, shifting budget toward the binding bound next
    iteration.  Weights are floored so no eps_s can underflow to zero.
    """
    ratios = rho / np.asarray(components, dtype=np.float64)
    return np.maximum(np.asarray(weights, dtype=np.float64) * ratios, floor)


# --- solve loop -------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    """One residual-check record: ``iter,rho,res1,res2,objective``."""

    iteration: int
    rho: float
    res1: float
    res2: float
    objective: float


@dataclass
class SolveReport:
    """Outcome of one solve: final iterates, residuals, trace and traffic."""

    status: TerminationStatus
    message: str
    iterations: int
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    gam: np.ndarray
    objective: float
    res1: float
    res2: float
    rho_min: float
    rho_max: float
    rho_final: float
    comm: CommStats
    trace: list = field(default_factory=list)

    def to_json_dict(self):
        def num(v):
            return None if (v is None or not math.isfinite(v)) else float(v)

        return {
            "status": self.status.value,
            "message": self.message,
            "iterations": self.iterations,
            "objective": num(self.objective),
            "res1": num(self.res1),
            "res2": num(self.res2),
            "rho": {"min": num(self.rho_min), "max": num(self.rho_max), "final": num(self.rho_final)},
            "comm": self.comm.as_dict(),
            "x": [float(v) for v in self.x],
            "u": [float(v) for v in self.u],
            "lambda": [float(v) for v in self.lam],
            "gamma": [float(v) for v in self.gam],
        }

    def write_report_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)
            fh.write("\n")

    def write_trace_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,rho,res1,res2,objective\n")
            for row in self.trace:
                fh.write(f"{row.iteration},{row.rho!r},{row.res1!r},{row.res2!r},{row.objective!r}\n")


def analytic_comm_stats(problem, iterations):
    """Exact expected communication volume for a solve of ``iterations`` steps.

    One *pass* (predictor or corrector) issues, for an ``n1``-dimensional
    problem with ``m1`` quadratic and ``m2`` equality constraints:

    * ``m1 + 1`` Hessian matvec reduces of ``n1`` doubles, each scattered
      back to the workers,
    * ``m1`` single-double reduces for the quadratic constraint values,
    * one reduce of ``m2`` doubles for the equality rows (absent when
      ``m2 = 0``).

    A finished solve of ``k`` iterations runs ``2k`` such passes plus the
    one extra predictor pass of the iteration that observed termination.
    """
    p = problem
    passes = 2 * iterations + 1
    reduces_per_pass = (p.m1 + 1) + p.m1 + (1 if p.m2 > 0 else 0)
    bytes_reduced_per_pass = 8 * ((p.m1 + 1) * p.n1 + p.m1 + p.m2)
    return CommStats(
        reduce_ops=passes * reduces_per_pass,
        scatter_ops=passes * (p.m1 + 1),
        bytes_reduced=passes * bytes_reduced_per_pass,
        bytes_scattered=passes * 8 * (p.m1 + 1) * p.n1,
    )


def _pass_products(problem, part, stats, x, u):
    """One matvec sweep at ``(x, u)``: Hessian products, constraint and equality values."""
    p = problem
    Px = [dist_matvec(p.P[i], x, part, stats) for i in range(p.m1 + 1)]
    cons = np.empty(p.m1)
    for i in range(1, p.m1 + 1):
        cons[i - 1] = dist_dot(0.5 * Px[i] + p.q[i], x, part, stats) + float(p.c[i] @ u) + p.r[i]
    if p.m2:
        eq = dist_matvec(p.A, x, part, stats, scatter=False) + p.B @ u - p.b
    else:
        eq = np.zeros(0)
    return Px, cons, eq


def solve(problem: QcqpProblem, config: SolverConfig | None = None, x0=None, u0=None, lam0=None, gam0=None, callback=None) -> SolveReport:
    """Run the predictor-corrector loop until a termination rule fires.

    The starting point may be arbitrary (default all zeros); ``x0`` is
    projected into the box and ``lam0`` clipped nonnegative so the
    iterate invariants hold from the first step.  ``callback(k, x, u,
    lam, gam)``, when given, is invoked once per iteration at the current
    iterate, including the final one; the arrays are live views and must
    be copied if stored.

    Termination: residuals are evaluated every ``trace_every`` iterations
    and classified (converged / infeasibility suspected / unboundedness
    suspected); the loop also stops on iterate overflow (diverged) or
    after ``max_iters`` iterations.  The reported residuals always refer
    to the returned iterate.
    """
    p = problem
    cfg = config if config is not None else SolverConfig()
    norms = compute_norms(p)
    part = partition_columns(p.n1, cfg.n_workers)
    stats = CommStats()

    x = p.project_box(np.zeros(p.n1) if x0 is None else np.asarray(x0, dtype=np.float64).copy())
    u = np.zeros(p.n2) if u0 is None else np.asarray(u0, dtype=np.float64).copy()
    lam = np.maximum(0.0, np.zeros(p.m1) if lam0 is None else np.asarray(lam0, dtype=np.float64))
    gam = np.zeros(p.m2) if gam0 is None else np.asarray(gam0, dtype=np.float64).copy()

    weights = np.ones(N_STEP_COMPONENTS)
    eps_equal = np.full(N_STEP_COMPONENTS, (1.0 - cfg.eps0) / N_STEP_COMPONENTS)
    adaptive = cfg.weight_mode is WeightMode.ADAPTIVE

    trace: list[TraceRow] = []
    residuals: list[ResidualReport] = []
    rho = math.nan
    rho_min = math.inf
    rho_max = -math.inf
    status = None
    message = ""
    res1 = res2 = math.nan
    k = 0

    while True:
        Px, cons, eq = _pass_products(p, part, stats, x, u)

        if not (
            np.isfinite(x).all()
            and np.isfinite(u).all()
            and np.isfinite(lam).all()
            and np.isfinite(gam).all()
        ):
            status = TerminationStatus.DIVERGED
            message = f"non-finite iterate at iteration {k}"
            res1 = res2 = math.nan
            break

        if callback is not None:
            callback(k, x, u, lam, gam)

        # A' gam is worker-local: each worker needs only its own columns
        ATgam = dist_transpose_matvec(p.A, gam, part, stats) if p.m2 else None
        grad_x = gradient_x(p, x, lam, gam, Px=Px, ATgam=ATgam)
        grad_u = gradient_u(p, lam, gam)

        eps = update_epsilons(weights, cfg.eps0) if adaptive else eps_equal
        rho, comps = compute_step_size(p, norms, x, u, lam, gam, eps, cfg.big_M, cons=cons, grad=grad_x)
        rho_min = min(rho_min, rho)
        rho_max = max(rho_max, rho)

        checked_here = False
        if k % cfg.trace_every == 0:
            rep = compute_residuals(p, x, u, lam, gam, grad_x=grad_x, grad_u=grad_u, cons=cons, eq=eq, iteration=k)
            residuals.append(rep)
            res1, res2 = rep.res1, rep.res2
            objective = 0.5 * float(x @ Px[0]) + float(p.q[0] @ x) + float(p.c[0] @ u) + float(p.r[0])
            trace.append(TraceRow(k, rho, res1, res2, objective))
            checked_here = True
            outcome = classify_termination(
                residuals,
                tol=cfg.tol,
                divergence_threshold=cfg.divergence_threshold,
                divergence_window=cfg.divergence_window,
                plateau_rel_change=cfg.plateau_rel_change,
            )
            if outcome is not None:
                status, message = outcome
                break

        if k >= cfg.max_iters:
            if not checked_here:
                rep = compute_residuals(p, x, u, lam, gam, grad_x=grad_x, grad_u=grad_u, cons=cons, eq=eq, iteration=k)
                residuals.append(rep)
                res1, res2 = rep.res1, rep.res2
                objective = 0.5 * float(x @ Px[0]) + float(p.q[0] @ x) + float(p.c[0] @ u) + float(p.r[0])
                trace.append(TraceRow(k, rho, res1, res2, objective))
            status = TerminationStatus.MAX_ITERS_EXCEEDED
            message = f"residual tolerance {cfg.tol:g} not reached in {cfg.max_iters} iterations"
            break

        # predictor updates from the k-th iterates
        mu, nu = dual_predictor(p, x, u, lam, gam, rho, cons=cons, eq=eq)
        y = primal_predictor_x(p, x, lam, gam, rho, grad=grad_x)
        v = primal_predictor_u(p, u, lam, gam, rho, grad=grad_u)

        # corrector pass: same sweep at the predictor point
        Py, cons_y, eq_y = _pass_products(p, part, stats, y, v)
        ATnu = dist_transpose_matvec(p.A, nu, part, stats) if p.m2 else None
        grad_xc = gradient_x(p, y, mu, nu, Px=Py, ATgam=ATnu)
        grad_uc = gradient_u(p, mu, nu)
        x = primal_corrector_x(p, x, y, mu, nu, rho, grad=grad_xc)
        u = primal_corrector_u(p, u, mu, nu, rho, grad=grad_uc)
        lam, gam = dual_corrector(p, lam, gam, y, v, rho, cons=cons_y, eq=eq_y)

        if adaptive:
            weights = update_weights(rho, comps, weights)
        k += 1

    objective = p.objective(x, u) if np.isfinite(x).all() and np.isfinite(u).all() else math.nan
    return SolveReport(
        status=status,
        message=message,
        iterations=k,
        x=x,
        u=u,
        lam=lam,
        gam=gam,
        objective=objective,
        res1=res1,
        res2=res2,
        rho_min=rho_min if rho_min != math.inf else math.nan,
        rho_max=rho_max if rho_max != -math.inf else math.nan,
        rho_final=rho,
        comm=stats,
        trace=trace,
    )
