"""Monotonic decomposition over the nested constraints.

The constraint indices ``1..m`` are split in halves recursively.  A node
``(v, w)`` owns the variables ``sigma[v-1]+1 .. sigma[w]`` and solves four
subproblems, one per choice of left prefix bound ``L in {a_{v-1}, b_{v-1}}``
and right prefix bound ``R in {a_w, b_w}``.  The children's solutions bracket
an optimal solution of each parent subproblem coordinate-wise, so the nested
constraints inside the node are replaced by per-variable bounds and every
node reduces to a single-constraint allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from . import _kernels as K
from .model import (
    CONTINUOUS,
    INTEGER,
    LINEAR,
    QUADRATIC,
    AdjustPreconditionError,
    Allocation,
    InfeasibleSubproblem,
    NonConvexDetected,
    RapNcError,
    ScaledInfeasible,
    SolverConfig,
    SolveStats,
    check_feasibility,
    evaluate,
    validate,
)
from .rap import kernel_objective

_INT_LIMIT = 2 ** 62


def adjust(V, x, x_up):
    """Cap ``x`` at ``x_up`` on the positions ``V`` (0-based, in traversal
    order), handing the removed excess to entries below their cap in the same
    order.  The sum over ``V`` is preserved; entries outside ``V`` are
    untouched.  Requires ``sum(x[V]) <= sum(x_up[V])``.
    """
    x = np.array(x, copy=True)
    x_up = np.asarray(x_up)
    V = list(V)
    if x[V].sum() > x_up[V].sum():
        raise AdjustPreconditionError("sum of x exceeds sum of x_up on V")
    delta = 0
    for i in V:
        if x[i] > x_up[i]:
            delta += x[i] - x_up[i]
            x[i] = x_up[i]
    for i in V:
        if delta <= 0:
            break
        if x[i] < x_up[i]:
            step = min(x_up[i] - x[i], delta)
            x[i] += step
            delta -= step
    return x


@dataclass
class QuadSolutionSet:
    """The four subproblem solutions of a node, over variables ``start..stop-1``."""

    start: int
    stop: int
    x_aa: np.ndarray
    x_ab: np.ndarray
    x_ba: np.ndarray
    x_bb: np.ndarray
    stats: SolveStats

    def __getitem__(self, key):
        return {"aa": self.x_aa, "ab": self.x_ab, "ba": self.x_ba, "bb": self.x_bb}[key]


@dataclass
class KktCertificate:
    phi: np.ndarray
    kappa: np.ndarray
    lam: np.ndarray

    @property
    def lambda_(self):
        return self.lam


@dataclass
class Violation:
    """First condition that no choice of multipliers can satisfy."""

    kind: str
    index: int
    detail: str

    def __bool__(self):
        return False


# ---------------------------------------------------------------------------
# driver around the compiled recursion


def _run_core(sigma, a, b, c, d, objective, *, integer, h=1.0, v=1, w=None):
    """Run nodes (v', w') of the subtree rooted at (v, w); returns rows X and stats."""
    m = len(sigma)
    w = m if w is None else w
    dtype = np.int64 if integer else np.float64
    sig0 = np.concatenate([[0], np.asarray(sigma, dtype=np.int64)])
    st, en = int(sig0[v - 1]), int(sig0[w])
    sub_sig = np.ascontiguousarray(sig0[v - 1:w + 1] - st)
    A = np.concatenate([[0], np.asarray(a)]).astype(dtype)[v - 1:w + 1].copy()
    B = np.concatenate([[0], np.asarray(b)]).astype(dtype)[v - 1:w + 1].copy()
    cc = np.ascontiguousarray(np.asarray(c)[st:en], dtype=dtype)
    dd = np.ascontiguousarray(np.asarray(d)[st:en], dtype=dtype)
    n = en - st
    sub_obj = objective if (st == 0 and en == len(c)) else objective.restrict(np.arange(st, en))
    if integer:
        scale = int(round(1.0 / h))
        fam, P1, P2, toff, tbase, tab = kernel_objective(sub_obj, n, cc, dd, scale)
        core = K.mda_int_linear if sub_obj.kind == LINEAR else K.mda_int_convex
        rel = 0.0
    else:
        if sub_obj.kind not in (LINEAR, QUADRATIC):
            raise ValueError("the float path handles linear and quadratic objectives only")
        fam, P1, P2, toff, tbase, tab = kernel_objective(sub_obj, n)
        core = K.mda_float_linear if sub_obj.kind == LINEAR else K.mda_float_quadratic
        rel = 1e-9
    X = np.zeros((4, n), dtype=dtype)
    Y = np.zeros((4, n), dtype=dtype)
    cb, db, lo_h, hi_h, tmp = (np.zeros(n, dtype=dtype) for _ in range(5))
    perm = np.zeros(n, dtype=np.int64)
    stats = np.zeros(K.N_STATS, dtype=np.int64)
    status = core(sub_sig, A, B, cc, dd, fam, P1, P2, toff, tbase, tab, float(h),
                  X, Y, cb, db, lo_h, hi_h, tmp, perm, stats, rel)
    if status != K.OK:
        vv = int(stats[K.ST_V]) + v - 1
        ww = int(stats[K.ST_W]) + v - 1
        combo = "ab"[int(stats[K.ST_COMBO]) >> 1] + "ab"[int(stats[K.ST_COMBO]) & 1]
        where = f"node (v={vv}, w={ww}), bounds (L,R)=({combo[0]},{combo[1]})"
        if status == K.INFEASIBLE:
            raise InfeasibleSubproblem(f"subproblem infeasible at {where}", witness=(vv, ww, combo))
        if status == K.NONCONVEX:
            raise NonConvexDetected(f"marginal costs decrease at {where}")
        raise AdjustPreconditionError(f"ordering repair precondition failed at {where}")
    info = SolveStats(int(stats[K.ST_RAP]), int(stats[K.ST_SHORTCUT]), int(stats[K.ST_NODES]),
                      int(round(1.0 / h)) if integer else 1)
    return X, info, st, en


def mda(instance, v=1, w=None, config=None):
    """Four solutions of the subtree ``(v, w)`` (1-based constraint indices).

    Continuous instances with non-quadratic, non-linear objectives are solved
    on the scaled integer grid, as in :func:`solve_continuous`.
    """
    config = config or SolverConfig()
    w = instance.m if w is None else w
    if not 1 <= v <= w <= instance.m:
        raise ValueError("need 1 <= v <= w <= m")
    validate(instance)
    kind = instance.objective.kind
    if instance.mode == INTEGER:
        X, info, st, en = _run_core(instance.sigma, instance.a, instance.b, instance.c, instance.d,
                                    instance.objective, integer=True, v=v, w=w)
        X = X.astype(float)
    elif kind in (LINEAR, QUADRATIC):
        X, info, st, en = _run_core(instance.sigma, instance.a, instance.b, instance.c, instance.d,
                                    instance.objective, integer=False, v=v, w=w)
    else:
        s = scale_factor(instance.n, config.epsilon)
        a, b, c, d = _scaled_bounds(instance, s)
        X, info, st, en = _run_core(instance.sigma, a, b, c, d, instance.objective,
                                    integer=True, h=1.0 / s, v=v, w=w)
        X = X / s
    return QuadSolutionSet(st, en, X[0].copy(), X[1].copy(), X[2].copy(), X[3].copy(), info)


# ---------------------------------------------------------------------------
# integer solve


def _finish(instance, x, mode, info, tol):
    report = check_feasibility(instance, x, tol=tol)
    if not report.ok(tol):
        raise AdjustPreconditionError(f"solver returned an infeasible point: {report}")
    return Allocation(x, evaluate(instance.objective, x), mode, info)


def solve_integer(instance, config=None):
    """Exact integer optimum (the (L, R) = (0, B) root solution)."""
    validate(instance, INTEGER)
    X, info, _, _ = _run_core(instance.sigma, instance.a, instance.b, instance.c, instance.d,
                              instance.objective, integer=True)
    x = X[3].astype(float)
    return _finish(instance, x, INTEGER, info, 0.0)


# ---------------------------------------------------------------------------
# continuous solve


def scale_factor(n, epsilon):
    """Grid refinement s = ceil(n / epsilon)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return int(math.ceil(n / epsilon))


def _snap(values, s, direction):
    v = np.asarray(values, dtype=float) * s
    r = np.round(v)
    near = np.abs(v - r) <= 4 * np.spacing(np.maximum(np.abs(v), 1.0))
    if direction == "up":
        out = np.where(near, r, np.ceil(v))
    elif direction == "down":
        out = np.where(near, r, np.floor(v))
    else:
        out = r
    return out


def _scaled_bounds(instance, s):
    a, b = instance.a, instance.b
    eq = a == b
    sa = np.where(eq, _snap(a, s, "nearest"), _snap(a, s, "up"))
    sb = np.where(eq, _snap(b, s, "nearest"), _snap(b, s, "down"))
    sc = _snap(instance.c, s, "up")
    sd = _snap(instance.d, s, "down")
    big = max(np.abs(sa).max(), np.abs(sb).max(), np.abs(sc).sum(), np.abs(sd).sum())
    if not big < _INT_LIMIT / 4:
        raise ScaledInfeasible(f"scale factor {s} overflows 64-bit integers; use a larger epsilon")
    out = [arr.astype(np.int64) for arr in (sa, sb, sc, sd)]
    scaled = instance.replace(a=out[0], b=out[1], c=out[2], d=out[3], mode=INTEGER)
    try:
        validate(scaled, INTEGER)
    except RapNcError as exc:
        raise ScaledInfeasible(
            f"rounding to the grid 1/{s} makes the instance infeasible ({exc}); "
            "reduce epsilon or widen the bounds"
        ) from exc
    return out


def _polish_total(instance, x, tol=0.0):
    """Shift the tiny grid-rounding gap in the total back into ``x``.

    Walks variables from the last one down, moving each as far as its box and
    every nested bound containing it allow.
    """
    x = x.copy()
    gap = instance.total - x.sum()
    if gap == 0:
        return x
    sigma = instance.sigma
    prefix = np.cumsum(x)[sigma - 1]
    slack = (instance.b - prefix) if gap > 0 else (prefix - instance.a)
    j = instance.m - 2
    room_nested = np.inf
    moved = 0.0
    for i in range(instance.n - 1, -1, -1):
        while j >= 0 and sigma[j] - 1 >= i:
            room_nested = min(room_nested, slack[j] + moved)
            j -= 1
        if gap > 0:
            room = min(instance.d[i] - x[i], room_nested - moved)
            step = min(gap, max(room, 0.0))
        else:
            room = min(x[i] - instance.c[i], room_nested - moved)
            step = -min(-gap, max(room, 0.0))
        if step:
            x[i] += step
            gap -= step
            moved += abs(step)
        if abs(gap) <= tol:
            break
    return x


def solve_scaled(instance, s, config=None):
    """Solve exactly on the grid of spacing ``1/s`` and map back.

    Bounds are rounded inward to the grid (equal bound pairs to the nearest
    grid point) and the objective is evaluated at ``y / s``.
    """
    config = config or SolverConfig()
    validate(instance, CONTINUOUS)
    s = int(s)
    a, b, c, d = _scaled_bounds(instance, s)
    X, info, _, _ = _run_core(instance.sigma, a, b, c, d, instance.objective,
                              integer=True, h=1.0 / s)
    x = _polish_total(instance, X[3] / s)
    tol = config.feasibility_tol * max(1.0, abs(instance.total))
    return _finish(instance, x, CONTINUOUS, info, tol)


def solve_continuous(instance, epsilon=None, config=None):
    """Approximate continuous optimum within ``epsilon`` per coordinate.

    Linear and quadratic objectives are solved directly in floating point.
    Other families are solved exactly on the grid of spacing ``1/s`` with
    ``s = ceil(n / epsilon)``; the proximity bound between grid and continuous
    optima makes the result an ``epsilon``-approximation.
    """
    config = config or SolverConfig()
    eps = config.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    validate(instance, CONTINUOUS)
    tol = config.feasibility_tol * max(1.0, abs(instance.total))
    if instance.n == 1:
        x = np.array([instance.total])
        return _finish(instance, x, CONTINUOUS, SolveStats(4, 4, 1, 1), tol)
    if instance.objective.kind not in (LINEAR, QUADRATIC):
        return solve_scaled(instance, scale_factor(instance.n, eps), config)
    X, info, _, _ = _run_core(instance.sigma, instance.a, instance.b, instance.c, instance.d,
                              instance.objective, integer=False)
    x = _polish_total(instance, X[3].copy())
    return _finish(instance, x, CONTINUOUS, info, tol)


def solve(instance, config=None):
    """Dispatch on the instance mode."""
    if instance.mode == INTEGER:
        return solve_integer(instance, config)
    return solve_continuous(instance, config=config)


# ---------------------------------------------------------------------------
# optimality certificate


def verify_kkt(instance, x, tol=1e-7, penalty_M=None):
    """Build multipliers proving ``x`` optimal, or name the first obstruction.

    Each block of variables between consecutive breakpoints shares the value
    ``theta_j = sum_{k >= j} (kappa_k - lambda_k)``; every variable needs
    ``theta`` inside its derivative interval (widened by the box normal cone
    at an active bound, or by ``penalty_M`` if given).  Consecutive blocks may
    differ only in the direction the active nested bound between them allows.
    """
    x = np.asarray(x, dtype=float)
    report = check_feasibility(instance, x, tol=tol * max(1.0, abs(instance.total)))
    if not report.ok(tol * max(1.0, abs(instance.total))):
        return Violation("infeasible", 0, f"x is not feasible: {report}")
    sig0 = np.concatenate([[0], instance.sigma])
    m = instance.m
    c, d = instance.c, instance.d
    g = instance.objective.derivative(np.clip(x, c, d) if instance.objective.needs_positive_domain else x)
    slack_g = tol * (1.0 + np.abs(g))
    at_c = np.abs(x - c) <= tol * (1.0 + np.abs(c))
    at_d = np.abs(x - d) <= tol * (1.0 + np.abs(d))
    wide = np.inf if penalty_M is None else float(penalty_M)
    lo_i = np.where(at_c, g - wide, g) - slack_g
    hi_i = np.where(at_d, g + wide, g) + slack_g
    Ilo = np.empty(m)
    Ihi = np.empty(m)
    for j in range(m):
        sl = slice(sig0[j], sig0[j + 1])
        Ilo[j] = lo_i[sl].max()
        Ihi[j] = hi_i[sl].min()
        if Ilo[j] > Ihi[j]:
            blk_lo = int(np.argmax(lo_i[sl])) + sig0[j]
            blk_hi = int(np.argmin(hi_i[sl])) + sig0[j]
            first = int(min(blk_lo, blk_hi)) + 1
            return Violation("stationarity", first,
                             f"variables {blk_lo + 1} and {blk_hi + 1} need different multipliers "
                             f"(derivatives {g[blk_lo]:.6g} vs {g[blk_hi]:.6g})")
    prefix = np.cumsum(x)[instance.sigma - 1]
    act_lo = np.abs(prefix - instance.a) <= tol * (1.0 + np.abs(instance.a))
    act_hi = np.abs(prefix - instance.b) <= tol * (1.0 + np.abs(instance.b))
    Flo = Ilo.copy()
    Fhi = Ihi.copy()
    for j in range(m - 2, -1, -1):
        if act_lo[j] and act_hi[j]:
            lo, hi = -np.inf, np.inf
        elif act_lo[j]:
            lo, hi = Flo[j + 1], np.inf
        elif act_hi[j]:
            lo, hi = -np.inf, Fhi[j + 1]
        else:
            lo, hi = Flo[j + 1], Fhi[j + 1]
        Flo[j] = max(Flo[j], lo)
        Fhi[j] = min(Fhi[j], hi)
        if Flo[j] > Fhi[j]:
            return Violation("complementarity", j + 1,
                             f"nested constraint {j + 1} cannot carry the multiplier gap "
                             f"between blocks {j + 1} and {j + 2}")
    theta = np.empty(m)
    theta[0] = min(max(0.0, Flo[0]), Fhi[0])
    for j in range(1, m):
        theta[j] = min(max(theta[j - 1], Flo[j]), Fhi[j])
    diff = np.append(theta[:-1] - theta[1:], theta[-1])
    kappa = np.maximum(diff, 0.0)
    lam = np.maximum(-diff, 0.0)
    phi = np.repeat(theta, np.diff(sig0))
    return KktCertificate(phi, kappa, lam)
