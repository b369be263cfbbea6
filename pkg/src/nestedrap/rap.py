"""Single-constraint resource allocation: minimise sum f_i(x_i), sum x_i = R - L.

These are the subproblems solved at every node of the decomposition.  Each
variable carries its original box ``[c_i, d_i]`` and an effective range
``[cbar_i, dbar_i]``; outside the box the objective continues with a steep
linear penalty, so the subproblem stays solvable when the effective range
does not meet the box.  :func:`clamp_shortcut` resolves those penalised cases
in closed form and otherwise hands back hard bounds for a regular solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .model import (
    CONTINUOUS,
    CUSTOM,
    CRASH,
    FUEL,
    INTEGER,
    LINEAR,
    MODES,
    QUADRATIC,
    QUARTIC,
    Allocation,
    InfeasibleSubproblem,
    NonConvexDetected,
    NotIntegral,
    ObjectiveSpec,
    SizeLimitExceeded,
)

FAMILY_CODES = {LINEAR: 0, QUADRATIC: 1, QUARTIC: 2, CRASH: 3, FUEL: 4, CUSTOM: 5}
TABLE_LIMIT = 20_000_000

_EMPTY_I = np.zeros(1, dtype=np.int64)
_EMPTY_F = np.zeros(1)


def kernel_objective(objective, n, lo=None, hi=None, scale=1):
    """Family code and parameter arrays in the layout the kernels expect.

    Custom objectives are tabulated: the unit marginal
    ``scale * (f((y+1)/scale) - f(y/scale))`` is stored for every integer
    ``y`` in ``[lo_i, hi_i)``.
    """
    fam = FAMILY_CODES[objective.kind]
    P = objective.params
    zeros = np.zeros(n)
    if objective.kind == LINEAR:
        P1, P2 = P["p"], zeros
    elif objective.kind == QUADRATIC:
        P1, P2 = P["w"], P["t"]
    elif objective.kind == QUARTIC:
        P1, P2 = P["p"], zeros
    elif objective.kind == CRASH:
        P1, P2 = P["k"], P["p"]
    elif objective.kind == FUEL:
        P1, P2 = P["p"], P["c"]
    else:
        toff, tbase, tab = marginal_table(objective, lo, hi, scale)
        return fam, zeros, zeros, toff, tbase, tab
    return (fam, np.ascontiguousarray(P1, dtype=float), np.ascontiguousarray(P2, dtype=float),
            _EMPTY_I, _EMPTY_I, _EMPTY_F)


def marginal_table(objective, lo, hi, scale=1):
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    if total > TABLE_LIMIT:
        raise SizeLimitExceeded(
            f"custom objective needs {total} tabulated marginals (limit {TABLE_LIMIT}); "
            "use a coarser epsilon"
        )
    toff = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    idx = np.repeat(np.arange(len(lo)), counts)
    y = lo[idx] + (np.arange(total) - toff[idx])
    f0 = objective.value(y / scale, idx)
    f1 = objective.value((y + 1) / scale, idx)
    tab = np.ascontiguousarray(scale * (f1 - f0), dtype=float)
    if not np.all(np.isfinite(tab)):
        raise NonConvexDetected("custom objective is not finite on its box")
    if total > 1:
        same = idx[1:] == idx[:-1]
        drop = tab[:-1] - tab[1:]
        slack = 1e-9 * (1.0 + np.abs(tab[1:]))
        bad = np.flatnonzero(same & (drop > slack))
        if bad.size:
            i = int(idx[bad[0]])
            raise NonConvexDetected(f"forward differences of f_{i + 1} decrease near x={y[bad[0]] / scale}")
    return toff, lo.copy(), tab


@dataclass
class RapSubproblem:
    """One subproblem: variables with boxes ``[c, d]``, effective range
    ``[cbar, dbar]`` (``None`` for unbounded), and sum ``R - L``."""

    objective: ObjectiveSpec
    c: np.ndarray
    d: np.ndarray
    L: float
    R: float
    cbar: Optional[np.ndarray] = None
    dbar: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if (self.cbar is None) != (self.dbar is None):
            raise ValueError("give both cbar and dbar or neither")
        if self.cbar is not None:
            self.cbar = np.atleast_1d(np.asarray(self.cbar, dtype=float))
            self.dbar = np.atleast_1d(np.asarray(self.dbar, dtype=float))
            if np.any(self.cbar > self.dbar):
                raise ValueError("cbar must not exceed dbar")
        if self.objective.size is not None and self.objective.size != len(self.c):
            raise ValueError("objective size does not match the boxes")

    @property
    def size(self):
        return len(self.c)

    @property
    def total(self):
        return self.R - self.L

    @property
    def unbounded(self):
        return self.cbar is None


@dataclass
class PassThrough:
    """No penalty regime: solve the RAP with hard bounds ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray


def _arrays(sub, mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    n = sub.size
    cb = sub.cbar if sub.cbar is not None else np.zeros(n)
    db = sub.dbar if sub.dbar is not None else np.zeros(n)
    vals = [sub.c, sub.d, cb, db]
    T = sub.total
    if mode == INTEGER:
        finite = [v for v in vals if np.all(np.isfinite(v))]
        if len(finite) != 4 or any(np.any(np.floor(v) != v) for v in vals) or T != np.floor(T):
            raise NotIntegral("integer mode needs integral, finite bounds and total")
        return [v.astype(np.int64) for v in vals], int(T)
    return [np.ascontiguousarray(v, dtype=float) for v in vals], float(T)


def _check_range(sub):
    if sub.unbounded:
        return
    lo, hi = sub.cbar.sum(), sub.dbar.sum()
    tol = 1e-9 * (1.0 + abs(lo) + abs(hi))
    if sub.total < lo - tol or sub.total > hi + tol:
        raise InfeasibleSubproblem(
            f"R - L = {sub.total:.12g} outside [{lo:.12g}, {hi:.12g}]", witness=(sub.L, sub.R)
        )


def _value(sub, x):
    """Penalised objective: the box extension with slope 1 + Lipschitz."""
    inside = np.clip(x, sub.c, sub.d)
    M = 1.0 + sub.objective.lipschitz(sub.c, sub.d)
    return float(np.sum(sub.objective.value(inside)) + M * np.sum(np.abs(x - inside)))


def _finish(sub, x, mode):
    x = np.asarray(x, dtype=float)
    return Allocation(x, _value(sub, x), mode)


def clamp_shortcut(sub, mode=CONTINUOUS):
    """Resolve the penalised cases of a subproblem in closed form.

    If the clipped box ``[clip(c, cbar, dbar), clip(d, cbar, dbar)]`` cannot
    hold ``R - L``, every variable sits at its clipped bound and the shortfall
    or excess is shared: in proportion to the remaining room toward
    ``cbar``/``dbar`` in continuous mode, lowest index first in integer mode
    (uniformly when the range is unbounded).  Otherwise returns
    :class:`PassThrough` with the clipped box as hard bounds.
    """
    _check_range(sub)
    (c, d, cb, db), T = _arrays(sub, mode)
    n = sub.size
    lo_h, hi_h, out = (np.empty(n, dtype=c.dtype) for _ in range(3))
    fn = K.shortcut_int if mode == INTEGER else K.shortcut_float
    code = fn(0, n, c, d, cb, db, T, sub.unbounded, lo_h, hi_h, out)
    if code == K.SC_INFEASIBLE:
        raise InfeasibleSubproblem("penalised range cannot absorb R - L", witness=(sub.L, sub.R))
    if code == 0:
        return _finish(sub, out, mode)
    return PassThrough(lo_h.astype(float), hi_h.astype(float))


def _solve(sub, mode, kernel, h=1.0):
    _check_range(sub)
    (c, d, cb, db), T = _arrays(sub, mode)
    n = sub.size
    lo_h, hi_h, out, tmp = (np.empty(n, dtype=c.dtype) for _ in range(4))
    fn = K.shortcut_int if mode == INTEGER else K.shortcut_float
    code = fn(0, n, c, d, cb, db, T, sub.unbounded, lo_h, hi_h, out)
    if code == K.SC_INFEASIBLE:
        raise InfeasibleSubproblem("penalised range cannot absorb R - L", witness=(sub.L, sub.R))
    if code == 0:
        return _finish(sub, out, mode)
    if kernel is None:
        return _finish(sub, _continuous_convex(sub.objective, lo_h, hi_h, T), mode)
    fam, P1, P2, toff, tbase, tab = kernel_objective(sub.objective, n, lo_h, hi_h)
    perm = np.empty(n, dtype=np.int64)
    status = kernel(0, n, lo_h, hi_h, T, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm)
    if status == K.INFEASIBLE:
        raise InfeasibleSubproblem("subproblem infeasible", witness=(sub.L, sub.R))
    if status == K.NONCONVEX:
        raise NonConvexDetected("marginal costs decrease")
    return _finish(sub, out, mode)


def solve_rap_linear(sub, mode=INTEGER):
    """Linear costs: fill the cheapest variables first (weighted selection)."""
    if sub.objective.kind != LINEAR:
        raise ValueError("solve_rap_linear needs a linear objective")
    return _solve(sub, mode, K.rap_int_linear if mode == INTEGER else K.rap_float_linear)


def solve_rap_quadratic(sub, mode=INTEGER):
    """Quadratic costs: breakpoint sweep (continuous) or marginal bisection."""
    if sub.objective.kind != QUADRATIC:
        raise ValueError("solve_rap_quadratic needs a quadratic objective")
    return _solve(sub, mode, K.rap_int_convex if mode == INTEGER else K.rap_float_quadratic)


def solve_rap_convex(sub, mode=INTEGER):
    """Any convex family, by bisection on the multiplier of the sum constraint."""
    return _solve(sub, mode, K.rap_int_convex if mode == INTEGER else None)


def _continuous_convex(objective, lo, hi, T, iters=200):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    free = lo < hi
    x = lo.copy()
    if not free.any():
        return x
    idx = np.flatnonzero(free)
    flo, fhi = lo[free], hi[free]
    der = objective.derivative

    def respond(lam):
        a, b = flo.copy(), fhi.copy()
        for _ in range(80):
            mid = 0.5 * (a + b)
            below = der(mid, idx) < lam
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        y = 0.5 * (a + b)
        y = np.where(der(flo, idx) >= lam, flo, y)
        return np.where(der(fhi, idx) < lam, fhi, y)

    fixed = lo[~free].sum()
    lam_lo = float(np.min(der(flo, idx)))
    lam_hi = float(np.max(der(fhi, idx)))
    for _ in range(iters):
        mid = 0.5 * (lam_lo + lam_hi)
        if not lam_lo < mid < lam_hi:
            break
        if fixed + respond(mid).sum() < T:
            lam_lo = mid
        else:
            lam_hi = mid
    y = respond(0.5 * (lam_lo + lam_hi))
    diff = T - fixed - y.sum()
    for j in range(len(y)):
        room = (fhi[j] - y[j]) if diff > 0 else (flo[j] - y[j])
        step = min(diff, room) if diff > 0 else max(diff, room)
        y[j] += step
        diff -= step
    x[free] = y
    return x
