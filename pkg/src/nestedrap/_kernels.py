"""Compiled inner loops: single-constraint RAP solvers, Adjust, and the MDA core.

Two arithmetic flavours share one recursion.  The integer flavour works on
int64 arrays, where ``y`` units stand for ``x = y * h`` (``h = 1`` for genuine
integer problems, ``h = 1/s`` for scaled continuous ones).  The float flavour
works directly on float64 arrays for linear and quadratic objectives.

Objectives are passed as a family code plus two parameter arrays:

    0 linear     P1 = p
    1 quadratic  P1 = w, P2 = t
    2 quartic    P1 = p
    3 crash      P1 = k, P2 = p
    4 fuel       P1 = p, P2 = c
    5 table      tab[toff[i] + y - tbase[i]] is the unit marginal at y

Status codes: 0 ok, 1 infeasible subproblem, 2 non-convex, 3 Adjust
precondition failure.
"""

import types

import numpy as np
from numba import njit

OK = 0
INFEASIBLE = 1
NONCONVEX = 2
ADJUST_FAILED = 3

# stats layout
ST_RAP, ST_SHORTCUT, ST_NODES, ST_STATUS, ST_V, ST_W, ST_COMBO = range(7)
N_STATS = 8

_MAX_BISECT = 400


# ---------------------------------------------------------------------------
# unit marginals for the integer flavour


@njit(cache=True)
def marginal(fam, i, y, P1, P2, toff, tbase, tab, h):
    """(f_i((y+1)h) - f_i(yh)) / h in closed form."""
    x = y * h
    if fam == 0:
        return P1[i]
    if fam == 1:
        return P1[i] * (2.0 * (x - P2[i]) + h)
    if fam == 2:
        return x * x * x + 1.5 * x * x * h + x * h * h + 0.25 * h * h * h + P1[i]
    if fam == 3:
        return -P2[i] / (x * (x + h))
    if fam == 4:
        c = P2[i]
        xh = x + h
        return -P1[i] * c * c * c * c * (3.0 * x * x + 3.0 * x * h + h * h) / (x * x * x * xh * xh * xh)
    return tab[toff[i] + y - tbase[i]]


@njit(cache=True)
def _guess(fam, i, lam, P1, P2):
    """Point where f_i' equals lam, or nan when unknown."""
    if fam == 0:
        return -np.inf if lam <= P1[i] else np.inf
    if fam == 1:
        return P2[i] + lam / (2.0 * P1[i])
    if fam == 2:
        return np.cbrt(lam - P1[i])
    if fam == 3:
        if lam >= 0.0:
            return np.inf
        return np.sqrt(P2[i] / -lam)
    if fam == 4:
        if lam >= 0.0:
            return np.inf
        c = P2[i]
        return (3.0 * P1[i] * c * c * c * c / -lam) ** 0.25
    return np.nan


@njit(cache=True)
def _first_at_least(fam, i, lam, a, b, P1, P2, toff, tbase, tab, h):
    # smallest y in [a, b) with marginal(y) >= lam, or b
    while a < b:
        mid = a + (b - a) // 2
        if marginal(fam, i, mid, P1, P2, toff, tbase, tab, h) >= lam:
            b = mid
        else:
            a = mid + 1
    return a


@njit(cache=True)
def response(fam, i, lam, lo, hi, P1, P2, toff, tbase, tab, h):
    """Smallest y in [lo, hi] whose unit marginal is >= lam (hi if none)."""
    if lo >= hi:
        return lo
    g = _guess(fam, i, lam, P1, P2)
    if np.isnan(g):
        return _first_at_least(fam, i, lam, lo, hi, P1, P2, toff, tbase, tab, h)
    t = g / h - 0.5
    if not t < hi:
        y = hi
    elif not t > lo:
        y = lo
    else:
        y = np.int64(np.ceil(t))
        if y > hi:
            y = hi
        elif y < lo:
            y = lo
    if y > lo and marginal(fam, i, y - 1, P1, P2, toff, tbase, tab, h) >= lam:
        y -= 1
        k = 0
        while y > lo and k < 3 and marginal(fam, i, y - 1, P1, P2, toff, tbase, tab, h) >= lam:
            y -= 1
            k += 1
        if y > lo and marginal(fam, i, y - 1, P1, P2, toff, tbase, tab, h) >= lam:
            y = _first_at_least(fam, i, lam, lo, y - 1, P1, P2, toff, tbase, tab, h)
    else:
        k = 0
        while y < hi and k < 3 and marginal(fam, i, y, P1, P2, toff, tbase, tab, h) < lam:
            y += 1
            k += 1
        if y < hi and marginal(fam, i, y, P1, P2, toff, tbase, tab, h) < lam:
            y = _first_at_least(fam, i, lam, y + 1, hi, P1, P2, toff, tbase, tab, h)
    return y


@njit(cache=True)
def _fill(st, en, lo, hi, lam, fam, P1, P2, toff, tbase, tab, h, out):
    total = 0
    for i in range(st, en):
        y = response(fam, i, lam, lo[i], hi[i], P1, P2, toff, tbase, tab, h)
        out[i] = y
        total += y
    return total


# ---------------------------------------------------------------------------
# single-constraint RAP solvers; all write out[st:en] and return a status


@njit(cache=True)
def _less(ka, ia, kb, ib):
    return ka < kb or (ka == kb and ia < ib)


@njit(cache=True)
def _select_linear(st, en, lo, hi, need, P1, out, perm):
    # weighted quickselect on (p_i, i): fill cheapest first, lowest index on ties.
    # keys, capacities and indices are partitioned together in contiguous
    # scratch arrays so that the passes stream through memory;
    # variables pinned by their bounds take no part in the selection
    ids = perm[st:en]
    k = 0
    for i in range(st, en):
        if hi[i] > lo[i]:
            ids[k] = i
            k += 1
    keys = np.empty(k)
    caps = np.empty(k, dtype=lo.dtype)
    for j in range(k):
        q = ids[j]
        keys[j] = P1[q]
        caps[j] = hi[q] - lo[q]
    l = 0
    r = k
    while need > 0 and l < r:
        mid = l + (r - l - 1) // 2
        x0, x1, x2 = keys[l], keys[mid], keys[r - 1]
        i0, i1, i2 = ids[l], ids[mid], ids[r - 1]
        if _less(x0, i0, x1, i1):
            if _less(x1, i1, x2, i2):
                pos = mid
            elif _less(x0, i0, x2, i2):
                pos = r - 1
            else:
                pos = l
        else:
            if _less(x0, i0, x2, i2):
                pos = l
            elif _less(x1, i1, x2, i2):
                pos = r - 1
            else:
                pos = mid
        e = r - 1
        keys[pos], keys[e] = keys[e], keys[pos]
        caps[pos], caps[e] = caps[e], caps[pos]
        ids[pos], ids[e] = ids[e], ids[pos]
        pk = keys[e]
        pi = ids[e]
        store = l
        wless = need - need
        for j in range(l, e):
            if _less(keys[j], ids[j], pk, pi):
                keys[store], keys[j] = keys[j], keys[store]
                caps[store], caps[j] = caps[j], caps[store]
                ids[store], ids[j] = ids[j], ids[store]
                wless += caps[store]
                store += 1
        keys[store], keys[e] = keys[e], keys[store]
        caps[store], caps[e] = caps[e], caps[store]
        ids[store], ids[e] = ids[e], ids[store]
        if wless >= need:
            r = store
            continue
        for j in range(l, store):
            q = ids[j]
            out[q] = hi[q]
        need -= wless
        q = ids[store]
        if caps[store] >= need:
            out[q] = lo[q] + need
            need -= need
        else:
            out[q] = hi[q]
            need -= caps[store]
            l = store + 1


@njit(cache=True)
def rap_int_linear(st, en, lo, hi, T, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm):
    slo = 0
    shi = 0
    for i in range(st, en):
        slo += lo[i]
        shi += hi[i]
        out[i] = lo[i]
    if T < slo or T > shi:
        return INFEASIBLE
    _select_linear(st, en, lo, hi, T - slo, P1, out, perm)
    return OK


@njit(cache=True)
def rap_float_linear(st, en, lo, hi, T, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm):
    slo = 0.0
    shi = 0.0
    for i in range(st, en):
        slo += lo[i]
        shi += hi[i]
        out[i] = lo[i]
    tol = 1e-9 * (1.0 + abs(slo) + abs(shi))
    if T < slo - tol or T > shi + tol:
        return INFEASIBLE
    if T <= slo:
        return OK
    if T >= shi:
        for i in range(st, en):
            out[i] = hi[i]
        return OK
    _select_linear(st, en, lo, hi, T - slo, P1, out, perm)
    return OK


@njit(cache=True)
def rap_int_convex(st, en, lo, hi, T, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm):
    """Dual search (bisection safeguarding count interpolation) with counting
    termination and lowest-index tie repair."""
    slo = 0
    shi = 0
    for i in range(st, en):
        slo += lo[i]
        shi += hi[i]
    if T < slo or T > shi:
        return INFEASIBLE
    if T == slo or T == shi:
        for i in range(st, en):
            out[i] = lo[i] if T == slo else hi[i]
        return OK
    lam_lo = np.inf
    lam_hi = -np.inf
    for i in range(st, en):
        if lo[i] < hi[i]:
            m0 = marginal(fam, i, lo[i], P1, P2, toff, tbase, tab, h)
            m1 = marginal(fam, i, hi[i] - 1, P1, P2, toff, tbase, tab, h)
            if m1 < m0:
                return NONCONVEX
            if m0 < lam_lo:
                lam_lo = m0
            if m1 > lam_hi:
                lam_hi = m1
    lam_hi = np.nextafter(lam_hi, np.inf)
    # bracket counts; interpolate on the count, falling back to halving
    # whenever the same end moves twice in a row
    c_lo = slo
    c_hi = shi
    prev = 0
    stuck = False
    for _ in range(_MAX_BISECT):
        mid = lam_lo + 0.5 * (lam_hi - lam_lo)
        if not stuck:
            guess = lam_lo + (lam_hi - lam_lo) * ((T - c_lo) / (c_hi - c_lo))
            if lam_lo < guess and guess < lam_hi:
                mid = guess
        if not (lam_lo < mid and mid < lam_hi):
            break
        cnt = _fill(st, en, lo, hi, mid, fam, P1, P2, toff, tbase, tab, h, out)
        if cnt == T:
            return OK
        side = -1 if cnt < T else 1
        if cnt < T:
            lam_lo = mid
            c_lo = cnt
        else:
            lam_hi = mid
            c_hi = cnt
        stuck = side == prev
        prev = side
    cnt = _fill(st, en, lo, hi, lam_lo, fam, P1, P2, toff, tbase, tab, h, out)
    _fill(st, en, lo, hi, lam_hi, fam, P1, P2, toff, tbase, tab, h, tmp)
    rem = T - cnt
    for i in range(st, en):
        if rem <= 0:
            break
        add = tmp[i] - out[i]
        if add > rem:
            add = rem
        if add > 0:
            out[i] += add
            rem -= add
    if rem != 0:
        return NONCONVEX
    return OK


@njit(cache=True)
def rap_float_quadratic(st, en, lo, hi, T, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm):
    """Sorted-breakpoint sweep of the dual for w_i (x_i - t_i)^2."""
    slo = 0.0
    shi = 0.0
    free = 0
    for i in range(st, en):
        slo += lo[i]
        shi += hi[i]
        if lo[i] < hi[i]:
            free += 1
    tol = 1e-9 * (1.0 + abs(slo) + abs(shi))
    if T < slo - tol or T > shi + tol:
        return INFEASIBLE
    if T <= slo or free == 0:
        for i in range(st, en):
            out[i] = lo[i]
        return OK
    if T >= shi:
        for i in range(st, en):
            out[i] = hi[i]
        return OK
    bp = np.empty(2 * free)
    dslope = np.empty(2 * free)
    k = 0
    for i in range(st, en):
        if lo[i] < hi[i]:
            w2 = 2.0 * P1[i]
            bp[k] = w2 * (lo[i] - P2[i])
            dslope[k] = 1.0 / w2
            bp[k + 1] = w2 * (hi[i] - P2[i])
            dslope[k + 1] = -1.0 / w2
            k += 2
    order = np.argsort(bp)
    S = slo
    slope = 0.0
    mu_prev = bp[order[0]]
    mu = mu_prev
    found = False
    for o in order:
        nxt = bp[o]
        s_next = S + slope * (nxt - mu_prev)
        if s_next >= T and slope > 0.0:
            mu = mu_prev + (T - S) / slope
            found = True
            break
        S = s_next
        slope += dslope[o]
        mu_prev = nxt
    if not found:
        mu = mu_prev
    total = 0.0
    for i in range(st, en):
        if lo[i] < hi[i]:
            v = P2[i] + mu / (2.0 * P1[i])
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            out[i] = v
        else:
            out[i] = lo[i]
        total += out[i]
    diff = T - total
    for i in range(st, en):
        if diff == 0.0:
            break
        if diff > 0.0:
            room = hi[i] - out[i]
            step = diff if diff < room else room
        else:
            room = lo[i] - out[i]
            step = diff if diff > room else room
        out[i] += step
        diff -= step
    return OK


# ---------------------------------------------------------------------------
# penalty shortcut: returns 0 when out was written, 1 to pass through to a RAP
# on [lo_h, hi_h], or INFEASIBLE + 1 when the penalised range cannot absorb T


PASS = 1
SC_INFEASIBLE = 2


@njit(cache=True)
def shortcut_int(st, en, c, d, cb, db, T, leaf, lo_h, hi_h, out):
    k = en - st
    if k == 1:
        out[st] = T
        return 0
    slo = 0
    shi = 0
    for i in range(st, en):
        if leaf:
            lo_h[i] = c[i]
            hi_h[i] = d[i]
        else:
            lo_h[i] = min(max(c[i], cb[i]), db[i])
            hi_h[i] = max(min(d[i], db[i]), cb[i])
        slo += lo_h[i]
        shi += hi_h[i]
    if T < slo:
        D = slo - T
        if leaf:
            q = D // k
            r = D - q * k
            for j in range(k):
                out[st + j] = c[st + j] - q - (1 if j < r else 0)
            return 0
        cap = 0
        for i in range(st, en):
            cap += lo_h[i] - cb[i]
        if cap < D:
            return SC_INFEASIBLE
        for i in range(st, en):
            take = min(lo_h[i] - cb[i], D)
            out[i] = lo_h[i] - take
            D -= take
        return 0
    if T > shi:
        D = T - shi
        if leaf:
            q = D // k
            r = D - q * k
            for j in range(k):
                out[st + j] = d[st + j] + q + (1 if j < r else 0)
            return 0
        cap = 0
        for i in range(st, en):
            cap += db[i] - hi_h[i]
        if cap < D:
            return SC_INFEASIBLE
        for i in range(st, en):
            give = min(db[i] - hi_h[i], D)
            out[i] = hi_h[i] + give
            D -= give
        return 0
    return PASS


@njit(cache=True)
def shortcut_float(st, en, c, d, cb, db, T, leaf, lo_h, hi_h, out):
    k = en - st
    if k == 1:
        out[st] = T
        return 0
    slo = 0.0
    shi = 0.0
    for i in range(st, en):
        if leaf:
            lo_h[i] = c[i]
            hi_h[i] = d[i]
        else:
            lo_h[i] = min(max(c[i], cb[i]), db[i])
            hi_h[i] = max(min(d[i], db[i]), cb[i])
        slo += lo_h[i]
        shi += hi_h[i]
    tol = 1e-12 * (1.0 + abs(slo) + abs(shi))
    if T < slo - tol:
        D = slo - T
        if leaf:
            for i in range(st, en):
                out[i] = c[i] - D / k
            return 0
        cap = 0.0
        for i in range(st, en):
            cap += lo_h[i] - cb[i]
        if cap < D - tol:
            return SC_INFEASIBLE
        for i in range(st, en):
            out[i] = lo_h[i] - D * ((lo_h[i] - cb[i]) / cap)
        return 0
    if T > shi + tol:
        D = T - shi
        if leaf:
            for i in range(st, en):
                out[i] = d[i] + D / k
            return 0
        cap = 0.0
        for i in range(st, en):
            cap += db[i] - hi_h[i]
        if cap < D - tol:
            return SC_INFEASIBLE
        for i in range(st, en):
            out[i] = hi_h[i] + D * ((db[i] - hi_h[i]) / cap)
        return 0
    return PASS


# ---------------------------------------------------------------------------
# Adjust and the recursion


@njit(cache=True)
def adjust(st, en, step, x, xup, rel):
    """Move excess above xup to entries below it, in the given traversal order.

    Traverses [st, en) upward when step > 0, downward otherwise.  Returns
    False when sum(x) > sum(xup) on the range, up to a relative slack ``rel``
    (0 for integer arrays).
    """
    sx = x[st] - x[st]
    su = sx
    for i in range(st, en):
        sx += x[i]
        su += xup[i]
    tol = rel * (1.0 + abs(su))
    if sx > su + tol:
        return False
    delta = sx - sx
    for j in range(en - st):
        i = st + j if step > 0 else en - 1 - j
        if x[i] > xup[i]:
            delta += x[i] - xup[i]
            x[i] = xup[i]
    for j in range(en - st):
        if delta <= 0:
            break
        i = st + j if step > 0 else en - 1 - j
        if x[i] < xup[i]:
            dd = xup[i] - x[i]
            if dd > delta:
                dd = delta
            x[i] += dd
            delta -= dd
    if delta > tol:
        return False
    return True


@njit(cache=True)
def postorder(m):
    """Recursion nodes (v, w) of the halving split, children before parents."""
    nodes = np.empty((2 * m - 1, 2), dtype=np.int64)
    stack = np.empty((2 * m, 2), dtype=np.int64)
    sp = 0
    stack[0, 0] = 1
    stack[0, 1] = m
    sp = 1
    k = 0
    while sp > 0:
        sp -= 1
        v = stack[sp, 0]
        w = stack[sp, 1]
        nodes[k, 0] = v
        nodes[k, 1] = w
        k += 1
        if v < w:
            u = (v + w) // 2
            stack[sp, 0] = v
            stack[sp, 1] = u
            stack[sp + 1, 0] = u + 1
            stack[sp + 1, 1] = w
            sp += 2
    return nodes[::-1].copy()


# bound per specialisation in _specialise
RAP = SHORTCUT = None


def _mda_core(sig0, A, Bv, c, d, fam, P1, P2, toff, tbase, tab, h,
              X, Y, cb, db, lo_h, hi_h, tmp, perm, stats, rel):
    """Run the decomposition bottom-up; X[k] receives the combo-k solutions.

    ``sig0`` is the breakpoint array with a leading 0; ``A`` and ``Bv`` are
    the nested bounds with the empty-prefix entry 0 first.  Combo k = 2l + r
    selects L from (A, Bv)[l] at v-1 and R from (A, Bv)[r] at w.
    """
    m = sig0.shape[0] - 1
    nodes = postorder(m)
    for t in range(nodes.shape[0]):
        v = nodes[t, 0]
        w = nodes[t, 1]
        st = sig0[v - 1]
        en = sig0[w]
        stats[ST_NODES] += 1
        leaf = v == w
        if not leaf:
            u = (v + w) // 2
            mid = sig0[u]
            for l in range(2):
                if not adjust(st, mid, 1, X[2 * l], X[2 * l + 1], rel):
                    stats[ST_STATUS] = ADJUST_FAILED
                    stats[ST_V] = v
                    stats[ST_W] = u
                    stats[ST_COMBO] = 2 * l
                    return ADJUST_FAILED
            for r in range(2):
                if not adjust(mid, en, -1, X[2 + r], X[r], rel):
                    stats[ST_STATUS] = ADJUST_FAILED
                    stats[ST_V] = u + 1
                    stats[ST_W] = w
                    stats[ST_COMBO] = 2 + r
                    return ADJUST_FAILED
            for k in range(4):
                for i in range(st, en):
                    Y[k, i] = X[k, i]
        else:
            mid = en
        for k in range(4):
            l = k >> 1
            r = k & 1
            L = A[v - 1] if l == 0 else Bv[v - 1]
            R = A[w] if r == 0 else Bv[w]
            if not leaf:
                for i in range(st, mid):
                    cb[i] = Y[2 * l, i]
                    db[i] = Y[2 * l + 1, i]
                for i in range(mid, en):
                    cb[i] = Y[2 + r, i]
                    db[i] = Y[r, i]
            stats[ST_RAP] += 1
            out = X[k]
            code = SHORTCUT(st, en, c, d, cb, db, R - L, leaf, lo_h, hi_h, out)
            if code == 0:
                stats[ST_SHORTCUT] += 1
                continue
            if code == SC_INFEASIBLE:
                status = INFEASIBLE
            else:
                status = RAP(st, en, lo_h, hi_h, R - L, fam, P1, P2, toff, tbase, tab, h, out, tmp, perm)
            if status != OK:
                stats[ST_STATUS] = status
                stats[ST_V] = v
                stats[ST_W] = w
                stats[ST_COMBO] = k
                return status
    return OK



def _specialise(name, rap, shortcut):
    # One compiled copy of the recursion per RAP solver.  The solver is bound
    # as a plain global rather than passed as an argument, so each copy can
    # be cached on disk.
    scope = dict(globals(), RAP=rap, SHORTCUT=shortcut)
    fn = types.FunctionType(_mda_core.__code__, scope, name)
    fn.__qualname__ = name
    fn.__doc__ = _mda_core.__doc__
    return njit(cache=True)(fn)


mda_int_linear = _specialise("mda_int_linear", rap_int_linear, shortcut_int)
mda_int_convex = _specialise("mda_int_convex", rap_int_convex, shortcut_int)
mda_float_linear = _specialise("mda_float_linear", rap_float_linear, shortcut_float)
mda_float_quadratic = _specialise("mda_float_quadratic", rap_float_quadratic, shortcut_float)
