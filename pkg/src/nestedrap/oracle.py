"""Brute-force reference solvers, used to check the fast solvers.

Everything here favours obvious correctness over speed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    INTEGER,
    LINEAR,
    Allocation,
    Infeasible,
    NotIntegral,
    SizeLimitExceeded,
    validate,
)

DP_STATE_LIMIT = 5_000_000


def _integral(instance):
    vals = (instance.a, instance.b, instance.c, instance.d)
    if not all(np.all(np.floor(v) == v) for v in vals):
        raise NotIntegral("the DP oracle needs integral bounds")
    return [v.astype(np.int64) for v in vals]


def _cost_tables(instance, c, d):
    obj = instance.objective
    exact = obj.kind == LINEAR and np.all(np.floor(obj["p"]) == obj["p"])
    tables = []
    for i in range(instance.n):
        xs = np.arange(c[i], d[i] + 1)
        if exact:
            p = int(obj["p"][i])
            tables.append([p * int(x) for x in xs])
        else:
            tables.append([float(v) for v in obj.value(xs.astype(float), np.full(len(xs), i))])
    return tables


def dp_solve(instance):
    """Exact integer optimum by forward dynamic programming over prefix sums.

    Layer ``i`` maps each reachable prefix sum ``x_1 + ... + x_i`` to its
    cheapest cost; sums outside ``[a_j, b_j]`` are dropped at breakpoints.
    Among equal costs the first plan found (smallest earlier values) is kept.
    """
    a, b, c, d = _integral(instance)
    n = instance.n
    widths = d - c + 1
    span = int(max(abs(b).max(), abs(a).max(), abs(d).sum(), abs(c).sum())) * 2 + 1
    if int(widths.max(initial=1)) * span * n > DP_STATE_LIMIT:
        raise SizeLimitExceeded(f"DP would visit up to {int(widths.max()) * span * n} states")
    if np.any(c > d):
        raise Infeasible("empty box")
    bound_at = {int(s) - 1: j for j, s in enumerate(instance.sigma)}
    tables = _cost_tables(instance, c, d)
    layer = {0: 0}
    back = []
    for i in range(n):
        nxt = {}
        choice = {}
        j = bound_at.get(i)
        for s in sorted(layer):
            cost = layer[s]
            for k, val in enumerate(tables[i]):
                t = s + int(c[i]) + k
                if j is not None and not (a[j] <= t <= b[j]):
                    continue
                nc = cost + val
                if t not in nxt or nc < nxt[t]:
                    nxt[t] = nc
                    choice[t] = int(c[i]) + k
        if not nxt:
            raise Infeasible(f"no reachable prefix sum after variable {i + 1}")
        back.append(choice)
        layer = nxt
    total = int(b[-1])
    if total not in layer:
        raise Infeasible("total resource unreachable")
    x = np.zeros(n)
    s = total
    for i in range(n - 1, -1, -1):
        x[i] = back[i][s]
        s -= int(x[i])
    return Allocation(x, layer[total], INTEGER)


def brute_force(instance):
    """Exhaustive enumeration of the integer grid inside the boxes."""
    a, b, c, d = _integral(instance)
    tables = _cost_tables(instance, c, d)
    best = None
    sig = instance.sigma - 1
    for x in itertools.product(*[range(int(lo), int(hi) + 1) for lo, hi in zip(c, d)]):
        prefix = np.cumsum(x)[sig]
        if np.all(prefix >= a) and np.all(prefix <= b):
            cost = sum(tables[i][x[i] - int(c[i])] for i in range(len(x)))
            if best is None or cost < best[0]:
                best = (cost, x)
    if best is None:
        raise Infeasible("no feasible integer point")
    return Allocation(np.array(best[1], dtype=float), best[0], INTEGER)


def _backward_intervals(instance):
    # prefix values from which the remaining variables can still complete
    n = instance.n
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    lo[n] = hi[n] = instance.total
    bound_at = {int(s): j for j, s in enumerate(instance.sigma)}
    for i in range(n - 1, -1, -1):
        lo[i] = lo[i + 1] - instance.d[i]
        hi[i] = hi[i + 1] - instance.c[i]
        j = bound_at.get(i)
        if j is not None:
            lo[i] = max(lo[i], instance.a[j])
            hi[i] = min(hi[i], instance.b[j])
    lo[0] = max(lo[0], 0.0)
    hi[0] = min(hi[0], 0.0)
    if lo[0] > hi[0] + 1e-12:
        raise Infeasible("no feasible point")
    return lo, hi


def sample_feasible(instance, rng, size=1, integer=False, endpoint_prob=0.25):
    """Random feasible points, built one coordinate at a time.

    Each coordinate is drawn from the range that keeps a completion possible;
    with probability ``endpoint_prob`` per side it snaps to an end of that
    range so that vertices of the feasible set are visited too.
    """
    validate(instance, INTEGER if integer else "continuous")
    lo, hi = _backward_intervals(instance)
    n = instance.n
    out = np.empty((size, n))
    P = np.zeros(size)
    for i in range(n):
        xl = np.maximum(instance.c[i], lo[i + 1] - P)
        xh = np.maximum(np.minimum(instance.d[i], hi[i + 1] - P), xl)
        u = rng.random(size)
        if integer:
            mid = rng.integers(np.round(xl).astype(np.int64), np.round(xh).astype(np.int64) + 1)
        else:
            mid = rng.uniform(xl, xh)
        x = np.where(u < endpoint_prob, xl, np.where(u < 2 * endpoint_prob, xh, mid))
        out[:, i] = x
        P += x
    out[:, -1] += instance.total - out.sum(axis=1)
    return out


@dataclass
class ProjectionVerdict:
    passed: bool
    worst: float
    witness: Optional[np.ndarray] = None

    def __bool__(self):
        return self.passed


def projection_check(instance, point, candidate, samples=1000, tol=1e-8, rng=None):
    """Test whether ``candidate`` is the Euclidean projection of ``point``.

    The projection is characterised by ``<point - cand, z - cand> <= 0`` for
    every feasible ``z``; this checks the inequality on ``samples`` random
    feasible points and returns the worst offender on failure.
    """
    rng = np.random.default_rng(rng)
    point = np.asarray(point, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    Z = sample_feasible(instance, rng, size=samples)
    vals = (Z - candidate) @ (point - candidate)
    k = int(np.argmax(vals))
    worst = float(vals[k])
    if worst > tol:
        return ProjectionVerdict(False, worst, Z[k].copy())
    return ProjectionVerdict(True, worst)
