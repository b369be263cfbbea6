"""Random benchmark instances and a timing harness.

Instances follow a simple recipe: boxes ``c_i ~ U[0.1, 0.5]`` and
``d_i ~ U[0.5, 0.9]``, two random walks ``v`` and ``w`` with steps drawn
inside the boxes, and nested bounds ``a = min(v, w)``, ``b = max(v, w)``.
Both walks are feasible trajectories, so every instance is feasible.  The
total is pinned to ``max(v_n, w_n)``.

Randomness comes from numpy's PCG64; each quantity has its own child stream of
``SeedSequence(seed)`` so adding a quantity never shifts the others.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .mda import solve_continuous, solve_scaled
from .model import CONTINUOUS, INTEGER, NestedInstance, crash, fuel, linear, quadratic, quartic

FAMILIES = ("linear", "quadratic", "F", "crash", "fuel")
CSV_COLUMNS = ("n", "m", "family", "seed", "mode", "time_seconds", "objective",
               "rap_solves", "shortcut_hits")
_STREAMS = ("c", "d", "step_v", "step_w", "p", "k", "breakpoints", "target")
INTEGER_SCALE = 10 ** 6


@dataclass(frozen=True)
class GenSpec:
    n: int
    m: int
    seed: int = 0
    family: str = "linear"

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")


@dataclass
class BenchRecord:
    n: int
    m: int
    family: str
    seed: int
    mode: str
    time_seconds: float
    objective: float
    rap_solves: int
    shortcut_hits: int

    def row(self):
        return [getattr(self, k) for k in CSV_COLUMNS]


@dataclass
class BenchResult:
    records: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(_STREAMS, children)}


def gen_instance(spec, mode=CONTINUOUS):
    """Deterministic random instance for ``spec``."""
    n, m = spec.n, spec.m
    g = _streams(spec.seed)
    c = g["c"].uniform(0.1, 0.5, n)
    d = g["d"].uniform(0.5, 0.9, n)
    v = np.cumsum(g["step_v"].uniform(c, d))
    w = np.cumsum(g["step_w"].uniform(c, d))
    if m < n:
        inner = np.sort(g["breakpoints"].choice(n - 1, size=m - 1, replace=False) + 1)
        sigma = np.append(inner, n)
    else:
        sigma = np.arange(1, n + 1)
    a = np.minimum(v, w)[sigma - 1]
    b = np.maximum(v, w)[sigma - 1]
    a[-1] = b[-1] = max(v[-1], w[-1])
    p = g["p"].uniform(0.0, 1.0, n)
    fam = spec.family
    if fam == "linear":
        obj = linear(p)
    elif fam == "quadratic":
        obj = quadratic(0.5 + p, g["target"].uniform(c, d))
    elif fam == "F":
        obj = quartic(p)
    elif fam == "crash":
        obj = crash(g["k"].uniform(0.0, 1.0, n), 1.0 - p)
    else:
        obj = fuel(1.0 - p, c)
    return NestedInstance(sigma, a, b, c, d, obj, mode)


def _solver(mode, epsilon):
    if mode == INTEGER:
        return lambda inst: solve_scaled(inst, INTEGER_SCALE)
    return lambda inst: solve_continuous(inst, epsilon)


def time_solve(instance, mode=CONTINUOUS, epsilon=1e-6, min_time=0.2, max_loops=1000):
    """Mean wall time of one solve; fast solves are repeated in a loop."""
    solver = _solver(mode, epsilon)
    loops = 0
    start = time.perf_counter()
    while True:
        result = solver(instance)
        loops += 1
        elapsed = time.perf_counter() - start
        if elapsed >= min_time or loops >= max_loops:
            return elapsed / loops, result


def _warm_up(families, mode, epsilon):
    # compile the kernels outside the timed region
    for fam in families:
        solver = _solver(mode, epsilon)
        solver(gen_instance(GenSpec(4, 2, 0, fam)))
        solver(gen_instance(GenSpec(4, 4, 0, fam)))


def fit_slope(ns, times, min_n=100):
    """Least-squares slope of log(time) against log(n), ignoring n < min_n."""
    ns = np.asarray(ns, dtype=float)
    times = np.asarray(times, dtype=float)
    keep = ns >= min_n
    if np.unique(ns[keep]).size < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns[keep]), np.log(times[keep]), 1)[0])


def run_benchmark(sizes, families=("linear",), repeats=3, mode=CONTINUOUS, epsilon=1e-6,
                  m=None, seed=0, min_time=0.2, on_record=None):
    """Time solves over sizes x families x seeds.

    ``m=None`` uses one nested constraint per variable; an integer fixes the
    constraint count (capped at n).  Returns the records and one fitted
    power-law exponent per family.
    """
    result = BenchResult()
    if repeats <= 0 or not sizes:
        return result
    _warm_up(families, mode, epsilon)
    for fam in families:
        for n in sizes:
            mm = n if m is None else min(int(m), n)
            for r in range(repeats):
                inst = gen_instance(GenSpec(int(n), mm, seed + r, fam))
                secs, sol = time_solve(inst, mode, epsilon, min_time)
                rec = BenchRecord(int(n), mm, fam, seed + r, mode, secs, float(sol.objective_value),
                                  sol.stats.rap_solves, sol.stats.shortcut_hits)
                result.records.append(rec)
                if on_record is not None:
                    on_record(rec)
        recs = [r for r in result.records if r.family == fam]
        result.slopes[fam] = fit_slope([r.n for r in recs], [r.time_seconds for r in recs])
    return result


def summarize(records):
    """Median and mean time per (family, n, m)."""
    groups = {}
    for r in records:
        groups.setdefault((r.family, r.n, r.m), []).append(r.time_seconds)
    return {k: (float(np.median(v)), float(np.mean(v))) for k, v in sorted(groups.items())}


def write_csv(records, dest):
    """Write records with the fixed column set; ``dest`` is a path or file."""
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w", newline="") as fh:
            return write_csv(records, fh)
    writer = csv.writer(dest)
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r.row()])
    return None


def records_to_csv(records):
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def plot_points(records):
    """(log n, log median time) pairs per family."""
    out = {}
    for (fam, n, _m), (med, _mean) in summarize(records).items():
        out.setdefault(fam, []).append((np.log(n), np.log(med)))
    return {k: np.array(v) for k, v in out.items()}
