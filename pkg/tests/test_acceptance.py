"""Acceptance suite: one verdict line per criterion.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section at the end, or run this file directly with Python.
"""

import itertools
import time

import numpy as np
import pytest

import nestedrap as nr
from nestedrap.bench import GenSpec, fit_slope, gen_instance
from nestedrap.oracle import dp_solve
from nestedrap.reductions import LotSizingInstance, lot_sizing_to_rapnc
from nestedrap.svorex import (
    SvorexConfig,
    SvorexModel,
    TrainLog,
    max_violation,
    synthetic_dataset,
    train,
)
from conftest import record
from instances import FAMILIES, random_instance

STRICT = ("quadratic", "F", "crash", "fuel")
CONVEX = ("F", "crash", "fuel")


def with_total(inst, total):
    a, b = inst.a.copy(), inst.b.copy()
    a[-1] = b[-1] = total
    return inst.replace(a=a, b=b)


def feasible_totals(inst, top=60):
    return [B for B in range(top) if nr.is_feasible(with_total(inst, B))]


def timed_solve(inst, eps=1e-6):
    start = time.perf_counter()
    res = nr.solve_continuous(inst, eps)
    return time.perf_counter() - start, res


def median_time(fam, n, m, seeds=3):
    return float(np.median([timed_solve(gen_instance(GenSpec(n, m, s, fam)))[0] for s in range(seeds)]))


def warm_up():
    for fam in FAMILIES:
        nr.solve_continuous(gen_instance(GenSpec(8, 8, 0, fam)), 1e-6)
        nr.solve_continuous(gen_instance(GenSpec(8, 2, 0, fam)), 1e-6)


def test_criterion_01_oracle_equivalence():
    per_family = 500
    start = time.perf_counter()
    mismatches = []
    for k, fam in enumerate(FAMILIES):
        rng = np.random.default_rng(1000 + k)
        for trial in range(per_family):
            inst = random_instance(rng, fam, n_max=8, m_max=4, total_max=24)
            got = nr.solve_integer(inst).objective_value
            ref = dp_solve(inst).objective_value
            if fam == "linear":
                ok = got == ref
            else:
                ok = abs(got - ref) <= 1e-9 * max(1.0, abs(ref))
            if not ok:
                mismatches.append((fam, trial, got, ref))
    elapsed = time.perf_counter() - start
    passed = not mismatches and elapsed < 120
    record(1, passed, f"{per_family} instances x {len(FAMILIES)} families, "
                      f"{len(mismatches)} mismatches, {elapsed:.1f} s (limit 120 s)")
    assert not mismatches, mismatches[:5]
    assert elapsed < 120


def test_criterion_02_feasibility_suite():
    total = 10_000
    bad = []
    rng = np.random.default_rng(2)
    for k in range(total):
        fam = FAMILIES[k % len(FAMILIES)]
        if k % 2 == 0:
            inst = random_instance(rng, fam)
            res = nr.solve_integer(inst)
            rep = nr.check_feasibility(inst, res.x)
            ok = rep.all_zero
        else:
            n = int(rng.integers(1, 51))
            inst = gen_instance(GenSpec(n, int(rng.integers(1, n + 1)), k, fam))
            res = nr.solve_continuous(inst, 1e-6)
            rep = nr.check_feasibility(inst, res.x)
            ok = rep.ok(1e-9)
        if not ok:
            bad.append((k, fam, rep))
    record(2, not bad, f"{total} instances (half integer, half continuous), {len(bad)} infeasible outputs")
    assert not bad, bad[:5]


def test_criterion_03_monotonicity():
    rng = np.random.default_rng(3)
    checked, violations = 0, []
    while checked < 200:
        fam = STRICT[checked % len(STRICT)]
        inst = random_instance(rng, fam, integer_costs=False)
        totals = feasible_totals(inst)
        if len(totals) < 2:
            continue
        lo, hi = np.sort(rng.choice(totals, 2, replace=False))
        x_lo = nr.solve_integer(with_total(inst, int(lo))).x
        x_hi = nr.solve_integer(with_total(inst, int(hi))).x
        if not np.all(x_lo <= x_hi):
            violations.append((fam, lo, hi, x_lo, x_hi))
        checked += 1
    record(3, not violations, f"{checked} budget pairs on strictly convex families, "
                              f"{len(violations)} ordering violations")
    assert not violations, violations[:3]


def test_criterion_04_proximity():
    rng = np.random.default_rng(4)
    checked, worst_ratio, bad = 0, 0.0, []
    while checked < 200:
        fam = STRICT[checked % len(STRICT)]
        inst = random_instance(rng, fam, integer_costs=False)
        if inst.n < 2:
            continue
        x_int = nr.solve_integer(inst).x
        x_cont = nr.solve_continuous(inst.replace(mode=nr.CONTINUOUS), 1e-4).x
        gap = np.max(np.abs(x_int - x_cont))
        worst_ratio = max(worst_ratio, gap / (inst.n - 1))
        if not gap < inst.n - 1:
            bad.append((fam, inst.n, gap))
        checked += 1
    record(4, not bad, f"{checked} instances, worst |x_int - x_cont| / (n-1) = {worst_ratio:.3f} (< 1 required)")
    assert not bad, bad[:3]


def test_criterion_05_epsilon_consistency():
    eps = 1e-3
    rng = np.random.default_rng(5)
    bad, worst = [], 0.0
    for k in range(100):
        fam = STRICT[k % len(STRICT)]
        n = int(rng.integers(2, 51))
        inst = gen_instance(GenSpec(n, int(rng.integers(1, n + 1)), 500 + k, fam))
        coarse = nr.solve_continuous(inst, eps)
        fine = nr.solve_continuous(inst, eps / 100)
        gap = float(np.max(np.abs(coarse.x - fine.x)))
        lip = inst.objective.lipschitz(inst.c, inst.d)
        dobj = abs(coarse.objective_value - fine.objective_value)
        worst = max(worst, gap / eps)
        if gap > 1.1 * eps or dobj > lip * n * eps:
            bad.append((fam, n, gap, dobj))
    record(5, not bad, f"100 instances at eps={eps:g} vs eps/100, worst gap = {worst:.3f} eps "
                       f"(limit 1.1 eps), {len(bad)} failures")
    assert not bad, bad[:3]


def test_criterion_06_complexity_shape():
    warm_up()
    sizes = [10 ** 3, 10 ** 4, 10 ** 5]
    slopes, ratios = {}, {}
    for fam in ("linear",) + CONVEX:
        times = [median_time(fam, n, n) for n in sizes]
        slopes[fam] = fit_slope(sizes, times)
        ratios[fam] = median_time(fam, 10 ** 5, 100) / median_time(fam, 10 ** 4, 100)
    passed = all(s <= 1.4 for s in slopes.values()) and all(r <= 13 for r in ratios.values())
    detail = ", ".join(f"{f}: slope {slopes[f]:.2f} ratio {ratios[f]:.1f}" for f in slopes)
    record(6, passed, f"{detail} (limits: slope 1.4, m=100 ratio 13)")
    assert passed


def test_criterion_07_absolute_performance():
    warm_up()
    t_lin, res_lin = timed_solve(gen_instance(GenSpec(10 ** 6, 10 ** 6, 0, "linear")))
    inst_f = gen_instance(GenSpec(10 ** 5, 10 ** 5, 0, "F"))
    t_f, res_f = timed_solve(inst_f)
    passed = t_lin <= 60 and t_f <= 120
    record(7, passed, f"linear n=m=1e6 {t_lin:.1f} s (limit 60), F n=m=1e5 {t_f:.1f} s (limit 120)")
    assert nr.check_feasibility(inst_f, res_f.x).ok(1e-9 * inst_f.total)
    assert passed


def random_lot_sizing(rng, k):
    n = int(rng.integers(1, 7))
    # integer data keeps every cost an exact binary fraction
    prod = nr.linear(rng.integers(0, 6, n)) if k % 2 == 0 else nr.quartic(rng.integers(-4, 5, n))
    return LotSizingInstance(rng.integers(0, 5, n), int(rng.integers(0, 3)), rng.integers(0, 6, n),
                             rng.integers(1, 6, n), prod, rng.integers(0, 3, n))


def cheapest_plan(ls):
    best = None
    for x in itertools.product(*[range(int(cap) + 1) for cap in ls.production_cap]):
        if ls.is_feasible(x):
            cost = ls.cost(x)
            best = cost if best is None or cost < best else best
    return best


def test_criterion_08_reduction_round_trip():
    rng = np.random.default_rng(8)
    done, k, bad = 0, 0, []
    while done < 100:
        ls = random_lot_sizing(rng, k)
        k += 1
        ref = cheapest_plan(ls)
        if ref is None:
            continue
        inst, offset = lot_sizing_to_rapnc(ls)
        got = dp_solve(inst).objective_value + offset
        if got != ref:
            bad.append((k, got, ref))
        done += 1
    record(8, not bad, f"{done} lot-sizing instances, {len(bad)} differ from enumeration")
    assert not bad, bad[:3]


def test_criterion_09_svorex():
    ds = synthetic_dataset(200, 5, 5, seed=0)
    rows, finals, failures = [], {}, []
    for n_ws in (2, 4, 6, 10):
        log = TrainLog()
        cfg = SvorexConfig(n_ws=n_ws, kkt_tol=1e-3, check_projections=True)
        model = train(ds, cfg, log)
        steps = np.diff(log.objectives)
        feas = max(log.residuals)
        viol = max_violation(model)
        finals[n_ws] = model.objective()
        checks = {
            "feasibility": feas <= 1e-9,
            "monotone": np.all(steps >= -1e-9),
            "kkt": viol <= 1e-3,
            "time": log.seconds < 60,
        }
        failures += [(n_ws, name) for name, ok in checks.items() if not ok]
        rows.append(f"n_ws={n_ws}: {log.seconds:.1f} s, {model.selections} selections, "
                    f"{model.projections} checked projections")
    ref = finals[2]
    spread = max(abs(v - ref) / abs(ref) for v in finals.values())
    if spread > 1e-3:
        failures.append(("all", "objective agreement"))
    record(9, not failures, "; ".join(rows) + f"; objective spread {spread:.1e} (limit 1e-3)")
    assert not failures, failures


def test_criterion_10_gradient():
    rng = np.random.default_rng(10)
    worst = 0.0
    h = 1e-5
    for k in range(50):
        ds = synthetic_dataset(int(rng.integers(10, 40)), 3, int(rng.integers(2, 6)), seed=k)
        model = SvorexModel(ds, SvorexConfig(width=float(rng.uniform(0.1, 2.0))))
        a, s = rng.uniform(0, model.config.C, (2, len(ds)))
        a[ds.y == ds.r] = 0.0
        s[ds.y == 1] = 0.0
        model.set_duals(a, s)
        ga, gs = model.gradient()
        K = model.K

        def z(al, st):
            beta = st - al
            return np.sum(al + st) - 0.5 * beta @ K @ beta

        E = np.eye(len(ds)) * h
        fd_a = np.array([(z(a + e, s) - z(a - e, s)) / (2 * h) for e in E])
        fd_s = np.array([(z(a, s + e) - z(a, s - e)) / (2 * h) for e in E])
        worst = max(worst, np.max(np.abs(ga - fd_a)), np.max(np.abs(gs - fd_s)))
    record(10, worst <= 1e-6, f"50 random models, max |analytic - central difference| = {worst:.1e} (limit 1e-6)")
    assert worst <= 1e-6


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
