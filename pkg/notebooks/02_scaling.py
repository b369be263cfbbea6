"""
Run time against problem size
=============================

Random instances with one nested constraint per variable; the fitted
log-log slope shows how the solve time grows with n.
"""

# %%

from nestedrap.bench import fit_slope, run_benchmark, summarize

sizes = [1000, 4000, 16000, 64000]
res = run_benchmark(sizes, families=("linear", "quadratic", "F"), repeats=2, min_time=0.1)

# %%
for (fam, n, m), (med, _mean) in summarize(res.records).items():
    print(f"{fam:>9} n={n:<6d} median {med * 1e3:8.2f} ms")

# %%
for fam, slope in res.slopes.items():
    print(f"{fam:>9} fitted exponent {slope:.2f}")

# %%
# Fixing the number of nested constraints at 100 isolates the dependence on n.
fixed = run_benchmark([4000, 64000], families=("F",), repeats=2, m=100, min_time=0.1)
t = {n: med for (_f, n, _m), (med, _) in summarize(fixed.records).items()}
print("time ratio for 16x more variables:", t[64000] / t[4000])
print("slope", fit_slope(list(t), list(t.values())))
