"""
Allocating a budget under nested prefix bounds
==============================================

A small walk through the solver: build an instance, solve it exactly on the
integers, solve it in floating point, and check both answers independently.
"""

# %%
import numpy as np

import nestedrap as nr
from nestedrap.mda import mda, verify_kkt
from nestedrap.oracle import dp_solve

# Six variables, prefix sums bounded after variables 2, 4 and 6.
sigma = [2, 4, 6]
a = [3, 7, 12]
b = [5, 9, 12]
c = np.zeros(6)
d = np.full(6, 4.0)
obj = nr.quadratic(w=[1, 2, 1, 3, 1, 2], t=[3, 3, 1, 1, 2, 2])
inst = nr.NestedInstance(sigma, a, b, c, d, obj, mode=nr.INTEGER)
nr.validate(inst)

# %%
# Exact integer optimum and the dynamic-programming reference.
res = nr.solve_integer(inst)
ref = dp_solve(inst)
print("x        ", res.x)
print("objective", res.objective_value, "reference", ref.objective_value)
print("RAP solves", res.stats.rap_solves, "shortcut hits", res.stats.shortcut_hits)

# %%
# The root of the decomposition keeps four solutions, one per choice of the
# outer prefix bounds.  They are ordered coordinate-wise.
sols = mda(inst)
for key in ("aa", "ab", "ba", "bb"):
    print(key, sols[key])

# %%
# Continuous optimum: quadratic costs are solved directly in floating point.
cinst = inst.replace(mode=nr.CONTINUOUS)
cres = nr.solve_continuous(cinst)
print("x        ", np.round(cres.x, 6))
print(nr.check_feasibility(cinst, cres.x))

# %%
# Multipliers that certify optimality, built from the active constraints.
cert = verify_kkt(cinst, cres.x)
print("block multipliers", np.round(cert.phi, 6))
print("lower", np.round(cert.kappa, 6), "upper", np.round(cert.lambda_, 6))

# %%
# Non-quadratic families are solved on a refined integer grid; the grid
# spacing follows from the requested accuracy.
finst = cinst.replace(objective=nr.crash(k=np.zeros(6), p=[1, 2, 1, 3, 1, 2]), c=np.full(6, 0.5))
for eps in (1e-2, 1e-4, 1e-6):
    r = nr.solve_continuous(finst, eps)
    print(f"eps={eps:g}", np.round(r.x, 7), r.objective_value)
