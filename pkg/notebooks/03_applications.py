"""
Lot sizing and vessel speeds
============================

Two planning models whose constraints are running totals bounded from both
sides.  Each converts into a nested allocation instance.
"""

# %%
import numpy as np

import nestedrap as nr
from nestedrap.oracle import dp_solve
from nestedrap.reductions import (
    LotSizingInstance,
    SpeedOptInstance,
    lot_sizing_to_rapnc,
    speed_opt_to_rapnc,
    speeds_from_solution,
)

# %%
# Production over five periods with growing marginal cost, limited storage
# and a holding charge per unit in stock.
ls = LotSizingInstance(
    demand=[3, 1, 4, 1, 5],
    initial=1,
    inventory_cap=[3, 3, 2, 2, 2],
    production_cap=[4, 4, 4, 4, 4],
    production=nr.quadratic(w=[1, 1, 1, 1, 1], t=[1, 1, 1, 1, 1]),
    holding=[0.5, 0.5, 0.5, 0.5, 0.5],
)
inst, offset = lot_sizing_to_rapnc(ls)
print("prefix bounds", inst.a, inst.b)
res = nr.solve_integer(inst)
plan = res.x[:ls.n]
print("plan", plan, "stock", ls.inventory(plan))
print("cost", res.objective_value + offset, "check", ls.cost(plan), "reference", dp_solve(inst).objective_value + offset)

# %%
# A four-port voyage.  Fuel per mile grows with the cube of speed; waiting is
# free, so sailing slower than the most economical speed never pays.
so = SpeedOptInstance(
    distances=[120, 80, 150],
    windows=[[0, 2], [10, 14], [18, 30], [30, 34]],
    v_max=14.0,
    v_opt=[6.0, 6.0, 6.0],
    fuel_params={"coef": [1e-3, 1e-3, 1e-3], "exponent": 3.0},
)
sinst = speed_opt_to_rapnc(so)
sres = nr.solve_continuous(sinst, 1e-4)
print("arrivals", np.round(np.cumsum(sres.x)[:-1], 4))
print("speeds  ", np.round(speeds_from_solution(so, sres.x), 4))
print("fuel    ", round(sres.objective_value, 4))
