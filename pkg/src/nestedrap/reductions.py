"""Application models that reduce to nested-constraint allocation.

Both models bound a running total from both sides but leave the final total
free within a range, while the solver wants an exact total.  One zero-cost
slack variable appended at the end closes that gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    CONTINUOUS,
    INTEGER,
    LINEAR,
    QUADRATIC,
    QUARTIC,
    Infeasible,
    NegativeBound,
    NestedInstance,
    ObjectiveSpec,
    RapNcError,
    WindowInfeasible,
    custom,
    linear,
    quartic,
    validate,
)

TINY_TIME = 1e-9


# ---------------------------------------------------------------------------
# lot sizing


@dataclass
class LotSizingInstance:
    """Production planning with per-period production and inventory caps.

    Period ``i`` produces ``x_i in [0, xmax_i]`` at cost ``production(x_i)``
    and ends with stock ``I_i = K + sum_{k<=i} (x_k - demand_k)`` which must
    lie in ``[0, Imax_i]`` and costs ``alpha_i`` per unit held.
    """

    demand: np.ndarray
    initial: float
    inventory_cap: np.ndarray
    production_cap: np.ndarray
    production: ObjectiveSpec
    holding: Optional[np.ndarray] = None

    def __post_init__(self):
        self.demand = np.atleast_1d(np.asarray(self.demand, dtype=float))
        n = len(self.demand)
        self.inventory_cap = np.broadcast_to(np.asarray(self.inventory_cap, dtype=float), (n,)).copy()
        self.production_cap = np.broadcast_to(np.asarray(self.production_cap, dtype=float), (n,)).copy()
        self.holding = (np.zeros(n) if self.holding is None
                        else np.broadcast_to(np.asarray(self.holding, dtype=float), (n,)).copy())
        if self.production.size not in (None, n):
            raise ValueError("production cost must cover every period")
        for name in ("demand", "inventory_cap", "production_cap", "holding"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.initial < 0:
            raise ValueError("initial inventory must be nonnegative")

    @property
    def n(self):
        return len(self.demand)

    def inventory(self, x):
        return self.initial + np.cumsum(np.asarray(x, dtype=float)[: self.n] - self.demand)

    def cost(self, x):
        """Production plus holding cost of the plan ``x`` (first n entries)."""
        x = np.asarray(x, dtype=float)[: self.n]
        return float(np.sum(self.production.value(x)) + np.dot(self.holding, self.inventory(x)))

    def is_feasible(self, x):
        x = np.asarray(x, dtype=float)[: self.n]
        inv = self.inventory(x)
        return bool(np.all(x >= 0) and np.all(x <= self.production_cap)
                    and np.all(inv >= 0) and np.all(inv <= self.inventory_cap))


def _shift_linear(objective, extra, n_total):
    """Objective plus ``extra_i * x`` on the first variables, zero cost after.

    Returns the new objective and a constant offset.
    """
    n = len(extra)
    pad = n_total - n
    if objective.kind == LINEAR:
        return linear(np.concatenate([objective["p"] + extra, np.zeros(pad)])), 0.0
    if objective.kind == QUARTIC and pad == 0:
        return quartic(objective["p"] + extra), 0.0
    if objective.kind == QUADRATIC and pad == 0:
        # w (x - t)^2 + e x = w (x - t')^2 + const with t' = t - e / (2w)
        w, t = objective["w"], objective["t"]
        t2 = t - extra / (2 * w)
        const = float(np.sum(w * t ** 2 - w * t2 ** 2))
        return ObjectiveSpec(QUADRATIC, {"w": w, "t": t2}), const
    return custom(ShiftedCost(objective, extra, n_total), size=n_total), 0.0


class ShiftedCost:
    """``base(x) + extra_i * x`` on the first ``len(extra)`` variables, zero after."""

    def __init__(self, base, extra, size):
        self.base = base
        self.extra = np.asarray(extra, dtype=float)
        self.size = int(size)

    def __call__(self, x, idx):
        x = np.asarray(x, dtype=float)
        idx = np.asarray(idx)
        n = len(self.extra)
        real = idx < n
        out = np.zeros(x.shape)
        if np.any(real):
            j = idx[real]
            out[real] = self.base.value(x[real], j) + self.extra[j] * x[real]
        return out


def lot_sizing_to_rapnc(ls, mode=None):
    """Reduce to a nested instance; returns ``(instance, offset)``.

    The plan cost equals the instance objective plus ``offset``.  Prefix sums
    of production are bounded by ``D_i - K`` and ``D_i + Imax_i - K`` with
    ``D_i`` the cumulative demand; a slack variable in ``[0, b_n - a_n]``
    absorbs the free final stock.
    """
    n = ls.n
    D = np.cumsum(ls.demand)
    a = D - ls.initial
    b = D + ls.inventory_cap - ls.initial
    if np.any(b < 0):
        i = int(np.flatnonzero(b < 0)[0])
        raise NegativeBound(f"initial stock exceeds the inventory cap at period {i + 1}")
    after = np.cumsum(ls.holding[::-1])[::-1]
    offset = float(np.dot(ls.holding, ls.initial - D))
    obj, const = _shift_linear(ls.production, after, n + 1)
    offset += const
    slack = b[-1] - a[-1]
    total = b[-1]
    sigma = np.arange(1, n + 2)
    A = np.append(a, total)
    B = np.append(b, total)
    c = np.zeros(n + 1)
    d = np.append(ls.production_cap, slack)
    if mode is None:
        vals = np.concatenate([A, B, d])
        mode = INTEGER if np.all(np.floor(vals) == vals) else CONTINUOUS
    inst = NestedInstance(sigma, A, B, c, d, obj, mode)
    try:
        validate(inst)
    except Infeasible as exc:
        raise NegativeBound(f"demand cannot be met within the caps ({exc})") from exc
    return inst, offset


# ---------------------------------------------------------------------------
# speed optimisation


def power_fuel(coef, exponent=3.0):
    """Fuel per mile ``coef_leg * v**exponent`` as a curve callback."""
    coef = np.atleast_1d(np.asarray(coef, dtype=float))

    def curve(v, leg):
        return coef[leg] * np.asarray(v, dtype=float) ** exponent

    return curve


@dataclass
class SpeedOptInstance:
    """Voyage with time windows at each port.

    ``distances[l]`` is the length of leg ``l`` (from port ``l`` to ``l+1``);
    arrival at port ``i`` must fall in ``windows[i]``.  ``fuel(v, leg)`` gives
    fuel per mile at speed ``v``; it is treated as constant below
    ``v_opt[leg]``, since a ship can always sail at its best speed and wait.
    """

    distances: np.ndarray
    windows: np.ndarray
    v_max: float
    fuel: Callable = None
    v_min: float = 0.0
    v_opt: Optional[np.ndarray] = None
    fuel_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.distances = np.atleast_1d(np.asarray(self.distances, dtype=float))
        self.windows = np.asarray(self.windows, dtype=float).reshape(-1, 2)
        legs = len(self.distances)
        if len(self.windows) != legs + 1:
            raise ValueError("need one time window per port (legs + 1)")
        if np.any(self.distances <= 0):
            raise ValueError("leg lengths must be positive")
        if np.any(self.windows[:, 0] > self.windows[:, 1]):
            raise WindowInfeasible("a time window has its start after its end")
        if not 0 <= self.v_min <= self.v_max or self.v_max <= 0:
            raise ValueError("need 0 <= v_min <= v_max and v_max > 0")
        if self.fuel is None:
            self.fuel_params = {"coef": list(np.ones(legs)), "exponent": 3.0, **self.fuel_params}
            self.fuel = power_fuel(self.fuel_params["coef"], self.fuel_params["exponent"])
        self.v_opt = np.zeros(legs) if self.v_opt is None else np.broadcast_to(
            np.asarray(self.v_opt, dtype=float), (legs,)).copy()

    @property
    def legs(self):
        return len(self.distances)

    def flattened(self, v, leg):
        """Fuel per mile with the region below the optimal speed flattened."""
        v = np.asarray(v, dtype=float)
        return self.fuel(np.maximum(v, self.v_opt[leg]), leg)

    def leg_cost(self, duration, leg):
        """Fuel burnt on ``leg`` when sailing it in ``duration``."""
        duration = np.asarray(duration, dtype=float)
        delta = self.distances[leg]
        return delta * self.flattened(delta / duration, leg)


def speed_opt_to_rapnc(so, mode=CONTINUOUS):
    """Reduce to a nested instance over inter-arrival times.

    Variable 0 is the arrival time at the first port (free of cost); variable
    ``l + 1`` is the sailing time of leg ``l``; the last variable is the slack
    for the final window.  Prefix sums are arrival times.
    """
    legs = so.legs
    win = so.windows
    horizon = win[-1, 1] - win[0, 0]
    lo = np.maximum(so.distances / so.v_max, TINY_TIME)
    hi = so.distances / so.v_min if so.v_min > 0 else np.full(legs, max(horizon, TINY_TIME))
    hi = np.maximum(hi, lo)
    total = win[-1, 1]
    slack = win[-1, 1] - win[-1, 0]
    c = np.concatenate([[win[0, 0]], lo, [0.0]])
    d = np.concatenate([[win[0, 1]], hi, [slack]])
    A = np.append(win[:, 0], total)
    B = np.append(win[:, 1], total)
    sigma = np.arange(1, legs + 3)
    func = LegFuelCost(so)
    inst = NestedInstance(sigma, A, B, c, d, custom(func, size=legs + 2), mode)
    try:
        validate(inst)
    except RapNcError as exc:
        raise WindowInfeasible(f"time windows cannot be met at the allowed speeds ({exc})") from exc
    return inst


class LegFuelCost:
    """Fuel of each leg as a function of its sailing time.

    Variable 0 (first arrival) and the trailing slack cost nothing.
    """

    def __init__(self, so):
        self.so = so

    def __call__(self, x, idx):
        so = self.so
        x = np.asarray(x, dtype=float)
        idx = np.asarray(idx)
        out = np.zeros(x.shape)
        leg = (idx >= 1) & (idx <= so.legs)
        if np.any(leg):
            j = idx[leg] - 1
            out[leg] = so.distances[j] * so.flattened(so.distances[j] / x[leg], j)
        return out


def speeds_from_solution(so, x):
    """Leg speeds of a solution of the reduced instance."""
    x = np.asarray(x, dtype=float)
    return so.distances / x[1:so.legs + 1]
