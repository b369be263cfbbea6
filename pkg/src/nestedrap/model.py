"""Problem model for separable convex allocation under nested constraints.

An instance asks for ``x`` minimising ``sum_i f_i(x_i)`` subject to

    a_j <= x_1 + ... + x_{sigma[j]} <= b_j      for j = 1..m
    c_i <= x_i <= d_i                           for i = 1..n

where ``sigma`` is strictly increasing with ``sigma[m] = n`` and
``a_m = b_m = B`` is the total resource.  Breakpoints are stored 1-based, as
they appear in the literature; arrays are 0-based numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

INTEGER = "integer"
CONTINUOUS = "continuous"
MODES = (INTEGER, CONTINUOUS)

LINEAR = "linear"
QUADRATIC = "quadratic"
QUARTIC = "F"
CRASH = "crash"
FUEL = "fuel"
CUSTOM = "custom"
KINDS = (LINEAR, QUADRATIC, QUARTIC, CRASH, FUEL, CUSTOM)

_PARAM_NAMES = {
    LINEAR: ("p",),
    QUADRATIC: ("w", "t"),
    QUARTIC: ("p",),
    CRASH: ("k", "p"),
    FUEL: ("p", "c"),
    CUSTOM: (),
}


class RapNcError(ValueError):
    """Base class for problem and solver errors."""


class NonMonotoneSigma(RapNcError):
    pass


class BoundOrderViolation(RapNcError):
    pass


class Infeasible(RapNcError):
    """No point satisfies the nested and box constraints.

    ``witness`` is a pair ``(i, j)`` of constraint indices (0 stands for the
    empty prefix) whose bounds cannot both hold given the box bounds between
    them, or ``None`` when the failure is a single box/bound.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DomainError(RapNcError):
    pass


class NotIntegral(RapNcError):
    pass


class InfeasibleSubproblem(RapNcError):
    """A single-constraint subproblem has no point within its bounds."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NonConvexDetected(RapNcError):
    pass


class ScaledInfeasible(RapNcError):
    pass


class SizeLimitExceeded(RapNcError):
    pass


class AdjustPreconditionError(RuntimeError):
    """Ordering repair received inputs that no correct subsolver produces."""


class NegativeBound(RapNcError):
    pass


class WindowInfeasible(RapNcError):
    pass


class IterationLimitExceeded(RuntimeError):
    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


# ---------------------------------------------------------------------------
# objectives


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """A separable objective ``sum_i f_i(x_i)`` from one parametric family.

    Use the factory functions (:func:`linear`, :func:`quadratic`,
    :func:`quartic`, :func:`crash`, :func:`fuel`, :func:`custom`) rather
    than building this directly.  For ``custom`` the callback has signature
    ``func(x, idx) -> values`` where ``idx`` holds the variable indices of the
    entries of ``x``; it must be convex in each coordinate.
    """

    kind: str
    params: dict = field(default_factory=dict)
    func: Optional[Callable] = None
    size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        names = _PARAM_NAMES[self.kind]
        if set(self.params) != set(names):
            raise ValueError(f"{self.kind} objective needs parameters {names}")
        arrays = {}
        for name in names:
            arr = np.atleast_1d(np.asarray(self.params[name], dtype=float))
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} must be a finite 1-d array")
            arrays[name] = arr
        object.__setattr__(self, "params", arrays)
        sizes = {len(v) for v in arrays.values()}
        if len(sizes) > 1:
            raise ValueError("objective parameter arrays differ in length")
        if sizes:
            object.__setattr__(self, "size", sizes.pop())
        if self.kind == QUADRATIC and np.any(arrays["w"] <= 0):
            raise ValueError("quadratic curvatures w must be > 0")
        if self.kind in (CRASH, FUEL) and np.any(arrays["p"] <= 0):
            raise ValueError(f"{self.kind} weights p must be > 0")
        if self.kind == FUEL and np.any(arrays["c"] <= 0):
            raise ValueError("fuel leg lengths c must be > 0")
        if self.kind == CUSTOM and not callable(self.func):
            raise ValueError("custom objective needs a callable")

    def __getitem__(self, name):
        return self.params[name]

    @property
    def needs_positive_domain(self):
        return self.kind in (CRASH, FUEL)

    @property
    def strictly_convex(self):
        return self.kind in (QUADRATIC, QUARTIC, CRASH, FUEL)

    def restrict(self, idx):
        """Objective over the variables ``idx`` (re-indexed from 0)."""
        idx = np.asarray(idx)
        if self.kind == CUSTOM:
            base = self.func
            return ObjectiveSpec(CUSTOM, {}, lambda x, j: base(x, idx[j]), size=len(idx))
        return ObjectiveSpec(self.kind, {k: v[idx] for k, v in self.params.items()})

    def value(self, x, idx=None):
        """Per-variable values ``f_i(x_i)``."""
        x = np.asarray(x, dtype=float)
        if idx is None:
            idx = np.arange(x.size)
        P = self.params
        if self.kind == LINEAR:
            return P["p"][idx] * x
        if self.kind == QUADRATIC:
            return P["w"][idx] * (x - P["t"][idx]) ** 2
        if self.kind == QUARTIC:
            return x ** 4 / 4.0 + P["p"][idx] * x
        if self.kind == CRASH:
            with np.errstate(divide="ignore"):
                return P["k"][idx] + P["p"][idx] / x
        if self.kind == FUEL:
            c = P["c"][idx]
            with np.errstate(divide="ignore"):
                return P["p"][idx] * c * (c / x) ** 3
        return np.asarray(self.func(x, np.asarray(idx)), dtype=float)

    def derivative(self, x, idx=None):
        """Per-variable derivatives; central differences for custom."""
        x = np.asarray(x, dtype=float)
        if idx is None:
            idx = np.arange(x.size)
        P = self.params
        if self.kind == LINEAR:
            return P["p"][idx] + 0.0 * x
        if self.kind == QUADRATIC:
            return 2.0 * P["w"][idx] * (x - P["t"][idx])
        if self.kind == QUARTIC:
            return x ** 3 + P["p"][idx]
        if self.kind == CRASH:
            return -P["p"][idx] / x ** 2
        if self.kind == FUEL:
            c = P["c"][idx]
            return -3.0 * P["p"][idx] * c ** 4 / x ** 4
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self.value(x + h, idx) - self.value(x - h, idx)) / (2 * h)

    def lipschitz(self, c, d):
        """Largest slope magnitude of any f_i over its box [c_i, d_i]."""
        c = np.asarray(c, dtype=float)
        d = np.asarray(d, dtype=float)
        if c.size == 0:
            return 0.0
        slopes = np.concatenate([self.derivative(c), self.derivative(d)])
        return float(np.max(np.abs(slopes)))


def linear(p):
    """f_i(x) = p_i x"""
    return ObjectiveSpec(LINEAR, {"p": p})


def quadratic(w, t):
    """f_i(x) = w_i (x - t_i)^2 with w_i > 0"""
    return ObjectiveSpec(QUADRATIC, {"w": w, "t": t})


def quartic(p):
    """The [F] family, f_i(x) = x^4 / 4 + p_i x"""
    return ObjectiveSpec(QUARTIC, {"p": p})


def crash(k, p):
    """Project crashing, f_i(x) = k_i + p_i / x on x > 0"""
    return ObjectiveSpec(CRASH, {"k": k, "p": p})


def fuel(p, c):
    """Vessel fuel, f_i(x) = p_i c_i (c_i / x)^3 on x > 0"""
    return ObjectiveSpec(FUEL, {"p": p, "c": c})


def custom(func, size=None):
    return ObjectiveSpec(CUSTOM, {}, func, size=size)


# ---------------------------------------------------------------------------
# instances


def _as_vector(values, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class NestedInstance:
    """A full problem: breakpoints, nested bounds, box bounds, objective.

    ``sigma`` holds the 1-based breakpoint indices ``sigma[1..m]``; ``a`` and
    ``b`` bound the prefix sums at those breakpoints; the last entries must be
    equal and give the total resource ``B``.
    """

    sigma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    objective: ObjectiveSpec
    mode: str = INTEGER

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma))
        if sigma.ndim != 1 or sigma.size == 0:
            raise ValueError("sigma must be a non-empty 1-d array")
        if not np.all(np.equal(np.mod(sigma, 1), 0)):
            raise NonMonotoneSigma("sigma entries must be integers")
        object.__setattr__(self, "sigma", sigma.astype(np.int64))
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), name))
        for arr in (self.a, self.b, self.c, self.d):
            arr.setflags(write=False)
        self.sigma.setflags(write=False)
        if len(self.a) != len(self.sigma) or len(self.b) != len(self.sigma):
            raise ValueError("a and b need one entry per breakpoint")
        if len(self.c) != len(self.d):
            raise ValueError("c and d differ in length")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        size = self.objective.size
        if size is not None and size != len(self.c):
            raise ValueError(f"objective has {size} variables, instance has {len(self.c)}")

    @property
    def n(self):
        return len(self.c)

    @property
    def m(self):
        return len(self.sigma)

    @property
    def total(self):
        """The resource bound B."""
        return float(self.b[-1])

    def with_total(self, total):
        """Copy with the last nested bound pair replaced by ``total``."""
        a = self.a.copy()
        b = self.b.copy()
        a[-1] = b[-1] = total
        return NestedInstance(self.sigma, a, b, self.c, self.d, self.objective, self.mode)

    def replace(self, **changes):
        fields = dict(sigma=self.sigma, a=self.a, b=self.b, c=self.c, d=self.d,
                      objective=self.objective, mode=self.mode)
        fields.update(changes)
        return NestedInstance(**fields)


@dataclass
class SolveStats:
    rap_solves: int = 0
    shortcut_hits: int = 0
    nodes: int = 0
    scale: int = 1


@dataclass
class Allocation:
    x: np.ndarray
    objective_value: float
    mode: str
    stats: Optional[SolveStats] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.x, dtype=dtype)

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class FeasibilityReport:
    max_nested_violation: float
    max_box_violation: float
    sum_residual: float

    @property
    def all_zero(self):
        return self.max_nested_violation == 0 and self.max_box_violation == 0 and self.sum_residual == 0

    def ok(self, tol=0.0):
        return max(self.max_nested_violation, self.max_box_violation, self.sum_residual) <= tol


@dataclass
class SolverConfig:
    """Solver knobs.

    ``penalty_M`` is only used when reporting penalised objective values of
    points outside the boxes; the solver itself never needs a numeric M.
    """

    epsilon: float = 1e-6
    penalty_M: Optional[float] = None
    tie_break: str = "lowest-index"
    feasibility_tol: float = 1e-9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.tie_break != "lowest-index":
            raise ValueError("only the lowest-index tie-break rule is implemented")

    def resolve_penalty(self, instance):
        lip = instance.objective.lipschitz(instance.c, instance.d)
        if self.penalty_M is None:
            return 1.0 + lip
        if not self.penalty_M > lip:
            raise ValueError(f"penalty_M={self.penalty_M} must exceed the Lipschitz constant {lip}")
        return float(self.penalty_M)


@dataclass(frozen=True)
class ValidationResult:
    """Reachable prefix-sum interval ``[low[j], high[j]]`` at each breakpoint."""

    low: np.ndarray
    high: np.ndarray


# ---------------------------------------------------------------------------
# operations


def _is_integral(arr):
    return bool(np.all(np.isfinite(arr)) and np.all(np.floor(arr) == arr))


def validate(instance, mode=None):
    """Check the instance invariants and that a feasible point exists.

    Feasibility uses the running envelope of reachable prefix sums, which is
    equivalent to testing every pair of nested constraints against the box
    capacity between them.  Raises on failure, otherwise returns the
    envelope.
    """
    mode = mode or instance.mode
    sigma = instance.sigma
    n = instance.n
    if sigma[0] < 1 or np.any(np.diff(sigma) <= 0):
        raise NonMonotoneSigma("sigma must be strictly increasing and start at 1 or more")
    if sigma[-1] != n:
        raise NonMonotoneSigma(f"sigma[m] must equal n={n}, got {sigma[-1]}")
    a, b, c, d = instance.a, instance.b, instance.c, instance.d
    for name, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
    bad = np.flatnonzero(a > b)
    if bad.size:
        raise BoundOrderViolation(f"a[{bad[0] + 1}] > b[{bad[0] + 1}]")
    bad = np.flatnonzero(c > d)
    if bad.size:
        raise BoundOrderViolation(f"c[{bad[0] + 1}] > d[{bad[0] + 1}]")
    if a[-1] != b[-1]:
        raise BoundOrderViolation("the last nested bounds must be equal (a_m = b_m = B)")
    if mode == INTEGER:
        for name, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
            if not _is_integral(arr):
                raise NotIntegral(f"integer mode needs integral {name}")
    if instance.objective.needs_positive_domain and np.any(c <= 0):
        raise DomainError(f"{instance.objective.kind} objective needs c > 0")

    # prefix sums of the boxes at the breakpoints, with the empty prefix first
    pc = np.concatenate([[0.0], np.cumsum(c)])[np.concatenate([[0], sigma])]
    pd = np.concatenate([[0.0], np.cumsum(d)])[np.concatenate([[0], sigma])]
    a0 = np.concatenate([[0.0], a])
    b0 = np.concatenate([[0.0], b])
    lo_key = a0 - pc
    hi_key = b0 - pd
    lo_run = np.maximum.accumulate(lo_key)
    hi_run = np.minimum.accumulate(hi_key)
    low = lo_run + pc
    high = hi_run + pd
    tol = 0.0 if mode == INTEGER else 1e-12 * max(1.0, float(np.max(np.abs(pd))), float(np.max(np.abs(pc))))
    bad = np.flatnonzero(low > high + tol)
    if bad.size:
        j = int(bad[0])
        # the arg-extrema realising the envelopes form the witnessing pair
        i_lo = int(np.flatnonzero(lo_key[: j + 1] == lo_run[j])[-1])
        i_hi = int(np.flatnonzero(hi_key[: j + 1] == hi_run[j])[-1])
        pair = (min(i_lo, i_hi), max(i_lo, i_hi))
        if pair[0] == pair[1]:
            pair = (pair[0], j)
        raise Infeasible(
            f"no feasible point: prefix sum at breakpoint {j} must lie in "
            f"[{low[j]:.12g}, {high[j]:.12g}]; conflicting constraints {pair}",
            witness=pair,
        )
    return ValidationResult(low[1:], high[1:])


def is_feasible(instance, mode=None):
    try:
        validate(instance, mode)
    except RapNcError:
        return False
    return True


def evaluate(objective, x):
    """Total cost ``sum_i f_i(x_i)``.

    Linear objectives with integral costs at integral points are summed in
    exact integer arithmetic.
    """
    x = np.asarray(x, dtype=float)
    if objective.needs_positive_domain and np.any(x <= 0):
        raise DomainError(f"{objective.kind} objective is undefined for x <= 0")
    if objective.kind == LINEAR and _is_integral(objective["p"]) and _is_integral(x):
        return int(sum(int(p) * int(v) for p, v in zip(objective["p"], x)))
    return float(np.sum(objective.value(x)))


def penalized_value(instance, x, M):
    """Cost with box violations charged at slope ``M`` (the L1 extension)."""
    x = np.asarray(x, dtype=float)
    c, d = instance.c, instance.d
    inside = np.clip(x, c, d)
    vals = instance.objective.value(inside)
    return float(np.sum(vals) + M * np.sum(np.abs(x - inside)))


def check_feasibility(instance, x, tol=0.0):
    """Residuals of ``x`` against the nested, box and total constraints.

    Residuals below ``tol`` are reported as zero.  Integral data and points
    are checked in exact integer arithmetic.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise ValueError(f"x must have length {instance.n}")
    a, b, c, d = instance.a, instance.b, instance.c, instance.d
    exact = all(_is_integral(v) for v in (x, a, b, c, d)) and np.max(np.abs(x), initial=0) < 2 ** 52
    if exact:
        xi = x.astype(np.int64)
        prefix = np.cumsum(xi)[instance.sigma - 1]
        ai, bi = a.astype(np.int64), b.astype(np.int64)
        nested = np.maximum(ai - prefix, prefix - bi)[:-1]
        box = np.maximum(c.astype(np.int64) - xi, xi - d.astype(np.int64))
        total = abs(int(prefix[-1]) - int(bi[-1]))
    else:
        prefix = np.cumsum(x)[instance.sigma - 1]
        nested = np.maximum(a - prefix, prefix - b)[:-1]
        box = np.maximum(c - x, x - d)
        total = abs(float(prefix[-1]) - float(b[-1]))

    def worst(values):
        v = float(max(0, np.max(values, initial=0)))
        return 0.0 if v <= tol else v

    return FeasibilityReport(worst(nested), worst(box), 0.0 if total <= tol else float(total))
