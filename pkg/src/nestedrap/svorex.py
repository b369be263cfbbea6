"""Support vector ordinal regression with explicit threshold constraints.

The dual has, per sample, a variable ``alpha`` for the threshold above its
class and ``alpha_star`` for the threshold below.  Ordering the variables as
(alpha of class 1, -alpha_star of class 2, alpha of class 2, -alpha_star of
class 3, ...) turns the threshold-ordering constraints into nested lower
bounds ``prefix >= 0`` with a zero total, so every projection of a gradient
step is a separable quadratic allocation problem with nested constraints.

Training is block-coordinate ascent: pick the variables that most violate the
optimality conditions, take ``n_grad`` projected gradient steps on them, and
repeat until no violation exceeds ``kkt_tol``.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import isotonic_regression

from .mda import solve_continuous
from .model import CONTINUOUS, IterationLimitExceeded, NestedInstance, quadratic
from .oracle import projection_check

ACTIVE_TOL = 1e-10


@dataclass
class OrdinalDataset:
    """Feature matrix and labels in ``1..r``; every class must be present."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y).astype(np.int64).ravel()
        if len(self.X) != len(self.y):
            raise ValueError("X and y lengths differ")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features must be finite")
        if len(self.y) and self.y.min() < 1:
            raise ValueError("labels start at 1")
        missing = np.setdiff1d(np.arange(1, self.r + 1), self.y)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} have no samples")

    @property
    def r(self):
        return int(self.y.max()) if len(self.y) else 0

    @property
    def counts(self):
        return np.bincount(self.y, minlength=self.r + 1)[1:]

    def __len__(self):
        return len(self.y)


def standardize(X):
    """Zero mean and unit variance per column (constant columns left at 0)."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def equal_frequency_labels(target, r):
    """Bin a continuous target into ``r`` ordinal classes of near-equal size."""
    ranks = np.argsort(np.argsort(target, kind="stable"), kind="stable")
    return (ranks * r) // len(target) + 1


def synthetic_dataset(n=200, dim=5, r=5, noise=0.3, seed=0):
    """Linear latent score plus noise, standardised and binned into r classes."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    w = rng.standard_normal(dim)
    latent = X @ w + noise * rng.standard_normal(n)
    return OrdinalDataset(standardize(X), equal_frequency_labels(latent, r))


def kernel_matrix(X, width=1.0, Z=None):
    """Gaussian kernel ``exp(-width * |x - z|^2)`` between rows of X and Z."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = X if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    sq = (X * X).sum(1)[:, None] + (Z * Z).sum(1)[None, :] - 2.0 * X @ Z.T
    K = np.exp(-width * np.maximum(sq, 0.0))
    if Z is X:
        np.fill_diagonal(K, 1.0)
    return K


@dataclass
class SvorexConfig:
    C: float = 10.0
    width: float = 1.0
    gamma: float = 0.2
    n_grad: int = 20
    n_ws: int = 2
    kkt_tol: float = 1e-3
    max_iter: int = 100_000
    check_projections: bool = False
    seed: int = 0


@dataclass
class WorkingSet:
    """Positions in the signed ordering, taken pair by pair."""

    positions: np.ndarray
    pairs: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def __len__(self):
        return len(self.positions)


class SvorexModel:
    """Dual variables, the signed-ordering layout and cached kernel products.

    Internally the state is ``u`` in the signed ordering: ``u = alpha`` on
    alpha slots and ``u = -alpha_star`` on alpha-star slots, with boxes
    ``[0, C]`` and ``[-C, 0]``.  ``kb = K @ beta`` with
    ``beta = alpha_star - alpha`` is kept up to date incrementally.
    """

    def __init__(self, dataset, config=None, K=None):
        self.dataset = dataset
        self.config = config or SvorexConfig()
        self.K = kernel_matrix(dataset.X, self.config.width) if K is None else K
        self.selections = 0
        self.projections = 0
        self.thresholds = None
        self._layout()
        self.u = np.zeros(len(self.sample))
        self.kb = np.zeros(len(dataset))

    def _layout(self):
        y, r, C = self.dataset.y, self.dataset.r, self.config.C
        sample, star, ends = [], [], []
        for j in range(1, r):
            lower = np.flatnonzero(y == j)
            upper = np.flatnonzero(y == j + 1)
            sample += [lower, upper]
            star += [np.zeros(len(lower), bool), np.ones(len(upper), bool)]
            ends.append(sum(len(s) for s in sample) - 1)
        self.sample = np.concatenate(sample) if sample else np.zeros(0, np.int64)
        self.star = np.concatenate(star) if star else np.zeros(0, bool)
        self.ends = np.asarray(ends, dtype=np.int64)
        self.lo = np.where(self.star, -C, 0.0)
        self.hi = np.where(self.star, 0.0, C)

    # -- views in sample terms -------------------------------------------
    @property
    def alpha(self):
        out = np.zeros(len(self.dataset))
        out[self.sample[~self.star]] = self.u[~self.star]
        return out

    @property
    def alpha_star(self):
        out = np.zeros(len(self.dataset))
        out[self.sample[self.star]] = -self.u[self.star]
        return out

    @property
    def beta(self):
        return self.alpha_star - self.alpha

    def set_duals(self, alpha, alpha_star):
        """Load duals given per sample (dummy entries are ignored)."""
        alpha = np.asarray(alpha, dtype=float)
        alpha_star = np.asarray(alpha_star, dtype=float)
        self.u = np.where(self.star, -alpha_star[self.sample], alpha[self.sample])
        self.kb = self.K @ self.beta
        return self

    def objective(self):
        """Dual objective ``sum(alpha + alpha*) - beta' K beta / 2`` (maximised)."""
        beta = self.beta
        return float(np.abs(self.u).sum() - 0.5 * beta @ self.kb)

    def gradient(self):
        """Partials of the dual objective per sample: (d/d alpha, d/d alpha*)."""
        return 1.0 + self.kb, 1.0 - self.kb

    def descent_gradient(self):
        """Gradient of the negated objective with respect to ``u``."""
        return np.where(self.star, 1.0, -1.0) - self.kb[self.sample]

    def prefix_slack(self):
        """Nested prefix sums at the class boundaries (must be >= 0, last = 0)."""
        return np.cumsum(self.u)[self.ends] if len(self.u) else np.zeros(0)

    def feasibility_residual(self):
        """Largest violation of boxes and threshold constraints."""
        if not len(self.u):
            return 0.0
        box = max(np.max(self.lo - self.u), np.max(self.u - self.hi), 0.0)
        P = self.prefix_slack()
        nested = max(np.max(-P[:-1], initial=0.0), abs(P[-1]))
        return float(max(box, nested))

    def latent(self, X=None):
        """Score ``sum_i beta_i K(x_i, x)``; training points when X is None."""
        if X is None:
            return self.kb.copy()
        Kx = kernel_matrix(self.dataset.X, self.config.width, X)
        return self.beta @ Kx

    # -- serialisation -----------------------------------------------------
    def to_dict(self):
        if self.thresholds is None:
            self.thresholds = recover_thresholds(self)
        return {
            "config": asdict(self.config),
            "alpha": [repr(float(v)) for v in self.alpha],
            "alpha_star": [repr(float(v)) for v in self.alpha_star],
            "thresholds": [repr(float(v)) for v in self.thresholds],
            "selections": self.selections,
            "objective": repr(self.objective()),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc, dataset):
        cfg = SvorexConfig(**doc["config"])
        model = cls(dataset, cfg)
        model.set_duals(np.array(doc["alpha"], dtype=float), np.array(doc["alpha_star"], dtype=float))
        model.thresholds = np.array(doc["thresholds"], dtype=float)
        model.selections = int(doc.get("selections", 0))
        return model


# ---------------------------------------------------------------------------
# working-set selection


def _best_pair(model, g, excluded):
    """Most violating (down, up) pair or None.

    Moving mass from p to q changes the negated objective at rate
    ``g_q - g_p``.  It is feasible when u_p can decrease, u_q can increase and,
    if p precedes q, no nested constraint between them is tight.
    """
    n = len(g)
    tt = ACTIVE_TOL * max(1.0, model.config.C)
    down = (model.u > model.lo + tt) & ~excluded
    up = (model.u < model.hi - tt) & ~excluded
    if not down.any() or not up.any():
        return None
    gd = np.where(down, g, -np.inf)
    # best p strictly after q
    after = np.full(n, -np.inf)
    after[:-1] = np.maximum.accumulate(gd[::-1])[::-1][1:]
    # best p strictly before q within the same run of slack constraints
    P = model.prefix_slack()
    tight = model.ends[:-1][P[:-1] <= tt]
    seg = np.zeros(n, dtype=np.int64)
    if tight.size:
        seg[tight + 1] = 1
        seg = np.cumsum(seg)
    before = np.full(n, -np.inf)
    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    stops = np.r_[starts[1:], n]
    for s, e in zip(starts, stops):
        run = np.maximum.accumulate(gd[s:e])
        before[s + 1:e] = run[:-1]
    best = np.maximum(after, before)
    viol = np.where(up, best - g, -np.inf)
    q = int(np.argmax(viol))
    if not np.isfinite(viol[q]):
        return None
    cand = gd.copy()
    cand[:q] = np.where(seg[:q] == seg[q], gd[:q], -np.inf)
    cand[q] = -np.inf
    p = int(np.argmax(cand))
    return p, q, float(viol[q])


def max_violation(model):
    """Largest pairwise optimality violation of the current model (0 if none)."""
    if not len(model.u):
        return 0.0
    pair = _best_pair(model, model.descent_gradient(), np.zeros(len(model.u), bool))
    return 0.0 if pair is None else max(pair[2], 0.0)


def select_working_set(model, n_ws=None):
    """Extract most-violating pairs until ``n_ws`` variables or none is left."""
    n_ws = model.config.n_ws if n_ws is None else n_ws
    ws = WorkingSet(np.zeros(0, dtype=np.int64))
    if not len(model.u):
        return ws
    g = model.descent_gradient()
    excluded = np.zeros(len(g), bool)
    chosen = []
    while len(chosen) + 2 <= max(n_ws, 2):
        pair = _best_pair(model, g, excluded)
        if pair is None or pair[2] <= model.config.kkt_tol:
            break
        p, q, v = pair
        chosen += [p, q]
        excluded[[p, q]] = True
        ws.pairs.append((p, q))
        ws.violations.append(v)
    ws.positions = np.sort(np.asarray(chosen, dtype=np.int64))
    return ws


# ---------------------------------------------------------------------------
# projection


def projection_instance(model, ws, target):
    """Quadratic nested instance for projecting ``target`` (signed, on ws).

    Frozen variables shift every nested bound by their prefix contribution;
    constraints with no working variable before them are constant and
    dropped, and constraints at the same working-set prefix are merged.
    """
    pos = ws.positions
    frozen = model.u.copy()
    frozen[pos] = 0.0
    F = np.cumsum(frozen)[model.ends]
    k = np.searchsorted(pos, model.ends, side="right")
    last = len(model.ends) - 1
    c, d = model.lo[pos], model.hi[pos]
    top = np.cumsum(d)
    total = -F[last]
    sigma, lower = [], []
    for j in range(last):
        if k[j] == 0:
            continue
        need = -F[j]
        if k[j] == len(pos):
            continue  # implied by the fixed total
        if sigma and sigma[-1] == k[j]:
            lower[-1] = max(lower[-1], need)
        else:
            sigma.append(int(k[j]))
            lower.append(need)
    sigma.append(len(pos))
    lower.append(total)
    upper = [top[s - 1] for s in sigma[:-1]] + [total]
    obj = quadratic(np.ones(len(pos)), np.asarray(target, dtype=float))
    return NestedInstance(np.array(sigma), np.array(lower), np.array(upper), c, d, obj, CONTINUOUS)


def project_working_set(model, ws, target):
    """Euclidean projection of ``target`` onto the feasible set with the
    variables outside ``ws`` frozen; returns the new signed values on ws."""
    inst = projection_instance(model, ws, target)
    x = np.clip(solve_continuous(inst).x, inst.c, inst.d)
    if model.config.check_projections:
        verdict = projection_check(inst, target, x, samples=1000, tol=1e-8,
                                   rng=model.config.seed + model.projections)
        if not verdict:
            raise AssertionError(f"projection check failed, worst {verdict.worst:.3g}")
    model.projections += 1
    return x


def _apply(model, pos, new):
    delta = new - model.u[pos]
    model.u[pos] = new
    # beta = alpha* - alpha moves by -delta on every slot
    model.kb -= model.K[:, model.sample[pos]] @ delta
    return float(np.max(np.abs(delta), initial=0.0))


@dataclass
class TrainLog:
    objectives: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    seconds: float = 0.0


def train(dataset, config=None, log=None):
    """Block-coordinate ascent with projected gradient steps on each block.

    ``log`` (a :class:`TrainLog`) receives the objective and feasibility
    residual after every working-set iteration.
    """
    config = config or SvorexConfig()
    model = SvorexModel(dataset, config)
    start = time.perf_counter()
    if log is not None:
        log.objectives.append(model.objective())
        log.residuals.append(model.feasibility_residual())
    while True:
        ws = select_working_set(model)
        if not len(ws):
            break
        if model.selections >= config.max_iter:
            model.thresholds = recover_thresholds(model)
            raise IterationLimitExceeded(f"no convergence after {model.selections} selections", model=model)
        model.selections += 1
        pos = ws.positions
        for _ in range(config.n_grad):
            g = model.descent_gradient()[pos]
            new = project_working_set(model, ws, model.u[pos] - config.gamma * g)
            # a fixed point of the projected step stays fixed
            if _apply(model, pos, new) <= ACTIVE_TOL * max(1.0, config.C):
                break
        if log is not None:
            log.objectives.append(model.objective())
            log.residuals.append(model.feasibility_residual())
    if log is not None:
        log.seconds = time.perf_counter() - start
    model.thresholds = recover_thresholds(model)
    return model


# ---------------------------------------------------------------------------
# prediction


def recover_thresholds(model):
    """Thresholds from the optimality conditions, then made non-decreasing.

    Sample i of class j bounds threshold j through alpha (``b_j = f_i + 1``
    when free, above it at 0, below it at C) and threshold j-1 through
    alpha_star (``b = f_i - 1`` when free).  Free variables give the estimate
    directly; otherwise the midpoint of the implied interval is used.
    """
    r = model.dataset.r
    if r < 2:
        return np.zeros(0)
    f = model.kb
    y = model.dataset.y
    C = model.config.C
    tt = ACTIVE_TOL * max(1.0, C)
    a, s = model.alpha, model.alpha_star
    b = np.zeros(r - 1)
    for j in range(1, r):
        lo_cls, hi_cls = y == j, y == j + 1
        fa, va = f[lo_cls] + 1.0, a[lo_cls]
        fs, vs = f[hi_cls] - 1.0, s[hi_cls]
        free = np.concatenate([fa[(va > tt) & (va < C - tt)], fs[(vs > tt) & (vs < C - tt)]])
        if free.size:
            b[j - 1] = free.mean()
            continue
        lows = np.concatenate([fa[va <= tt], fs[vs >= C - tt]])
        highs = np.concatenate([fa[va >= C - tt], fs[vs <= tt]])
        lo = lows.max() if lows.size else None
        hi = highs.min() if highs.size else None
        if lo is None and hi is None:
            b[j - 1] = 0.0
        elif lo is None or hi is None:
            b[j - 1] = lo if hi is None else hi
        else:
            b[j - 1] = 0.5 * (lo + hi)
    return isotonic_regression(b).x


def predict(model, X=None, thresholds: Optional[np.ndarray] = None):
    """Smallest class j with score <= b_j, else the top class."""
    b = model.thresholds if thresholds is None else thresholds
    if b is None:
        b = recover_thresholds(model)
    f = model.latent(X)
    return np.searchsorted(b, f, side="left") + 1


# ---------------------------------------------------------------------------
# text formats


def load_rows(path, delimiter=None):
    """Numeric rows of a delimited text file.

    Without an explicit delimiter, commas are used if the first line has one
    and whitespace otherwise.
    """
    if delimiter is None:
        with open(path) as fh:
            delimiter = "," if "," in fh.readline() else None
    return np.loadtxt(path, delimiter=delimiter, ndmin=2)


def load_dataset(path, delimiter=None):
    """Delimited text, one sample per line: features then an integer label."""
    data = load_rows(path, delimiter)
    return OrdinalDataset(data[:, :-1], data[:, -1])


def save_dataset(dataset, path, delimiter=","):
    rows = np.column_stack([dataset.X, dataset.y])
    fmt = ["%.12g"] * dataset.X.shape[1] + ["%d"]
    np.savetxt(path, rows, fmt=fmt, delimiter=delimiter)
