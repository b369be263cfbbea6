"""
Ordinal regression with nested projections
==========================================

The dual of a threshold ordinal classifier has a feasible set made of boxes
and nested prefix bounds, so each projected gradient step is a small
quadratic allocation.  We train on synthetic data and compare working-set
sizes.
"""

# %%
import numpy as np

from nestedrap.svorex import (
    OrdinalDataset,
    SvorexConfig,
    TrainLog,
    max_violation,
    predict,
    synthetic_dataset,
    train,
)

ds = synthetic_dataset(n=200, dim=5, r=5, noise=0.3, seed=0)
print("class sizes", ds.counts)

# %%
results = {}
for n_ws in (2, 4, 6, 10):
    log = TrainLog()
    model = train(ds, SvorexConfig(n_ws=n_ws), log)
    results[n_ws] = model
    print(f"n_ws={n_ws:<2d} selections={model.selections:<5d} time={log.seconds:6.2f}s "
          f"objective={model.objective():.6f} worst residual={max(log.residuals):.1e} "
          f"monotone={bool(np.all(np.diff(log.objectives) >= -1e-9))}")

# %%
model = results[6]
print("thresholds", np.round(model.thresholds, 4))
print("remaining violation", max_violation(model))
print("training accuracy", np.mean(predict(model) == ds.y))

# %%
# Held-out accuracy: train on 200 samples of a 300-sample draw, score the rest.
full = synthetic_dataset(n=300, dim=5, r=5, noise=0.3, seed=1)
fit = OrdinalDataset(full.X[:200], full.y[:200])
held = train(fit, SvorexConfig(n_ws=6))
pred = predict(held, full.X[200:])
print("held-out accuracy", np.mean(pred == full.y[200:]))
print("held-out mean absolute class error", np.mean(np.abs(pred - full.y[200:])))

# %%
# The unit-width kernel memorises the training set in five dimensions.  A
# wider kernel (smaller width) trades training fit for held-out accuracy.
for width in (0.3, 0.03):
    m = train(fit, SvorexConfig(n_ws=6, width=width))
    pred = predict(m, full.X[200:])
    print(f"width={width:<5g} held-out accuracy {np.mean(pred == full.y[200:]):.2f} "
          f"mean absolute class error {np.mean(np.abs(pred - full.y[200:])):.2f}")
