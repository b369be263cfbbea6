"""JSON documents for instances, solutions and the application models.

Numbers are written as decimal strings: integral values as plain integers,
everything else with ``repr`` so a float survives the round trip exactly.
Readers accept strings or JSON numbers.
"""

from __future__ import annotations

import json
from decimal import Decimal, InvalidOperation

import numpy as np

from .model import (
    CUSTOM,
    INTEGER,
    MODES,
    NestedInstance,
    NotIntegral,
    ObjectiveSpec,
    custom,
)
from .reductions import LegFuelCost, LotSizingInstance, ShiftedCost, SpeedOptInstance

FORMAT_DIGITS = 12


def fmt(v):
    """Decimal string of a scalar; integral floats print without a point."""
    v = float(v)
    if np.isfinite(v) and v == np.floor(v) and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(v)


def fmt_short(v):
    """Human-readable number with 12 significant digits."""
    return f"{float(v):.{FORMAT_DIGITS}g}"


def _arr(values):
    return [fmt(v) for v in np.asarray(values, dtype=float).ravel()]


def _parse(values, name, integer=False):
    raw = np.atleast_1d(np.asarray(values, dtype=object)).ravel()
    out = np.empty(len(raw))
    for k, v in enumerate(raw):
        try:
            dec = Decimal(str(v).strip())
        except InvalidOperation as exc:
            raise ValueError(f"{name}[{k}]: not a number: {v!r}") from exc
        if integer and dec.is_finite() and dec != dec.to_integral_value():
            raise NotIntegral(f"{name}[{k}] = {v} is fractional but the instance is integer")
        out[k] = float(dec)
    return out


# ---------------------------------------------------------------------------
# objectives


def objective_to_dict(obj):
    if obj.kind != CUSTOM:
        return {"kind": obj.kind, "params": {k: _arr(v) for k, v in obj.params.items()}}
    f = obj.func
    if isinstance(f, ShiftedCost):
        return {"kind": CUSTOM, "source": "shifted", "base": objective_to_dict(f.base),
                "extra": _arr(f.extra), "size": f.size}
    if isinstance(f, LegFuelCost):
        return {"kind": CUSTOM, "source": "leg_fuel", "voyage": speed_to_dict(f.so)}
    raise ValueError("custom objectives given as arbitrary callables cannot be written to a file")


def objective_from_dict(doc):
    kind = doc["kind"]
    if kind != CUSTOM:
        return ObjectiveSpec(kind, {k: _parse(v, k) for k, v in doc.get("params", {}).items()})
    source = doc.get("source")
    if source == "shifted":
        size = int(doc["size"])
        return custom(ShiftedCost(objective_from_dict(doc["base"]), _parse(doc["extra"], "extra"), size),
                      size=size)
    if source == "leg_fuel":
        so = speed_from_dict(doc["voyage"])
        return custom(LegFuelCost(so), size=so.legs + 2)
    raise ValueError(f"unknown custom objective source {source!r}")


# ---------------------------------------------------------------------------
# instances


def instance_to_dict(inst):
    return {
        "n": inst.n,
        "m": inst.m,
        "mode": inst.mode,
        "sigma": [str(int(s)) for s in inst.sigma],
        "a": _arr(inst.a),
        "b": _arr(inst.b),
        "c": _arr(inst.c),
        "d": _arr(inst.d),
        "objective": objective_to_dict(inst.objective),
    }


def instance_from_dict(doc, mode=None):
    """Build an instance; ``mode`` overrides the document's mode."""
    mode = mode or doc.get("mode", INTEGER)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    integer = mode == INTEGER
    sigma = _parse(doc["sigma"], "sigma", integer=True).astype(np.int64)
    fields = {k: _parse(doc[k], k, integer) for k in ("a", "b", "c", "d")}
    inst = NestedInstance(sigma, fields["a"], fields["b"], fields["c"], fields["d"],
                          objective_from_dict(doc["objective"]), mode)
    for key, have in (("n", inst.n), ("m", inst.m)):
        if key in doc and int(doc[key]) != have:
            raise ValueError(f"document says {key}={doc[key]} but the arrays give {have}")
    return inst


def dumps_instance(inst):
    return json.dumps(instance_to_dict(inst), indent=1)


def loads_instance(text, mode=None):
    return instance_from_dict(json.loads(text), mode)


def save_instance(inst, path):
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst) + "\n")


def load_instance(path, mode=None):
    with open(path) as fh:
        return loads_instance(fh.read(), mode)


# ---------------------------------------------------------------------------
# solutions


def solution_to_dict(alloc, report=None):
    doc = {
        "x": _arr(alloc.x),
        "objective": repr(float(alloc.objective_value)),
        "mode": alloc.mode,
    }
    if alloc.stats is not None:
        doc["rap_solves"] = alloc.stats.rap_solves
        doc["shortcut_hits"] = alloc.stats.shortcut_hits
    if report is not None:
        doc["feasibility"] = {
            "max_box_violation": repr(float(report.max_box_violation)),
            "max_nested_violation": repr(float(report.max_nested_violation)),
            "sum_residual": repr(float(report.sum_residual)),
        }
    return doc


def solution_x(doc):
    return _parse(doc["x"], "x")


# ---------------------------------------------------------------------------
# application models


def lot_sizing_to_dict(ls):
    return {
        "demand": _arr(ls.demand),
        "initial": fmt(ls.initial),
        "inventory_cap": _arr(ls.inventory_cap),
        "production_cap": _arr(ls.production_cap),
        "holding": _arr(ls.holding),
        "production": objective_to_dict(ls.production),
    }


def lot_sizing_from_dict(doc):
    return LotSizingInstance(
        _parse(doc["demand"], "demand"),
        float(_parse(doc.get("initial", 0), "initial")[0]),
        _parse(doc["inventory_cap"], "inventory_cap"),
        _parse(doc["production_cap"], "production_cap"),
        objective_from_dict(doc["production"]),
        _parse(doc["holding"], "holding") if "holding" in doc else None,
    )


def speed_to_dict(so):
    if not so.fuel_params:
        raise ValueError("voyages with a callback fuel curve cannot be written to a file")
    return {
        "distances": _arr(so.distances),
        "windows": [_arr(w) for w in so.windows],
        "v_min": fmt(so.v_min),
        "v_max": fmt(so.v_max),
        "v_opt": _arr(so.v_opt),
        "fuel": {"coef": _arr(so.fuel_params["coef"]), "exponent": fmt(so.fuel_params["exponent"])},
    }


def speed_from_dict(doc):
    fuel = doc.get("fuel", {})
    distances = _parse(doc["distances"], "distances")
    params = {
        "coef": list(_parse(fuel.get("coef", ["1"] * len(distances)), "coef")),
        "exponent": float(_parse(fuel.get("exponent", "3"), "exponent")[0]),
    }
    return SpeedOptInstance(
        distances,
        np.array([_parse(w, "window") for w in doc["windows"]]),
        float(_parse(doc["v_max"], "v_max")[0]),
        v_min=float(_parse(doc.get("v_min", "0"), "v_min")[0]),
        v_opt=_parse(doc["v_opt"], "v_opt") if "v_opt" in doc else None,
        fuel_params=params,
    )
