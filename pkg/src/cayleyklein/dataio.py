"""CSV ingestion and JSON persistence of metrics and reports."""

import csv
from dataclasses import dataclass
import json
import math
from pathlib import Path

import numpy as np

from .errors import (
    CayleyKleinError,
    EmptyDataset,
    InvariantViolation,
    ParseError,
    RaggedRows,
    SchemaError,
)
from .geometry import BilinearForm, GeometryKind, MixedMetric, signature
from .learning import LabeledDataset, MetricState, Standardizer


@dataclass
class DatasetSchema:
    """How to read a labelled CSV.

    ``has_header=None`` guesses: the first row is a header when the label
    column is given by name or when any of its feature cells is not a number.
    """

    label_column: object = "last"
    delimiter: str = ","
    has_header: bool = None
    standardize: bool = True


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _guess_header(schema, first):
    label = schema.label_column
    if not isinstance(label, int) and str(label).lower() not in ("first", "last") \
            and not str(label).lstrip("-").isdigit():
        return True
    lab = _label_index(label, None, len(first))
    return not all(_is_number(c) for j, c in enumerate(first) if j != lab)


def _label_index(label, header, ncols):
    if isinstance(label, int):
        idx = label
    elif str(label).lower() == "last":
        idx = ncols - 1
    elif str(label).lower() == "first":
        idx = 0
    elif str(label).lstrip("-").isdigit():
        idx = int(label)
    elif header is not None and label in header:
        idx = header.index(label)
    else:
        raise SchemaError(f"label column {label!r} not found")
    if idx < 0:
        idx += ncols
    if not 0 <= idx < ncols:
        raise SchemaError(f"label column {label!r} out of range for {ncols} columns")
    return idx


def load_dataset(path, schema=None):
    """Read a delimited text file into a :class:`LabeledDataset`.

    Labels are mapped to ``0..C-1`` in order of first appearance.  With
    ``schema.standardize`` the features are z-scored and the statistics kept
    on ``dataset.scaler``.
    """
    schema = schema or DatasetSchema()
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=schema.delimiter))
                if r and any(c.strip() for c in r)]
    header = None
    has_header = schema.has_header
    if has_header is None:
        has_header = bool(rows) and _guess_header(schema, rows[0][1])
    if has_header and rows:
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if len(rows) < 2:
        raise EmptyDataset(f"{path}: need at least two data rows, found {len(rows)}")
    ncols = len(rows[0][1])
    if ncols < 2:
        raise SchemaError("need at least one feature column and a label column")
    lab = _label_index(schema.label_column, header, ncols)

    X = np.empty((len(rows), ncols - 1))
    names, y = [], []
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != ncols:
            raise RaggedRows(f"line {lineno} has {len(cells)} fields, expected {ncols}")
        label = cells[lab].strip()
        if label not in names:
            names.append(label)
        y.append(names.index(label))
        c = 0
        for j, cell in enumerate(cells):
            if j == lab:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric feature {cell.strip()!r}", row=lineno, column=j + 1) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite feature {cell.strip()!r}", row=lineno, column=j + 1)
            X[r, c] = v
            c += 1
    data = LabeledDataset(X, np.array(y), names)
    return data.standardized() if schema.standardize else data


# -- JSON --------------------------------------------------------------------

def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise SchemaError("non-finite number cannot be serialised")
    s = format(x, ".17g")
    return s if any(ch in s for ch in ".en") else s + ".0"


def dumps(obj, indent=0):
    """Deterministic JSON with floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k)) + ": " + dumps(v, indent + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise SchemaError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def form_to_json(F):
    return {"kind": F.kind.value, "kappa": F.kappa, "dim": F.dim, "S": F.S.reshape(-1)}


def _scaler_json(scaler):
    return {"mean": scaler.mean, "std": scaler.std}


def metric_to_json(m):
    if isinstance(m, BilinearForm):
        return form_to_json(m)
    if isinstance(m, MixedMetric):
        out = {"kind": "mixed", "alpha": m.alpha, "dim": m.dim,
               "elliptic": form_to_json(m.elliptic_form),
               "hyperbolic": form_to_json(m.hyperbolic_form)}
        states = m.extras.get("states")
        if states:
            out["elliptic"] = metric_to_json(states[0])
            out["hyperbolic"] = metric_to_json(states[1])
        scaler = m.extras.get("scaler")
        if scaler is not None:
            out["standardization"] = _scaler_json(scaler)
        return out
    if isinstance(m, MetricState):
        out = form_to_json(m.form())
        out["factor_L"] = m.L.reshape(-1)
        if m.D is not None:
            out["factor_D"] = m.D
        if m.scaler is not None:
            out["standardization"] = _scaler_json(m.scaler)
        return out
    raise SchemaError(f"cannot serialise metric of type {type(m).__name__}")


def _require(obj, key, kinds=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"missing field {key!r}")
    v = obj[key]
    if kinds is not None and not isinstance(v, kinds):
        raise SchemaError(f"field {key!r} has the wrong type")
    return v


def _square(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.size != n * n:
        raise SchemaError(f"{name} must hold {n * n} numbers, got {arr.size}")
    return arr.reshape(n, n)


def _scaler_from(obj, dim):
    st = obj.get("standardization")
    if st is None:
        return None
    mean = np.asarray(_require(st, "mean", list), dtype=float)
    std = np.asarray(_require(st, "std", list), dtype=float)
    if mean.shape != (dim,) or std.shape != (dim,) or np.any(std <= 0):
        raise InvariantViolation("standardization: bad mean/std vectors")
    return Standardizer(mean, std)


def form_from_json(obj):
    kind = _require(obj, "kind", str)
    kappa = float(_require(obj, "kappa", (int, float)))
    dim = _require(obj, "dim", int)
    try:
        kind = GeometryKind.parse(kind)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    n = dim if kind is GeometryKind.FLAT else dim + 1
    S = _square(_require(obj, "S", list), n, "S")
    try:
        return BilinearForm(S, kind, kappa)
    except CayleyKleinError as exc:
        raise InvariantViolation(f"{kind.value} form invalid: {exc}") from None
    except ValueError as exc:
        raise InvariantViolation(f"{kind.value} form invalid: {exc}") from None


def metric_from_json(obj):
    if not isinstance(obj, dict):
        raise SchemaError("metric file must hold a JSON object")
    if obj.get("kind") == "mixed":
        alpha = float(_require(obj, "alpha", (int, float)))
        e = metric_from_json(_require(obj, "elliptic", dict))
        h = metric_from_json(_require(obj, "hyperbolic", dict))
        states = (e, h) if isinstance(e, MetricState) and isinstance(h, MetricState) else None
        ef = e.form() if isinstance(e, MetricState) else e
        hf = h.form() if isinstance(h, MetricState) else h
        try:
            mixed = MixedMetric(ef, hf, alpha, extras={})
        except ValueError as exc:
            raise InvariantViolation(f"mixed metric invalid: {exc}") from None
        if states:
            mixed.extras["states"] = states
        scaler = _scaler_from(obj, mixed.dim)
        if scaler is not None:
            mixed.extras["scaler"] = scaler
        return mixed

    form = form_from_json(obj)
    if "factor_L" not in obj:
        return form
    kind = form.kind
    n = form.S.shape[0]
    L = _square(obj["factor_L"], n, "factor_L")
    if np.any(np.triu(L, 1) != 0.0):
        raise InvariantViolation("factor_L must be lower triangular")
    if np.any(np.diagonal(L) <= 0.0):
        raise InvariantViolation("factor_L must have a positive diagonal")
    D = None
    if kind is GeometryKind.HYPERBOLIC:
        D = np.asarray(_require(obj, "factor_D", list), dtype=float)
        if D.shape != (n,):
            raise SchemaError(f"factor_D must hold {n} numbers")
        neg, zero, pos = signature(np.diag(D))
        if zero or min(neg, pos) != 1:
            raise InvariantViolation("factor_D must have exactly one minority-sign entry")
    state = MetricState(kind, L, D, form.kappa, _scaler_from(obj, form.dim))
    rebuilt = state.form().S
    if np.max(np.abs(rebuilt - form.S)) > 1e-9 * max(1.0, np.max(np.abs(form.S))):
        raise InvariantViolation("S does not match its factors")
    return state


def save_metric(path, m):
    write_json(path, metric_to_json(m))


def load_metric(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return metric_from_json(obj)


def train_report_to_json(report):
    return {
        "iterations": report.iterations,
        "stopped": report.stopped,
        "halvings": report.halvings,
        "active_impostors": report.active_impostors,
        "initial_cost": report.initial_cost,
        "final_cost": report.final_cost,
        "cost_trace": [[i, c] for i, c in report.cost_trace],
        "gamma_trace": [[i, g] for i, g in report.gamma_trace],
    }


def load_scene(path):
    """Scene JSON: form, sites, optional labels, order, balls and window."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    form = form_from_json(_require(obj, "form", dict))
    sites = np.asarray(obj.get("sites", []), dtype=float).reshape(-1, form.dim)
    labels = obj.get("labels")
    balls = []
    for b in obj.get("balls", []):
        balls.append((np.asarray(_require(b, "center", list), dtype=float),
                      float(_require(b, "radius", (int, float)))))
    window = obj.get("window")
    if window is not None and len(window) != 4:
        raise SchemaError("window must be [xmin, ymin, xmax, ymax]")
    return {"form": form, "sites": sites, "labels": labels,
            "order": int(obj.get("order", 1)), "balls": balls, "window": window}
