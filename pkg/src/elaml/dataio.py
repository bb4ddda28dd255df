"""Dataset loading with itemized validation, and JSON report serialization."""

from __future__ import annotations

import csv
import json
import math
import os
from importlib import resources

import numpy as np

from . import __version__
from .datasets import Dataset
from .errors import DataError
from .models import POOLED_X_COLS

REPORT_SCHEMA = "ela-report/1"

SALAMANDER_COLUMNS = ("female_id", "male_id", "experiment", "trtf", "trtm", "season", "y")
RONGELAP_COLUMNS = ("x_coord", "y_coord", "count", "time")


def vendored_path(name):
    """Filesystem path of a bundled data file (e.g. 'salamander.csv')."""
    return str(resources.files("elaml").joinpath("data", name))


def _read_rows(path, required):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(
            f"{path}: missing required columns", [f"column {c!r} absent" for c in missing]
        )
    return rows


def _collect(items, path):
    if items:
        raise DataError(f"{path}: invalid rows", items)


def load_salamander(path):
    rows = _read_rows(path, SALAMANDER_COLUMNS)
    items = []
    parsed = []
    seen = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            f = int(row["female_id"])
            m = int(row["male_id"])
            e = int(row["experiment"])
            trtf = int(row["trtf"])
            trtm = int(row["trtm"])
            season = int(row["season"])
            y = int(row["y"])
        except (TypeError, ValueError):
            items.append(f"line {lineno}: non-integer field")
            continue
        if e not in (1, 2, 3):
            items.append(f"line {lineno}: experiment must be 1, 2 or 3 (got {e})")
        for name, v in (("trtf", trtf), ("trtm", trtm), ("season", season), ("y", y)):
            if v not in (0, 1):
                items.append(f"line {lineno}: {name} must be 0 or 1 (got {v})")
        key = (f, m, e)
        if key in seen:
            items.append(
                f"line {lineno}: duplicate (female, male, experiment) "
                f"{key} first seen on line {seen[key]}"
            )
        else:
            seen[key] = lineno
        parsed.append((f, m, e, trtf, trtm, season, y))
    _collect(items, path)
    arr = np.array(parsed, dtype=float)
    female = np.unique(arr[:, 0].astype(int), return_inverse=True)[1]
    male = np.unique(arr[:, 1].astype(int), return_inverse=True)[1]
    X = np.column_stack(
        [np.ones(len(arr)), arr[:, 3], arr[:, 4], arr[:, 3] * arr[:, 4], arr[:, 5]]
    )
    return Dataset(
        y=arr[:, 6],
        X=X,
        x_names=POOLED_X_COLS,
        groups={
            "female": female,
            "male": male,
            "experiment": arr[:, 2].astype(int),
        },
    )


def load_rongelap(path):
    rows = _read_rows(path, RONGELAP_COLUMNS)
    items = []
    parsed = []
    for lineno, row in enumerate(rows, start=2):
        try:
            x = float(row["x_coord"])
            yc = float(row["y_coord"])
            count = float(row["count"])
            time = float(row["time"])
        except (TypeError, ValueError):
            items.append(f"line {lineno}: non-numeric field")
            continue
        if not all(map(math.isfinite, (x, yc, count, time))):
            items.append(f"line {lineno}: non-finite value")
            continue
        if count < 0:
            items.append(f"line {lineno}: count must be nonnegative (got {count})")
        if time <= 0:
            items.append(f"line {lineno}: time must be positive (got {time})")
        parsed.append((x, yc, count, time))
    _collect(items, path)
    arr = np.array(parsed)
    return Dataset(
        y=arr[:, 2],
        X=np.ones((len(arr), 1)),
        x_names=("intercept",),
        t=arr[:, 3],
        coords=arr[:, :2],
    )


def load_grouped_normal(path):
    """Simple schema for the normal mixed model: y, group, optional x_*."""
    rows = _read_rows(path, ("y", "group"))
    if not rows:
        raise DataError(f"{path}: no data rows")
    xcols = sorted(c for c in rows[0] if c.startswith("x_"))
    items = []
    y, g, xs = [], [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            y.append(float(row["y"]))
            g.append(row["group"])
            xs.append([float(row[c]) for c in xcols])
        except (TypeError, ValueError):
            items.append(f"line {lineno}: non-numeric field")
    _collect(items, path)
    group = np.unique(np.array(g), return_inverse=True)[1]
    X = np.column_stack([np.ones(len(y))] + ([np.array(xs)] if xcols else []))
    return Dataset(
        y=np.array(y),
        X=X,
        x_names=("intercept",) + tuple(xcols),
        groups={"group": group},
    )


def load_cluster_binary(path):
    """Single-cluster binary schema for the toy model: column y."""
    rows = _read_rows(path, ("y",))
    items = []
    y = []
    for lineno, row in enumerate(rows, start=2):
        try:
            v = int(row["y"])
        except (TypeError, ValueError):
            items.append(f"line {lineno}: non-integer y")
            continue
        if v not in (0, 1):
            items.append(f"line {lineno}: y must be 0 or 1 (got {v})")
        y.append(v)
    _collect(items, path)
    return Dataset(y=np.array(y, dtype=float), X=np.ones((len(y), 1)), x_names=("intercept",))


SCHEMAS = {
    "salamander": load_salamander,
    "rongelap": load_rongelap,
    "normal_lmm": load_grouped_normal,
    "bernoulli_cluster_toy": load_cluster_binary,
}

FAMILY_SCHEMA = {
    "summer_glmm": "salamander",
    "pooled_glmm": "salamander",
    "pooled_shared_glmm": "salamander",
    "spatial_poisson": "rongelap",
    "spatial_odp": "rongelap",
    "normal_lmm": "normal_lmm",
    "bernoulli_cluster_toy": "bernoulli_cluster_toy",
}


def load_dataset(path, schema):
    """Load and validate a CSV file against a named schema."""
    try:
        loader = SCHEMAS[schema]
    except KeyError:
        known = ", ".join(sorted(SCHEMAS))
        raise DataError(f"unknown schema {schema!r}; known: {known}") from None
    return loader(path)


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------


def _clean(value):
    """JSON-safe conversion; non-finite floats become null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def fit_report_dict(fit):
    cov = None
    if fit.cov is not None:
        cov = {
            "names": list(fit.names),
            "rowmajor": [float(v) for v in np.asarray(fit.cov).ravel(order="C")],
        }
    se = None
    if fit.se is not None:
        se = dict(zip(fit.names, (float(v) for v in fit.se)))
    return _clean(
        {
            "schema": REPORT_SCHEMA,
            "kind": "fit",
            "tool_version": __version__,
            "family": fit.family,
            "method": fit.method,
            "estimand": fit.estimand,
            "converged": bool(fit.converged),
            "estimates": dict(zip(fit.names, (float(v) for v in fit.values))),
            "se": se,
            "cov": cov,
            "loglik_at_opt": fit.loglik_at_opt,
            "ml_loglik_at_opt": fit.ml_loglik_at_opt,
            "B_point": fit.B_point,
            "B_tau": fit.B_tau,
            "B_se": fit.B_se,
            "seeds": dict(fit.seeds),
            "fixed": dict(fit.fixed),
            "warnings": list(fit.warnings),
            "mc_se": fit.mc_se,
            "ess": fit.ess,
        }
    )


def study_report_dict(study):
    tables = {}
    for method, tab in study.tables.items():
        tables[method] = {
            "names": list(tab.names),
            "truth": tab.truth,
            "est": tab.est,
            "se": tab.se,
            "sd": tab.sd,
            "raw_estimates": tab.raw_estimates,
            "raw_ses": tab.raw_ses,
            "rep_ids": list(tab.rep_ids),
            "failures": [[t, msg] for t, msg in tab.failures],
        }
    return _clean(
        {
            "schema": REPORT_SCHEMA,
            "kind": "study",
            "tool_version": __version__,
            "config": study.config.to_dict(),
            "tables": tables,
        }
    )


def report_dict(obj):
    if hasattr(obj, "tables"):
        return study_report_dict(obj)
    return fit_report_dict(obj)


def write_report(obj, path):
    """Serialize a fit or study result (or a prebuilt dict) as JSON."""
    doc = obj if isinstance(obj, dict) else report_dict(obj)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from exc


def read_report(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    if doc.get("schema") != REPORT_SCHEMA:
        raise DataError(f"{path}: unexpected report schema {doc.get('schema')!r}")
    return doc


def write_study_csv(study, path):
    """Summary rows: method, parameter, truth, Est, SE, SD."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "param", "truth", "est", "se", "sd"])
        for method in study.config.methods:
            tab = study.tables[method]
            for j, name in enumerate(tab.names):
                writer.writerow(
                    [
                        method,
                        name,
                        repr(float(tab.truth[j])),
                        repr(float(tab.est[j])),
                        repr(float(tab.se[j])),
                        repr(float(tab.sd[j])),
                    ]
                )
