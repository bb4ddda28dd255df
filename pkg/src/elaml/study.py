"""Replicated simulation studies with Est/SE/SD summaries.

Each replicate draws its own dataset from the truth with a counter-style
generator keyed by (base_seed, replicate), fits it, and contributes its
estimates and standard errors. Replicates are embarrassingly parallel and
results are assembled in replicate order, so output is independent of the
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .designs import canonical_design
from .errors import StudyError
from .fitting import FitOptions, fit_ml, fit_reml
from .models import build_model
from .params import ParamVec

WORKER_ENV_VAR = "ELA_ML_THREADS"


@dataclass
class StudyConfig:
    family: str
    truth: dict
    T: int
    B_point: int = 50
    B_tau: int | None = None
    B_se: int | None = None
    methods: tuple = ("ela",)
    estimand: str = "reml"
    base_seed: int = 0
    parallelism: int = 1
    design: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if self.T < 2:
            raise ValueError("a study needs at least T=2 replicates")
        if self.estimand not in ("ml", "reml"):
            raise ValueError("estimand must be 'ml' or 'reml'")
        for m in self.methods:
            if m not in ("la", "ela"):
                raise ValueError("methods must be 'la' or 'ela'")

    def to_dict(self):
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["methods"] = tuple(data.get("methods", ("ela",)))
        return cls(**data)


@dataclass
class SummaryTable:
    method: str
    names: tuple
    truth: np.ndarray
    est: np.ndarray
    se: np.ndarray
    sd: np.ndarray
    raw_estimates: np.ndarray
    raw_ses: np.ndarray
    rep_ids: list
    failures: list


@dataclass
class StudyResult:
    config: StudyConfig
    tables: dict


def summarize(estimates, ses):
    """Column means of estimates and SEs plus the sample SD (divisor T-1).

    Replicates whose standard errors were unavailable (indefinite
    information at the optimum) carry NaN rows in `ses` and are skipped in
    the SE average only.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    ses = np.atleast_2d(np.asarray(ses, dtype=float))
    if estimates.shape[0] < 2:
        raise ValueError("summaries need at least two replicates")
    est = estimates.mean(axis=0)
    with np.errstate(invalid="ignore"):
        se = np.nanmean(ses, axis=0)
    sd = estimates.std(axis=0, ddof=1)
    return est, se, sd


def replicate_rng(base_seed, t):
    """Independent, reproducible, order-free stream for replicate t."""
    key = np.array([np.uint64(base_seed), np.uint64(t)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _replicate_seed(base_seed, t):
    return int(np.random.SeedSequence(entropy=(int(base_seed), int(t))).generate_state(1)[0])


def _truth_paramvec(model, truth):
    names = model.layout.names
    missing = [n for n in names if n not in truth]
    if missing:
        raise ValueError(f"truth is missing coordinates {missing}")
    vec = np.array([float(truth[n]) for n in names])
    return ParamVec.from_natural_vector(model.layout, vec)


def _run_replicate(config, t):
    """Simulate replicate t, fit it with every method, return raw results."""
    template = build_model(config.family, canonical_design(config.family, **config.design))
    theta_true = _truth_paramvec(template, config.truth)
    rng = replicate_rng(config.base_seed, t)
    dataset = template.simulate_response(theta_true, rng)
    model = build_model(config.family, dataset)
    seed = _replicate_seed(config.base_seed, t)
    out = {}
    for method in config.methods:
        opts = FitOptions(seed=seed, B_se=config.B_se, B_tau=config.B_tau, **config.fit)
        try:
            if config.estimand == "reml":
                fit = fit_reml(model, B=config.B_point, opts=opts, method=method)
            else:
                fit = fit_ml(model, B=config.B_point, opts=opts, method=method)
            if not fit.converged:
                out[method] = ("fail", "fit did not converge")
            else:
                se = fit.se if fit.se is not None else np.full(len(fit.values), np.nan)
                out[method] = ("ok", (fit.values, se))
        except Exception as exc:  # noqa: BLE001 - replicate failures are data
            out[method] = ("fail", f"{type(exc).__name__}: {exc}")
    return t, out


def _worker_count(config, workers=None):
    w = int(workers) if workers is not None else int(config.parallelism)
    cap = os.environ.get(WORKER_ENV_VAR)
    if cap:
        w = min(w, max(1, int(cap)))
    return max(1, w)


def run_study(config, workers=None):
    """Run the replicated study; deterministic for any worker count."""
    nworkers = _worker_count(config, workers)
    results = {}
    if nworkers == 1:
        for t in range(config.T):
            t_out = _run_replicate(config, t)
            results[t_out[0]] = t_out[1]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            for t, out in pool.map(
                _run_replicate, [config] * config.T, range(config.T)
            ):
                results[t] = out

    template = build_model(config.family, canonical_design(config.family, **config.design))
    names = template.layout.names
    truth = np.array([float(config.truth[n]) for n in names])
    tables = {}
    for method in config.methods:
        rows_est, rows_se, rep_ids, failures = [], [], [], []
        for t in range(config.T):
            status, payload = results[t][method]
            if status == "ok":
                values, ses = payload
                rows_est.append(values)
                rows_se.append(ses)
                rep_ids.append(t)
            else:
                failures.append((t, payload))
        if len(failures) > 0.2 * config.T:
            raise StudyError(
                f"method {method!r}: {len(failures)} of {config.T} replicates "
                "failed (more than 20%)",
                failures=[f"replicate {t}: {msg}" for t, msg in failures],
            )
        est, se, sd = summarize(np.array(rows_est), np.array(rows_se))
        tables[method] = SummaryTable(
            method=method,
            names=names,
            truth=truth,
            est=est,
            se=se,
            sd=sd,
            raw_estimates=np.array(rows_est),
            raw_ses=np.array(rows_se),
            rep_ids=rep_ids,
            failures=failures,
        )
    return StudyResult(config=config, tables=tables)
