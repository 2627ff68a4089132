"""Sweeps over sample sizes, with resumable JSONL persistence and rate summaries.

Each ``(n, replicate)`` key draws from streams indexed by
``n * STREAM_STRIDE + replicate``, so keys are independent of one another and
of the order in which they are computed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rng as rng_mod
from .bounds import (ExtrapolationWarning, hetero_upper_bound, homo_upper_bound,
                     integrated_covariance, kappa_alpha, loglog_slope)
from .config import ExperimentConfig
from .interpolator import min_norm_fit
from .risk import bias_variance_terms, exact_excess_risk
from .sampler import Model, build_model
from .spectra import INFINITE, KStarInfinite, rate_sequences
from .temporal import ToeplitzCov, nu as nu_of

STREAM_STRIDE = 1_000_000
RECORDS_FILE = "records.jsonl"
RECORDS_CSV = "records.csv"
SUMMARY_CSV = "summary.csv"
PLOT_SVG = "rates.svg"


@dataclass
class ResultRecord:
    config_hash: str
    n: int
    replicate: int
    seed: int
    stream_index: int
    p: int
    exact_risk: Optional[float] = None
    bias_term: Optional[float] = None
    variance_trace: Optional[float] = None
    k_star: Optional[float] = None
    nu: Optional[float] = None
    zeta: Optional[float] = None
    tau: Optional[float] = None
    eta: Optional[float] = None
    rate_prediction: Optional[float] = None
    bias_bound: Optional[float] = None
    variance_bound: Optional[float] = None
    regime: Optional[str] = None
    wall_time: float = 0.0
    error: Optional[str] = None
    generator_id: str = rng_mod.GENERATOR_ID

    @property
    def key(self) -> tuple[int, int]:
        return self.n, self.replicate

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        d = json.loads(line)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def numeric_fields(self) -> dict:
        """Everything except timing, for reproducibility comparisons."""
        d = asdict(self)
        d.pop("wall_time")
        return d


CSV_COLUMNS = [f.name for f in fields(ResultRecord)]


def config_hash(config: ExperimentConfig) -> str:
    """Digest of everything that affects numeric results (not jobs or paths)."""
    d = config.to_dict()
    d["experiment"].pop("jobs", None)
    d.pop("output", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# --- per-n context --------------------------------------------------------

@dataclass
class _Context:
    model: Model
    nu: float
    rates: Optional[tuple]
    prediction: Optional[float]
    integrated: object = None


_CACHE: dict = {}


def _nu_for(config: ExperimentConfig, model: Model) -> float:
    if isinstance(model.design, ToeplitzCov):
        return nu_of(model.design, model.noise)
    # hetero: reference covariance is the identity, so nu0 = ||Upsilon||
    return float(model.noise.eigvalsh()[-1])


def _context(config: ExperimentConfig, chash: str, n: int) -> _Context:
    key = (chash, n)
    if key in _CACHE:
        return _CACHE[key]
    spectrum = config.spectrum.build(n, config.master_seed)
    model = build_model(spectrum, config.temporal, n, config.noise, config.noise_scale, config.beta)
    model.config_hash = chash
    v = _nu_for(config, model)
    try:
        rs = rate_sequences(spectrum, n, config.bounds.b)
        rates = (rs.zeta, rs.tau, rs.eta, rs.k_star)
        if config.mode == "homo":
            pred = rs.tau + v * rs.eta
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ExtrapolationWarning)
                pred = math.sqrt(rs.zeta) * kappa_alpha(n, config.bounds.alpha) + v * rs.eta
    except KStarInfinite:
        rates, pred = None, None
    integ = None
    if config.mode == "hetero":
        integ = integrated_covariance(spectrum, model.design, n)
    ctx = _Context(model, v, rates, pred, integ)
    _CACHE.clear()  # keep one n per process
    _CACHE[key] = ctx
    return ctx


def _bounds(config: ExperimentConfig, ctx: _Context, beta: np.ndarray, n: int):
    bc = config.bounds
    if config.mode == "homo":
        return homo_upper_bound(ctx.model.spectrum, beta, ctx.nu, n, bc.b, bc.c, bc.delta)
    return hetero_upper_bound(ctx.model.spectrum, ctx.integrated, float(np.linalg.norm(beta)),
                              ctx.nu, n, bc.b, bc.c, bc.delta)


def run_replicate(config: ExperimentConfig, chash: str, n: int, r: int) -> ResultRecord:
    t0 = time.perf_counter()
    index = n * STREAM_STRIDE + r
    rec = ResultRecord(chash, n, r, config.master_seed, index, 0)
    try:
        ctx = _context(config, chash, n)
        spectrum = ctx.model.spectrum
        rec.p = spectrum.p
        rec.nu = ctx.nu
        if ctx.rates is not None:
            rec.zeta, rec.tau, rec.eta, rec.k_star = ctx.rates
        else:
            rec.k_star = INFINITE
        rec.rate_prediction = ctx.prediction
        inst = ctx.model.draw(config.master_seed, index, check_rank=False)
        fit = min_norm_fit(inst.X, inst.Y)
        rec.bias_term, rec.variance_trace = bias_variance_terms(
            inst.X, spectrum, ctx.model.noise, inst.beta_star, fit.svd)
        rec.exact_risk = exact_excess_risk(fit.beta_hat, inst.beta_star, spectrum)
        rep = _bounds(config, ctx, inst.beta_star, n)
        rec.bias_bound, rec.variance_bound, rec.regime = rep.bias_bound, rep.variance_bound, rep.regime
    except Exception as exc:  # recorded, sweep continues
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - t0
    return rec


def _task(args):
    return run_replicate(*args)


# --- persistence ----------------------------------------------------------

def load_records(path: str) -> list[ResultRecord]:
    """Read a JSONL file, ignoring a truncated final line."""
    if not os.path.exists(path):
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.endswith("\n"):
                break
            try:
                out.append(ResultRecord.from_json(line))
            except (json.JSONDecodeError, TypeError):
                break
    return out


def _rewrite_jsonl(path: str, records: Sequence[ResultRecord]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, path)


def write_records_csv(path: str, records: Iterable[ResultRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in records:
            d = asdict(rec)
            w.writerow(["" if d[c] is None else d[c] for c in CSV_COLUMNS])


def run_sweep(config: ExperimentConfig, out_dir: Optional[str] = None, jobs: Optional[int] = None,
              limit: Optional[int] = None) -> list[ResultRecord]:
    """Run every missing ``(n, replicate)`` key and return all records in key order.

    Records are appended to ``records.jsonl`` as they finish; keys already in
    the file are skipped. ``limit`` caps how many new keys are computed, which
    simulates an interrupted run. A derived ``records.csv`` is rewritten at the end.
    """
    out_dir = out_dir or config.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RECORDS_FILE)
    chash = config_hash(config)
    existing = load_records(path)
    for rec in existing:
        if rec.config_hash != chash:
            raise ValueError(f"{path} holds records of another configuration ({rec.config_hash})")
    # drop any partial trailing line left by a cancelled run
    _rewrite_jsonl(path, existing)
    done = {rec.key for rec in existing}
    todo = [(n, r) for n in config.n_grid for r in range(config.reps) if (n, r) not in done]
    if limit is not None:
        todo = todo[:limit]
    jobs = jobs or config.jobs
    tasks = [(config, chash, n, r) for n, r in todo]
    new: list[ResultRecord] = []
    with open(path, "a", encoding="utf-8") as fh:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(_task, tasks, chunksize=max(1, config.reps // jobs))
                for rec in results:
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
                    new.append(rec)
        else:
            for t in tasks:
                rec = _task(t)
                fh.write(rec.to_json() + "\n")
                fh.flush()
                new.append(rec)
    records = sorted(existing + new, key=lambda rec: rec.key)
    if [rec.key for rec in records] != [rec.key for rec in existing + new]:
        _rewrite_jsonl(path, records)
    write_records_csv(os.path.join(out_dir, RECORDS_CSV), records)
    return records


# --- summaries and plot data ----------------------------------------------

@dataclass
class RateRow:
    n: int
    reps: int
    failures: int
    median_risk: float
    mean_risk: float
    se_risk: float
    q05: float
    q95: float
    mean_variance: float
    mean_bias: float
    predicted_rate: Optional[float]
    median_bias_bound: Optional[float]
    median_variance_bound: Optional[float]
    zeta: Optional[float]
    tau: Optional[float]
    eta: Optional[float]
    nu: Optional[float]


@dataclass
class RateSummary:
    rows: list
    risk_slope: Optional[float]
    prediction_slope: Optional[float]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "risk_slope": self.risk_slope,
                "prediction_slope": self.prediction_slope}


def _median_or_none(vals):
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else None


def summarize(records: Iterable[ResultRecord]) -> RateSummary:
    """Per-n statistics of the exact risk and log-log slopes against n."""
    by_n: dict[int, list[ResultRecord]] = {}
    for rec in records:
        by_n.setdefault(rec.n, []).append(rec)
    rows = []
    for n in sorted(by_n):
        recs = sorted(by_n[n], key=lambda r: r.replicate)
        ok = [r for r in recs if r.error is None and r.exact_risk is not None]
        if not ok:
            continue
        risk = np.array([r.exact_risk for r in ok])
        first = ok[0]
        rows.append(RateRow(
            n=n, reps=len(ok), failures=len(recs) - len(ok),
            median_risk=float(np.median(risk)), mean_risk=float(risk.mean()),
            se_risk=float(risk.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else float("nan"),
            q05=float(np.quantile(risk, 0.05)), q95=float(np.quantile(risk, 0.95)),
            mean_variance=float(np.mean([r.variance_trace for r in ok])),
            mean_bias=float(np.mean([r.bias_term for r in ok])),
            predicted_rate=first.rate_prediction,
            median_bias_bound=_median_or_none(r.bias_bound for r in ok),
            median_variance_bound=_median_or_none(r.variance_bound for r in ok),
            zeta=first.zeta, tau=first.tau, eta=first.eta, nu=first.nu))
    if not rows:
        raise ValueError("no successful records to summarize")
    ns = [r.n for r in rows]
    risk_slope = loglog_slope(ns, [r.median_risk for r in rows]) if len(rows) > 1 else None
    preds = [r.predicted_rate for r in rows]
    pred_slope = (loglog_slope(ns, preds) if len(rows) > 1 and None not in preds else None)
    return RateSummary(rows, risk_slope, pred_slope)


def alpha_curves(summary: RateSummary, alphas: Sequence[float] = (0.5, 1.0, 2.0)) -> dict:
    """Hetero predictions ``sqrt(zeta) kappa_alpha + nu eta`` for each alpha."""
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        for a in alphas:
            vals = []
            for r in summary.rows:
                if r.zeta is None:
                    vals.append(None)
                else:
                    vals.append(math.sqrt(r.zeta) * kappa_alpha(r.n, a) + r.nu * r.eta)
            out[a] = vals
    return out


PLOT_COLUMNS = ["n", "median_risk", "predicted_rate", "bias_bound", "variance_bound"]


def emit_plot_data(summary: RateSummary, path: str, fmt: str = "csv",
                   alphas: Sequence[float] = (0.5, 1.0, 2.0)) -> str:
    """Write the rate-comparison data as CSV or as an SVG log-log chart."""
    if not summary.rows:
        raise ValueError("empty summary")
    curves = alpha_curves(summary, alphas)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(PLOT_COLUMNS + [f"predicted_alpha_{a:g}" for a in alphas])
            for i, r in enumerate(summary.rows):
                row = [r.n, r.median_risk, r.predicted_rate, r.median_bias_bound,
                       r.median_variance_bound] + [curves[a][i] for a in alphas]
                w.writerow(["" if v is None else v for v in row])
        return path
    if fmt != "svg":
        raise ValueError(f"unknown format {fmt!r}")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ns = np.array([r.n for r in summary.rows], dtype=float)
    risk = np.array([r.median_risk for r in summary.rows])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(ns, risk, "o-", color="black", label="median excess risk")

    def anchored(vals):
        # unknown constants: align each curve with the empirical first point
        v = np.array(vals, dtype=float)
        return v * risk[0] / v[0]

    preds = [r.predicted_rate for r in summary.rows]
    if None not in preds:
        ax.loglog(ns, anchored(preds), "s--", label="tau + nu eta (homo)")
    for a in alphas:
        if None in curves[a]:
            continue
        tag = " (extrapolated)" if a <= 0.5 else ""
        ax.loglog(ns, anchored(curves[a]), ":", label=f"hetero, alpha={a:g}{tag}")
    ax.set_xlabel("n")
    ax.set_ylabel("excess risk (curves anchored at first n)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def write_summary_csv(summary: RateSummary, path: str) -> None:
    names = [f.name for f in fields(RateRow)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["risk_slope", "prediction_slope"])
        for r in summary.rows:
            d = asdict(r)
            w.writerow(["" if d[k] is None else d[k] for k in names]
                       + [summary.risk_slope, summary.prediction_slope])
