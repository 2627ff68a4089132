"""Command-line entry point ``bolab``.

Subcommands: spectrum, sample, fit, risk, bounds, verify, sweep, report.
Output files default to ``$BOLAB_OUTPUT_DIR`` (or ``./bolab_output``).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from .bounds import homo_lower_bounds, homo_upper_bound, hetero_upper_bound, integrated_covariance
from .config import ConfigError, ExperimentConfig
from .experiment import (PLOT_SVG, RECORDS_FILE, SUMMARY_CSV, _nu_for, config_hash,
                         emit_plot_data, load_records, run_sweep, summarize, write_summary_csv)
from .interpolator import certify, min_norm_fit
from .risk import mc_risk
from .sampler import build_model, make_beta
from .spectra import INFINITE, effective_ranks, k_star
from .temporal import nu as nu_of
from . import verify as checks


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _dump(obj, out: Optional[str] = None) -> None:
    text = json.dumps(obj, default=_json_default, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["master_seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        over["reps"] = args.reps
    if getattr(args, "jobs", None) is not None:
        over["jobs"] = args.jobs
    return cfg.replace(**over) if over else cfg


def _n(args, cfg: ExperimentConfig) -> int:
    return args.n if getattr(args, "n", None) else cfg.n_grid[0]


def _model(cfg: ExperimentConfig, n: int):
    sp = cfg.spectrum.build(n, cfg.master_seed)
    m = build_model(sp, cfg.temporal, n, cfg.noise, cfg.noise_scale, cfg.beta)
    m.config_hash = config_hash(cfg)
    return m


def _out_dir(args, cfg: ExperimentConfig) -> str:
    d = args.out or cfg.resolved_output_dir()
    os.makedirs(d, exist_ok=True)
    return d


# --- subcommands ----------------------------------------------------------

def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    rows = []
    for n in ([args.n] if args.n else cfg.n_grid):
        sp = cfg.spectrum.build(n, cfg.master_seed)
        ks = k_star(sp, cfg.bounds.b, n)
        row = {"n": n, "p": sp.p, "trace": sp.trace, "norm": sp.norm,
               "tail_mass_dropped": sp.tail_mass_dropped, "k_star": ks}
        row["r0"], row["R0"] = effective_ranks(sp, 0)
        if ks != INFINITE:
            row["r_kstar"], row["R_kstar"] = effective_ranks(sp, ks)
        rows.append(row)
    if args.format == "csv":
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[-1]))
        w.writeheader()
        w.writerows(rows)
    else:
        _dump(rows, args.out)
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    n = _n(args, cfg)
    m = _model(cfg, n)
    inst = m.draw(cfg.master_seed, args.replicate)
    d = _out_dir(args, cfg)
    for name in ("X", "Y", "beta_star", "noise"):
        np.savetxt(os.path.join(d, f"{name}.csv"), np.atleast_1d(getattr(inst, name)),
                   delimiter=",", fmt="%.17g")
    _dump({"seed": inst.seed, "replicate": inst.replicate, "config_hash": inst.config_hash,
           "generator_id": inst.generator_id, "n": inst.n, "p": inst.p},
          os.path.join(d, "instance.json"))
    print(d)
    return 0


def _read_instance(path: str):
    X = np.atleast_2d(np.loadtxt(os.path.join(path, "X.csv"), delimiter=","))
    Y = np.atleast_1d(np.loadtxt(os.path.join(path, "Y.csv"), delimiter=","))
    return X, Y


def cmd_fit(args) -> int:
    X, Y = _read_instance(args.instance)
    fit = min_norm_fit(X, Y)
    cert = certify(fit, X, Y, seed=args.seed or 0)
    d = args.out or args.instance
    os.makedirs(d, exist_ok=True)
    np.savetxt(os.path.join(d, "beta_hat.csv"), fit.beta_hat, delimiter=",", fmt="%.17g")
    report = {"residual_inf": fit.residual_inf, "null_overlap": fit.null_overlap,
              "effective_rank_used": fit.effective_rank_used, "certificate": cert.to_dict()}
    _dump(report, os.path.join(d, "certificate.json"))
    print(json.dumps(report, default=_json_default))
    return 0 if cert.passed else 1


def cmd_risk(args) -> int:
    cfg = _load_config(args)
    n = _n(args, cfg)
    m = _model(cfg, n)
    rep = mc_risk(m, cfg.reps, cfg.master_seed, cfg.jobs)
    if args.format == "csv":
        d = rep.to_dict()
        d.pop("mc_quantiles")
        d.update(rep.mc_quantiles)
        w = csv.DictWriter(sys.stdout, fieldnames=list(d))
        w.writeheader()
        w.writerow(d)
    else:
        _dump(rep.to_dict(), args.out)
    return 0


def cmd_bounds(args) -> int:
    cfg = _load_config(args)
    bc = cfg.bounds
    rows = []
    for n in ([args.n] if args.n else cfg.n_grid):
        m = _model(cfg, n)
        sp = m.spectrum
        beta = make_beta(cfg.beta, sp.p, cfg.master_seed, 0)
        v = _nu_for(cfg, m)
        if cfg.mode == "homo":
            rep = homo_upper_bound(sp, beta, v, n, bc.b, bc.c, bc.delta,
                                   nu_inverse=nu_of(m.noise, m.design))
            low = homo_lower_bounds(sp, beta, nu_of(m.noise, m.design), n, bc.b, bc.c)
            rep.lower_variance_bound = low.lower_variance_bound
            rep.lower_bias_bound = low.lower_bias_bound
        else:
            integ = integrated_covariance(sp, m.design, n)
            rep = hetero_upper_bound(sp, integ, float(np.linalg.norm(beta)), v, n,
                                     bc.b, bc.c, bc.delta)
        rows.append({"n": n, **rep.to_dict()})
    if args.format == "csv":
        w = csv.writer(sys.stdout)
        w.writerow(["n", "bias_bound", "variance_bound", "regime", "b", "c", "delta"])
        for r in rows:
            c = r["constants_used"]
            w.writerow([r["n"], r["bias_bound"], r["variance_bound"], r["regime"],
                        c.get("b"), c.get("c"), c.get("delta")])
    else:
        _dump(rows, args.out)
    return 0


def _run_check(name: str, cfg: ExperimentConfig, reps: int, seed: int, k: int):
    n = cfg.n_grid[0]
    if name == "arfima_scaling":
        if cfg.temporal.kind != "arfima":
            raise ConfigError("arfima_scaling needs an arfima temporal spec")
        grid = cfg.n_grid if len(cfg.n_grid) > 1 else (64, 128, 256, 512, 1024)
        return checks.check_arfima_scaling(cfg.temporal.d, grid, seed, cfg.temporal.a, cfg.temporal.b)
    if name == "hetero_arma_properties":
        return checks.check_hetero_arma_properties(cfg.temporal, cfg.spectrum.build(n, seed), n, seed)
    if name == "ak_concentration":
        return checks.check_ak_concentration(cfg.spectrum.build(n, seed), k, n, reps, seed, cfg.bounds.b)
    m = _model(cfg, n)
    if name == "decomposition":
        return checks.check_decomposition(m, reps, seed)
    if name == "bias_invariance":
        return checks.check_bias_invariance(m, reps, seed)
    if name == "implicit_decorrelation":
        if m.is_hetero:
            raise ConfigError("implicit_decorrelation needs a homo temporal spec")
        return checks.check_implicit_decorrelation(m.spectrum, m.design, math.sqrt(cfg.noise_scale), seed)
    if name == "moment_inequality":
        return checks.check_moment_inequality(m.spectrum, m.design, n, reps, seed)
    raise ConfigError(f"unknown check {name!r}; choose from {checks.CHECKS} or 'all'")


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    names = checks.CHECKS if args.check == "all" else (args.check,)
    reps = args.reps or cfg.reps
    seed = cfg.master_seed
    ok = True
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for name in names:
            try:
                rep = _run_check(name, cfg, reps, seed, args.k)
            except (ConfigError, ValueError) as exc:
                if args.check != "all":
                    raise
                rep = checks.CheckReport(name, checks.SKIP, float("nan"), float("nan"), 0, seed,
                                         {"note": str(exc)})
            # with 'all', inapplicable checks are skipped rather than failed
            allowed = (checks.PASS, checks.SKIP) if args.check == "all" else (checks.PASS,)
            ok &= rep.verdict in allowed
            out.write(rep.to_json() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    d = _out_dir(args, cfg)
    records = run_sweep(cfg, d, limit=args.limit)
    failed = sum(r.error is not None for r in records)
    print(json.dumps({"records": len(records), "failed": failed,
                      "path": os.path.join(d, RECORDS_FILE)}))
    return 0


def cmd_report(args) -> int:
    src = args.records
    if src is None:
        cfg = _load_config(args)
        src = os.path.join(args.out or cfg.resolved_output_dir(), RECORDS_FILE)
    records = load_records(src)
    if not records:
        print(f"no records in {src}", file=sys.stderr)
        return 1
    summary = summarize(records)
    d = args.out or os.path.dirname(os.path.abspath(src))
    os.makedirs(d, exist_ok=True)
    write_summary_csv(summary, os.path.join(d, SUMMARY_CSV))
    fmt = args.format if args.format in ("csv", "svg") else "csv"
    target = os.path.join(d, PLOT_SVG if fmt == "svg" else "plot_data.csv")
    emit_plot_data(summary, target, fmt)
    print(json.dumps({"risk_slope": summary.risk_slope,
                      "prediction_slope": summary.prediction_slope,
                      "summary": os.path.join(d, SUMMARY_CSV), "plot": target}))
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--reps", type=int, help="override replicates")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    common.add_argument("--jobs", type=int, help="worker processes")

    parser = argparse.ArgumentParser(prog="bolab", description="Benign-overfitting experiments "
                                     "for minimum-norm interpolation with dependent data.")
    parser.add_argument("--version", action="version", version=f"bolab {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="spectrum summary and effective ranks")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sample", parents=[common], help="draw one instance to CSV + JSON sidecar")
    p.add_argument("--n", type=int)
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", parents=[common], help="minimum-norm fit of a sampled instance")
    p.add_argument("instance", help="directory written by 'sample'")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("risk", parents=[common], help="Monte Carlo excess risk at one n")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("bounds", parents=[common], help="bound values over the n grid")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", parents=[common], help="run verification checks (JSONL)")
    p.add_argument("check", help=f"one of {', '.join(checks.CHECKS)} or 'all'")
    p.add_argument("--k", type=int, default=0, help="tail index for ak_concentration")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="run (or resume) a sweep over n")
    p.add_argument("--limit", type=int, help="stop after this many new records")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="summarize records and emit plot data")
    p.add_argument("--records", help="records.jsonl (default: from the config's output dir)")
    p.set_defaults(func=cmd_report)
    return parser


def _version() -> str:
    from . import __version__
    return __version__


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"bolab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
