"""Excess risk of the minimum-norm interpolator and its bias/variance split.

Everything is evaluated through n x n intermediates and the U-basis diagonal
form of Sigma, so p in the tens of thousands stays cheap.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .interpolator import RowSVD, min_norm_fit, row_svd
from .spectra import SpatialSpectrum
from .temporal import ToeplitzCov

QUANTILES = (0.05, 0.5, 0.95)


def exact_excess_risk(beta_hat: np.ndarray, beta_star: np.ndarray,
                      spectrum: SpatialSpectrum) -> float:
    """``(beta_hat - beta*)^T Sigma (beta_hat - beta*)``."""
    delta = spectrum.to_eigenbasis(np.asarray(beta_hat) - np.asarray(beta_star))
    return float(np.dot(spectrum.eigenvalues, delta * delta))


def _upsilon_matrix(upsilon) -> np.ndarray:
    return upsilon.matrix if isinstance(upsilon, ToeplitzCov) else np.asarray(upsilon, dtype=float)


def bias_term(X: np.ndarray, spectrum: SpatialSpectrum, beta_star: np.ndarray,
              svd: Optional[RowSVD] = None) -> float:
    """Sigma-weighted squared norm of the part of beta* outside the row space of X."""
    svd = svd or row_svd(X)
    resid = beta_star - svd.Vt.T @ (svd.Vt @ beta_star)
    w = spectrum.to_eigenbasis(resid)
    return float(np.dot(spectrum.eigenvalues, w * w))


def variance_trace(X: np.ndarray, spectrum: SpatialSpectrum, upsilon,
                   svd: Optional[RowSVD] = None) -> float:
    """``tr(Upsilon M)`` with ``M = (XX^T)^-1 X Sigma X^T (XX^T)^-1``.

    With ``X = W S V^T`` the pseudo-inverse rows are ``B = W S^-1 V^T``, so
    ``M = (B U) Lambda (B U)^T``.
    """
    svd = svd or row_svd(X)
    C = svd.Vt if spectrum.basis is None else svd.Vt @ spectrum.basis
    C = (svd.W / svd.s) @ C
    M = (C * spectrum.eigenvalues) @ C.T
    return float(np.sum(_upsilon_matrix(upsilon) * M))


def bias_variance_terms(X: np.ndarray, spectrum: SpatialSpectrum, upsilon, beta_star: np.ndarray,
                        svd: Optional[RowSVD] = None) -> tuple[float, float]:
    """``(beta*^T T_B beta*, tr T_V)``; raises on rank deficiency."""
    svd = svd or row_svd(X)
    return bias_term(X, spectrum, beta_star, svd), variance_trace(X, spectrum, upsilon, svd)


def tail_bound_factor(t: float) -> float:
    """Variance multiplier ``4t + 2`` valid with probability ``1 - exp(-t)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    return 4.0 * t + 2.0


def confidence_factor(delta: float) -> float:
    """``2 log(1/delta) + 1``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return 2.0 * math.log(1.0 / delta) + 1.0


def high_prob_bound_t(bias: float, var: float, t: float) -> float:
    return 2.0 * bias + 2.0 * tail_bound_factor(t) * var


def high_prob_bound_delta(bias: float, var: float, delta: float) -> float:
    return 2.0 * bias + 2.0 * confidence_factor(delta) * var


@dataclass
class RiskReport:
    excess_risk: float
    bias_term: float
    variance_trace: float
    n: int
    p: int
    config_hash: str = ""
    mc_mean: Optional[float] = None
    mc_se: Optional[float] = None
    mc_median: Optional[float] = None
    mc_quantiles: Optional[dict] = None
    reps: int = 1
    per_replicate: Optional[list] = field(default=None, repr=False)

    def to_dict(self, include_replicates: bool = False) -> dict:
        d = asdict(self)
        if not include_replicates:
            d.pop("per_replicate")
        return d


class ReplicateError(RuntimeError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replicate {index} failed: {cause!r}")
        self.index = index


def single_replicate(model, master_seed: int, index: int) -> tuple[float, float, float]:
    """Sample, fit and evaluate one replicate: ``(risk, bias, variance)``."""
    inst = model.draw(master_seed, index, check_rank=False)
    fit = min_norm_fit(inst.X, inst.Y)
    bias, var = bias_variance_terms(inst.X, model.spectrum, model.noise, inst.beta_star, fit.svd)
    return exact_excess_risk(fit.beta_hat, inst.beta_star, model.spectrum), bias, var


def _job(args):
    model, seed, i = args
    try:
        return single_replicate(model, seed, i)
    except Exception as exc:  # surfaced with its index below
        return exc


def mc_risk(model, reps: int, master_seed: int, jobs: int = 1) -> RiskReport:
    """Monte Carlo risk over ``reps`` independent replicates of ``model``.

    Results are gathered by replicate index before any reduction, so the
    report is identical for any ``jobs``.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    tasks = [(model, master_seed, i) for i in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_job, tasks, chunksize=max(1, reps // (4 * jobs))))
    else:
        out = [_job(t) for t in tasks]
    for i, r in enumerate(out):
        if isinstance(r, BaseException):
            raise ReplicateError(i, r) from r
    arr = np.array(out)
    risk = arr[:, 0]
    q = np.quantile(risk, QUANTILES)
    mean = float(risk.mean())
    return RiskReport(
        excess_risk=mean,
        bias_term=float(arr[:, 1].mean()),
        variance_trace=float(arr[:, 2].mean()),
        n=model.n,
        p=model.spectrum.p,
        config_hash=model.config_hash,
        mc_mean=mean,
        mc_se=float(risk.std(ddof=1) / math.sqrt(reps)),
        mc_median=float(q[1]),
        mc_quantiles={f"q{int(100 * a):02d}": float(v) for a, v in zip(QUANTILES, q)},
        reps=reps,
        per_replicate=arr.tolist(),
    )
