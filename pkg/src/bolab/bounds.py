"""Bound shapes and rate predictors.

The bound constants are unknown; ``b``, ``c`` and ``delta`` are explicit
arguments and each :class:`BoundReport` records the values used. Only slopes
and orderings of these quantities are meaningful.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .spectra import INFINITE, SpatialSpectrum, effective_ranks, k_star, rate_sequences, weighted_norms
from .temporal import ToeplitzCov

DEFAULT_B = 2.0
DEFAULT_C = 1.0
DEFAULT_DELTA = 0.05

REGIME_FINITE = "k_star_finite"
REGIME_LARGE = "k_star_large"


class ExtrapolationWarning(UserWarning):
    """Decay exponent at or below 1/2, outside the range the rate derivation covers."""


# --- integrated covariance ------------------------------------------------

@dataclass
class IntegratedCovSummary:
    trace_bar: float
    norm_bar: float
    r0_bar: float
    per_coordinate_factors: np.ndarray = field(repr=False)
    eigenvalues_bar: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"trace_bar": self.trace_bar, "norm_bar": self.norm_bar, "r0_bar": self.r0_bar,
                "factor_min": float(self.per_coordinate_factors.min()),
                "factor_max": float(self.per_coordinate_factors.max())}


def lag_factor(cov: ToeplitzCov, n: Optional[int] = None) -> float:
    """``gamma(0) + 2 sum_{h=1}^{n-1} |gamma(h)|`` over the first n lags."""
    row = cov.first_row if n is None else cov.first_row[:n]
    return float(row[0] + 2.0 * math.fsum(np.abs(row[1:])))


def _family_list(family, p: int) -> list:
    if isinstance(family, ToeplitzCov):
        return [family] * p
    family = list(family)
    if len(family) != p:
        raise ValueError(f"family has {len(family)} members, spectrum has p = {p}")
    return family


def integrated_covariance(spectrum: SpatialSpectrum, family, n: Optional[int] = None,
                          require_unit_diagonal: bool = True) -> IntegratedCovSummary:
    """Summary of ``Sigma + 2 sum_h Sigma~_h`` from its diagonal in the U basis.

    ``family`` is one covariance shared by all coordinates or a list of p.
    The eigenvalues are ``lambda_i f_i``; ``r0_bar`` uses them re-sorted.
    """
    covs = _family_list(family, spectrum.p)
    cache: dict[int, float] = {}
    f = np.empty(spectrum.p)
    for i, cov in enumerate(covs):
        key = id(cov)
        if key not in cache:
            if require_unit_diagonal and not cov.is_unit_diagonal():
                raise ValueError(f"coordinate {i + 1}: temporal covariance has diagonal "
                                 f"{cov.first_row[0]!r}, expected 1")
            cache[key] = lag_factor(cov, n)
        f[i] = cache[key]
    ev = np.sort(spectrum.eigenvalues * f)[::-1]
    tr = math.fsum(ev)
    return IntegratedCovSummary(tr, float(ev[0]), tr / float(ev[0]), f, ev)


def integrated_covariance_dense(spectrum: SpatialSpectrum, family) -> np.ndarray:
    """Brute-force p x p construction, for cross-checks at small p."""
    covs = _family_list(family, spectrum.p)
    U = np.eye(spectrum.p) if spectrum.basis is None else spectrum.basis
    lam = spectrum.eigenvalues
    out = U @ np.diag(lam) @ U.T
    n = covs[0].n
    for h in range(1, n):
        d = np.abs([lam[i] * covs[i].matrix[0, h] for i in range(spectrum.p)])
        out += 2.0 * (U @ np.diag(d) @ U.T)
    return out


# --- bound reports --------------------------------------------------------

@dataclass
class BoundReport:
    bias_bound: Optional[float] = None
    variance_bound: Optional[float] = None
    lower_variance_bound: Optional[float] = None
    lower_bias_bound: Optional[float] = None
    constants_used: dict = field(default_factory=dict)
    regime: str = REGIME_FINITE
    k_star: Union[int, float, None] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["k_star"] == INFINITE:
            d["k_star"] = "inf"
        return d


def _regime(spectrum: SpatialSpectrum, n: int, b: float, c: float):
    ks = k_star(spectrum, b, n)
    if ks == INFINITE or ks > n / c:
        return ks, REGIME_LARGE
    return ks, REGIME_FINITE


def variance_shape(spectrum: SpatialSpectrum, k: int, n: int) -> float:
    """``k/n + n/R_k``."""
    _, R = effective_ranks(spectrum, k)
    return k / n + n / R


def bias_shape(spectrum: SpatialSpectrum, beta_eig: np.ndarray, k: int, n: int) -> float:
    """Tail norm plus head norm scaled by ``(sum_{i>k} lambda_i / n)^2``."""
    tail, head = weighted_norms(spectrum, beta_eig, k)
    return tail + head * (float(spectrum.tail_sums[k]) / n) ** 2


def homo_upper_bound(spectrum: SpatialSpectrum, beta_star: np.ndarray, nu: float, n: int,
                     b: float = DEFAULT_B, c: float = DEFAULT_C, delta: float = DEFAULT_DELTA,
                     nu_inverse: Optional[float] = None) -> BoundReport:
    """Upper bias and variance shapes when k* is finite and at most n/c.

    Outside that regime the report carries the flag ``k_star_large`` and,
    when ``nu_inverse`` (the norm of Upsilon^-1 Xi) is given, the lower value
    ``1 / (c * nu_inverse)``.
    """
    consts = {"b": b, "c": c, "delta": delta}
    ks, regime = _regime(spectrum, n, b, c)
    if regime == REGIME_LARGE:
        low = None if nu_inverse is None else 1.0 / (c * nu_inverse)
        return BoundReport(lower_variance_bound=low, constants_used=consts, regime=regime, k_star=ks)
    beta_eig = spectrum.to_eigenbasis(np.asarray(beta_star, dtype=float))
    bias = c * bias_shape(spectrum, beta_eig, ks, n)
    var = c * nu * variance_shape(spectrum, ks, n) * math.log(1.0 / delta)
    return BoundReport(bias, var, constants_used=consts, regime=regime, k_star=ks)


def homo_lower_bounds(spectrum: SpatialSpectrum, beta_bar: np.ndarray, nu_inverse_term: float,
                      n: int, b: float = DEFAULT_B, c: float = DEFAULT_C,
                      k_sharp: Optional[int] = None) -> BoundReport:
    """Lower variance value and lower bias shape.

    ``nu_inverse_term`` is the norm of Upsilon^-1 Xi. ``k_sharp`` defaults to k*.
    """
    consts = {"b": b, "c": c}
    ks, regime = _regime(spectrum, n, b, c)
    if regime == REGIME_LARGE:
        low_var = 1.0 / (c * nu_inverse_term)
    else:
        low_var = variance_shape(spectrum, ks, n) / (c * nu_inverse_term)
    k = ks if k_sharp is None else int(k_sharp)
    low_bias = None
    if k != INFINITE and k < spectrum.p:
        beta_eig = spectrum.to_eigenbasis(np.asarray(beta_bar, dtype=float))
        low_bias = bias_shape(spectrum, beta_eig, k, n) / c
    return BoundReport(lower_variance_bound=low_var, lower_bias_bound=low_bias,
                       constants_used=consts, regime=regime, k_star=ks)


def hetero_upper_bound(spectrum: SpatialSpectrum, integrated: IntegratedCovSummary,
                       beta_norm: float, nu0: float, n: int, b: float = DEFAULT_B,
                       c: float = DEFAULT_C, delta: float = DEFAULT_DELTA,
                       nu_inverse: Optional[float] = None) -> BoundReport:
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    consts = {"b": b, "c": c, "delta": delta}
    ks, regime = _regime(spectrum, n, b, c)
    if regime == REGIME_LARGE:
        low = None if nu_inverse is None else 1.0 / (c * nu_inverse)
        return BoundReport(lower_variance_bound=low, constants_used=consts, regime=regime, k_star=ks)
    r0 = spectrum.trace / spectrum.norm
    nb = integrated.norm_bar
    bias = (c / delta) * beta_norm ** 2 * (
        math.sqrt(spectrum.norm * nb * max(r0, integrated.r0_bar) / n) + nb * integrated.r0_bar / n)
    var = c * nu0 * variance_shape(spectrum, ks, n) * math.log(1.0 / delta)
    return BoundReport(bias, var, constants_used=consts, regime=regime, k_star=ks)


# --- explicit-constant and rate quantities --------------------------------

def moment_rhs(trace_sigma: float, norm_sigma: float, trace_bar: float, norm_bar: float,
               n: int) -> float:
    """Right-hand side of the expected operator-norm deviation inequality."""
    if min(trace_sigma, norm_sigma, trace_bar, norm_bar, n) <= 0:
        raise ValueError("all inputs must be positive")
    return (2.0 * math.sqrt(2.0) / n) * (
        math.sqrt(2.0) * trace_bar
        + math.sqrt(2.0 * n * norm_sigma * trace_bar)
        + math.sqrt(n * trace_sigma * norm_bar))


def is_extrapolated(alpha: float) -> bool:
    return alpha <= 0.5


def kappa_alpha(n: float, alpha: float) -> float:
    """Bias-rate factor for cross-lag correlations decaying like ``h^-alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 2:
        raise ValueError("n must be >= 2")
    if is_extrapolated(alpha):
        warnings.warn(f"alpha = {alpha} <= 1/2 is extrapolated", ExtrapolationWarning, stacklevel=2)
    if alpha < 1:
        return n ** (-alpha / 2)
    if alpha == 1:
        return math.sqrt(math.log(n) / n)
    return n ** -0.5


def rate_prediction(mode: str, spectrum: SpatialSpectrum, nu: float, n: int,
                    alpha: Optional[float] = None, b: float = DEFAULT_B) -> float:
    """``tau + nu eta`` (homo) or ``sqrt(zeta) kappa + nu0 eta`` (hetero), unit constants.

    Raises:
        KStarInfinite: k* does not exist at this n.
    """
    seq = rate_sequences(spectrum, n, b)
    if mode == "homo":
        return seq.tau + nu * seq.eta
    if mode == "hetero":
        if alpha is None:
            raise ValueError("hetero prediction needs alpha")
        return math.sqrt(seq.zeta) * kappa_alpha(n, alpha) + nu * seq.eta
    raise ValueError(f"mode must be 'homo' or 'hetero', got {mode!r}")


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y on log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
