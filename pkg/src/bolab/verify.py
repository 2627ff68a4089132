"""Monte Carlo and numeric checks of the exact identities and explicit inequalities.

Every check returns a :class:`CheckReport` and is a pure function of its
inputs and seed. ``perturb`` multiplies the quantity under test so each check
can be pointed at a deliberately wrong identity (negative control).
Fixed windows such as ``c_emp`` are engineering choices, not derived constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from . import rng as rng_mod
from .bounds import integrated_covariance, loglog_slope, moment_rhs
from .interpolator import min_norm_fit, row_svd
from .risk import bias_term, bias_variance_terms, variance_trace
from .sampler import Model, sample_design_hetero, sample_design_homo, sample_noise
from .spectra import SpatialSpectrum, effective_ranks
from .temporal import TemporalSpec, ToeplitzCov, acf_of, arfima_acf, materialize

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass
class CheckReport:
    check_name: str
    verdict: str
    statistic: float
    threshold: float
    reps: int
    seed: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        d = self.to_dict()
        for k in ("statistic", "threshold"):
            if isinstance(d[k], float) and not math.isfinite(d[k]):
                d[k] = None
        return json.dumps(d, default=_jsonable, sort_keys=True)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


def _fixed_design(model: Model, seed: int, index: int):
    inst = model.draw(seed, index)
    return inst, row_svd(inst.X)


# --- identities -----------------------------------------------------------

def check_decomposition(model: Model, reps: int = 2000, seed: int = 0, design_index: int = 0,
                        perturb: float = 1.0, batch: int = 256) -> CheckReport:
    """Mean risk over noise draws against ``bias + variance`` for one fixed design.

    Passes iff the gap is at most 3 standard errors. ``perturb`` scales the
    variance term.
    """
    inst, svd = _fixed_design(model, seed, design_index)
    spec = model.spectrum
    beta = inst.beta_star
    bias, var = bias_variance_terms(inst.X, spec, model.noise, beta, svd)
    target = bias + perturb * var

    pinv = svd.Vt.T / svd.s @ svd.W.T  # p x n
    d0 = pinv @ (inst.X @ beta) - beta
    L = model.noise.cholesky
    g = rng_mod.stream(seed, "noise", 1_000_000 + design_index)
    risks = np.empty(reps)
    lam = spec.eigenvalues
    for start in range(0, reps, batch):
        m = min(batch, reps - start)
        E = L @ g.standard_normal((model.n, m))
        D = d0[:, None] + pinv @ E
        if spec.basis is not None:
            D = spec.basis.T @ D
        risks[start:start + m] = lam @ (D * D)
    mean = float(risks.mean())
    se = float(risks.std(ddof=1) / math.sqrt(reps))
    gap = abs(mean - target)
    return CheckReport("decomposition", _verdict(gap <= 3 * se), gap, 3 * se, reps, seed,
                       {"mc_mean": mean, "bias_term": bias, "variance_trace": var,
                        "perturb": perturb, "n": model.n, "p": spec.p})


def random_invertible(n: int, rng: np.random.Generator, cond_max: float = 1e3) -> np.ndarray:
    """``Q1 diag(s) Q2`` with log-uniform singular values in ``[1, cond_max]``."""
    q1, _ = linalg.qr(rng.standard_normal((n, n)))
    q2, _ = linalg.qr(rng.standard_normal((n, n)))
    s = np.exp(rng.uniform(0.0, math.log(cond_max), n))
    s[0], s[-1] = 1.0, cond_max
    return (q1 * s) @ q2


def check_bias_invariance(model: Model, trials: int = 20, seed: int = 0, cond_max: float = 1e3,
                          perturb: float = 1.0, transforms: Optional[Sequence[np.ndarray]] = None,
                          tol: float = 1e-6) -> CheckReport:
    """Bias term from X against the one from A X for invertible row transforms A.

    Raises:
        ValueError: a supplied transform is singular.
    """
    inst, svd = _fixed_design(model, seed, 0)
    base = bias_term(inst.X, model.spectrum, inst.beta_star, svd)
    if transforms is None:
        g = rng_mod.stream(seed, "transform", 0)
        transforms = [random_invertible(model.n, g, cond_max) for _ in range(trials)]
    worst = 0.0
    for A in transforms:
        A = np.asarray(A, dtype=float)
        s = linalg.svdvals(A)
        if s[-1] <= 1e-12 * s[0]:
            raise ValueError(f"transform is singular (condition number {s[0] / max(s[-1], 1e-300):.3e})")
        other = perturb * bias_term(A @ inst.X, model.spectrum, inst.beta_star)
        worst = max(worst, abs(other - base) / max(abs(base), 1e-300))
    return CheckReport("bias_invariance", _verdict(worst <= tol), worst, tol, len(transforms), seed,
                       {"bias_term": base, "cond_max": cond_max, "perturb": perturb})


def check_implicit_decorrelation(spectrum: SpatialSpectrum, xi: ToeplitzCov, sigma: float = 1.0,
                                 seed: int = 0, upsilon: Optional[ToeplitzCov] = None,
                                 perturb: float = 1.0, tol: float = 1e-8) -> CheckReport:
    """Variance trace under ``Upsilon = sigma^2 Xi`` against the whitened design.

    The whitened design is ``L^-1 X`` with ``L L^T = Xi``. With a supplied
    ``upsilon`` that is not ``sigma^2 Xi`` the verdict is ``skip`` and the
    statistic is the gap.
    """
    n = xi.n
    X = sample_design_homo(spectrum, xi, n, seed)
    beta = spectrum.from_eigenbasis(rng_mod.stream(seed, "beta", 0).standard_normal(spectrum.p))
    in_hypothesis = upsilon is None
    ups = xi.scaled(sigma ** 2) if in_hypothesis else upsilon
    eps = sample_noise(ups, seed)
    Y = X @ beta + eps

    direct = variance_trace(X, spectrum, ups)
    Xw = linalg.solve_triangular(xi.cholesky, X, lower=True)
    Yw = linalg.solve_triangular(xi.cholesky, Y, lower=True)
    whitened = perturb * sigma ** 2 * variance_trace(Xw, spectrum, np.eye(n))
    rel = abs(direct - whitened) / max(abs(direct), 1e-300)

    b1 = min_norm_fit(X, Y).beta_hat
    b2 = min_norm_fit(Xw, Yw).beta_hat
    beta_gap = float(np.linalg.norm(b1 - b2) / max(np.linalg.norm(b1), 1e-300))
    details = {"direct": direct, "whitened": whitened, "beta_hat_gap": beta_gap,
               "sigma": sigma, "perturb": perturb}
    if not in_hypothesis:
        details["note"] = "noise covariance is not a multiple of the design covariance"
        return CheckReport("implicit_decorrelation", SKIP, rel, tol, 1, seed, details)
    stat = max(rel, beta_gap)
    return CheckReport("implicit_decorrelation", _verdict(stat <= tol), stat, tol, 1, seed, details)


# --- explicit-constant inequalities and concentration ---------------------

def _pre_rotation_design(spectrum: SpatialSpectrum, family, n: int, seed: int, index: int):
    plain = spectrum.with_basis(None)
    if isinstance(family, ToeplitzCov):
        return sample_design_homo(plain, family, n, seed, index)
    return sample_design_hetero(plain, family, n, seed, index)


def check_moment_inequality(spectrum: SpatialSpectrum, family, n: int, reps: int = 500,
                            seed: int = 0, perturb: float = 1.0) -> CheckReport:
    """Mean operator-norm deviation of the empirical covariance against the explicit bound.

    Works in the eigenbasis (the operator norm is rotation invariant). The
    population covariance has entries ``lambda_i gamma_i(0)``, which covers
    temporal covariances without unit diagonal.
    """
    covs = [family] * spectrum.p if isinstance(family, ToeplitzCov) else list(family)
    g0 = np.array([c.first_row[0] for c in covs])
    pop = spectrum.eigenvalues * g0
    summary = integrated_covariance(spectrum, family, n, require_unit_diagonal=False)
    rhs = moment_rhs(float(pop.sum()), float(pop.max()), summary.trace_bar, summary.norm_bar, n)
    devs = np.empty(reps)
    for r in range(reps):
        W = _pre_rotation_design(spectrum, family, n, seed, r)
        D = W.T @ W / n
        D[np.diag_indices_from(D)] -= pop
        ev = linalg.eigvalsh(D)
        devs[r] = max(abs(ev[0]), abs(ev[-1]))
    devs *= perturb
    mean = float(devs.mean())
    se = float(devs.std(ddof=1) / math.sqrt(reps))
    stat = mean + 3 * se
    return CheckReport("moment_inequality", _verdict(stat <= rhs), stat, rhs, reps, seed,
                       {"mean_deviation": mean, "se": se, "trace_bar": summary.trace_bar,
                        "norm_bar": summary.norm_bar, "margin": rhs / stat, "perturb": perturb})


def check_ak_concentration(spectrum: SpatialSpectrum, k: int, n: int, reps: int = 200,
                           seed: int = 0, b: float = 2.0, c_emp: float = 10.0,
                           perturb: float = 1.0, force: bool = False) -> CheckReport:
    """Extreme eigenvalues of ``A_k = sum_{i>k} lambda_i z_i z_i^T`` against ``sum_{i>k} lambda_i``.

    Gated on ``r_k >= b n`` (``force`` bypasses the gate for power probes).
    Both ratios ``mu_1 / S_k`` and ``S_k / mu_n`` must lie in ``[1/c_emp, c_emp]``
    for every replicate.
    """
    r_k, _ = effective_ranks(spectrum, k)
    if r_k < b * n and not force:
        return CheckReport("ak_concentration", SKIP, r_k, b * n, 0, seed,
                           {"note": "r_k < b n: outside the concentration regime", "k": k})
    lam = spectrum.eigenvalues[k:]
    S = float(spectrum.tail_sums[k])
    ratios = np.empty((reps, 2))
    for r in range(reps):
        Z = rng_mod.stream(seed, "design", r).standard_normal((n, lam.size))
        ev = linalg.eigvalsh((Z * lam) @ Z.T)
        ratios[r] = perturb * ev[-1] / S, perturb * S / ev[0]
    worst = float(np.max(np.abs(np.log(ratios))))
    ok = worst <= math.log(c_emp)
    return CheckReport("ak_concentration", _verdict(ok), math.exp(worst), c_emp, reps, seed,
                       {"k": k, "r_k": r_k, "upper_ratio_max": float(ratios[:, 0].max()),
                        "lower_ratio_max": float(ratios[:, 1].max()),
                        "upper_ratio_min": float(ratios[:, 0].min()),
                        "lower_ratio_min": float(ratios[:, 1].min()),
                        "window": "engineering choice", "perturb": perturb})


def check_arfima_scaling(d: float, n_grid: Sequence[int] = (64, 128, 256, 512, 1024), seed: int = 0,
                         a: Sequence[float] = (), b: Sequence[float] = (), tol: float = 0.1,
                         perturb: float = 1.0) -> CheckReport:
    """Log-log slope of the top (d > 0) or bottom (d < 0) eigenvalue against ``2d``."""
    if d == 0 or not -0.5 < d < 0.5:
        raise ValueError("d must lie in (-1/2, 1/2) and differ from 0")
    n_grid = sorted(int(x) for x in n_grid)
    g = arfima_acf(d, a, b, n_grid[-1] - 1)
    vals = []
    for n in n_grid:
        ev = linalg.eigvalsh(linalg.toeplitz(g[:n]))
        vals.append(ev[-1] if d > 0 else ev[0])
    slope = perturb * loglog_slope(n_grid, vals)
    gap = abs(slope - 2 * d)
    return CheckReport("arfima_scaling", _verdict(gap <= tol), gap, tol, len(n_grid), seed,
                       {"slope": slope, "target": 2 * d, "eigenvalues": [float(v) for v in vals],
                        "which": "largest" if d > 0 else "smallest", "perturb": perturb})


def _circle_extremes(coeffs: Sequence[float], sign: float, grid: int = 8192):
    z = np.exp(1j * np.linspace(0.0, np.pi, grid))
    v = np.abs(1 + sign * sum(c * z ** (j + 1) for j, c in enumerate(coeffs)))
    return float(v.min()), float(v.max())


def hetero_arma_epsilon(components: Sequence[TemporalSpec]) -> float:
    """Largest eps with both characteristic polynomials in ``[eps, 1/eps]`` on the unit circle."""
    eps = 1.0
    for c in components:
        for coeffs, sign in ((c.a, -1.0), (c.b, 1.0)):
            lo, hi = _circle_extremes(coeffs, sign)
            eps = min(eps, lo, 1.0 / hi)
    return eps


def check_hetero_arma_properties(spec: TemporalSpec, q: SpatialSpectrum, n: int, seed: int = 0,
                                 perturb: float = 1.0, rtol: float = 1e-9) -> CheckReport:
    """Explicit-constant properties of a hetero ARMA family.

    ``q`` holds the innovation scales; the spatial eigenvalues are
    ``q_k sum_j phi_jk^2`` and each coordinate's temporal covariance is the
    normalized ACF. The items checked are

    * ``1 <= sum phi^2 <= eps^-4``;
    * eigenvalues of each normalized covariance in ``[eps^8, eps^-4]``;
    * ``|rho(h)| <= 4 (1+eps)^(L+2) (1+eps)^(-h/2)`` for all lags below n;
    * ``||Q|| <= ||Sigma|| <= eps^-4 ||Q||`` and the same for traces;
    * integrated covariance trace and norm within ``C_eps`` times those of Sigma,
      with the fitted ratios reported.

    ``perturb`` scales the fitted ratios. Tiny eps makes the windows vacuous;
    this is reported in ``details`` rather than failed.
    """
    if spec.kind != "hetero" or any(c.kind not in ("arma", "identity") for c in spec.components):
        raise ValueError("expected a hetero spec with ARMA components")
    eps = hetero_arma_epsilon(spec.components)
    L = max([max(len(c.a), len(c.b)) for c in spec.components] + [0])
    p = q.p
    comp_idx = spec.coordinate_components(p)

    phi_sq = np.array([acf_of(TemporalSpec.arma(c.a, c.b) if c.kind == "arma" else c, 0)[0]
                       for c in spec.components])
    family = materialize(spec, n, p)
    comps = [family[int(np.flatnonzero(comp_idx == k)[0])] if np.any(comp_idx == k) else None
             for k in range(len(spec.components))]

    up = 1.0 + rtol
    items = {}
    items["phi_sq"] = bool(np.all(phi_sq >= 1 / up) and np.all(phi_sq <= eps ** -4 * up))
    eig_lo, eig_hi = math.inf, 0.0
    decay_ok = True
    lags = np.arange(n)
    decay_env = 4 * (1 + eps) ** (L + 2) * (1 + eps) ** (-lags / 2)
    for cov in comps:
        if cov is None:
            continue
        ev = cov.eigvalsh()
        eig_lo, eig_hi = min(eig_lo, ev[0]), max(eig_hi, ev[-1])
        decay_ok &= bool(np.all(np.abs(cov.first_row) <= decay_env * up))
    items["eigen_window"] = bool(eig_lo >= eps ** 8 / up and eig_hi <= eps ** -4 * up)
    items["acf_decay"] = decay_ok

    sigma_ev = q.eigenvalues * phi_sq[comp_idx]
    order = np.argsort(sigma_ev)[::-1]
    sigma = SpatialSpectrum(sigma_ev[order], family_label="explicit")
    fam_sorted = [family[i] for i in order]
    nq, tq = q.norm, q.trace
    ns, ts = sigma.norm, sigma.trace
    items["spatial_sandwich"] = bool(nq / up <= ns <= eps ** -4 * nq * up
                                     and tq / up <= ts <= eps ** -4 * tq * up)

    summary = integrated_covariance(sigma, fam_sorted, n)
    c_trace = perturb * summary.trace_bar / ts
    c_norm = perturb * summary.norm_bar / ns
    r = (1 + eps) ** -0.5
    c_explicit = eps ** -4 * (1 + 8 * (1 + eps) ** (L + 2) * r / (1 - r))
    items["integrated_ratio"] = bool(c_trace <= c_explicit * up and c_norm <= c_explicit * up)

    ok = all(items.values())
    fitted = max(c_trace, c_norm)
    details = {"epsilon": eps, "max_order": L, "items": items, "c_trace": c_trace,
               "c_norm": c_norm, "c_explicit": c_explicit, "eigen_range": [eig_lo, eig_hi],
               "phi_sq_range": [float(phi_sq.min()), float(phi_sq.max())],
               "vacuous_windows": eps < 1e-2, "perturb": perturb}
    return CheckReport("hetero_arma_properties", _verdict(ok), fitted, c_explicit, 1, seed, details)


CHECKS = ("decomposition", "bias_invariance", "implicit_decorrelation", "moment_inequality",
          "ak_concentration", "arfima_scaling", "hetero_arma_properties")
