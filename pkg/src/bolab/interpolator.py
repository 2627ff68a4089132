"""Minimum-norm interpolation and its certificate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from . import rng as rng_mod

SV_CUTOFF = 1e-12
RESIDUAL_TOL = 1e-8
NULL_TOL = 1e-8


class RankDeficientError(ValueError):
    """X has fewer than n singular values above the cutoff."""

    def __init__(self, rank: int, n: int, smallest: float):
        super().__init__(f"rank(X) = {rank} < n = {n}; smallest singular value {smallest:.3e}")
        self.rank = rank
        self.smallest = smallest


class RowSVD(NamedTuple):
    """Thin SVD ``X = W diag(s) Vt`` restricted to singular values above the cutoff."""

    W: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


def row_svd(X: np.ndarray, require_full_rank: bool = True) -> RowSVD:
    W, s, Vt = linalg.svd(X, full_matrices=False, lapack_driver="gesdd")
    keep = s > SV_CUTOFF * s[0]
    r = int(keep.sum())
    if require_full_rank and r < X.shape[0]:
        raise RankDeficientError(r, X.shape[0], float(s[-1]))
    return RowSVD(W[:, :r], s[:r], Vt[:r])


@dataclass
class FitResult:
    beta_hat: np.ndarray
    residual_inf: float
    null_overlap: float
    effective_rank_used: int
    svd: Optional[RowSVD] = field(default=None, repr=False)


def min_norm_fit(X: np.ndarray, Y: np.ndarray) -> FitResult:
    """``beta_hat = X^T (X X^T)^-1 Y``, evaluated as ``V S^-1 W^T Y``.

    Raises:
        RankDeficientError: rank(X) < n.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    if Y.shape != (n,):
        raise ValueError(f"Y must have shape ({n},), got {Y.shape}")
    if n > p:
        raise ValueError(f"interpolation needs n <= p, got n={n}, p={p}")
    svd = row_svd(X)
    beta = svd.Vt.T @ ((svd.W.T @ Y) / svd.s)
    resid = float(np.max(np.abs(X @ beta - Y)))
    null = float(np.linalg.norm(beta - svd.Vt.T @ (svd.Vt @ beta)))
    return FitResult(beta, resid, null, svd.s.size, svd)


def normal_equations_fit(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Cross-check route: ``X^T (X X^T)^-1 Y`` through a Cholesky solve."""
    c = linalg.cho_factor(X @ X.T)
    return X.T @ linalg.cho_solve(c, Y)


@dataclass
class Certificate:
    residual_inf: float
    residual_tol: float
    null_overlap: float
    null_tol: float
    minimal: bool
    min_norm_gap: float

    @property
    def passed(self) -> bool:
        return (self.residual_inf <= self.residual_tol and self.null_overlap <= self.null_tol
                and self.minimal)

    def to_dict(self) -> dict:
        return {**self.__dict__, "passed": self.passed}


def certify(fit: FitResult, X: np.ndarray, Y: np.ndarray, samples: int = 16,
            seed: int = 0) -> Certificate:
    """Recheck interpolation, row-space membership and minimality from scratch.

    The null space comes from a full SVD of X. Minimality is tested against
    ``samples`` random null-space perturbations. Failures are reported, not raised.
    """
    beta = fit.beta_hat
    resid = float(np.max(np.abs(X @ beta - Y)))
    _, s, Vt = linalg.svd(X, full_matrices=True)
    r = int((s > SV_CUTOFF * s[0]).sum())
    N = Vt[r:]
    null = float(np.linalg.norm(N @ beta))
    norm = float(np.linalg.norm(beta))
    gap = np.inf
    if N.shape[0]:
        g = rng_mod.stream(seed, "check", 0).standard_normal((samples, N.shape[0]))
        for c in g:
            v = N.T @ c
            v *= 1e-3 * max(norm, 1.0) / np.linalg.norm(v)
            gap = min(gap, float(np.linalg.norm(beta + v) - norm))
    return Certificate(resid, RESIDUAL_TOL * max(1.0, float(np.max(np.abs(Y)))),
                       null, NULL_TOL * norm, bool(gap > 0), gap)
