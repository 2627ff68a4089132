"""Spatial covariance spectra: benign families, effective ranks and k*.

A spatial covariance is carried around as its eigenvalues (nonincreasing) and
an optional orthogonal basis. Nothing here forms a p x p covariance unless a
caller asks for it explicitly with :meth:`SpatialSpectrum.dense`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, NamedTuple, Optional, Sequence

import numpy as np
from scipy import special

INFINITE = math.inf
"""Sentinel returned by :func:`k_star` when no k < p satisfies r_k >= b*n."""

DEFAULT_TAIL_TOL = 1e-3
P_HARD_CAP = 200_000
BASIS_ORTHO_TOL = 1e-10

FAMILIES = ("logpoly", "poly_shift", "poly_cut", "exp_plus", "explicit")


class TruncationError(ValueError):
    """An infinite spectrum family cannot be truncated within the hard cap."""


class KStarInfinite(ValueError):
    """k* is infinite: no k < p has r_k >= b*n (the large-k* regime)."""


def compensated_suffix_sums(values: np.ndarray) -> np.ndarray:
    """Return ``s`` with ``s[k] = sum(values[k:])``, ``s[len] = 0``.

    Accumulates from the smallest (last) entry upwards with Neumaier
    compensation so that slowly decaying tails do not lose digits.
    """
    values = np.asarray(values, dtype=float)
    out = np.zeros(values.size + 1)
    total = 0.0
    comp = 0.0
    for i in range(values.size - 1, -1, -1):
        v = values[i]
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


@dataclass(frozen=True, eq=False)
class SpatialSpectrum:
    """Eigen-description of a spatial covariance ``Sigma = U diag(lam) U^T``.

    Attributes:
        eigenvalues: strictly positive, nonincreasing, length p.
        basis: optional p x p orthogonal matrix U; ``None`` means identity.
        family_label: which generator produced the eigenvalues.
        params: generator parameters, kept for serialization.
        tail_mass_dropped: trace mass removed when an infinite family was cut.
    """

    eigenvalues: np.ndarray
    basis: Optional[np.ndarray] = None
    family_label: str = "explicit"
    params: dict = field(default_factory=dict)
    tail_mass_dropped: float = 0.0

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite")
        if np.any(lam <= 0):
            raise ValueError(f"nonpositive eigenvalue produced (min {lam.min():.3e})")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be nonincreasing")
        if self.tail_mass_dropped < 0:
            raise ValueError("tail_mass_dropped must be nonnegative")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        if self.basis is not None:
            U = np.array(self.basis, dtype=float)
            if U.shape != (lam.size, lam.size):
                raise ValueError(f"basis must be {lam.size}x{lam.size}, got {U.shape}")
            err = np.max(np.abs(U.T @ U - np.eye(lam.size)))
            if err > BASIS_ORTHO_TOL:
                raise ValueError(f"basis not orthogonal (max |U^T U - I| = {err:.2e})")
            U.setflags(write=False)
            object.__setattr__(self, "basis", U)

    @property
    def p(self) -> int:
        return self.eigenvalues.size

    @cached_property
    def tail_sums(self) -> np.ndarray:
        """``tail_sums[k] = sum_{i>k} lambda_i`` (1-based i), for k = 0..p."""
        return compensated_suffix_sums(self.eigenvalues)

    @cached_property
    def tail_sq_sums(self) -> np.ndarray:
        return compensated_suffix_sums(self.eigenvalues**2)

    @property
    def trace(self) -> float:
        return float(self.tail_sums[0])

    @property
    def norm(self) -> float:
        return float(self.eigenvalues[0])

    def to_eigenbasis(self, v: np.ndarray) -> np.ndarray:
        """Coordinates of a p-vector in the U basis (``U^T v``)."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.p:
            raise ValueError(f"dimension mismatch: vector has {v.shape[0]} entries, p = {self.p}")
        return v if self.basis is None else self.basis.T @ v

    def from_eigenbasis(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return w if self.basis is None else self.basis @ w

    def dense(self) -> np.ndarray:
        if self.basis is None:
            return np.diag(self.eigenvalues)
        return (self.basis * self.eigenvalues) @ self.basis.T

    def scaled(self, s: float) -> "SpatialSpectrum":
        return SpatialSpectrum(self.eigenvalues * s, self.basis, self.family_label,
                               dict(self.params), self.tail_mass_dropped * s)

    def with_basis(self, basis: Optional[np.ndarray]) -> "SpatialSpectrum":
        return SpatialSpectrum(self.eigenvalues, basis, self.family_label,
                               dict(self.params), self.tail_mass_dropped)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "family": self.family_label,
            "params": self.params,
            "eigenvalues": self.eigenvalues.tolist(),
            "tail_mass_dropped": self.tail_mass_dropped,
        }
        if self.basis is not None:
            out["basis"] = self.basis.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SpatialSpectrum":
        return cls(np.asarray(d["eigenvalues"], dtype=float),
                   None if d.get("basis") is None else np.asarray(d["basis"]),
                   d.get("family", "explicit"), dict(d.get("params", {})),
                   float(d.get("tail_mass_dropped", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "SpatialSpectrum":
        return cls.from_dict(json.loads(text))


# --- benign families -------------------------------------------------------

def _logpoly_values(i: np.ndarray, gamma: float) -> np.ndarray:
    return 1.0 / (i * np.log(i) ** gamma)


def _logpoly_tail(p: int, gamma: float) -> float:
    # sum_{i>p} f(i) <= int_p^inf dx / (x log^g x) for decreasing f
    return math.log(p) ** (1.0 - gamma) / (gamma - 1.0)


def _poly_shift_tail(p: int, gamma: float) -> float:
    return float(special.zeta(1.0 + gamma, p + 1))


def _smallest_p(tail, total: float, tail_tol: float, p_min: int, family: str) -> int:
    """Smallest p >= p_min with tail(p) <= tail_tol * total, by bisection."""
    target = tail_tol * total
    if tail(p_min) <= target:
        return p_min
    if tail(P_HARD_CAP) > target:
        raise TruncationError(
            f"{family}: tail mass at the hard cap p={P_HARD_CAP} is "
            f"{tail(P_HARD_CAP) / total:.3e} of the trace, above tail_tol={tail_tol:g}; "
            "loosen tail_tol or pin p explicitly")
    lo, hi = p_min, P_HARD_CAP
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def build_benign_spectrum(family: str, n: int, *, tail_tol: float = DEFAULT_TAIL_TOL,
                          p: Optional[int] = None, **params) -> SpatialSpectrum:
    """Eigenvalues of one of the benign covariance families.

    Families and their parameters:

    * ``logpoly`` (``gamma`` > 1): ``lambda_i = 1 / (i log^gamma i)`` for i >= 2,
      with ``lambda_1 = 2 lambda_2`` because the formula vanishes at i = 1.
    * ``poly_shift`` (``gamma`` > 0): ``lambda_i = i^-(1 + gamma)``.
    * ``poly_cut`` (``gamma`` in (0, 1), ``p_n``): ``lambda_i = i^-gamma`` for i <= p_n.
    * ``exp_plus`` (``eps`` > 0, ``p_n``): ``lambda_i = exp(-i) + eps`` for i <= p_n.
    * ``explicit`` (``eigenvalues``): taken as given.

    The two infinite families are cut at the smallest ``p >= 4n`` whose
    dropped tail is at most ``tail_tol`` times the full trace. Passing ``p``
    pins the dimension instead; the dropped mass is still recorded.

    Raises:
        ValueError: parameters out of range.
        TruncationError: the tail rule cannot be met below ``P_HARD_CAP``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")

    if family == "explicit":
        lam = np.asarray(params["eigenvalues"], dtype=float)
        return SpatialSpectrum(lam, family_label="explicit", params={})

    if family in ("poly_cut", "exp_plus"):
        if "p_n" not in params and p is None:
            raise ValueError(f"{family} needs p_n")
        p_n = int(params.get("p_n", p))
        if p_n < 1:
            raise ValueError("p_n must be >= 1")
        i = np.arange(1, p_n + 1, dtype=float)
        if family == "poly_cut":
            gamma = float(params["gamma"])
            if not 0.0 < gamma < 1.0:
                raise ValueError(f"poly_cut needs gamma in (0, 1), got {gamma}")
            lam = i ** (-gamma)
            return SpatialSpectrum(lam, family_label=family, params={"gamma": gamma, "p_n": p_n})
        eps = float(params["eps"])
        if eps <= 0:
            raise ValueError(f"exp_plus needs eps > 0, got {eps}")
        lam = np.exp(-i) + eps
        return SpatialSpectrum(lam, family_label=family, params={"eps": eps, "p_n": p_n})

    gamma = float(params["gamma"])
    if family == "logpoly":
        if gamma <= 1.0:
            raise ValueError(f"logpoly needs gamma > 1 for a finite trace, got {gamma}")

        def tail(q):
            return _logpoly_tail(q, gamma)

        head_len = 4096
        head = _logpoly_values(np.arange(2, head_len + 1, dtype=float), gamma)
        # lambda_1 = 2 lambda_2, plus the explicit head and an integral tail
        total = 2 * head[0] + math.fsum(head) + tail(head_len)

        def values(q):
            lam = np.empty(q)
            lam[1:] = _logpoly_values(np.arange(2, q + 1, dtype=float), gamma)
            lam[0] = 2 * lam[1] if q > 1 else 1.0
            return lam
    else:
        if gamma <= 0.0:
            raise ValueError(f"poly_shift needs gamma > 0, got {gamma}")

        def tail(q):
            return _poly_shift_tail(q, gamma)

        total = float(special.zeta(1.0 + gamma, 1))

        def values(q):
            return np.arange(1, q + 1, dtype=float) ** (-(1.0 + gamma))

    if p is None:
        q = _smallest_p(tail, total, tail_tol, max(4 * n, 2), family)
        rec = {"gamma": gamma, "tail_tol": tail_tol}
    else:
        q = int(p)
        if not 2 <= q <= P_HARD_CAP:
            raise ValueError(f"pinned p must lie in [2, {P_HARD_CAP}], got {q}")
        rec = {"gamma": gamma, "p": q}
    return SpatialSpectrum(values(q), family_label=family, params=rec,
                           tail_mass_dropped=float(tail(q)))


def identity_spectrum(p: int) -> SpatialSpectrum:
    return SpatialSpectrum(np.ones(p), family_label="explicit")


# --- effective ranks ------------------------------------------------------

def effective_ranks(spectrum: SpatialSpectrum, k: int) -> tuple[float, float]:
    """Return ``(r_k, R_k)``.

    ``r_k = sum_{i>k} lambda_i / lambda_{k+1}`` and
    ``R_k = (sum_{i>k} lambda_i)^2 / sum_{i>k} lambda_i^2``.
    """
    k = int(k)
    if not 0 <= k < spectrum.p:
        raise ValueError(f"k must satisfy 0 <= k < p = {spectrum.p}, got {k}")
    s = spectrum.tail_sums[k]
    return float(s / spectrum.eigenvalues[k]), float(s * s / spectrum.tail_sq_sums[k])


def r_sequence(spectrum: SpatialSpectrum) -> np.ndarray:
    """All ``r_k`` for k = 0..p-1."""
    return spectrum.tail_sums[:-1] / spectrum.eigenvalues


def k_star(spectrum: SpatialSpectrum, b: float, n: int) -> int | float:
    """Smallest k >= 0 with ``r_k >= b n``; :data:`INFINITE` if none exists."""
    if b < 1:
        raise ValueError("b must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = np.flatnonzero(r_sequence(spectrum) >= b * n)
    return int(hits[0]) if hits.size else INFINITE


def weighted_norms(spectrum: SpatialSpectrum, beta: np.ndarray, k: int) -> tuple[float, float]:
    """Return ``(sum_{i>k} lambda_i beta_i^2, sum_{i<=k} beta_i^2 / lambda_i)``.

    ``beta`` is given in the eigenbasis of the spectrum.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spectrum.p,):
        raise ValueError(f"dimension mismatch: beta has shape {beta.shape}, p = {spectrum.p}")
    if not 0 <= k <= spectrum.p:
        raise ValueError(f"k must satisfy 0 <= k <= p, got {k}")
    lam = spectrum.eigenvalues
    tail = math.fsum(lam[k:] * beta[k:] ** 2)
    head = math.fsum(beta[:k] ** 2 / lam[:k])
    return tail, head


class RateSequences(NamedTuple):
    zeta: float
    tau: float
    eta: float
    k_star: int


def rate_sequences(spectrum: SpatialSpectrum, n: int, b: float) -> RateSequences:
    """Trace, ``lambda_{k*}`` and ``max(k*/n, n/R_{k*})`` for one n.

    For k* = 0 the 1-based ``lambda_{k*}`` does not exist; ``lambda_1`` is used.
    """
    ks = k_star(spectrum, b, n)
    if ks == INFINITE:
        raise KStarInfinite(f"k* is infinite for n={n}, b={b}: variance lower-bound regime")
    _, R = effective_ranks(spectrum, ks)
    tau = float(spectrum.eigenvalues[max(ks, 1) - 1])
    return RateSequences(spectrum.trace, tau, max(ks / n, n / R), ks)


def rank_table(spectrum: SpatialSpectrum, ks: Sequence[int]) -> list[tuple[int, float, float]]:
    return [(k, *effective_ranks(spectrum, k)) for k in ks]
