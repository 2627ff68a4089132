"""Temporal covariances of stationary Gaussian coordinate processes.

Covers ARMA and ARFIMA autocovariances, their n x n Toeplitz matrices, the
Cholesky factors used for sampling, and the two eigenvalue summaries the
risk bounds need: the epsilon-neighboring constant of a family against a
reference matrix and the relative degeneracy ``nu = ||Xi^-1 Upsilon||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import linalg, signal, special

KINDS = ("identity", "arma", "arfima", "explicit_acf", "hetero")
ROOT_MARGIN = 1e-8
MA_REL_TOL = 1e-12
MA_MAX_TERMS = 1_000_000
ARFIMA_CONV_TOL = 1e-8


class NotPositiveDefinite(ValueError):
    """A temporal covariance failed its positive-definiteness check."""


class RootConditionError(ValueError):
    """A characteristic polynomial has a root on or inside the unit circle."""


def _poly_roots_ok(coeffs: Sequence[float], sign: float) -> float:
    """Smallest root modulus of ``1 + sign * sum_i c_i z^i`` (inf if constant)."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size == 0:
        return math.inf
    # roots w = 1/z of the monic reciprocal polynomial stay finite for tiny coefficients
    w = np.max(np.abs(np.roots(np.concatenate([[1.0], sign * c]))))
    with np.errstate(over="ignore", divide="ignore"):
        return float(1.0 / w)


def check_root_condition(a: Sequence[float], b: Sequence[float]) -> None:
    """Raise unless AR and MA polynomials have all roots outside ``|z| <= 1 + 1e-8``."""
    ar = _poly_roots_ok(a, -1.0)
    if ar <= 1.0 + ROOT_MARGIN:
        raise RootConditionError(f"AR polynomial has a root of modulus {ar:.6g} <= 1")
    ma = _poly_roots_ok(b, 1.0)
    if ma <= 1.0 + ROOT_MARGIN:
        raise RootConditionError(f"MA polynomial has a root of modulus {ma:.6g} <= 1")


@dataclass(frozen=True)
class TemporalSpec:
    """Symbolic description of a temporal covariance.

    ``kind`` is one of ``identity``, ``arma`` (``a``, ``b``), ``arfima``
    (``a``, ``d``, ``b``), ``explicit_acf`` (``acf``) or ``hetero``. A hetero
    spec holds ``components`` and an ``assignment`` giving the component of
    each coordinate; without an assignment coordinates cycle through the
    components. ``normalize`` forces unit diagonal; hetero components are
    always normalized.
    """

    kind: str = "identity"
    a: tuple = ()
    b: tuple = ()
    d: float = 0.0
    acf: tuple = ()
    components: tuple = ()
    assignment: Optional[tuple] = None
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown temporal kind {self.kind!r}")
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        object.__setattr__(self, "acf", tuple(float(x) for x in self.acf))
        if self.kind in ("arma", "arfima"):
            check_root_condition(self.a, self.b)
        if self.kind == "arfima" and not -0.5 < self.d < 0.5:
            raise ValueError(f"arfima needs d in (-1/2, 1/2), got {self.d}")
        if self.kind == "explicit_acf" and (not self.acf or self.acf[0] <= 0):
            raise ValueError("explicit_acf needs gamma(0) > 0")
        if self.kind == "hetero":
            if not self.components:
                raise ValueError("hetero spec needs at least one component")
            if any(c.kind == "hetero" for c in self.components):
                raise ValueError("hetero components cannot be hetero themselves")
            if self.assignment is not None:
                asg = tuple(int(x) for x in self.assignment)
                if min(asg) < 0 or max(asg) >= len(self.components):
                    raise ValueError("assignment refers to a missing component")
                object.__setattr__(self, "assignment", asg)

    @classmethod
    def identity(cls) -> "TemporalSpec":
        return cls("identity")

    @classmethod
    def arma(cls, a=(), b=(), normalize=False) -> "TemporalSpec":
        return cls("arma", a=tuple(a), b=tuple(b), normalize=normalize)

    @classmethod
    def arfima(cls, d, a=(), b=(), normalize=False) -> "TemporalSpec":
        return cls("arfima", a=tuple(a), b=tuple(b), d=float(d), normalize=normalize)

    @classmethod
    def hetero_map(cls, mapping: Mapping[int, "TemporalSpec"]) -> "TemporalSpec":
        """Build a hetero spec from a 1-based ``{coordinate: spec}`` map covering 1..p."""
        keys = sorted(mapping)
        if keys != list(range(1, len(keys) + 1)):
            raise ValueError("hetero map must cover coordinates 1..p without gaps")
        return cls("hetero", components=tuple(mapping[k] for k in keys),
                   assignment=tuple(range(len(keys))))

    @property
    def is_hetero(self) -> bool:
        return self.kind == "hetero"

    def coordinate_components(self, p: int) -> np.ndarray:
        """Component index of each of p coordinates (hetero specs only)."""
        if self.assignment is None:
            return np.arange(p) % len(self.components)
        if len(self.assignment) < p:
            raise ValueError(f"hetero assignment covers {len(self.assignment)} coordinates, p = {p}")
        return np.asarray(self.assignment[:p])

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("arma", "arfima"):
            out.update(a=list(self.a), b=list(self.b))
        if self.kind == "arfima":
            out["d"] = self.d
        if self.kind == "explicit_acf":
            out["acf"] = list(self.acf)
        if self.kind == "hetero":
            out["components"] = [c.to_dict() for c in self.components]
            if self.assignment is not None:
                out["assignment"] = list(self.assignment)
        else:
            out["normalize"] = self.normalize
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "TemporalSpec":
        kind = d.get("kind", "identity")
        if kind == "hetero":
            comps = tuple(cls.from_dict(c) for c in d["components"])
            asg = d.get("assignment")
            return cls("hetero", components=comps, assignment=None if asg is None else tuple(asg))
        return cls(kind, a=tuple(d.get("a", ())), b=tuple(d.get("b", ())),
                   d=float(d.get("d", 0.0)), acf=tuple(d.get("acf", ())),
                   normalize=bool(d.get("normalize", False)))


@dataclass(frozen=True, eq=False)
class ToeplitzCov:
    """Symmetric Toeplitz covariance given by its first row ``gamma(0..n-1)``."""

    first_row: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        g = np.array(self.first_row, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("first_row must be a nonempty vector")
        if g[0] <= 0:
            raise ValueError("gamma(0) must be positive")
        if np.any(np.abs(g) > g[0] * (1 + 1e-12)):
            raise ValueError("|gamma(h)| must not exceed gamma(0)")
        g.setflags(write=False)
        object.__setattr__(self, "first_row", g)

    @property
    def n(self) -> int:
        return self.first_row.size

    @cached_property
    def matrix(self) -> np.ndarray:
        m = linalg.toeplitz(self.first_row)
        m.setflags(write=False)
        return m

    @cached_property
    def cholesky(self) -> np.ndarray:
        try:
            L = linalg.cholesky(self.matrix, lower=True)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(
                f"temporal covariance {self.label or ''} of size {self.n} is not positive "
                "definite; lengthen the MA truncation or change the coefficients") from exc
        L.setflags(write=False)
        return L

    def is_unit_diagonal(self, tol: float = 1e-12) -> bool:
        return abs(self.first_row[0] - 1.0) <= tol

    def scaled(self, s: float) -> "ToeplitzCov":
        return ToeplitzCov(self.first_row * s, self.label)

    def eigvalsh(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)


# --- MA / ACF ---------------------------------------------------------------

def ma_coefficients(a: Sequence[float], b: Sequence[float], J: Optional[int] = None,
                    rel_tol: float = MA_REL_TOL) -> np.ndarray:
    """Power-series coefficients of ``(1 + sum b_i z^i) / (1 - sum a_i z^i)``.

    Returns ``phi_0..phi_J`` where J starts at the requested value (default
    64) and doubles until the last ``max(len(a), len(b), 1)`` coefficients are
    below ``rel_tol * max|phi|``, capped at ``MA_MAX_TERMS``.
    """
    check_root_condition(a, b)
    num = np.concatenate([[1.0], np.asarray(b, dtype=float)])
    den = np.concatenate([[1.0], -np.asarray(a, dtype=float)])
    window = max(len(a), len(b), 1)
    length = max(int(J) if J is not None else 64, len(b) + 1, 2) + 1
    while True:
        impulse = np.zeros(length)
        impulse[0] = 1.0
        phi = signal.lfilter(num, den, impulse)
        if np.all(np.abs(phi[-window:]) < rel_tol * np.max(np.abs(phi))):
            return phi
        if length >= MA_MAX_TERMS:
            raise RuntimeError("MA representation did not decay within the term cap")
        length = min(2 * length, MA_MAX_TERMS)


def acf_from_ma(phi: np.ndarray, maxlag: int, normalize: bool = False) -> np.ndarray:
    """``gamma(h) = sum_j phi_j phi_{j+h}`` for h = 0..maxlag (direct sums, no FFT)."""
    phi = np.asarray(phi, dtype=float)
    gamma = np.zeros(maxlag + 1)
    m = min(maxlag, phi.size - 1)
    for h in range(m + 1):
        gamma[h] = np.dot(phi[: phi.size - h], phi[h:])
    if normalize:
        gamma /= gamma[0]
    return gamma


def fractional_acf(d: float, maxlag: int) -> np.ndarray:
    """Autocovariance of ARFIMA(0, d, 0) with unit innovation variance."""
    if not -0.5 < d < 0.5:
        raise ValueError(f"d must lie in (-1/2, 1/2), got {d}")
    gamma = np.empty(maxlag + 1)
    gamma[0] = math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))
    h = np.arange(1, maxlag + 1, dtype=float)
    gamma[1:] = gamma[0] * np.cumprod((h - 1 + d) / (h - d))
    return gamma


def arfima_acf(d: float, a: Sequence[float] = (), b: Sequence[float] = (), maxlag: int = 0,
               normalize: bool = False) -> np.ndarray:
    """Autocovariance of ARFIMA(a, d, b) for lags 0..maxlag.

    The fractional part uses the exact gamma-function recursion. A nontrivial
    ARMA part enters by convolving its autocovariance ``c_m`` with the
    fractional one over ``|m| <= M``, M chosen so the dropped ``|c_m|`` mass is
    below ``1e-8`` of the total.
    """
    if not -0.5 < d < 0.5:
        raise ValueError(f"d must lie in (-1/2, 1/2), got {d}")
    if not a and not b:
        out = fractional_acf(d, maxlag)
    elif d == 0.0:
        out = acf_from_ma(ma_coefficients(a, b), maxlag)
    else:
        psi = ma_coefficients(a, b)
        c = acf_from_ma(psi, psi.size - 1)
        mass = np.abs(c)
        mass[1:] *= 2
        tail = np.cumsum(mass[::-1])[::-1]
        # smallest M with sum_{|m|>M} |c_m| <= tol * total
        M = int(np.argmax(np.append(tail[1:], 0.0) <= ARFIMA_CONV_TOL * tail[0]))
        c = c[: M + 1]
        gu = fractional_acf(d, maxlag + M)
        two_sided_c = np.concatenate([c[:0:-1], c])  # m = -M..M
        two_sided_u = np.concatenate([gu[: 0 : -1], gu])  # lags -(maxlag+M)..maxlag+M
        full = np.convolve(two_sided_u, two_sided_c, mode="valid")
        # 'valid' output index j is lag j - maxlag
        out = full[maxlag: 2 * maxlag + 1]
    if normalize:
        out = out / out[0]
    return out


def spectral_density_range(a: Sequence[float], b: Sequence[float], grid: int = 8192) -> tuple[float, float]:
    """Min and max of ``|theta(z) / phi(z)|^2`` on the unit circle (unit innovations)."""
    z = np.exp(1j * np.linspace(0.0, np.pi, grid))
    num = 1 + sum(bi * z ** (i + 1) for i, bi in enumerate(b))
    den = 1 - sum(ai * z ** (i + 1) for i, ai in enumerate(a))
    f = np.abs(num / den) ** 2
    return float(f.min()), float(f.max())


def acf_of(spec: TemporalSpec, maxlag: int) -> np.ndarray:
    """Autocovariance of a non-hetero spec for lags 0..maxlag."""
    if spec.kind == "identity":
        g = np.zeros(maxlag + 1)
        g[0] = 1.0
        return g
    if spec.kind == "arma":
        return acf_from_ma(ma_coefficients(spec.a, spec.b), maxlag, spec.normalize)
    if spec.kind == "arfima":
        return arfima_acf(spec.d, spec.a, spec.b, maxlag, spec.normalize)
    if spec.kind == "explicit_acf":
        g = np.zeros(maxlag + 1)
        m = min(len(spec.acf), maxlag + 1)
        g[:m] = spec.acf[:m]
        return g / g[0] if spec.normalize else g
    raise ValueError("hetero specs have no single autocovariance")


def materialize(spec: TemporalSpec, n: int, p: Optional[int] = None
                ) -> Union[ToeplitzCov, list[ToeplitzCov]]:
    """Build the n x n Toeplitz covariance(s) of a spec and check PD.

    Homo specs give one :class:`ToeplitzCov`. Hetero specs give a list of p
    (``p`` required), with coordinates sharing a component sharing one object;
    every component is normalized to unit diagonal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind != "hetero":
        cov = ToeplitzCov(acf_of(spec, n - 1), label=spec.kind)
        cov.cholesky  # PD check
        return cov
    if p is None:
        raise ValueError("materializing a hetero spec needs p")
    comps = []
    for k, c in enumerate(spec.components):
        g = acf_of(c, n - 1)
        cov = ToeplitzCov(g / g[0], label=f"{c.kind}[{k}]")
        cov.cholesky
        comps.append(cov)
    return [comps[j] for j in spec.coordinate_components(p)]


def sqrt_factor(cov: ToeplitzCov) -> np.ndarray:
    """Lower Cholesky factor S with ``S S^T = Xi``; no jitter is ever added."""
    return cov.cholesky


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, ToeplitzCov) else np.asarray(x, dtype=float)


def _cholesky(m: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(m, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc


def whitened_eigvals(target, reference) -> np.ndarray:
    """Eigenvalues of ``R^-1/2 T R^-1/2`` (equivalently of ``R^-1 T``), ascending."""
    T = _as_matrix(target)
    R = _as_matrix(reference)
    if T.shape != R.shape:
        raise ValueError(f"size mismatch: {T.shape} vs {R.shape}")
    L = reference.cholesky if isinstance(reference, ToeplitzCov) else _cholesky(R)
    W = linalg.solve_triangular(L, T, lower=True)
    W = linalg.solve_triangular(L, W.T, lower=True)
    return linalg.eigvalsh((W + W.T) / 2)


def neighboring_epsilon(family: Sequence[ToeplitzCov], reference: ToeplitzCov) -> float:
    """Largest eps in (0, 1] with every eigenvalue of ``Xi_0^-1 Xi_i`` in [eps, 1/eps]."""
    lo, hi = math.inf, 0.0
    seen = set()
    for cov in family:
        if id(cov) in seen:
            continue
        seen.add(id(cov))
        if cov.n != reference.n:
            raise ValueError(f"size mismatch: {cov.n} vs {reference.n}")
        ev = whitened_eigvals(cov, reference)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    return float(min(lo, 1.0 / hi, 1.0))


def nu(temporal, noise) -> float:
    """Relative degeneracy ``mu_1(Xi^-1/2 Upsilon Xi^-1/2) = ||Xi^-1 Upsilon||``.

    Accepts :class:`ToeplitzCov` or plain PD arrays.
    """
    return float(whitened_eigvals(noise, temporal)[-1])
