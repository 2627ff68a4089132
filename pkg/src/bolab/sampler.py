"""Draws of the separable Gaussian regression model.

The design is ``X = [S_1 z_1, ..., S_p z_p] Lambda^1/2 U^T`` with ``S_i`` the
Cholesky factor of the i-th temporal covariance; when all coordinates share
one covariance this is ``S Z Lambda^1/2 U^T``. Noise is ``S_Upsilon g``.
Design, noise and beta draws come from separate streams (see :mod:`bolab.rng`).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from . import rng as rng_mod
from .spectra import SpatialSpectrum
from .temporal import TemporalSpec, ToeplitzCov, materialize

RANK_TOL = 1e-10
BETA_KINDS = ("explicit", "unit_direction", "rademacher_prior", "zero")


def random_orthogonal(p: int, seed: int, index: int = 0) -> np.ndarray:
    """Haar-distributed orthogonal matrix from QR of a seeded Gaussian matrix."""
    g = rng_mod.stream(seed, "rotation", index).standard_normal((p, p))
    q, r = linalg.qr(g)
    return q * np.sign(np.diag(r))


def _rotate(spectrum: SpatialSpectrum, W: np.ndarray) -> np.ndarray:
    W *= np.sqrt(spectrum.eigenvalues)
    return W if spectrum.basis is None else W @ spectrum.basis.T


def sample_design_homo(spectrum: SpatialSpectrum, xi: ToeplitzCov, n: int, seed: int,
                       index: int = 0) -> np.ndarray:
    """``X = S_Xi Z Lambda^1/2 U^T`` with Z drawn from the design stream."""
    if xi.n != n:
        raise ValueError(f"dimension mismatch: temporal covariance is {xi.n}x{xi.n}, n = {n}")
    Z = rng_mod.stream(seed, "design", index).standard_normal((n, spectrum.p))
    return _rotate(spectrum, xi.cholesky @ Z)


def sample_design_hetero(spectrum: SpatialSpectrum, family: Sequence[ToeplitzCov], n: int,
                         seed: int, index: int = 0) -> np.ndarray:
    """Column i of the pre-rotation matrix is ``S_i z_i``; shared covariances are batched."""
    if len(family) != spectrum.p:
        raise ValueError(f"family has {len(family)} members, spectrum has p = {spectrum.p}")
    Z = rng_mod.stream(seed, "design", index).standard_normal((n, spectrum.p))
    groups: dict[int, list[int]] = {}
    covs: dict[int, ToeplitzCov] = {}
    for i, cov in enumerate(family):
        groups.setdefault(id(cov), []).append(i)
        covs[id(cov)] = cov
    for key, cols in groups.items():
        cov = covs[key]
        if cov.n != n:
            raise ValueError(f"dimension mismatch: temporal covariance is {cov.n}x{cov.n}, n = {n}")
        cols = np.asarray(cols)
        Z[:, cols] = cov.cholesky @ Z[:, cols]
    return _rotate(spectrum, Z)


def sample_noise(upsilon: ToeplitzCov, seed: int, index: int = 0) -> np.ndarray:
    g = rng_mod.stream(seed, "noise", index).standard_normal(upsilon.n)
    return upsilon.cholesky @ g


@dataclass(frozen=True)
class BetaSpec:
    """How to produce the true parameter.

    ``explicit`` uses ``values``; ``unit_direction`` is ``scale * e_index``
    (1-based); ``rademacher_prior`` flips the signs of ``beta_bar`` (``values``,
    or ``scale / sqrt(p)`` in every coordinate when ``values`` is empty); ``zero``
    is the zero vector.
    """

    kind: str = "unit_direction"
    values: tuple = ()
    index: int = 1
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in BETA_KINDS:
            raise ValueError(f"unknown beta kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": list(self.values), "index": self.index,
                "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> "BetaSpec":
        return cls(d.get("kind", "unit_direction"), tuple(d.get("values", ())),
                   int(d.get("index", 1)), float(d.get("scale", 1.0)))


def make_beta(spec: BetaSpec, p: int, seed: int = 0, index: int = 0) -> np.ndarray:
    if spec.kind == "zero":
        return np.zeros(p)
    if spec.kind == "explicit":
        if len(spec.values) != p:
            raise ValueError(f"explicit beta has length {len(spec.values)}, p = {p}")
        return np.array(spec.values)
    if spec.kind == "unit_direction":
        if not 1 <= spec.index <= p:
            raise ValueError(f"unit_direction index {spec.index} outside 1..{p}")
        beta = np.zeros(p)
        beta[spec.index - 1] = spec.scale
        return beta
    if spec.values:
        if len(spec.values) != p:
            raise ValueError(f"beta_bar has length {len(spec.values)}, p = {p}")
        bar = np.array(spec.values)
    else:
        bar = np.full(p, spec.scale / np.sqrt(p))
    signs = rng_mod.stream(seed, "beta", index).integers(0, 2, size=p) * 2 - 1
    return signs * bar


@dataclass
class RegressionInstance:
    """One draw of ``(X, Y, beta*, noise)`` with its provenance."""

    X: np.ndarray
    Y: np.ndarray
    beta_star: np.ndarray
    noise: np.ndarray
    seed: int
    replicate: int = 0
    config_hash: str = ""
    generator_id: str = rng_mod.GENERATOR_ID

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def check_full_row_rank(X: np.ndarray) -> None:
    """Raise unless ``sigma_min(X) > 1e-10 sigma_max(X)``.

    Uses Gram eigenvalues when their ratio is well resolved and falls back
    to singular values otherwise.
    """
    ev = linalg.eigvalsh(X @ X.T)
    if ev[0] > 1e-12 * ev[-1]:
        return
    s = linalg.svdvals(X)
    if s[-1] <= RANK_TOL * s[0] or s.size < X.shape[0]:
        raise ValueError(f"design is rank deficient: sigma_min/sigma_max = {s[-1] / s[0]:.3e}")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Model:
    """A fully materialized regression model at one sample size.

    ``design`` is one :class:`ToeplitzCov` (homo) or a list of p (hetero).
    ``noise`` is the noise covariance Upsilon.
    """

    spectrum: SpatialSpectrum
    design: Union[ToeplitzCov, list]
    noise: ToeplitzCov
    beta: BetaSpec = field(default_factory=BetaSpec)
    config_hash: str = ""
    allow_underparameterized: bool = False

    def __post_init__(self):
        if not self.allow_underparameterized and self.n >= self.spectrum.p:
            raise ValueError(f"over-parameterization needs n < p, got n={self.n}, p={self.spectrum.p}")
        if self.noise.n != self.n:
            raise ValueError("noise covariance size differs from the design's n")

    @property
    def n(self) -> int:
        return self.design.n if isinstance(self.design, ToeplitzCov) else self.design[0].n

    @property
    def is_hetero(self) -> bool:
        return not isinstance(self.design, ToeplitzCov)

    def sample_X(self, seed: int, index: int = 0) -> np.ndarray:
        if self.is_hetero:
            return sample_design_hetero(self.spectrum, self.design, self.n, seed, index)
        return sample_design_homo(self.spectrum, self.design, self.n, seed, index)

    def draw(self, seed: int, index: int = 0, check_rank: bool = True) -> RegressionInstance:
        X = self.sample_X(seed, index)
        if check_rank:
            check_full_row_rank(X)
        beta = make_beta(self.beta, self.spectrum.p, seed, index)
        eps = sample_noise(self.noise, seed, index)
        return RegressionInstance(X, X @ beta + eps, beta, eps, seed, index, self.config_hash)


def build_model(spectrum: SpatialSpectrum, temporal: TemporalSpec, n: int,
                noise: Optional[TemporalSpec] = None, noise_scale: float = 1.0,
                beta: Optional[BetaSpec] = None, **kw) -> Model:
    """Materialize covariances at size n and hash the configuration."""
    noise = noise or TemporalSpec.identity()
    beta = beta or BetaSpec()
    if noise.is_hetero:
        raise ValueError("noise must be a homo temporal spec")
    design = materialize(temporal, n, spectrum.p)
    ups = materialize(noise, n).scaled(noise_scale)
    h = _digest({"spectrum": spectrum.to_dict(), "temporal": temporal.to_dict(),
                 "noise": noise.to_dict(), "noise_scale": noise_scale, "beta": beta.to_dict(),
                 "n": n})
    return Model(spectrum, design, ups, beta, h, **kw)
