"""Experiment configuration: a strict TOML schema.

Example::

    [experiment]
    name = "homo-ar1"
    n_grid = [50, 100, 200, 400]
    reps = 50
    master_seed = 7
    jobs = 1

    [spectrum]
    family = "poly_shift"
    gamma = 1.0
    gamma_power = -0.5     # gamma_n = gamma * n ** gamma_power
    p_factor = 64.0        # p = ceil(p_factor * n ** p_power)
    p_power = 1.0

    [temporal]
    kind = "arma"
    a = [0.5]

    [noise]
    kind = "identity"
    scale = 1.0

    [beta]
    kind = "unit_direction"
    index = 1

    [bounds]
    b = 2.0
    c = 1.0
    delta = 0.05

    [output]
    dir = "results/homo-ar1"

Unknown sections or keys raise :class:`ConfigError`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

import tomli
import tomli_w

from .sampler import BetaSpec, random_orthogonal
from .spectra import SpatialSpectrum, build_benign_spectrum
from .temporal import KINDS, TemporalSpec

OUTPUT_ENV = "BOLAB_OUTPUT_DIR"
DEFAULT_OUTPUT = "bolab_output"
ROTATION_MAX_P = 4096


class ConfigError(ValueError):
    pass


def _strict(section: str, data: Mapping, allowed) -> None:
    extra = set(data) - set(allowed)
    if extra:
        raise ConfigError(f"[{section}] unknown keys: {sorted(extra)}")


@dataclass(frozen=True)
class SpectrumConfig:
    family: str = "poly_shift"
    gamma: Optional[float] = None
    gamma_power: float = 0.0
    eps: Optional[float] = None
    eps_power: float = 0.0
    p: Optional[int] = None
    p_factor: Optional[float] = None
    p_power: float = 1.0
    tail_tol: float = 1e-3
    eigenvalues: tuple = ()
    rotation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(float(x) for x in self.eigenvalues))
        if self.rotation not in ("identity", "random"):
            raise ConfigError("[spectrum] rotation must be 'identity' or 'random'")

    def dimension(self, n: int) -> Optional[int]:
        if self.p is not None:
            return int(self.p)
        if self.p_factor is not None:
            return int(math.ceil(self.p_factor * n ** self.p_power - 1e-9))
        return None

    def build(self, n: int, seed: int = 0) -> SpatialSpectrum:
        """Spectrum at sample size n; a random basis is seeded by ``(seed, n)``."""
        params: dict[str, Any] = {}
        if self.gamma is not None:
            params["gamma"] = self.gamma * n ** self.gamma_power
        if self.eps is not None:
            params["eps"] = self.eps * n ** self.eps_power
        if self.family == "explicit":
            params["eigenvalues"] = self.eigenvalues
        p = self.dimension(n)
        if self.family in ("poly_cut", "exp_plus"):
            if p is None:
                raise ConfigError(f"[spectrum] {self.family} needs p or p_factor")
            sp = build_benign_spectrum(self.family, n, p_n=p, **params)
        elif self.family == "explicit":
            sp = build_benign_spectrum("explicit", n, **params)
        else:
            sp = build_benign_spectrum(self.family, n, tail_tol=self.tail_tol, p=p, **params)
        if self.rotation == "random":
            if sp.p > ROTATION_MAX_P:
                raise ConfigError(f"random rotation limited to p <= {ROTATION_MAX_P}")
            sp = sp.with_basis(random_orthogonal(sp.p, seed, n))
        return sp


@dataclass(frozen=True)
class BoundsConfig:
    b: float = 2.0
    c: float = 1.0
    delta: float = 0.05
    alpha: float = 2.0  # cross-lag decay exponent used for hetero predictions

    def __post_init__(self):
        if self.b < 1 or self.c <= 0 or not 0 < self.delta < 1 or self.alpha <= 0:
            raise ConfigError("[bounds] need b >= 1, c > 0, 0 < delta < 1, alpha > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    n_grid: tuple = (50, 100, 200, 400)
    reps: int = 50
    master_seed: int = 0
    jobs: int = 1
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    temporal: TemporalSpec = field(default_factory=TemporalSpec.identity)
    noise: TemporalSpec = field(default_factory=TemporalSpec.identity)
    noise_scale: float = 1.0
    beta: BetaSpec = field(default_factory=BetaSpec)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    output_dir: Optional[str] = None

    def __post_init__(self):
        grid = tuple(int(x) for x in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ConfigError("[experiment] n_grid must be positive and strictly increasing")
        if self.reps < 2:
            raise ConfigError("[experiment] reps must be >= 2")
        if self.jobs < 1 or self.master_seed < 0:
            raise ConfigError("[experiment] jobs >= 1 and master_seed >= 0 required")
        if self.noise.is_hetero:
            raise ConfigError("[noise] must not be hetero")
        if self.noise_scale <= 0:
            raise ConfigError("[noise] scale must be positive")
        if self.temporal.is_hetero and self.bounds.delta >= 0.5:
            raise ConfigError("[bounds] hetero bounds need delta < 1/2")

    @property
    def mode(self) -> str:
        return "hetero" if self.temporal.is_hetero else "homo"

    def resolved_output_dir(self) -> str:
        return self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        spec = {k: v for k, v in _asdict_shallow(self.spectrum).items() if v is not None}
        spec["eigenvalues"] = list(self.spectrum.eigenvalues)
        noise = self.noise.to_dict()
        noise["scale"] = self.noise_scale
        out = {
            "experiment": {"name": self.name, "n_grid": list(self.n_grid), "reps": self.reps,
                           "master_seed": self.master_seed, "jobs": self.jobs},
            "spectrum": spec,
            "temporal": self.temporal.to_dict(),
            "noise": noise,
            "beta": self.beta.to_dict(),
            "bounds": _asdict_shallow(self.bounds),
        }
        if self.output_dir is not None:
            out["output"] = {"dir": self.output_dir}
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        _strict("top level", data, ("experiment", "spectrum", "temporal", "noise", "beta",
                                    "bounds", "output"))
        exp = dict(data.get("experiment", {}))
        _strict("experiment", exp, ("name", "n_grid", "reps", "master_seed", "jobs"))
        spec = dict(data.get("spectrum", {}))
        _strict("spectrum", spec, [f.name for f in fields(SpectrumConfig)])
        noise = dict(data.get("noise", {}))
        scale = float(noise.pop("scale", 1.0))
        beta = dict(data.get("beta", {}))
        _strict("beta", beta, ("kind", "values", "index", "scale"))
        bounds = dict(data.get("bounds", {}))
        _strict("bounds", bounds, [f.name for f in fields(BoundsConfig)])
        out = dict(data.get("output", {}))
        _strict("output", out, ("dir",))
        try:
            return cls(
                name=str(exp.get("name", "experiment")),
                n_grid=tuple(exp.get("n_grid", (50, 100, 200, 400))),
                reps=int(exp.get("reps", 50)),
                master_seed=int(exp.get("master_seed", 0)),
                jobs=int(exp.get("jobs", 1)),
                spectrum=SpectrumConfig(**spec),
                temporal=_temporal(data.get("temporal", {}), "temporal"),
                noise=_temporal(noise, "noise"),
                noise_scale=scale,
                beta=BetaSpec.from_dict(beta),
                bounds=BoundsConfig(**bounds),
                output_dir=out.get("dir"),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_toml(fh.read().decode("utf-8"))


_TEMPORAL_KEYS = ("kind", "a", "b", "d", "acf", "normalize", "components", "assignment")


def _temporal(d: Mapping, section: str) -> TemporalSpec:
    _strict(section, d, _TEMPORAL_KEYS)
    if d.get("kind", "identity") not in KINDS:
        raise ConfigError(f"[{section}] unknown kind {d.get('kind')!r}")
    for comp in d.get("components", ()):
        _strict(f"{section}.components", comp, _TEMPORAL_KEYS)
    return TemporalSpec.from_dict(d)


def _asdict_shallow(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}
