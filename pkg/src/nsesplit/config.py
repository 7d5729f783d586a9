"""Experiment configuration: a JSON document with named keys for every constant."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .noise import FAMILIES, CoriolisSpec, DiffusionSpec, NoiseBasisSpec
from .scheme import SchemeConfig, initial_condition
from .spectral import make_grid

__all__ = ["ConfigError", "NoiseSection", "SchemeSection", "ExperimentConfig", "EXPERIMENTS", "load_config"]

EXPERIMENTS = ("validate", "simulate", "moments", "diffs", "rate", "exceedance")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class NoiseSection:
    family: str = "additive"
    n_modes: int = 24
    k_max: int | None = None
    amplitude: float = 1.0
    decay: float = 0.5
    beta0: float = 1.0
    beta1: float = 0.0
    gamma: float = 0.0


@dataclass(frozen=True)
class SchemeSection:
    N: int = 32
    L: float = 2 * math.pi
    T: float = 0.5
    n: int = 16
    eps: float = 0.0
    m: int = 4
    c0: float = 0.0
    initial_condition: Any = field(
        default_factory=lambda: {
            "sum": [
                {"preset": "taylor_green"},
                {"preset": "random_smooth", "decay": 3.0, "seed": 1, "energy": 0.5},
            ]
        }
    )
    noise: NoiseSection = field(default_factory=NoiseSection)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``M = None`` selects the percentile rule; ``z`` is ``"log"`` (z(n) = log n)
    or a constant.  ``finest_n = None`` uses ``max(n_list) * m``.
    """

    experiment: str = "validate"
    scheme: SchemeSection = field(default_factory=SchemeSection)
    n_list: tuple[int, ...] = (8, 16, 32, 64, 128)
    n_ref: int = 1024
    finest_n: int | None = None
    samples: int = 64
    M: float | None = None
    percentile: float = 95.0
    halving_check: bool = True
    p: int = 1
    z: str | float = "log"
    master_seed: int = 0
    out: str = "out"
    snapshots: bool = False

    def __post_init__(self):
        self.validate()

    # -- validation -----------------------------------------------------

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENTS}")
        s = self.scheme
        if s.N < 4 or s.N % 2:
            raise ConfigError("scheme.N", "must be an even integer >= 4")
        if not s.L > 0:
            raise ConfigError("scheme.L", "must be positive")
        if not s.T > 0:
            raise ConfigError("scheme.T", "must be positive")
        if s.n < 1:
            raise ConfigError("scheme.n", "must be >= 1")
        if not 0 <= s.eps < 1:
            raise ConfigError("scheme.eps", "must lie in [0, 1)")
        if s.m < 1:
            raise ConfigError("scheme.m", "must be >= 1")
        if s.noise.family not in FAMILIES:
            raise ConfigError("scheme.noise.family", f"must be one of {FAMILIES}")
        if s.noise.n_modes < 1:
            raise ConfigError("scheme.noise.n_modes", "must be positive")
        if list(self.n_list) != sorted(self.n_list) or len(set(self.n_list)) != len(self.n_list):
            raise ConfigError("n_list", "must be strictly increasing")
        if any(n < 1 for n in self.n_list):
            raise ConfigError("n_list", "entries must be positive")
        if self.experiment in ("moments", "diffs", "rate", "exceedance"):
            if not self.n_list:
                raise ConfigError("n_list", "must not be empty")
            if self.samples < 8:
                raise ConfigError("samples", "must be >= 8 for statistical experiments")
        if self.experiment in ("rate", "exceedance"):
            for n in self.n_list:
                if self.n_ref % n:
                    raise ConfigError("n_list", f"{n} does not divide n_ref={self.n_ref}")
        if self.finest_n is not None:
            for n in self.n_list:
                if self.finest_n % n:
                    raise ConfigError("n_list", f"{n} does not divide finest_n={self.finest_n}")
        if self.M is not None and self.M < 0:
            raise ConfigError("M", "must be nonnegative")
        if not 0 < self.percentile <= 100:
            raise ConfigError("percentile", "must lie in (0, 100]")
        if self.p < 1:
            raise ConfigError("p", "must be >= 1")
        if not (self.z == "log" or isinstance(self.z, (int, float))):
            raise ConfigError("z", "must be 'log' or a number")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be an unsigned 64-bit integer")

    # -- conversion -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        d = dict(d)
        scheme = _section(SchemeSection, d.pop("scheme", {}), "scheme")
        _reject_unknown(cls, d, "")
        if "n_list" in d:
            try:
                d["n_list"] = tuple(int(n) for n in d["n_list"])
            except (TypeError, ValueError):
                raise ConfigError("n_list", "must be a list of integers") from None
        return cls(scheme=scheme, **d)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, master_seed=int(seed))

    # -- construction of runtime objects -----------------------------------

    def scheme_config(self, n: int | None = None) -> SchemeConfig:
        s = self.scheme
        grid = make_grid(s.N, s.L)
        nz = s.noise
        try:
            basis = NoiseBasisSpec(grid, nz.n_modes, nz.k_max)
        except ValueError as e:
            raise ConfigError("scheme.noise.n_modes", str(e)) from None
        diffusion = DiffusionSpec(
            basis, nz.family, amplitude=nz.amplitude, decay=nz.decay, beta0=nz.beta0, beta1=nz.beta1, gamma=nz.gamma
        )
        try:
            u0 = initial_condition(grid, s.initial_condition)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("scheme.initial_condition", str(e)) from None
        return SchemeConfig(s.T, n or s.n, s.eps, grid, diffusion, u0, m=s.m, coriolis=CoriolisSpec(s.c0))


def _reject_unknown(cls, d: dict, prefix: str):
    names = {f.name for f in fields(cls)}
    for k in d:
        if k not in names:
            raise ConfigError(prefix + k, "unknown key")


def _section(cls, d: Any, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path, "must be an object")
    d = dict(d)
    if cls is SchemeSection:
        d["noise"] = _section(NoiseSection, d.get("noise", {}), path + ".noise")
    _reject_unknown(cls, d, path + ".")
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(path, str(e)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"not valid JSON: {e}") from None
    return ExperimentConfig.from_dict(data)
