"""Run configuration read from TOML with dotted keys.

Grammar (every key optional, defaults give the delay heat model)::

    modes = 64
    eigenvalues.kind = "square"          # or "custom-list" with eigenvalues.values = [...]
    a1.c = 0.5
    a1.mu = 0.5
    a2.c = 0.25
    a2.nu = 0.25
    delay.r = 1.0
    kernel.form = "constant"             # zero | constant | linear | sampled
    kernel.params = [1.0]
    kernel.rho = 0.5                     # declared Hoelder order, sampled kernels only
    grid.m = 512
    grid.N = 3
    noise.decay = 2.0
    noise.b = 1.0
    noise.modes = 64                     # defaults to modes
    run.seed = 0
    run.paths = 200
    run.ns = [0, 1, 2]
    run.gammas = [0.5, 0.75]
    run.betas = [0.2, 0.4]
    run.kappas = [0.25, 0.4]
    run.noise_gammas = [0.0, 0.25]
    run.holder_levels = 7
    output.dir = "out"
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import tomli
import tomli_w

from .fundamental import StepGrid
from .regularity import ParameterMatrix
from .spectral import DelayKernel, DomainError, SpectralModel
from .stochastic import NoiseModel


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


_SECTIONS = {
    "eigenvalues": {"kind": "eigen_kind", "values": "eigen_values"},
    "a1": {"c": "c1", "mu": "mu"},
    "a2": {"c": "c2", "nu": "nu"},
    "delay": {"r": "r"},
    "kernel": {"form": "kernel_form", "params": "kernel_params", "rho": "kernel_rho"},
    "grid": {"m": "m", "N": "N"},
    "noise": {"decay": "noise_decay", "b": "noise_b", "modes": "noise_modes"},
    "run": {
        "seed": "seed", "paths": "paths", "ns": "ns", "gammas": "gammas", "betas": "betas",
        "kappas": "kappas", "noise_gammas": "noise_gammas", "holder_levels": "holder_levels",
    },
    "output": {"dir": "out_dir"},
}


@dataclass(frozen=True)
class RunConfig:
    modes: int = 64
    eigen_kind: str = "square"
    eigen_values: tuple[float, ...] = ()
    c1: float = 0.5
    mu: float = 0.5
    c2: float = 0.25
    nu: float = 0.25
    r: float = 1.0
    kernel_form: str = "constant"
    kernel_params: tuple[float, ...] = (1.0,)
    kernel_rho: float | None = None
    m: int = 512
    N: int = 3
    noise_decay: float = 2.0
    noise_b: float = 1.0
    noise_modes: int | None = None
    seed: int = 0
    paths: int = 200
    ns: tuple[int, ...] = (0, 1, 2)
    gammas: tuple[float, ...] = (0.5, 0.75)
    betas: tuple[float, ...] = (0.2, 0.4)
    kappas: tuple[float, ...] = (0.25, 0.4)
    noise_gammas: tuple[float, ...] = (0.0, 0.25)
    holder_levels: int = 7
    out_dir: str = "out"

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        self.validate()

    # -- validation -----------------------------------------------------------

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        ints = ("modes", "m", "N", "seed", "paths", "holder_levels")
        for name in ints:
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool), f"{name} must be an integer")
        need(self.modes >= 1, "modes must be >= 1")
        need(self.eigen_kind in ("square", "custom-list"), "eigenvalues.kind must be square or custom-list")
        if self.eigen_kind == "custom-list":
            need(len(self.eigen_values) == self.modes, "eigenvalues.values must list `modes` entries")
        for name in ("c1", "mu", "c2", "nu", "r", "noise_decay", "noise_b"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), f"{name} must be a finite number")
        need(0 < self.mu < 1 and 0 < self.nu < 1, "a1.mu and a2.nu must lie in (0, 1)")
        need(self.r > 0, "delay.r must be positive")
        need(self.m >= 1 and self.N >= 1, "grid.m and grid.N must be >= 1")
        need(self.noise_decay > 1, "noise.decay must exceed 1 (trace-class Q)")
        if self.noise_modes is not None:
            need(isinstance(self.noise_modes, int) and 1 <= self.noise_modes <= self.modes,
                 "noise.modes must lie in [1, modes]")
        need(0 <= self.seed < 2**64, "run.seed must be an unsigned 64-bit integer")
        need(self.paths >= 1, "run.paths must be >= 1")
        need(all(isinstance(n, int) and n >= 0 for n in self.ns), "run.ns must be nonnegative integers")
        need(all(0 < g < 1 for g in self.gammas), "run.gammas must lie in (0, 1)")
        need(all(b > 0 for b in self.betas), "run.betas must be positive")
        need(all(0 < k < 1 for k in self.kappas), "run.kappas must lie in (0, 1)")
        need(all(0 <= g < 1 for g in self.noise_gammas), "run.noise_gammas must lie in [0, 1)")
        need(self.holder_levels >= 4, "run.holder_levels must be >= 4")
        try:
            self.model()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    # -- builders -------------------------------------------------------------

    def kernel(self) -> DelayKernel:
        return DelayKernel(self.kernel_form, tuple(self.kernel_params), self.r, self.kernel_rho)

    def model(self) -> SpectralModel:
        common = dict(c1=float(self.c1), mu=float(self.mu), c2=float(self.c2), nu=float(self.nu),
                      r=float(self.r), kernel=self.kernel())
        if self.eigen_kind == "square":
            return SpectralModel.square(self.modes, **common)
        return SpectralModel(tuple(self.eigen_values), eigen_kind="custom-list", **common)

    def grid(self) -> StepGrid:
        return StepGrid(float(self.r), self.m, self.N)

    def noise(self) -> NoiseModel:
        return NoiseModel.power_law(self.noise_modes or self.modes, self.noise_decay, self.noise_b)

    def matrix(self) -> ParameterMatrix:
        return ParameterMatrix(tuple(self.ns), tuple(self.gammas), tuple(self.betas),
                               tuple(self.kappas), tuple(self.noise_gammas))

    # -- (de)serialisation ----------------------------------------------------

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> RunConfig:
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if key == "modes":
                kw["modes"] = value
                continue
            if key not in _SECTIONS or not isinstance(value, Mapping):
                raise ConfigError(f"unknown config key {key!r}")
            for sub, v in value.items():
                if sub not in _SECTIONS[key]:
                    raise ConfigError(f"unknown config key {key}.{sub}")
                kw[_SECTIONS[key][sub]] = tuple(v) if isinstance(v, list) else v
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict[str, Any]:
        flat = asdict(self)
        out: dict[str, Any] = {"modes": flat.pop("modes")}
        for section, keys in _SECTIONS.items():
            block = {}
            for sub, attr in keys.items():
                v = flat[attr]
                if v is None:
                    continue
                block[sub] = list(v) if isinstance(v, tuple) else v
            if block:
                out[section] = block
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_mapping())

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
        return cls.from_mapping(data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.loads(text)

    def replace(self, **changes: Any) -> RunConfig:
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)
