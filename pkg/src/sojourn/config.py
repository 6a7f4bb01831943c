"""Scenario configuration: validated specs that build the runtime objects.

A scenario is one human-readable JSON document.  Every sub-spec validates
eagerly through the constructor of the module object it describes, so a
config that parses is a config that runs.  Bundled scenarios ship with the
package under ``sojourn/scenarios``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from . import serialize
from .dilation import Symbol, gamma_symbol, linear_symbol
from .errors import ConfigError
from .geometry import DomainModel, ball, star, superellipse
from .scattering import (Potential, ScatteringSetup, custom_potential,
                         gaussian_bump, setup_for)
from .spectral import (EnergyWindow, Grid, WaveFunction, gaussian_packet,
                       window_filter)
from .timedelay import SojournConfig, check_region_fits

BUNDLED_SCENARIOS = ("free", "1d-barrier", "2d-ball", "2d-superellipse",
                     "2d-star")


def _require(data: dict, key: str, what: str):
    if key not in data:
        raise ConfigError(f"{what}: missing key {key!r}")
    return data[key]


def _no_extras(data: dict, allowed, what: str):
    extras = sorted(set(data) - set(allowed))
    if extras:
        raise ConfigError(f"{what}: unknown keys {extras}")


def _floats(values, what: str) -> tuple:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a list of numbers") from exc


def _wrap(what: str):
    """Re-raise constructor rejections as configuration errors."""
    def decorate(fn):
        def inner(self, *args, **kwargs):
            try:
                return fn(self, *args, **kwargs)
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{what}: {exc}") from exc
        return inner
    return decorate


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dimension: int = 2

    def __post_init__(self):
        self.build()

    @_wrap("domain spec")
    def build(self) -> DomainModel:
        if self.kind == "ball":
            return ball(int(self.dimension))
        if self.kind == "superellipse":
            if self.dimension != 2:
                raise ConfigError("domain spec: superellipse is planar")
            return superellipse()
        if self.kind == "star":
            if self.dimension != 2:
                raise ConfigError("domain spec: star is planar")
            return star()
        raise ConfigError(f"domain spec: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension}

    @staticmethod
    def from_dict(data: dict) -> "DomainSpec":
        _no_extras(data, ("kind", "dimension"), "domain spec")
        return DomainSpec(kind=str(_require(data, "kind", "domain spec")),
                          dimension=int(data.get("dimension", 2)))


@dataclass(frozen=True)
class SymbolSpec:
    kind: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == "linear" and self.gamma is not None:
            raise ConfigError("symbol spec: gamma applies to the gamma "
                              "symbol only")
        self.build()

    @_wrap("symbol spec")
    def build(self) -> Symbol:
        if self.kind == "linear":
            return linear_symbol()
        if self.kind == "gamma":
            if self.gamma is None:
                raise ConfigError("symbol spec: gamma symbol needs gamma")
            return gamma_symbol(float(self.gamma))
        raise ConfigError(f"symbol spec: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.gamma is not None:
            out["gamma"] = float(self.gamma)
        return out

    @staticmethod
    def from_dict(data: dict) -> "SymbolSpec":
        _no_extras(data, ("kind", "gamma"), "symbol spec")
        gamma = data.get("gamma")
        return SymbolSpec(kind=str(data.get("kind", "linear")),
                          gamma=None if gamma is None else float(gamma))


@dataclass(frozen=True)
class GridSpec:
    dimension: int
    n: int
    box: float

    def __post_init__(self):
        self.build()

    @_wrap("grid spec")
    def build(self) -> Grid:
        return Grid(int(self.dimension), int(self.n), float(self.box))

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "n": self.n, "box": self.box}

    @staticmethod
    def from_dict(data: dict) -> "GridSpec":
        _no_extras(data, ("dimension", "n", "box"), "grid spec")
        return GridSpec(dimension=int(_require(data, "dimension", "grid spec")),
                        n=int(_require(data, "n", "grid spec")),
                        box=float(_require(data, "box", "grid spec")))


def _zero_fn(*meshes):
    return sum(0.0 * m for m in meshes)


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "zero"
    height: float = 0.0
    decay_rate: float = 1.0

    def __post_init__(self):
        self.build()

    @_wrap("potential spec")
    def build(self) -> Potential:
        if self.kind == "zero":
            return custom_potential(_zero_fn, amplitude=0.0,
                                    decay_exponent=8.0)
        if self.kind == "gaussian":
            if not self.decay_rate > 0:
                raise ConfigError("potential spec: decay_rate must be "
                                  "positive")
            return gaussian_bump(float(self.height), float(self.decay_rate))
        raise ConfigError(f"potential spec: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        return {"kind": self.kind, "height": float(self.height),
                "decay_rate": float(self.decay_rate)}

    @staticmethod
    def from_dict(data: dict) -> "PotentialSpec":
        _no_extras(data, ("kind", "height", "decay_rate"), "potential spec")
        return PotentialSpec(kind=str(data.get("kind", "zero")),
                             height=float(data.get("height", 0.0)),
                             decay_rate=float(data.get("decay_rate", 1.0)))


@dataclass(frozen=True)
class WindowSpec:
    e_min: float
    e_max: float

    def __post_init__(self):
        self.build()

    @_wrap("window spec")
    def build(self) -> EnergyWindow:
        return EnergyWindow(float(self.e_min), float(self.e_max))

    def to_dict(self) -> dict:
        return {"e_min": self.e_min, "e_max": self.e_max}

    @staticmethod
    def from_dict(data: dict) -> "WindowSpec":
        _no_extras(data, ("e_min", "e_max"), "window spec")
        return WindowSpec(e_min=float(_require(data, "e_min", "window spec")),
                          e_max=float(_require(data, "e_max", "window spec")))


@dataclass(frozen=True)
class PacketSpec:
    center: tuple
    momentum: tuple
    sigma: float

    def __post_init__(self):
        if len(self.center) != len(self.momentum) or not self.center:
            raise ConfigError("packet spec: center and momentum must have "
                              "the same nonzero length")
        if not self.sigma > 0:
            raise ConfigError("packet spec: sigma must be positive")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @_wrap("packet spec")
    def build(self, grid: Grid, window: EnergyWindow) -> WaveFunction:
        raw = gaussian_packet(grid, self.center, self.momentum,
                              float(self.sigma))
        return window_filter(raw, window).normalized()

    def to_dict(self) -> dict:
        return {"center": list(self.center), "momentum": list(self.momentum),
                "sigma": self.sigma}

    @staticmethod
    def from_dict(data: dict) -> "PacketSpec":
        _no_extras(data, ("center", "momentum", "sigma"), "packet spec")
        return PacketSpec(
            center=_floats(_require(data, "center", "packet spec"), "packet spec"),
            momentum=_floats(_require(data, "momentum", "packet spec"), "packet spec"),
            sigma=float(_require(data, "sigma", "packet spec")))


@dataclass(frozen=True)
class SojournSpec:
    radii: tuple
    time_extent: float
    time_samples: int
    region_quadrature: int = 2

    def __post_init__(self):
        self.build()

    @_wrap("sojourn spec")
    def build(self) -> SojournConfig:
        return SojournConfig(radii=tuple(float(r) for r in self.radii),
                             time_extent=float(self.time_extent),
                             time_samples=int(self.time_samples),
                             region_quadrature=int(self.region_quadrature))

    def to_dict(self) -> dict:
        return {"radii": list(self.radii), "time_extent": self.time_extent,
                "time_samples": self.time_samples,
                "region_quadrature": self.region_quadrature}

    @staticmethod
    def from_dict(data: dict) -> "SojournSpec":
        _no_extras(data, ("radii", "time_extent", "time_samples",
                          "region_quadrature"), "sojourn spec")
        return SojournSpec(
            radii=_floats(_require(data, "radii", "sojourn spec"), "sojourn spec"),
            time_extent=float(_require(data, "time_extent", "sojourn spec")),
            time_samples=int(_require(data, "time_samples", "sojourn spec")),
            region_quadrature=int(data.get("region_quadrature", 2)))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    domain: DomainSpec
    symbol: SymbolSpec
    grid: GridSpec
    potential: PotentialSpec
    window: WindowSpec
    packet: PacketSpec
    sojourn: SojournSpec
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if not self.scenario:
            raise ConfigError("config: scenario name must be nonempty")
        g = self.grid.build()
        dom = self.domain.build()
        if g.dimension != dom.dimension:
            raise ConfigError(
                f"config: grid is {g.dimension}d but domain "
                f"{self.domain.kind!r} is {dom.dimension}d")
        if self.packet.dimension != g.dimension:
            raise ConfigError(
                f"config: packet is {self.packet.dimension}d but grid is "
                f"{g.dimension}d")
        window = self.window.build()
        if math.sqrt(2.0 * window.e_max) >= math.pi / g.spacing:
            raise ConfigError("config: window top exceeds the lattice band")
        try:
            check_region_fits(g, dom, max(self.sojourn.radii))
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from exc

    def build_setup(self) -> ScatteringSetup:
        return setup_for(self.grid.build(), self.potential.build(),
                         self.window.build())

    def build_state(self, setup: ScatteringSetup | None = None) -> WaveFunction:
        if setup is None:
            setup = self.build_setup()
        return self.packet.build(setup.grid, setup.window)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "domain": self.domain.to_dict(),
            "symbol": self.symbol.to_dict(),
            "grid": self.grid.to_dict(),
            "potential": self.potential.to_dict(),
            "window": self.window.to_dict(),
            "packet": self.packet.to_dict(),
            "sojourn": self.sojourn.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        _no_extras(data, ("scenario", "domain", "symbol", "grid", "potential",
                          "window", "packet", "sojourn", "output_dir",
                          "seed"), "config")
        def sub(key, spec):
            block = _require(data, key, "config")
            if not isinstance(block, dict):
                raise ConfigError(f"config: {key} must be an object")
            return spec.from_dict(block)
        return ExperimentConfig(
            scenario=str(_require(data, "scenario", "config")),
            domain=sub("domain", DomainSpec),
            symbol=sub("symbol", SymbolSpec),
            grid=sub("grid", GridSpec),
            potential=sub("potential", PotentialSpec),
            window=sub("window", WindowSpec),
            packet=sub("packet", PacketSpec),
            sojourn=sub("sojourn", SojournSpec),
            output_dir=str(data.get("output_dir", "runs")),
            seed=int(data.get("seed", 0)))

    def with_radii(self, radii) -> "ExperimentConfig":
        return replace(self, sojourn=replace(self.sojourn,
                                             radii=tuple(radii)))

    def with_grid_n(self, n: int) -> "ExperimentConfig":
        return replace(self, grid=replace(self.grid, n=int(n)))

    def with_symbol(self, spec: SymbolSpec) -> "ExperimentConfig":
        return replace(self, symbol=spec)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = serialize.read_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except ValueError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> Path:
    return serialize.write_json(path, cfg.to_dict())


def bundled_scenario(name: str) -> ExperimentConfig:
    if name not in BUNDLED_SCENARIOS:
        raise ConfigError(f"unknown bundled scenario {name!r}; "
                          f"choose from {', '.join(BUNDLED_SCENARIOS)}")
    ref = resources.files("sojourn").joinpath(f"scenarios/{name}.json")
    with resources.as_file(ref) as path:
        return load_config(path)


def resolve_config(name_or_path: str) -> ExperimentConfig:
    """A path wins; otherwise fall back to a bundled scenario name."""
    if Path(name_or_path).exists():
        return load_config(name_or_path)
    if name_or_path in BUNDLED_SCENARIOS:
        return bundled_scenario(name_or_path)
    raise ConfigError(f"no config file or bundled scenario named "
                      f"{name_or_path!r}")
