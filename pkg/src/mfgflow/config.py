"""Declarative experiment configuration.

Configs are nested key-value trees (YAML; JSON is a subset) with every
field defaulted to the 1D reference setup (nu=0.5, L=10, J=256, dt=1e-3,
T=10, gamma=0.2, sigma=1, centers at -L/2 and +L/2). Setting model.dim=2
switches the resolution defaults to the desk-scale 2D values (J=64,
dt=5e-3, storage stride 10) unless given explicitly. A field explicitly
set to null (or a wrong type) raises ConfigError naming the dotted path;
omitted fields take defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .costs import CostConfig
from .errors import ConfigError
from .flow import ModelParams, SteadyStateParams, steady_profile
from .mfg2 import IterationConfig
from .particles import KdeConfig
from .spectral import Grid
from .timestep import TimeWindow

MODES = ("steady-check", "mfg1", "mfg2", "mfg1-sde", "mfg2-sde", "sample", "sweep")

# None marks dimension-dependent resolution defaults resolved at load time
DEFAULTS: dict = {
    "model": {"dim": 1, "L": 10.0, "J": None, "nu": 0.5, "dt": None, "T": 10.0},
    "cost": {
        "kind": "kl",
        "gamma": 0.2,
        "sigma_i": 1.0,
        "a_i": None,
        "sigma_f": 1.0,
        "a_f": None,
        "positivity_floor": 1e-12,
        "report_tracer_substitution": False,
    },
    "flow_state": {"sigma": 1.0, "center": 0.0},
    "solver": {
        "mode": "mfg2",
        "n_max": 25,
        "eps": 2e-3,
        "mu_grid": 20,
        "fixed_mu": "none",
        "start_time": 0.0,
        "initializer": "tracer-control",
        "degenerate_floor": "none",
        "stride": None,
    },
    "sde": {"n": 10000, "seed": 0, "bandwidth": "none", "refresh_stride": 1},
    "output": {"dir": "runs/out", "stride": None, "csv": True},
    "reference": "none",
}

_TYPES = {
    "model.dim": int,
    "model.L": float,
    "model.J": int,
    "model.nu": float,
    "model.dt": float,
    "model.T": float,
    "cost.kind": str,
    "cost.gamma": float,
    "cost.sigma_i": float,
    "cost.sigma_f": float,
    "cost.positivity_floor": float,
    "cost.report_tracer_substitution": bool,
    "flow_state.sigma": float,
    "solver.mode": str,
    "solver.n_max": int,
    "solver.eps": float,
    "solver.mu_grid": int,
    "solver.start_time": float,
    "solver.initializer": str,
    "solver.stride": int,
    "sde.n": int,
    "sde.seed": int,
    "sde.refresh_stride": int,
    "output.dir": str,
    "output.stride": int,
    "output.csv": bool,
}


def _merge(base: dict, incoming: dict, prefix: str = "") -> None:
    for key, value in incoming.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {path!r} must be a mapping")
            _merge(base[key], value, f"{path}.")
        else:
            base[key] = value


def _set_path(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config field {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config field {dotted!r}")
    node[parts[-1]] = value


def _validate_leaf(tree: dict, dotted: str):
    node = tree
    for part in dotted.split("."):
        node = node[part]
    return node


def parse_scalar(raw: str):
    """YAML scalar parse with a float fallback (YAML 1.1 reads '1e-6' as a string)."""
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


@dataclass
class ExperimentConfig:
    """Validated configuration tree with typed accessors."""

    tree: dict

    # -- section accessors -------------------------------------------------
    @property
    def model(self) -> dict:
        return self.tree["model"]

    @property
    def solver(self) -> dict:
        return self.tree["solver"]

    @property
    def sde(self) -> dict:
        return self.tree["sde"]

    @property
    def output(self) -> dict:
        return self.tree["output"]

    @property
    def mode(self) -> str:
        return self.solver["mode"]

    @property
    def reference(self) -> str | None:
        ref = self.tree["reference"]
        return None if ref in ("none", None) else str(ref)

    # -- object builders ---------------------------------------------------
    def grid(self) -> Grid:
        return Grid(self.model["dim"], self.model["L"], self.model["J"])

    def model_params(self, grid: Grid | None = None) -> ModelParams:
        return ModelParams(nu=self.model["nu"], grid=grid or self.grid())

    def window(self) -> TimeWindow:
        return TimeWindow(self.solver["start_time"], self.model["T"], self.model["dt"])

    def as_center(self, value):
        if self.model["dim"] == 1 or np.ndim(value) > 0:
            return value
        return (float(value), float(value))

    def initial_profile(self, grid: Grid):
        c = self.tree["cost"]
        return steady_profile(
            SteadyStateParams(c["sigma_i"], self.as_center(c["a_i"]), self.model["nu"]), grid
        )

    def target_profile(self, grid: Grid):
        c = self.tree["cost"]
        return steady_profile(
            SteadyStateParams(c["sigma_f"], self.as_center(c["a_f"]), self.model["nu"]), grid
        )

    def flow_profile(self, grid: Grid):
        f = self.tree["flow_state"]
        return steady_profile(
            SteadyStateParams(f["sigma"], self.as_center(f["center"]), self.model["nu"]), grid
        )

    def cost_config(self, grid: Grid) -> CostConfig:
        c = self.tree["cost"]
        return CostConfig(
            kind=c["kind"],
            gamma=c["gamma"],
            Q_i=self.initial_profile(grid),
            Q_f=self.target_profile(grid),
            positivity_floor=c["positivity_floor"],
        )

    def iteration_config(self) -> IterationConfig:
        s = self.solver
        fixed = s["fixed_mu"]
        floor = s["degenerate_floor"]
        return IterationConfig(
            n_max=s["n_max"],
            eps=s["eps"],
            mu_grid=s["mu_grid"],
            initializer=s["initializer"],
            fixed_mu=None if fixed in ("none", None) else float(fixed),
            degenerate_floor=None if floor in ("none", None) else float(floor),
        )

    def kde_config(self, grid: Grid, target_mass: float) -> KdeConfig:
        bw = self.sde["bandwidth"]
        bandwidth = 2.0 * grid.h if bw in ("none", None) else float(bw)
        return KdeConfig(bandwidth=bandwidth, target_mass=target_mass)

    def echo(self) -> dict:
        return copy.deepcopy(self.tree)


def load_config(
    path=None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out: str | None = None,
    mode: str | None = None,
) -> ExperimentConfig:
    """Build a validated config from defaults, a file, and CLI overrides."""
    tree = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config root of {path} must be a mapping")
        _merge(tree, data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        dotted, _, raw = item.partition("=")
        _set_path(tree, dotted.strip(), parse_scalar(raw))
    if mode is not None:
        tree["solver"]["mode"] = mode
    if seed is not None:
        tree["sde"]["seed"] = int(seed)
    if out is not None:
        tree["output"]["dir"] = str(out)

    _resolve_defaults(tree)
    _validate(tree)
    return ExperimentConfig(tree)


def _resolve_defaults(tree: dict) -> None:
    dim = tree["model"]["dim"]
    desk2d = dim == 2
    if tree["model"]["J"] is None:
        tree["model"]["J"] = 64 if desk2d else 256
    if tree["model"]["dt"] is None:
        tree["model"]["dt"] = 5e-3 if desk2d else 1e-3
    if tree["solver"]["stride"] is None:
        tree["solver"]["stride"] = 10 if desk2d else 1
    if tree["output"]["stride"] is None:
        tree["output"]["stride"] = 2 if desk2d else 100
    L = tree["model"]["L"]
    if tree["cost"]["a_i"] is None:
        tree["cost"]["a_i"] = -L / 2
    if tree["cost"]["a_f"] is None:
        tree["cost"]["a_f"] = L / 2


def _validate(tree: dict) -> None:
    for dotted, typ in _TYPES.items():
        value = _validate_leaf(tree, dotted)
        if value is None:
            raise ConfigError(f"missing config field {dotted!r}")
        if typ is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config field {dotted!r} must be a number, got {value!r}")
            _set_path(tree, dotted, float(value))
        elif typ is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"config field {dotted!r} must be an integer, got {value!r}")
        elif typ is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"config field {dotted!r} must be a boolean, got {value!r}")
        elif typ is str and not isinstance(value, str):
            raise ConfigError(f"config field {dotted!r} must be a string, got {value!r}")
    if tree["model"]["dim"] not in (1, 2):
        raise ConfigError("model.dim must be 1 or 2")
    if tree["solver"]["mode"] not in MODES:
        raise ConfigError(f"solver.mode must be one of {MODES}")
    for dotted in ("cost.a_i", "cost.a_f"):
        value = _validate_leaf(tree, dotted)
        if value is None:
            raise ConfigError(f"missing config field {dotted!r}")


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.echo(), indent=1, sort_keys=True)
