"""Experiment configuration: JSON in, validated dataclasses out.

Unknown keys are rejected rather than ignored so a typo in a config file
fails loudly instead of silently running defaults.
"""
import json
from dataclasses import dataclass, field, fields, asdict

import numpy as np

from .errors import ConfigError
from .simulator import RunConfig


@dataclass
class ContourSpec:
    x1_range: tuple = (-1.2, 1.2)
    x2_range: tuple = (-1.2, 1.2)
    density: int = 13
    x3_0: float = 0.4

    def validate(self) -> None:
        if self.density < 1:
            raise ConfigError("contour density must be at least 1")
        if len(self.x1_range) != 2 or len(self.x2_range) != 2:
            raise ConfigError("contour axis ranges must be [lo, hi] pairs")


@dataclass
class ExperimentConfig:
    system: str = "nonholonomic"
    activation: str = "clarke4"
    controller: str = "both"
    x0: tuple = (-2.0, -1.5, 0.4)
    delta: float = 0.01
    r: float = 0.1
    R: float = 2.6
    eta_R: float = 0.1
    eta_r: float = 0.05
    eps1: float = 5e-8
    eps2: float = 5e-8
    eps3: float = 5e-8
    horizon_steps: int = 20000
    dwell_steps: int = 200
    substeps: int = 10
    seed: int = 2024
    control_resolution: int = 21
    theta_draws: int = 32
    refine_max_evals: int = 200
    grid_density: int = 21
    kappa_ladder: tuple = (1.0, 0.5, 0.1, 0.05, 0.01)
    delta_bar_candidates: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    gldd_tau0: float = 1e-3
    gldd_levels: int = 12
    contour: ContourSpec = field(default_factory=ContourSpec)
    workers: int = 1
    out_dir: str = "out"

    def validate(self) -> None:
        if self.system != "nonholonomic":
            raise ConfigError(f"unknown system {self.system!r}")
        if self.activation != "clarke4":
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.controller not in ("nominal", "ac", "both"):
            raise ConfigError(f"unknown controller {self.controller!r}")
        if not (0.0 < self.r < self.R):
            raise ConfigError("need 0 < r < R")
        if self.delta <= 0.0 or self.substeps < 1:
            raise ConfigError("sampling period and substeps must be positive")
        if self.horizon_steps < 0 or self.dwell_steps < 1:
            raise ConfigError("bad horizon or dwell count")
        if min(self.eps1, self.eps2, self.eps3) < 0.0:
            raise ConfigError("relaxations must be nonnegative")
        if len(self.x0) != 3:
            raise ConfigError("x0 must have three components")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.delta_bar_candidates:
            raise ConfigError("delta_bar_candidates must be nonempty")
        self.contour.validate()

    def run_config(self, controller: str = None, **overrides) -> RunConfig:
        cfg = RunConfig(
            controller=controller or self.controller,
            x0=np.asarray(self.x0, dtype=float),
            delta=self.delta, r=self.r, R=self.R,
            eps1=self.eps1, eps2=self.eps2, eps3=self.eps3,
            horizon_steps=self.horizon_steps, substeps=self.substeps,
            dwell_steps=self.dwell_steps, seed=self.seed,
            control_resolution=self.control_resolution,
            theta_draws=self.theta_draws,
            refine_max_evals=self.refine_max_evals)
        if overrides:
            from dataclasses import replace
            cfg = replace(cfg, **overrides)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        d["contour"] = {"x1_range": list(self.contour.x1_range),
                        "x2_range": list(self.contour.x2_range),
                        "density": self.contour.density,
                        "x3_0": self.contour.x3_0}
        return d


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    kwargs = dict(data)
    if "contour" in kwargs:
        sub = kwargs["contour"]
        if not isinstance(sub, dict):
            raise ConfigError("contour section must be an object")
        sub_known = {f.name for f in fields(ContourSpec)}
        sub_unknown = set(sub) - sub_known
        if sub_unknown:
            raise ConfigError(f"unknown contour keys: {sorted(sub_unknown)}")
        kwargs["contour"] = ContourSpec(**{
            k: tuple(v) if k.endswith("_range") else v for k, v in sub.items()})
    for key in ("x0", "kappa_ladder", "delta_bar_candidates"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return config_from_dict(data)
