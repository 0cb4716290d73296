"""Experiment configuration and the registry of named boundary data."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mesh import DomainDescriptor
from .operators import OperatorSpec
from .oracle import ClosedForm
from .perron import PerturbationSpec

EXPERIMENTS = ("resolutivity", "invariance", "uniqueness", "monotone-convergence", "monotone-data",
               "capacity-scaling", "poisson-counterexample", "sobolev-data")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _sqrt_abs(x0=0.5):
    return lambda x, y: np.sqrt(np.abs(x - x0))


DATA = {
    "zero": lambda: (lambda x, y: 0.0 * x),
    "constant": lambda c=1.0: (lambda x, y: c + 0.0 * x),
    "affine": lambda a=1.0, b=0.0, c=0.0: (lambda x, y: a * x + b * y + c),
    "x": lambda: (lambda x, y: 1.0 * x),
    "quadratic": lambda: (lambda x, y: x ** 2 - y ** 2),
    "sin-pi-x": lambda: (lambda x, y: np.maximum(0.0, np.sin(np.pi * x))),
    "bump": lambda c=0.25, k=4.0, x0=0.5, y0=0.5: (lambda x, y: c - k * ((x - x0) ** 2 + (y - y0) ** 2)),
    "sqrt-abs": _sqrt_abs,
    "holder": lambda x0=0.3, a=0.6: (lambda x, y: np.abs(x - x0) ** a),
    "wave": lambda: (lambda x, y: np.sin(3 * x) * np.cos(2 * y) + 0.5 * x * y),
}


def make_data(spec: dict):
    """Boundary data from ``{"id": name, "params": {...}}``; closed forms are accepted too."""
    if spec is None:
        raise ConfigError("missing boundary data")
    did = spec.get("id")
    params = spec.get("params", {})
    if did == "closed-form":
        try:
            return ClosedForm.from_dict(params)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"bad closed form: {err}") from err
    if did not in DATA:
        raise ConfigError(f"unknown boundary data id {did!r}; known: {sorted(DATA)}")
    try:
        return DATA[did](**params) if isinstance(params, dict) else DATA[did](*params)
    except TypeError as err:
        raise ConfigError(f"bad parameters for {did!r}: {err}") from err


@dataclass
class ExperimentConfig:
    experiment: str = ""
    domain: dict = field(default_factory=lambda: {"kind": "unit-square"})
    operator: dict = field(default_factory=lambda: {"p": 2.0})
    data: dict = field(default_factory=lambda: {"id": "x"})
    perturbation: dict = field(default_factory=dict)
    mesh_levels: list = field(default_factory=lambda: [1 / 16, 1 / 32, 1 / 64])
    K: int = 4
    tol: float | None = None
    seed: int = 0
    out: str = "out"
    options: dict = field(default_factory=dict)

    def validate(self, need_experiment: bool = True) -> None:
        if need_experiment and self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {list(EXPERIMENTS)}")
        try:
            self.domain_descriptor().validate()
            self.operator_spec()
            self.perturbation_spec()
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err
        if not self.mesh_levels or any(not (isinstance(h, (int, float)) and h > 0) for h in self.mesh_levels):
            raise ConfigError("mesh_levels must be a nonempty list of positive mesh sizes")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError("K must be a positive integer")
        if self.tol is not None and not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError("tol must be positive")

    def domain_descriptor(self) -> DomainDescriptor:
        return DomainDescriptor.from_dict(self.domain)

    def operator_spec(self) -> OperatorSpec:
        return OperatorSpec.from_dict(self.operator)

    def perturbation_spec(self) -> PerturbationSpec:
        return PerturbationSpec.from_dict(self.perturbation) if self.perturbation else PerturbationSpec.empty()

    def boundary_data(self):
        return make_data(self.data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**d)
        if cfg.tol is not None:
            cfg.tol = float(cfg.tol)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}") from err

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        return cls.from_json(text)
