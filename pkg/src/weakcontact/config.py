"""Scenario files: a strict schema and conversion to solver objects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigError
from .functionals import Drive, Grid1D
from .models import Model, make_model
from .pde import ProtocolSchedule, SolverOptions


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(Strict):
    kind: Literal["SEP", "ZeroRange", "KMP", "NonRevExclusion"]
    rate: Optional[Union[Literal["linear", "constant"], list[float]]] = None
    window: Optional[int] = None
    left: Optional[list[list[float]]] = None
    right: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _fields_match_kind(self):
        if self.rate is not None and self.kind != "ZeroRange":
            raise ValueError("rate applies to ZeroRange only")
        if self.kind == "ZeroRange" and self.rate is None:
            raise ValueError("ZeroRange needs a rate")
        table = (self.window, self.left, self.right)
        if any(v is not None for v in table):
            if self.kind != "NonRevExclusion":
                raise ValueError("window tables apply to NonRevExclusion only")
            if any(v is None for v in table):
                raise ValueError("give window, left and right together")
        return self

    def build(self) -> Model:
        if self.kind == "ZeroRange":
            rate = self.rate if isinstance(self.rate, str) else tuple(self.rate)
            return make_model("ZeroRange", rate=rate)
        if self.kind == "NonRevExclusion" and self.window is not None:
            to_t = lambda t: tuple(tuple(r) for r in t)
            return make_model(self.kind, window=self.window, left=to_t(self.left), right=to_t(self.right))
        return make_model(self.kind)


class DriveSpec(Strict):
    """Reservoirs are given by chemical potential ``lam_*`` or by density ``rho_*``."""

    lam_left: Optional[float] = None
    lam_right: Optional[float] = None
    rho_left: Optional[float] = None
    rho_right: Optional[float] = None
    kappa_left: float = Field(gt=0)
    kappa_right: float = Field(gt=0)
    E: Union[float, list[float]]

    @model_validator(mode="after")
    def _one_per_side(self):
        for side in ("left", "right"):
            given = [getattr(self, f"lam_{side}") is not None, getattr(self, f"rho_{side}") is not None]
            if sum(given) != 1:
                raise ValueError(f"give exactly one of lam_{side} and rho_{side}")
        return self

    def build(self, model: Model) -> Drive:
        lam = {}
        for side in ("left", "right"):
            value = getattr(self, f"lam_{side}")
            lam[side] = float(model.xi(getattr(self, f"rho_{side}"))) if value is None else value
        E = self.E if isinstance(self.E, float) else np.asarray(self.E, dtype=float)
        return Drive(lam["left"], lam["right"], self.kappa_left, self.kappa_right, E)


class GridSpec(Strict):
    n_cells: int = Field(ge=8)

    def build(self) -> Grid1D:
        return Grid1D(self.n_cells)


class ProtocolSpec(Strict):
    knots: list[float]
    drives: list[DriveSpec]
    shape: Literal["smooth", "linear"] = "smooth"
    deltas: Optional[list[float]] = None

    def build(self, model: Model, delta: float = 1.0) -> ProtocolSchedule:
        return ProtocolSchedule(tuple(self.knots), tuple(d.build(model) for d in self.drives), self.shape, delta)


class InitialSpec(Strict):
    """Initial (or target) profile: a stationary state, a constant or explicit nodal values.

    An optional sine bump ``amplitude * sin(mode * pi * x)`` is added.
    """

    kind: Literal["stationary", "constant", "profile"]
    drive: Optional[DriveSpec] = None
    value: Optional[float] = None
    values: Optional[list[float]] = None
    amplitude: float = 0.0
    mode: int = 1

    @model_validator(mode="after")
    def _complete(self):
        need = {"stationary": "drive", "constant": "value", "profile": "values"}[self.kind]
        if getattr(self, need) is None:
            raise ValueError(f"initial kind {self.kind!r} needs {need!r}")
        return self


class MicroSpec(Strict):
    N: int = Field(ge=3)
    n_events: Optional[int] = Field(default=None, gt=0)
    t_end: Optional[float] = Field(default=None, gt=0)
    burn_in: float = Field(default=0.1, ge=0, lt=1)
    n_batches: int = Field(default=32, ge=16)
    seeds: list[int] = Field(default_factory=lambda: [0])
    oracle: bool = False
    event_log: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _horizon(self):
        if self.n_events is None and self.t_end is None:
            raise ValueError("give n_events or t_end")
        return self


class RunSpec(Strict):
    T: Optional[float] = Field(default=None, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    scheme: Literal["radau", "imex", "explicit"] = "radau"
    tol: float = Field(default=1e-10, gt=0)
    n_path: int = Field(default=16, ge=2)
    path: Literal["segment", "arc"] = "segment"
    cadence: int = Field(default=10, ge=1)
    out: Optional[str] = None

    def options(self) -> SolverOptions:
        return SolverOptions(dt=self.dt, scheme=self.scheme, newton_tol=self.tol)


class VerifySpec(Strict):
    kappa_sign: Literal[1, -1] = 1
    n_samples: int = Field(default=100, ge=100)


class Scenario(Strict):
    model: Optional[ModelSpec] = None
    grid: Optional[GridSpec] = None
    drive: Optional[DriveSpec] = None
    protocol: Optional[ProtocolSpec] = None
    initial: Optional[InitialSpec] = None
    micro: Optional[MicroSpec] = None
    run: RunSpec = RunSpec()
    verify: Optional[VerifySpec] = None

    def need(self, *blocks: str) -> None:
        missing = [b for b in blocks if getattr(self, b) is None]
        if missing:
            raise ConfigError(f"scenario lacks required block(s): {', '.join(missing)}")


def load_scenario(path) -> Scenario:
    """Read a YAML (or JSON) scenario, or the ``scenario`` entry of a run manifest."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if isinstance(data, dict) and "scenario" in data and "versions" in data:
        data = data["scenario"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return Scenario.model_validate(data)


def dump_scenario(scenario: Scenario) -> dict:
    return json.loads(scenario.model_dump_json())
