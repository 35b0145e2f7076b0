"""Run configuration: one JSON document per experiment, validated up front."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .numsolve import ToleranceConfig

Weight = Union[float, list[list[float]]]
Bound = Union[float, list[float], None]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Strict):
    """Where the data matrix comes from."""

    source: Literal["fig1", "fig3", "lti", "csv", "dictionary", "simulate"] = "fig3"
    path: Optional[str] = None
    setting: Literal["io", "state_space"] = "io"
    count: Optional[int] = Field(default=None, ge=1)
    length: int = Field(default=40, ge=1)
    noise_std: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _path_needed(self):
        if self.source in ("csv", "dictionary") and not self.path:
            raise ValueError(f"data.source={self.source!r} needs data.path")
        return self


class DimsConfig(_Strict):
    m: Optional[int] = Field(default=None, ge=1)
    p: Optional[int] = Field(default=None, ge=1)
    n: Optional[int] = Field(default=None, ge=1)
    n_past: int = Field(default=2, ge=0)
    horizon: int = Field(default=2, ge=1)


class ExcitationConfig(_Strict):
    distribution: Literal["uniform", "gaussian", "prbs"] = "uniform"
    low: float = -1.0
    high: float = 1.0
    mean: float = 0.0
    std: float = Field(default=1.0, gt=0.0)
    levels: list[float] = [-1.0, 1.0]
    horizon: int = Field(default=1, ge=1)
    records: int = Field(default=1, ge=1)
    noise_std: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _order(self):
        if self.distribution == "uniform" and not self.low < self.high:
            raise ValueError("excitation needs low < high")
        return self


class PlantConfig(_Strict):
    kind: Literal["scalar_quadratic", "lti", "polynomial"] = "scalar_quadratic"
    A: Optional[list[list[float]]] = None
    B: Optional[list[list[float]]] = None
    C: Optional[list[list[float]]] = None
    D: Optional[list[list[float]]] = None
    coeffs: list[tuple[int, int, float]] = []


class SimulateConfig(_Strict):
    steps: int = Field(default=10, ge=0)
    x0: list[float] = [0.0]
    past_inputs: Optional[list[float]] = None
    grid: int = Field(default=21, ge=2)


class RunConfig(_Strict):
    experiment: str = "run"
    out: str = "out"
    data: DataConfig = DataConfig()
    dims: DimsConfig = DimsConfig()
    Q: Weight = 1.0
    R: Weight = 1.0
    lam: float = Field(default=1.0, ge=0.0)
    lambdas: list[float] = [100.0, 50.0]
    u_bounds: Optional[tuple[Bound, Bound]] = None
    y_bounds: Optional[tuple[Bound, Bound]] = None
    excitation: ExcitationConfig = ExcitationConfig()
    plant: PlantConfig = PlantConfig()
    simulate: SimulateConfig = SimulateConfig()
    param_box: tuple[float, float] = (-1.0, 1.0)
    probe_box: tuple[float, float] = (-1.0, 1.0)
    probes: int = Field(default=200, ge=1)
    etas: list[float] = [0.5, 2.0, 10.0]
    xi: Optional[list[float]] = None
    seed: Optional[int] = None
    prune_method: Literal["lp_test", "quickhull_lowdim"] = "lp_test"
    tolerances: dict[str, float] = {}

    @field_validator("etas")
    @classmethod
    def _positive(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("eta values must be positive")
        return v

    @field_validator("param_box", "probe_box")
    @classmethod
    def _box(cls, v):
        if not v[0] < v[1]:
            raise ValueError("box needs lower < upper")
        return v

    @field_validator("tolerances")
    @classmethod
    def _tol_keys(cls, v):
        known = {f.name for f in dataclasses.fields(ToleranceConfig)}
        bad = set(v) - known
        if bad:
            raise ValueError(f"unknown tolerance keys: {sorted(bad)}")
        return v

    def tol(self) -> ToleranceConfig:
        return dataclasses.replace(ToleranceConfig(), **self.tolerances)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(0 if self.seed is None else self.seed)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.model_validate(json.loads(Path(path).read_text()))
