"""Scenario configuration: a YAML tree validated into typed blocks."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import (BaseModel, ConfigDict, Field, PositiveFloat, ValidationError,
                      field_validator, model_validator)

from .errors import ConfigError

__all__ = ["ScenarioConfig", "load_config", "parse_config"]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _ordered_pair(v, name):
    if len(v) != 2 or not v[0] < v[1]:
        raise ValueError(f"{name} must be an increasing pair [lo, hi]")
    return v


class GridBlock(_Block):
    h: PositiveFloat = 1.0 / 64
    r_max: PositiveFloat = 1.5


class ModelBlock(_Block):
    kind: Literal["flat", "sphere", "profile"]
    n: int = Field(3, ge=2)
    c: PositiveFloat = 1.0
    source: Literal["exact", "integrated"] = "exact"
    horizon: PositiveFloat = 1.0
    shape: Literal["flat", "sphere"] = "sphere"
    radius: PositiveFloat = 1.0
    grid: GridBlock = GridBlock()
    profile: Optional[Path] = None
    rtol: PositiveFloat = 1e-8
    atol: PositiveFloat = 1e-10


class PhiBlock(_Block):
    kind: Literal["identity", "radial_scaling"] = "identity"
    lam: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _identity_has_no_scale(self):
        if self.kind == "identity" and self.lam != 1.0:
            raise ValueError("identity takes no scale factor")
        return self


class BreatherBlock(_Block):
    alpha: float = Field(0.5, gt=0.0, lt=1.0)
    phi: PhiBlock = PhiBlock()
    i_max: int = Field(31, ge=1)
    p0: float = Field(0.0, ge=0.0)
    tol: Optional[PositiveFloat] = None


class LgeoBlock(_Block):
    tau_range: tuple[float, float] = (0.5, 2.0)
    r_range: tuple[float, float] = (0.0, 1.0)
    n_tau: int = Field(20, ge=3)
    n_r: int = Field(20, ge=3)
    h: PositiveFloat = 1e-2
    h_tau: PositiveFloat = 5e-3
    rtol: PositiveFloat = 1e-12
    atol: PositiveFloat = 1e-13
    v_range: tuple[PositiveFloat, PositiveFloat] = (1e-5, 1e5)
    fan_size: int = Field(32, ge=4)

    @field_validator("tau_range")
    @classmethod
    def _tau(cls, v):
        _ordered_pair(v, "tau_range")
        if v[0] <= 0:
            raise ValueError("tau_range must be positive")
        return v

    @field_validator("r_range")
    @classmethod
    def _r(cls, v):
        _ordered_pair(v, "r_range")
        if v[0] < 0:
            raise ValueError("r_range must be non-negative")
        return v

    @field_validator("v_range")
    @classmethod
    def _v(cls, v):
        return _ordered_pair(v, "v_range")


class RvolBlock(_Block):
    tau_range: tuple[PositiveFloat, PositiveFloat] = (0.5, 2.0)
    samples: int = Field(8, ge=3)
    stage_taus: tuple[PositiveFloat, ...] = (1.0, 1.5, 2.0)
    nodes: int = Field(401, ge=5)
    cutoff: PositiveFloat = 1e-12

    @field_validator("tau_range")
    @classmethod
    def _tau(cls, v):
        return _ordered_pair(v, "tau_range")

    @field_validator("nodes")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("Simpson quadrature needs an odd node count")
        return v

    @field_validator("stage_taus")
    @classmethod
    def _window(cls, v):
        if not v or any(t < 1.0 or t > 2.0 for t in v) or list(v) != sorted(v):
            raise ValueError("stage_taus must be sorted values in [1, 2]")
        return v


class BlowdownBlock(_Block):
    stages: tuple[int, ...] = (5, 10, 20)
    density_stages: tuple[int, ...] = (12, 16, 20)
    lbound_last: int = Field(30, ge=2)
    r: PositiveFloat = 1.0
    eps: float = Field(0.1, gt=0.0, lt=0.5)
    n_r: int = Field(9, ge=3)
    n_tau: int = Field(9, ge=3)

    @field_validator("stages", "density_stages")
    @classmethod
    def _sorted(cls, v):
        if not v or list(v) != sorted(set(v)) or v[0] < 0:
            raise ValueError("stage lists must be non-empty, sorted and distinct")
        return v


class Tolerances(_Block):
    flow: PositiveFloat = 1e-8
    junction: PositiveFloat = 1e-6
    identity: PositiveFloat = 1e-6
    grad: PositiveFloat = 1e-3
    rvol_bound: PositiveFloat = 1e-4
    monotone: PositiveFloat = 1e-6
    lbound_ratio: PositiveFloat = 1.05
    witness_spread: PositiveFloat = 0.10
    final_residual: PositiveFloat = 1e-3
    trend_floor: PositiveFloat = 1e-8
    v_sign: PositiveFloat = 1e-8
    density: PositiveFloat = 1e-3


class OutputBlock(_Block):
    dir: Path = Path("out")
    plots: bool = True
    seed: int = 0


class FaultBlock(_Block):
    alpha_scale: PositiveFloat = 1.0
    l_scale: PositiveFloat = 1.0


class ScenarioConfig(_Block):
    name: str = "scenario"
    model: ModelBlock
    breather: BreatherBlock = BreatherBlock()
    lgeo: LgeoBlock = LgeoBlock()
    rvol: RvolBlock = RvolBlock()
    blowdown: BlowdownBlock = BlowdownBlock()
    tolerances: Tolerances = Tolerances()
    output: OutputBlock = OutputBlock()
    faults: FaultBlock = FaultBlock()

    @model_validator(mode="after")
    def _horizons(self):
        b = self.breather
        alpha = b.alpha * self.faults.alpha_scale
        if not 0 < alpha < 1:
            raise ValueError("faults.alpha_scale moves alpha out of (0, 1)")
        taus = [sum(alpha ** -k for k in range(i + 1)) for i in range(b.i_max + 1)]
        horizon = taus[-1]
        if self.lgeo.tau_range[1] > horizon:
            raise ValueError(f"lgeo.tau_range exceeds the spliced horizon {horizon:.6g}")
        if self.rvol.tau_range[1] > horizon:
            raise ValueError(f"rvol.tau_range exceeds the spliced horizon {horizon:.6g}")
        worst = max(self.blowdown.stages + self.blowdown.density_stages)
        if worst > b.i_max or 2 * taus[worst] > horizon * (1 + 1e-12):
            raise ValueError(f"blowdown stage {worst} needs a horizon of "
                             f"{2 * taus[min(worst, b.i_max)]:.6g}; raise breather.i_max")
        if self.blowdown.lbound_last + 1 > b.i_max:
            raise ValueError("blowdown.lbound_last needs breather.i_max >= lbound_last + 1")
        if self.model.kind == "sphere" and b.phi.kind != "identity":
            raise ValueError("the round sphere admits only phi = identity")
        if self.model.kind == "profile" and b.p0 != 0.0:
            raise ValueError("profile models need the base point p0 = 0")
        return self

    def resolved(self) -> dict:
        """Plain JSON-ready dict with every default filled in."""
        return self.model_dump(mode="json")


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, base: Optional[Path] = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a mapping at the top level")
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    prof = cfg.model.profile
    if prof is not None and base is not None and not prof.is_absolute():
        cfg = cfg.model_copy(update={"model": cfg.model.model_copy(
            update={"profile": (base / prof).resolve()})})
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(data, base=path.parent)
