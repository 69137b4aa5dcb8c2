"""Experiment configuration: TOML file -> validated pydantic models.

Every section is optional and falls back to the defaults below. Unknown keys
anywhere are rejected. See README.md for the full grammar.
"""

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ParameterError
from .integrators import Scheme

KINDS = ("propagate", "optimize", "order_study", "bench")


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(Section):
    x_min: float = -40.0
    x_max: float = 40.0
    n_points: int = Field(512, ge=8)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        return self


class ModelSpec(Section):
    kind: Literal["lattice", "gpe", "rabi", "synthetic"] = "lattice"
    v0: float = Field(10.0, ge=0)
    lattice_spacing: float = Field(1.0, gt=0)
    trap_strength: float = Field(0.00032, ge=0)
    control_scale: float = 0.00032
    g: float = Field(0.0, ge=0)
    u_c: float = 1.0
    n_levels: int = Field(8, ge=2)


class TimeSpec(Section):
    t0: float = 0.0
    T: float = 10.0
    n_steps: int = Field(2000, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.T > self.t0:
            raise ValueError("T must be > t0")
        return self


class StateSpec(Section):
    center: float = 0.0
    width: float = Field(2.0, gt=0)
    level: int = Field(0, ge=0)
    target: Literal["reference", "gaussian"] = "reference"
    target_center: float = 0.0
    target_width: float = Field(2.0, gt=0)


def _check_schemes(names, allowed):
    out = []
    for name in names:
        match = [a for a in allowed if a.lower() == name.lower()]
        if not match:
            raise ValueError(f"unknown scheme {name!r}; choose from {list(allowed)}")
        out.append(match[0])
    if not out:
        raise ValueError("at least one scheme is required")
    return out


LINEAR_SCHEMES = tuple(s.value for s in Scheme)


class KrotovSpec(Section):
    schemes: List[str] = ["CFExp4", "CayleyMagnus4", "CFC4"]
    epsilon: float = Field(1e-5, gt=0)
    max_iterations: int = Field(50, ge=1)
    update: Literal["pmp", "additive"] = "pmp"
    alpha: float = Field(1e-3, gt=0)
    initial_amplitude: float = 0.1
    safeguard: bool = True

    @field_validator("schemes")
    @classmethod
    def _schemes(cls, v):
        return _check_schemes(v, LINEAR_SCHEMES)


class PropagateSpec(Section):
    schemes: List[str] = ["CFC4"]
    k: int = Field(4, ge=2)
    startup: Literal["rkmk4", "cfc4"] = "rkmk4"
    snapshots: List[int] = []

    @field_validator("schemes")
    @classmethod
    def _schemes(cls, v):
        return _check_schemes(v, LINEAR_SCHEMES + ("CaylPol", "RKMK4"))


class OrderStudySpec(Section):
    schemes: List[str] = ["CN", "CFC4", "CayleyMagnus4", "CFExp4"]
    steps: List[int] = [50, 100, 200]
    reference_steps: int = Field(100000, ge=1)
    reference_scheme: str = "CFC4"

    @field_validator("schemes")
    @classmethod
    def _schemes(cls, v):
        return _check_schemes(v, LINEAR_SCHEMES)

    @field_validator("reference_scheme")
    @classmethod
    def _ref(cls, v):
        return _check_schemes([v], LINEAR_SCHEMES)[0]

    @field_validator("steps")
    @classmethod
    def _steps(cls, v):
        if len(v) < 2 or any(s < 1 for s in v) or sorted(set(v)) != list(v):
            raise ValueError("steps must be at least two strictly increasing positive integers")
        return v


class BenchSpec(Section):
    g_values: List[float] = [0.0, 0.5, 1.0, 2.0, 10.0, 20.0]
    repeats: int = Field(3, ge=1)
    k: int = Field(4, ge=2)
    per_step_schemes: List[str] = ["CFC4", "CFExp4"]
    per_step_count: int = Field(20, ge=1)
    lattice_points: int = Field(512, ge=8)

    @field_validator("g_values")
    @classmethod
    def _g(cls, v):
        if not v or any(g < 0 for g in v):
            raise ValueError("g_values must be a non-empty list of values >= 0")
        return v

    @field_validator("per_step_schemes")
    @classmethod
    def _schemes(cls, v):
        return _check_schemes(v, LINEAR_SCHEMES) if v else v


class ExperimentConfig(Section):
    kind: Literal["propagate", "optimize", "order_study", "bench"]
    seed: int = 0
    workers: int = Field(1, ge=1)
    grid: GridSpec = GridSpec()
    model: ModelSpec = ModelSpec()
    time: TimeSpec = TimeSpec()
    state: StateSpec = StateSpec()
    krotov: KrotovSpec = KrotovSpec()
    propagate: PropagateSpec = PropagateSpec()
    order_study: OrderStudySpec = OrderStudySpec()
    bench: BenchSpec = BenchSpec()

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind == "optimize" and self.model.kind == "gpe" and self.model.g > 0:
            raise ValueError("optimize supports linear models only (model.g must be 0)")
        if self.kind == "propagate" and self.model.g > 0:
            bad = [s for s in self.propagate.schemes if s not in ("CaylPol", "RKMK4")]
            if bad:
                raise ValueError(f"schemes {bad} are linear-only; use CaylPol or RKMK4 when g > 0")
        if self.kind == "propagate":
            if any(s < 0 or s > self.time.n_steps for s in self.propagate.snapshots):
                raise ValueError("snapshot indices must lie in [0, n_steps]")
        return self

    def digest(self):
        """Stable hash of the fully resolved configuration."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def build_config(data):
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ParameterError(f"invalid configuration: {_format_errors(exc)}") from None


#: Section defaults that differ by experiment kind (applied under the user's values).
PRESETS = {
    "propagate": {},
    "optimize": {},
    "order_study": {"model": {"kind": "rabi"}, "time": {"T": 1.0, "n_steps": 100}},
    "bench": {
        "model": {"kind": "gpe", "g": 1.0},
        "grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 64},
        "state": {"width": 0.5},
        "time": {"T": 0.5, "n_steps": 1500},
    },
}


def _with_preset(data):
    out = dict(data)
    for section, values in PRESETS.get(data.get("kind"), {}).items():
        given = data.get(section, {})
        out[section] = {**values, **given} if isinstance(given, dict) else given
    return out


def load_config(path=None, kind=None, overrides=None):
    """Read ``path`` (TOML), apply ``kind`` and top-level ``overrides``, validate."""
    data = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc.strerror}") from None
        except tomli.TOMLDecodeError as exc:
            raise ParameterError(f"malformed config {path}: {exc}") from None
    if kind is not None:
        if "kind" in data and data["kind"] != kind:
            raise ParameterError(
                f"config kind {data['kind']!r} does not match subcommand {kind!r}"
            )
        data["kind"] = kind
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return build_config(_with_preset(data))
