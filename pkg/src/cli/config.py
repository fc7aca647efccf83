"""
Run configuration for the sidx command line.

Values are merged with the precedence

    command-line flags > JSON config file (--config) > environment > defaults

and validated once by RunConfig before any command runs. The merged,
validated config is what every output file echoes.

Environment variables (read after loading a .env file when one exists):
    SIDX_SEED, SIDX_REPS, SIDX_THREADS, SIDX_OUT, SIDX_MAX_SETS, SIDX_LOG_LEVEL
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import DomainError
from src.gaussian.models import KINDS as MODEL_KINDS
from src.gaussian.models import MAX_COV_SETS, CovModel
from src.geometry.rects import METRICS
from src.regularity.estimators import KINDS as EXPONENT_KINDS
from src.regularity.estimators import LOCAL_METHODS

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "estimate", "check", "flow", "demo-unbounded", "entropy")
DESIGNS = ("grid", "ball", "flow", "pc")
COLLECTIONS = ("rectangles", "lower-layers")
FORMATS = ("csv", "json", "binary")

ENV_VARS = {
    "SIDX_SEED": "seed",
    "SIDX_REPS": "reps",
    "SIDX_THREADS": "threads",
    "SIDX_OUT": "out",
    "SIDX_MAX_SETS": "max_sets",
    "SIDX_LOG_LEVEL": "log_level",
}


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class RunConfig(BaseModel):
    """Validated parameters of one command."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: str = Field(..., description="One of COMMANDS")

    # Model
    model: str = Field("sibm", description="sibm, sifbm or siou")
    H: float = Field(0.5, description="Self-similarity index of SIFBM, in (0, 0.5]")
    sigma: float = Field(1.0, description="SIOU noise scale")
    gamma: float = Field(1.0, description="SIOU mean reversion rate")
    dim: int = Field(2, ge=1, le=3)

    # Designs
    design: str = Field("ball", description="grid, ball, flow or pc")
    grid_level: int = Field(4, ge=0, le=10)
    center: Optional[Tuple[float, ...]] = None
    rho_max: float = Field(0.25, gt=0.0, le=1.0)
    scales: int = Field(9, ge=4, le=30, description="Number of dyadic radii below rho_max")
    pair_budget: int = Field(64, ge=16)
    design_seed: int = Field(0, ge=0)
    metric: Optional[str] = None

    # Estimators
    kinds: Tuple[str, ...] = ("pointwise", "local")
    local_method: str = "ratio"
    t: Optional[Tuple[float, ...]] = None
    levels: Optional[Tuple[int, int]] = None
    input: Optional[str] = None

    # Assumption checks
    collection: str = "rectangles"
    deltas: Tuple[float, ...] = (0.1, 0.5, 1.0)
    samples: int = Field(10_000, ge=1)

    # Flows
    flow: Optional[str] = None
    flow_points: int = Field(64, ge=2, le=512)
    sample_flow: bool = False

    # Unbounded demo
    cells: int = 4096
    h: float = Field(0.01, gt=0.0, lt=1.0)
    growth: bool = True

    # Entropy
    epsilons: Optional[Tuple[float, ...]] = None

    # Run
    seed: int = Field(0, ge=0)
    reps: int = Field(1, ge=1)
    threads: int = Field(1, ge=1)
    out: str = "sidx_out"
    format: str = "csv"
    max_sets: int = Field(MAX_COV_SETS, ge=1)
    log_level: str = "WARNING"
    run_log: bool = True

    @field_validator("command")
    @classmethod
    def known_command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown command: {v}")
        return v

    @field_validator("model")
    @classmethod
    def known_model(cls, v: str) -> str:
        v = v.lower()
        if v not in MODEL_KINDS:
            raise ValueError(f"model must be one of {', '.join(MODEL_KINDS)}")
        return v

    @field_validator("H")
    @classmethod
    def hurst_range(cls, v: float) -> float:
        if not (0.0 < v <= 0.5):
            raise ValueError("H must lie in (0, 0.5]")
        return v

    @field_validator("sigma", "gamma")
    @classmethod
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("sigma and gamma must be positive")
        return v

    @field_validator("design")
    @classmethod
    def known_design(cls, v: str) -> str:
        if v not in DESIGNS:
            raise ValueError(f"design must be one of {', '.join(DESIGNS)}")
        return v

    @field_validator("metric")
    @classmethod
    def known_metric(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in METRICS:
            raise ValueError(f"metric must be one of {', '.join(METRICS)}")
        return v

    @field_validator("center", "t", "deltas", "epsilons", mode="before")
    @classmethod
    def parse_floats(cls, v: Any) -> Any:
        return _split(v)

    @field_validator("center", "t")
    @classmethod
    def unit_point(cls, v: Optional[Tuple[float, ...]]) -> Optional[Tuple[float, ...]]:
        if v is not None and not all(0.0 < c <= 1.0 for c in v):
            raise ValueError("coordinates must lie in (0, 1]")
        return v

    @field_validator("kinds", mode="before")
    @classmethod
    def parse_kinds(cls, v: Any) -> Any:
        v = _split(v)
        unknown = [k for k in v if k not in EXPONENT_KINDS]
        if unknown:
            raise ValueError(f"unknown exponent kinds: {', '.join(unknown)}")
        return v

    @field_validator("local_method")
    @classmethod
    def known_local_method(cls, v: str) -> str:
        if v not in LOCAL_METHODS:
            raise ValueError(f"local method must be one of {', '.join(LOCAL_METHODS)}")
        return v

    @field_validator("levels", mode="before")
    @classmethod
    def parse_levels(cls, v: Any) -> Any:
        if isinstance(v, str):
            lo, sep, hi = v.partition(":")
            if not sep:
                raise ValueError(f"levels must read lo:hi, got {v!r}")
            return int(lo), int(hi)
        return v

    @field_validator("levels")
    @classmethod
    def ordered_levels(cls, v: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        if v is not None and not (0 <= v[0] < v[1]):
            raise ValueError(f"levels need 0 <= lo < hi, got {v[0]}:{v[1]}")
        return v

    @field_validator("collection")
    @classmethod
    def known_collection(cls, v: str) -> str:
        v = v.replace("_", "-")
        if v not in COLLECTIONS:
            raise ValueError(f"collection must be one of {', '.join(COLLECTIONS)}")
        return v

    @field_validator("cells")
    @classmethod
    def power_of_two(cls, v: int) -> int:
        if v < 1 or v & (v - 1):
            raise ValueError(f"cells must be a power of 2, got {v}")
        return v

    @field_validator("deltas", "epsilons")
    @classmethod
    def positive_values(cls, v: Optional[Tuple[float, ...]]) -> Optional[Tuple[float, ...]]:
        if v is not None and not all(x > 0 for x in v):
            raise ValueError("values must be positive")
        return v

    @field_validator("format")
    @classmethod
    def known_format(cls, v: str) -> str:
        if v not in FORMATS:
            raise ValueError(f"format must be one of {', '.join(FORMATS)}")
        return v

    @field_validator("log_level")
    @classmethod
    def known_level(cls, v: str) -> str:
        v = v.upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level: {v}")
        return v

    @model_validator(mode="after")
    def points_match_dimension(self) -> "RunConfig":
        for name in ("center", "t"):
            point = getattr(self, name)
            if point is not None and len(point) != self.dim:
                raise ValueError(f"{name} has {len(point)} coordinates, expected {self.dim}")
        if self.format == "binary" and self.command != "simulate":
            raise ValueError("format binary applies to simulate only")
        return self

    # ============ Derived values ============

    def cov_model(self) -> CovModel:
        if self.model == "sifbm":
            return CovModel.sifbm(self.H)
        if self.model == "siou":
            return CovModel.siou(self.sigma, self.gamma)
        return CovModel.sibm()

    def center_point(self) -> Tuple[float, ...]:
        return self.center if self.center is not None else (0.6,) * self.dim

    def t_point(self) -> Tuple[float, ...]:
        return self.t if self.t is not None else (0.37, 0.61, 0.53)[: self.dim]

    def level_list(self, default: Tuple[int, int] = (3, 7)) -> list:
        lo, hi = self.levels if self.levels is not None else default
        return list(range(lo, hi + 1))

    def radii(self) -> Tuple[float, ...]:
        return tuple(self.rho_max * 2.0 ** -i for i in range(self.scales))

    def echo(self) -> Dict[str, Any]:
        """JSON-ready dump, echoed into outputs."""
        return self.model_dump(mode="json")


def env_values(environ: Optional[Mapping[str, str]] = None, dotenv: bool = True) -> Dict[str, str]:
    """SIDX_* variables mapped onto RunConfig field names."""
    if environ is None:
        if dotenv:
            load_dotenv()
        environ = os.environ
    return {field: environ[var] for var, field in ENV_VARS.items() if var in environ}


def file_values(path: Optional[str]) -> Dict[str, Any]:
    """Values of a JSON config file; an echoed output config is accepted as is."""
    if path is None:
        return {}
    source = Path(path)
    if not source.is_file():
        raise DomainError(f"config file not found: {path}")
    data = json.loads(source.read_text())
    if not isinstance(data, dict):
        raise DomainError(f"{path}: expected a JSON object")
    return data.get("config", data)


def build_config(
    command: str,
    flags: Mapping[str, Any],
    config_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Merge environment, config file and flags, then validate.

    Args:
        command: Subcommand name
        flags: Values given explicitly on the command line
        config_path: Optional JSON config file
        environ: Environment mapping (os.environ plus .env when omitted)

    Returns:
        Validated RunConfig

    Raises:
        pydantic.ValidationError: a merged value is invalid
        DomainError: the config file is missing or malformed
    """
    merged: Dict[str, Any] = {}
    merged.update(env_values(environ))
    merged.update(file_values(config_path))
    merged.update({k: v for k, v in flags.items() if v is not None})
    merged["command"] = command
    config = RunConfig(**merged)
    logger.debug("merged config for %s: %s", command, config.echo())
    return config
