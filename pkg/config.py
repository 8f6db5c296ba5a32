# config.py
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Extra, ValidationError, validator

load_dotenv()

# Ambient settings only; nothing here changes numerical results.
LOG_LEVEL = os.getenv("SIS_LOG_LEVEL", "INFO").upper()
DEFAULT_WORKERS = int(os.getenv("SIS_WORKERS", "1"))
DEFAULT_OUT_DIR = os.getenv("SIS_OUT_DIR", "out")
# Toggle the S-I link recount in stochastic runs (set SIS_DEBUG_RECOUNT=true in .env)
DEBUG_RECOUNT = os.getenv("SIS_DEBUG_RECOUNT", "false").lower() in ("1", "true", "yes")

KINDS = ("simulate", "temporal", "sweep", "predict", "markov", "verify")
SWEEP_MODES = ("bounds", "calibration")
DELTA_T_RULES = ("upper_bound", "lower_bound")

GraphSpec = Union[Dict[str, Any], str]


class ConfigError(ValueError):
    pass


class ExperimentConfig(BaseModel):
    kind: str
    # single graph (simulate, markov) or a graph sequence (temporal, predict, markov)
    graph: Optional[GraphSpec] = None
    graphs: Optional[Union[List[GraphSpec], Dict[str, Any]]] = None
    # graph family specs (sweep, verify)
    ensemble: Optional[Union[Dict[str, Any], List[Dict[str, Any]]]] = None
    mode: str = "bounds"

    beta: float = 0.1
    delta: float = 1.0
    r: float = 1e-4
    r_star: float = 1e-8
    h: float = 0.01
    t_max: float = 1e4
    t_end: float = 100.0
    delta_t: Union[float, str] = 10.0
    runs: int = 200
    grid_step: float = 0.01
    y0: float = 1.0
    seed: int = 0

    tau_multipliers: List[float] = [0.5, 1.0, 2.0, 5.0]
    r_values: List[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    r_star_values: List[float] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8]
    spot_checks: int = 0
    out_dir: Optional[str] = None

    class Config:
        extra = Extra.forbid

    @validator("kind")
    def _known_kind(cls, v):
        if v not in KINDS:
            raise ValueError(f"must be one of {KINDS}")
        return v

    @validator("mode")
    def _known_mode(cls, v):
        if v not in SWEEP_MODES:
            raise ValueError(f"must be one of {SWEEP_MODES}")
        return v

    @validator("beta")
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @validator("delta", "h", "t_max", "r_star", "grid_step")
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @validator("t_end")
    def _t_end(cls, v):
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @validator("r")
    def _tolerance(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("must be in (0, 1)")
        return v

    @validator("y0")
    def _level(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError("must be in [0, 1]")
        return v

    @validator("delta_t")
    def _delta_t(cls, v):
        if isinstance(v, str):
            if v not in DELTA_T_RULES:
                raise ValueError(f"must be a positive number or one of {DELTA_T_RULES}")
            return v
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @validator("runs")
    def _runs(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @validator("seed")
    def _seed(cls, v):
        if not 0 <= v < 2**64:
            raise ValueError("must be an unsigned 64-bit integer")
        return v

    @validator("r_values", "r_star_values", each_item=True)
    def _tolerances(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("must be in (0, 1)")
        return v

    @validator("tau_multipliers", each_item=True)
    def _multipliers(cls, v):
        if v < 0:
            raise ValueError("must be >= 0")
        return v


# -------------------------
# Loading
# -------------------------
def _parse_text(text: str, path: Path) -> Dict[str, Any]:
    if not text.strip():
        raise ConfigError(f"{path}: config file is empty")
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
            raise ConfigError(f"{path}: invalid YAML at {where}: {e}") from e
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply `key=value` overrides; dotted keys reach into nested mappings."""
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        value = yaml.safe_load(raw) if raw else None
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = value
    return data


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        field = ".".join(str(p) for p in e["loc"])
        lines.append(f"field {field}: {e['msg']}")
    return "; ".join(lines)


def build_config(data: Dict[str, Any], source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.parse_obj(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_format_errors(e)}") from e


def load_config(path, overrides: Sequence[str] = (), kind: Optional[str] = None) -> ExperimentConfig:
    """Parse, override and validate; `kind` fills a missing kind and must match a given one."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    data = apply_overrides(_parse_text(text, path), overrides)
    if kind is not None:
        found = data.setdefault("kind", kind)
        if found != kind:
            raise ConfigError(f"{path}: config is for {found!r}, not {kind!r}")
    return build_config(data, str(path))
