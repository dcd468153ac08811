"""Run configuration read from TOML."""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .kernels import WeightConfig
from .model import PriorParams
from .quadrature import QuadratureSpec


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class ChainSection:
    kernel: str = "weighted_eaton"   # weighted_eaton | lebesgue_T | lebesgue_image
    n_paths: int = 1000
    horizon: int = 100_000
    init: float = 0.0
    target: tuple = (0.0, 10.0)      # interval on the half-line; ball radius sqrt(hi) in R^p
    group_size: int = 64
    dump_paths: int = 0


@dataclass(frozen=True)
class MomentsSection:
    alphas: tuple = (50.0, 200.0, 1000.0)


@dataclass(frozen=True)
class DriftSection:
    lo: float = 1.0
    hi: float = 1e6
    n: int = 40
    sup_ns: tuple = (1, 10, 20)
    n0_max: float = 100.0
    kernel: str = "weighted_eaton"   # weighted_eaton | lebesgue_image


@dataclass(frozen=True)
class CapacitySection:
    kernel: str = "weighted_eaton"   # weighted_eaton | lebesgue_image
    D: tuple = (0.0, 10.0)
    B_list: tuple = (30.0, 100.0, 300.0, 1000.0)
    n_cells: int = 256


@dataclass(frozen=True)
class Example1Section:
    p_list: tuple = (1, 2, 3)
    n_draws: int = 1_000_000
    n_paths: int = 1000
    horizon: int = 100_000
    target_radius: float = math.sqrt(10.0)


@dataclass(frozen=True)
class RiskSection:
    estimators: tuple = ("mle", "james_stein", "formal_bayes")
    theta_norms: tuple = (0.0, 1.0, 2.0, 5.0, 10.0)
    n_rep: int = 10_000


@dataclass(frozen=True)
class ValidateSection:
    partition: int = 6
    upper: float = 20.0
    tolerance: float = 1e-6
    rel_tol: float = 1e-9
    broken_symmetry: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: PriorParams = PriorParams()
    weights: WeightConfig = WeightConfig()
    quad: QuadratureSpec = QuadratureSpec()
    chain: ChainSection = ChainSection()
    moments: MomentsSection = MomentsSection()
    drift: DriftSection = DriftSection()
    capacity: CapacitySection = CapacitySection()
    example1: Example1Section = Example1Section()
    risk: RiskSection = RiskSection()
    validate: ValidateSection = ValidateSection()
    seed: int | None = None
    output_dir: str = "eaton_out"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def hash(self) -> str:
        skip = ("raw", "output_dir")
        payload = {f.name: _plain(getattr(self, f.name)) for f in fields(self) if f.name not in skip}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float):
        return format(obj, ".17g")
    return obj


_SECTIONS = {
    "model": PriorParams, "weights": WeightConfig, "quad": QuadratureSpec,
    "chain": ChainSection, "moments": MomentsSection, "drift": DriftSection,
    "capacity": CapacitySection, "example1": Example1Section, "risk": RiskSection,
    "validate": ValidateSection,
}


def _build(name, cls, table):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    kw = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kw[key] = _build(key, _SECTIONS[key], value)
        elif key == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("seed must be an integer")
            kw["seed"] = value
        elif key == "output":
            if set(value) - {"dir"}:
                raise ConfigError("[output] only takes 'dir'")
            kw["output_dir"] = str(value.get("dir", "eaton_out"))
        else:
            raise ConfigError(f"unknown top-level key '{key}'")
    return RunConfig(raw=data, **kw)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
