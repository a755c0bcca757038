"""Experiment configuration read from TOML with a strict schema.

Layout::

    mode = "chern"
    output = "results/chern"

    [model]        # variant = rice-mele | anderson | hofstadter
    [protocol]     # kind = rice-mele-pump | bump | static
    [experiment]   # eps, sizes, seeds (or seed_count + base_seed), order, time_points, ...

Unknown keys at any level raise :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .lattice import CONVENTIONS, MINIMAL_IMAGE
from .models import (
    DRIVING_OPERATORS,
    DrivingProtocol,
    ModelSpec,
    anderson_chain,
    bump_switching,
    hofstadter,
    rice_mele,
    rice_mele_pump,
)

MODES = ("run", "sweep-eps", "sweep-size", "sweep-seed", "chern", "check-hypotheses", "residuals")
VARIANTS = ("rice-mele", "anderson", "hofstadter")
PROTOCOLS = ("rice-mele-pump", "bump", "static")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "rice-mele"
    J: float = 1.0
    delta0: float = 0.5
    Delta0: float = 0.5
    W_dis: float = 0.0
    p: int = 1
    q: int = 3


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "rice-mele-pump"
    period: float = 1.0
    flat_order: int = 0
    amplitude: float = 1.0
    operator: str = "staggering"


@dataclass(frozen=True)
class ExperimentSettings:
    eps: tuple = (0.05,)
    sizes: tuple = (32,)
    seeds: tuple | None = None
    seed_count: int = 1
    base_seed: int = 0
    order: int = 1
    time_points: int = 129
    fermi_energy: float = 0.0
    direction: int = 0
    convention: str = MINIMAL_IMAGE
    steps_per_unit: float = 0.0
    fine_steps: float = 0.0
    closeness: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "run"
    output: str = "results"
    model: ModelConfig = field(default_factory=ModelConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    # -- derived -----------------------------------------------------------

    def disorder_seeds(self) -> list[int]:
        """Explicit seeds, or ``seed_count`` seeds hashed from ``(base_seed, index)``."""
        ex = self.experiment
        if ex.seeds is not None:
            return [int(s) for s in ex.seeds]
        return [int(np.random.SeedSequence([ex.base_seed, i]).generate_state(1, dtype=np.uint64)[0])
                for i in range(ex.seed_count)]

    def model_spec(self, L: int, seed: int) -> ModelSpec:
        m = self.model
        if m.variant == "rice-mele":
            return rice_mele(L, m.J, m.delta0, m.Delta0, m.W_dis, seed)
        if m.variant == "anderson":
            return anderson_chain(L, m.J, m.W_dis, seed)
        return hofstadter(L, m.p, m.q, m.J, m.W_dis, seed)

    def driving(self, spec: ModelSpec) -> DrivingProtocol:
        p = self.protocol
        if p.kind == "rice-mele-pump":
            return rice_mele_pump(spec, p.period, p.flat_order)
        if p.kind == "bump":
            return bump_switching(p.amplitude, p.operator, p.period)
        return DrivingProtocol(p.period, (), p.flat_order)

    def steps_per_unit(self, eps: float) -> float | None:
        ex = self.experiment
        spu = max(ex.steps_per_unit, ex.fine_steps / eps**2)
        return spu or None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["experiment"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d["experiment"].items()}
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{where}]; allowed: {sorted(known)}")
    out = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        out[key] = value
    return cls(**out)


def from_dict(data: dict) -> ExperimentConfig:
    top = {f.name for f in fields(ExperimentConfig)}
    for key in data:
        if key not in top:
            raise ConfigError(f"unknown key {key!r} at top level; allowed: {sorted(top)}")
    cfg = ExperimentConfig(
        mode=data.get("mode", "run"),
        output=str(data.get("output", "results")),
        model=_build(ModelConfig, data.get("model", {}), "model"),
        protocol=_build(ProtocolConfig, data.get("protocol", {}), "protocol"),
        experiment=_build(ExperimentSettings, data.get("experiment", {}), "experiment"),
    )
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def validate(cfg: ExperimentConfig) -> None:
    """Check value ranges and build every model once so that invariants fail early."""
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    m, p, ex = cfg.model, cfg.protocol, cfg.experiment
    if m.variant not in VARIANTS:
        raise ConfigError(f"model.variant must be one of {VARIANTS}, got {m.variant!r}")
    if p.kind not in PROTOCOLS:
        raise ConfigError(f"protocol.kind must be one of {PROTOCOLS}, got {p.kind!r}")
    if p.kind == "rice-mele-pump" and m.variant != "rice-mele":
        raise ConfigError("the rice-mele-pump protocol needs model.variant = 'rice-mele'")
    if p.operator not in DRIVING_OPERATORS:
        raise ConfigError(f"protocol.operator must be one of {DRIVING_OPERATORS}")
    if p.period <= 0 or p.flat_order < 0:
        raise ConfigError("protocol.period must be positive and flat_order non-negative")
    if not ex.eps or any(not (isinstance(e, (int, float)) and e > 0) for e in ex.eps):
        raise ConfigError("experiment.eps must be a non-empty list of positive numbers")
    if not ex.sizes or any(not isinstance(L, int) or L < 4 for L in ex.sizes):
        raise ConfigError("experiment.sizes must be a non-empty list of integers >= 4")
    if ex.seeds is not None and (not ex.seeds or any(not isinstance(s, int) or s < 0 for s in ex.seeds)):
        raise ConfigError("experiment.seeds must be a non-empty list of non-negative integers")
    if ex.seed_count < 1:
        raise ConfigError("experiment.seed_count must be positive")
    if not 0 <= ex.order <= 3:
        raise ConfigError("experiment.order must lie in 0..3")
    if ex.time_points < 5:
        raise ConfigError("experiment.time_points must be at least 5")
    if ex.convention not in CONVENTIONS:
        raise ConfigError(f"experiment.convention must be one of {CONVENTIONS}")
    if ex.steps_per_unit < 0 or ex.fine_steps < 0:
        raise ConfigError("step settings must be non-negative")
    for L in ex.sizes:
        try:
            spec = cfg.model_spec(L, 0)
            cfg.driving(spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model for L = {L}: {exc}") from exc
        if not 0 <= ex.direction < spec.lattice.d:
            raise ConfigError(f"experiment.direction must be below the lattice dimension {spec.lattice.d}")

