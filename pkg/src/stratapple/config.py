"""Experiment configuration: a YAML mapping with a few nested sections.

Example::

    algorithm: sa_ols        # sa_ols | etc | doubling | exp3_sae
    feedback: apple          # apple | bandit
    d: 2
    T: 4096
    delta: 0.2
    sigma: 0.1
    r0: 0.0
    seeds: 5
    base_seed: 0
    gamma_fail: 0.05         # failure probability for explore-then-commit
    noise: gaussian          # gaussian | bounded_uniform
    checkpoints: null        # default: powers of two up to T, plus T
    source:
      kind: uniform_ball     # uniform_ball | uniform_sphere_surface | mixture_tilted
                             # | adversarial_file | adversarial_generator
      c0: 1.0
      alt_center: null
      alt_radius: 0.5
      path: null
      params: {}
    agent:
      mode: lazy             # lazy | trembling
      gamma_th: 0.0
      alpha_rule: uniform_random
      alpha_fixed: null
      clip_to_ball: false
    theta:
      theta1: null           # explicit vector, or null for a random unit vector
      theta0: null
      seed: null             # fixes the random theta across seeds when set
    overrides:
      T0: null
      tau_star: null
      epsilon: null
      lambda: null
      eta: null
      gamma_exp: null
      grid_cap: 1000000

Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .principal import GRID_CAP, grid_shape

ALGORITHMS = ("sa_ols", "etc", "doubling", "exp3_sae")
FEEDBACK = ("apple", "bandit")


@dataclass
class SourceConfig:
    kind: str = "uniform_ball"
    c0: float = 1.0
    alt_center: Optional[list] = None
    alt_radius: float = 0.5
    path: Optional[str] = None
    params: dict = field(default_factory=dict)


@dataclass
class AgentConfig:
    mode: str = "lazy"
    gamma_th: float = 0.0
    alpha_rule: str = "uniform_random"
    alpha_fixed: Optional[float] = None
    clip_to_ball: bool = False


@dataclass
class ThetaConfig:
    theta1: Optional[list] = None
    theta0: Optional[list] = None
    seed: Optional[int] = None


@dataclass
class Overrides:
    T0: Optional[int] = None
    tau_star: Optional[int] = None
    epsilon: Optional[float] = None
    # ``lambda`` in the file
    lam: Optional[float] = None
    eta: Optional[float] = None
    gamma_exp: Optional[float] = None
    grid_cap: int = GRID_CAP


@dataclass
class ExperimentConfig:
    algorithm: str
    d: int
    T: int
    delta: float
    sigma: float
    feedback: str = "apple"
    r0: float = 0.0
    seeds: int = 1
    base_seed: int = 0
    gamma_fail: float = 0.05
    noise: str = "gaussian"
    checkpoints: Optional[list] = None
    source: SourceConfig = field(default_factory=SourceConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    theta: ThetaConfig = field(default_factory=ThetaConfig)
    overrides: Overrides = field(default_factory=Overrides)

    def __post_init__(self):
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.T)

    def replace(self, **changes) -> "ExperimentConfig":
        new = copy.deepcopy(self)
        for key, value in changes.items():
            setattr(new, key, value)
        if "T" in changes and "checkpoints" not in changes:
            new.checkpoints = default_checkpoints(new.T)
        validate(new)
        return new

    def to_dict(self) -> dict:
        out = asdict(self)
        out["overrides"]["lambda"] = out["overrides"].pop("lam")
        return out


def default_checkpoints(T: int) -> list:
    cps = [1 << k for k in range(int(T).bit_length()) if (1 << k) <= T]
    if not cps or cps[-1] != T:
        cps.append(int(T))
    return cps


_SECTIONS = {"source": SourceConfig, "agent": AgentConfig, "theta": ThetaConfig, "overrides": Overrides}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = "lam" if (cls is Overrides and key == "lambda") else key
        if name not in names:
            raise ConfigError(f"unknown field {where + '.' if where else ''}{key}")
        if cls is ExperimentConfig and name in _SECTIONS:
            value = _build(_SECTIONS[name], value or {}, name)
        kwargs[name] = value
    return kwargs


def config_from_dict(data: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    kwargs = _build(ExperimentConfig, data, "")
    for required in ("algorithm", "d", "T", "delta", "sigma"):
        if required not in kwargs:
            raise ConfigError(f"missing required field {required}")
    for name, cls in _SECTIONS.items():
        if name in kwargs:
            kwargs[name] = cls(**kwargs[name])
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.source.path and base_dir is not None and not Path(cfg.source.path).is_absolute():
        cfg.source.path = str(base_dir / cfg.source.path)
    validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data or {}, path.parent)


def exp3_epsilon(cfg: ExperimentConfig) -> float:
    if cfg.overrides.epsilon is not None:
        return float(cfg.overrides.epsilon)
    if cfg.sigma <= 0:
        raise ConfigError("exp3_sae needs sigma > 0 or an explicit epsilon")
    return min(1.0, (cfg.d * cfg.sigma * math.log(cfg.T) / cfg.T) ** (1 / (cfg.d + 2)))


def validate(cfg: ExperimentConfig) -> None:
    def need(ok, message):
        if not ok:
            raise ConfigError(message)

    need(cfg.algorithm in ALGORITHMS, f"algorithm must be one of {', '.join(ALGORITHMS)}")
    need(cfg.feedback in FEEDBACK, f"feedback must be one of {', '.join(FEEDBACK)}")
    need(isinstance(cfg.d, int) and cfg.d >= 1, "d must be a positive integer")
    need(isinstance(cfg.T, int) and cfg.T >= 1, "T must be a positive integer")
    need(0 <= cfg.delta < 1, "delta must lie in [0,1)")
    need(cfg.sigma >= 0, "sigma must be nonnegative")
    need(cfg.T >= 2 * cfg.d, "T must be at least 2d")
    need(isinstance(cfg.seeds, int) and cfg.seeds >= 1, "seeds must be a positive integer")
    need(0 < cfg.gamma_fail < 1, "gamma_fail must lie in (0,1)")
    need(cfg.noise in ("gaussian", "bounded_uniform"), "noise must be gaussian or bounded_uniform")
    need(all(isinstance(c, int) and 1 <= c <= cfg.T for c in cfg.checkpoints),
         "checkpoints must be integers in [1, T]")
    cfg.checkpoints = sorted(set(cfg.checkpoints) | {cfg.T})
    need(cfg.agent.mode in ("lazy", "trembling"), "agent.mode must be lazy or trembling")
    need(cfg.agent.gamma_th >= 0, "agent.gamma_th must be nonnegative")
    need(cfg.agent.alpha_rule in ("fixed", "uniform_random", "adversarial_max"),
         "agent.alpha_rule must be fixed, uniform_random or adversarial_max")
    need(0 < cfg.source.c0 <= 1, "source.c0 must lie in (0,1]")
    for name in ("theta1", "theta0"):
        vec = getattr(cfg.theta, name)
        if vec is not None:
            need(len(vec) == cfg.d, f"theta.{name} must have {cfg.d} entries")
            need(math.sqrt(sum(v * v for v in vec)) <= 1 + 1e-12, f"theta.{name} must have norm at most 1")
    if cfg.algorithm == "exp3_sae":
        eps = exp3_epsilon(cfg)
        need(0 < eps <= 1, "epsilon must lie in (0,1]")
        _, m = grid_shape(cfg.d, eps)
        size = m**cfg.d
        need(size <= cfg.overrides.grid_cap,
             f"exp3_sae policy grid has {size} points, above the cap of {cfg.overrides.grid_cap}")
