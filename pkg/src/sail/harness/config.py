"""Experiment configuration: typed sections, strict key=value files, canonical hashing.

File format (INI-like)::

    [run]
    env = PointMass2D
    algo = ours
    [trpo]
    batch_steps = 1000

Unknown sections or keys are errors. Unset keys keep their defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..agent.trpo import TRPOConfig
from ..reprlearn.corruption import METHODS
from ..reprlearn.model import CorruptionConfig, ReprConfig, SSLWeights

ALGOS = ("gail", "ours", "ours+2iwil", "ours+2iwil+mm")

# Desk-scale outer-iteration budgets.
DESK_ITERATIONS = {"PointMass2D": 300, "Reacher1D": 300, "NoisyLinear5": 400, "GridWorldRam": 500}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSection:
    env: str = "PointMass2D"
    algo: str = "ours"
    seed: int = 0
    iterations: int = -1  # -1: desk-scale default for the env
    n_expert: int = 100
    iid_subsample: bool = False
    demos: str = ""  # path to a demonstration file; empty means generate
    eval_every: int = 10
    eval_episodes: int = 10
    checkpoint_every: int = 0
    out: str = "runs/default"


@dataclass(frozen=True)
class ReprSection:
    method: str = "swapping"
    state_rate: float = 0.2
    action_rate: float = 0.2
    forward: float = 1.0
    state: float = 100.0
    action: float = 1.0
    tau: float = 0.1
    noise_dim: int = 6
    batch_size: int = 256
    lr: float = 1e-3
    barlow_center: bool = True
    barlow_paper_sign: bool = False
    state_repr_dim: int = 100
    action_repr_dim: int = 8


@dataclass(frozen=True)
class GailSection:
    lr: float = 1e-3
    alpha: float = 4.0
    gmm_threshold: float = 0.5
    gmm_components: int = 2
    n_nonexperts: int = 4
    psi: float = 1.0  # 1.0: pure expert demonstrations
    labeled_ratio: float = 0.4
    classifier_steps: int = 500
    classifier_lr: float = 1e-3
    discrete_append_action: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    trpo: TRPOConfig = field(default_factory=TRPOConfig)
    repr: ReprSection = field(default_factory=ReprSection)
    gail: GailSection = field(default_factory=GailSection)

    SECTIONS = ("run", "trpo", "repr", "gail")

    def __post_init__(self):
        r, g, p = self.run, self.gail, self.repr
        if r.algo not in ALGOS:
            raise ConfigError(f"run.algo must be one of {ALGOS}, got {r.algo!r}")
        if p.method not in METHODS:
            raise ConfigError(f"repr.method must be one of {METHODS}, got {p.method!r}")
        if r.n_expert < 1:
            raise ConfigError("run.n_expert must be >= 1")
        if not 0.0 < g.psi <= 1.0:
            raise ConfigError("gail.psi must lie in (0, 1]")
        if r.algo.startswith("ours+2iwil") and g.psi == 1.0:
            raise ConfigError(f"{r.algo} needs imperfect demonstrations (gail.psi < 1)")
        if not 0.0 < g.labeled_ratio < 1.0:
            raise ConfigError("gail.labeled_ratio must lie in (0, 1)")
        if g.gmm_components != 2:
            raise ConfigError("only a two-component GMM split is supported")
        if r.eval_every < 1 or r.eval_episodes < 1:
            raise ConfigError("run.eval_every and run.eval_episodes must be >= 1")
        if self.trpo.batch_steps < 2:
            raise ConfigError("trpo.batch_steps must be >= 2")

    # ------------------------------------------------------------------
    @property
    def iterations(self) -> int:
        if self.run.iterations >= 0:
            return self.run.iterations
        return DESK_ITERATIONS.get(self.run.env, 300)

    @property
    def corruption(self) -> CorruptionConfig:
        p = self.repr
        return CorruptionConfig(p.method, p.state_rate, p.action_rate)

    @property
    def ssl_weights(self) -> SSLWeights:
        p = self.repr
        return SSLWeights(p.forward, p.state, p.action, p.tau, p.noise_dim)

    @property
    def repr_cfg(self) -> ReprConfig:
        p = self.repr
        return ReprConfig(p.batch_size, p.lr, p.barlow_center, p.barlow_paper_sign)

    def to_dict(self) -> dict:
        return {s: dataclasses.asdict(getattr(self, s)) for s in self.SECTIONS}

    def canonical(self) -> str:
        """Sorted ``key = value`` text; ``run.out`` is a location, not a parameter, and is left out."""
        lines = []
        for s in self.SECTIONS:
            lines.append(f"[{s}]")
            d = dataclasses.asdict(getattr(self, s))
            for k in sorted(d):
                if (s, k) == ("run", "out"):
                    continue
                lines.append(f"{k} = {_format(d[k])}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, overrides: dict[str, str]) -> "ExperimentConfig":
        """Apply ``{"section.key": "text"}`` overrides with the same typing rules as files."""
        parts: dict[str, dict[str, str]] = {}
        for dotted, text in overrides.items():
            if "." not in dotted:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            sec, key = dotted.split(".", 1)
            parts.setdefault(sec, {})[key] = text
        return _apply(self, parts)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, typ, where: str):
    text = text.strip()
    try:
        if typ is bool or typ == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int or typ == "int":
            return int(text)
        if typ is float or typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None


def _apply(cfg: ExperimentConfig, parts: dict[str, dict[str, str]]) -> ExperimentConfig:
    updates = {}
    for sec, kv in parts.items():
        if sec not in ExperimentConfig.SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
        current = getattr(cfg, sec)
        types = {f.name: f.type for f in fields(current)}
        new = {}
        for key, text in kv.items():
            if key not in types:
                raise ConfigError(f"unknown config key {sec}.{key}")
            new[key] = _parse(text, types[key], f"{sec}.{key}")
        try:
            updates[sec] = dataclasses.replace(current, **new)
        except ValueError as exc:
            raise ConfigError(f"[{sec}]: {exc}") from exc
    try:
        return dataclasses.replace(cfg, **updates)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    parts = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    return _apply(base or ExperimentConfig(), parts)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
