"""Experiment configuration files.

One ``key = value`` pair per line.  ``#`` starts a comment, blank lines are
skipped, there are no sections or includes.  Values are parsed by the key's
type: integers, floats, ``true``/``false``, ``none``, or comma-separated
lists for ``seeds`` and ``hidden``.

Experiment keys are used bare (``env``, ``seeds``, ``learner`` ...).
Learner hyper-parameters (:class:`~fpg.learner.FpgConfig` fields) may be
bare or prefixed ``fpg.``; soft-Q settings always carry ``softq.``
(``softq.temperature = 0.5``).  Any other key is an error.

Example::

    env = gridworld-room
    horizon = 40
    learner = fpg
    divergence = fkl
    lr = 0.1
    epochs = 1
    iterations = 500
    seeds = 0, 1, 2
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..baselines import REWARD_KINDS, RewardSpec, SoftQConfig
from ..envs import ENVIRONMENTS
from ..errors import FpgError
from ..learner import FpgConfig

LEARNERS = ("fpg", "ppo-baseline", "soft-q")
POLICIES = ("auto", "tabular", "mlp")


class ConfigError(FpgError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str = "gridworld-room"
    horizon: int | None = None
    layout: str | None = None
    learner: str = "fpg"
    policy: str = "auto"
    hidden: tuple = (64, 64)
    seeds: tuple = (0, 1, 2)
    out: str = "runs/experiment"
    eval_episodes: int = 100
    checkpoint_every: int = 50
    reward: str = "sparse"
    reward_weight: float = 1.0
    reward_scale: float = 1.0
    fpg: FpgConfig = field(default_factory=FpgConfig)
    softq: SoftQConfig = field(default_factory=SoftQConfig)

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {', '.join(ENVIRONMENTS)}")
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; choose from {', '.join(LEARNERS)}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.reward not in REWARD_KINDS:
            raise ConfigError(f"unknown reward {self.reward!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        if self.eval_episodes < 1 or self.checkpoint_every < 1:
            raise ConfigError("eval_episodes and checkpoint_every must be positive")
        if self.learner == "soft-q" and self.env.startswith("pointmaze"):
            raise ConfigError("soft-q needs a tabular environment")
        try:
            self.fpg.validate()
            self.softq.validate()
        except FpgError as e:
            raise ConfigError(str(e)) from None
        return self

    def reward_spec(self) -> RewardSpec:
        return RewardSpec(self.reward, self.reward_weight, self.reward_scale)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("fpg", "softq")}
        d["hidden"], d["seeds"] = list(self.hidden), list(self.seeds)
        d["fpg"] = self.fpg.to_dict()
        d["softq"] = self.softq.to_dict()
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with experiment or ``fpg.`` / ``softq.`` keys overridden."""
        cfg = dataclasses.replace(self, fpg=dataclasses.replace(self.fpg), softq=dataclasses.replace(self.softq))
        for key, value in changes.items():
            _assign(cfg, key, value)
        return cfg.validate()


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(text: str, default, name: str):
    text = text.strip()
    if text.lower() == "none":
        return None
    if name in ("seeds", "hidden"):
        return tuple(int(p) for p in text.replace(";", ",").split(",") if p.strip())
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int) or name == "horizon":
        return int(text)
    if isinstance(default, float) or name == "goal_epsilon":
        return float(text)
    return text


def _target(cfg: ExperimentConfig, key: str):
    if key.startswith("softq."):
        obj, name = cfg.softq, key[len("softq."):]
    elif key.startswith("fpg."):
        obj, name = cfg.fpg, key[len("fpg."):]
    elif key in {f.name for f in dataclasses.fields(ExperimentConfig)} - {"fpg", "softq"}:
        obj, name = cfg, key
    else:
        obj, name = cfg.fpg, key
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key {key!r}")
    return obj, name


def _assign(cfg, key, value):
    obj, name = _target(cfg, key)
    if isinstance(value, str):
        try:
            value = _parse_value(value, getattr(obj, name), name)
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {e}") from None
    object.__setattr__(obj, name, value)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig(fpg=FpgConfig(), softq=SoftQConfig())
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            _assign(cfg, key, value)
        except ConfigError as e:
            raise ConfigError(f"{source}:{lineno}: {e}") from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (every key written out)."""
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name in ("fpg", "softq"):
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    for f in dataclasses.fields(cfg.fpg):
        lines.append(f"fpg.{f.name} = {_fmt(getattr(cfg.fpg, f.name))}")
    for f in dataclasses.fields(cfg.softq):
        value = getattr(cfg.softq, f.name)
        if f.name == "reward" and not isinstance(value, str):
            continue
        lines.append(f"softq.{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    return str(value)
