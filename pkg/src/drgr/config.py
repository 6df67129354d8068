"""Flat ``key = value`` run configuration.

Every knob of every stage lives in :class:`RunConfig`. A config file holds
one ``key = value`` per line (``#`` starts a comment); command-line
``--key value`` pairs override it. Defaults follow the DRGR hyper-parameter
table where one is given.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .agent import TrainConfig
from .dataprep import PrepConfig
from .envsim import EnvConfig, MFConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths
    ratings: str = "data/ml-100k/ratings.csv"
    movies: str = ""
    workspace: str = "workspace"
    seed: int = 0
    threads: int = 1
    # dataset synthesis
    n_groups: int = 1000
    group_size_min: int = 2
    group_size_max: int = 5
    min_ratings: int = 20
    negatives: int = 100
    split_train: float = 0.7
    split_val: float = 0.1
    split_test: float = 0.2
    # environment simulator
    mf_components: int = 32
    mf_lr: float = 0.01
    mf_l2: float = 1e-5
    mf_epochs: int = 50
    mf_use_bias: bool = True
    mf_keep_best: bool = True
    history_length: int = 5
    gamma: float = 0.9
    episode_length: int = 20
    override_observed: bool = True
    # agent
    embedding_dim: int = 32
    attention_dim: int = 32
    actor_hidden: str = "128,64"
    critic_hidden: str = "32,16"
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-6
    episodes: int = 1000
    tau: float = 0.001
    replay_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma_start: float = 0.2
    ou_sigma_end: float = 0.01
    target_action: str = "item"
    action_l2: float = 0.1
    freeze_item_embeddings: bool = False
    eval_every: int = 100
    # evaluation
    ks: str = "5,10,20"

    # --- derived views -----------------------------------------------------

    def stage_seed(self, stage: str) -> int:
        """Per-stage seed derived from the master seed."""
        offsets = {"prepare": 0, "train-env": 1, "train-agent": 2, "evaluate": 3}
        return self.seed * 1000 + offsets[stage]

    @property
    def k_values(self) -> tuple[int, ...]:
        return _int_tuple(self.ks)

    def prep_config(self) -> PrepConfig:
        return PrepConfig(
            n_groups=self.n_groups,
            size_min=self.group_size_min,
            size_max=self.group_size_max,
            min_ratings=self.min_ratings,
            negatives=self.negatives,
            fractions=(self.split_train, self.split_val, self.split_test),
            seed=self.stage_seed("prepare"),
            threads=self.threads,
        )

    def mf_config(self) -> MFConfig:
        return MFConfig(
            components=self.mf_components,
            lr=self.mf_lr,
            l2=self.mf_l2,
            epochs=self.mf_epochs,
            use_bias=self.mf_use_bias,
            keep_best=self.mf_keep_best,
            seed=self.stage_seed("train-env"),
        )

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.history_length, self.gamma, self.episode_length, self.override_observed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim,
            attention_dim=self.attention_dim,
            history_length=self.history_length,
            actor_hidden=_int_tuple(self.actor_hidden),
            critic_hidden=_int_tuple(self.critic_hidden),
            gamma=self.gamma,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            episodes=self.episodes,
            episode_length=self.episode_length,
            tau=self.tau,
            replay_capacity=self.replay_capacity,
            ou_theta=self.ou_theta,
            ou_sigma_start=self.ou_sigma_start,
            ou_sigma_end=self.ou_sigma_end,
            target_action=self.target_action,
            action_l2=self.action_l2,
            freeze_item_embeddings=self.freeze_item_embeddings,
            eval_every=self.eval_every,
            seed=self.stage_seed("train-agent"),
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _int_tuple(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(x) for x in text.split(",")) if text else ()


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, kind: type, raw: str) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r} (expected {kind.__name__})") from None


_FIELD_TYPES = {f.name: {"int": int, "float": float, "bool": bool, "str": str}[f.type] for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, _FIELD_TYPES[key], raw)
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    for key, raw in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown option --{key.replace('_', '-')}")
        values[key] = _coerce(key, _FIELD_TYPES[key], str(raw))
    cfg = RunConfig(**values)
    fr = (cfg.split_train, cfg.split_val, cfg.split_test)
    if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be positive and sum to 1, got {fr}")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
