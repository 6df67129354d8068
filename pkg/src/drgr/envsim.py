"""Group-recommendation MDP backed by a matrix-factorization reward model.

A state is a group id plus its last ``N`` positively received items. The
reward for recommending an item is the group's observed training label
(mapped to -1/+1) when one exists, otherwise the clamped MF prediction. A
positive reward pushes the item onto the history and drops the oldest one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .nncore import NonFiniteError, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

OBSERVED = "observed"
SIMULATED = "simulated"


class EnvError(ValueError):
    pass


# --------------------------------------------------------------------------- #
# matrix factorization
# --------------------------------------------------------------------------- #


@dataclass
class MFModel:
    group_factors: np.ndarray  # (n_groups, k)
    item_factors: np.ndarray  # (n_items, k)
    group_bias: np.ndarray  # (n_groups,)
    item_bias: np.ndarray  # (n_items,)
    global_bias: np.ndarray = field(default_factory=lambda: np.zeros(()))  # 0-d so it can be perturbed in place

    @classmethod
    def zeros(cls, n_groups: int, n_items: int, components: int = 32) -> "MFModel":
        return cls(
            np.zeros((n_groups, components)),
            np.zeros((n_items, components)),
            np.zeros(n_groups),
            np.zeros(n_items),
            np.zeros(()),
        )

    @property
    def n_groups(self) -> int:
        return self.group_factors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[0]

    @property
    def components(self) -> int:
        return self.group_factors.shape[1]

    def raw_score(self, group_id, item_id):
        """Unclamped prediction; ``item_id`` may be an integer array."""
        return (
            float(self.global_bias)
            + self.group_bias[group_id]
            + self.item_bias[item_id]
            + self.item_factors[item_id] @ self.group_factors[group_id]
        )

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "group_factors": self.group_factors,
            "item_factors": self.item_factors,
            "group_bias": self.group_bias,
            "item_bias": self.item_bias,
            "global_bias": self.global_bias,
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.blocks(), {"kind": "mf"})

    @classmethod
    def load(cls, path) -> "MFModel":
        blocks, meta = load_checkpoint(path)
        if meta.get("kind") != "mf":
            raise EnvError(f"{path} is not an MF checkpoint")
        return cls(**blocks)


@dataclass
class MFConfig:
    components: int = 32
    lr: float = 0.01
    l2: float = 1e-5
    epochs: int = 50
    init_scale: float = 0.1
    use_bias: bool = True
    keep_best: bool = True
    seed: int = 0


def label_targets(labels) -> np.ndarray:
    """Binary labels {0, 1} -> regression targets {-1, +1}."""
    labels = np.asarray(labels)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise EnvError("labels must be 0 or 1")
    return 2.0 * labels.astype(np.float64) - 1.0


def mf_sample_loss(model: MFModel, g: int, i: int, target: float, l2: float) -> float:
    """0.5 (pred - y)^2 + 0.5 l2 (|p_g|^2 + |q_i|^2 + b_g^2 + b_i^2)."""
    err = model.raw_score(g, i) - target
    p, q = model.group_factors[g], model.item_factors[i]
    reg = p @ p + q @ q + model.group_bias[g] ** 2 + model.item_bias[i] ** 2
    return 0.5 * err * err + 0.5 * l2 * reg


def mf_sample_grads(model: MFModel, g: int, i: int, target: float, l2: float) -> dict[str, np.ndarray]:
    """Gradient of :func:`mf_sample_loss` as full-size blocks (for checking)."""
    err = model.raw_score(g, i) - target
    grads = {name: np.zeros_like(block) for name, block in model.blocks().items()}
    p, q = model.group_factors[g], model.item_factors[i]
    grads["group_factors"][g] = err * q + l2 * p
    grads["item_factors"][i] = err * p + l2 * q
    grads["group_bias"][g] = err + l2 * model.group_bias[g]
    grads["item_bias"][i] = err + l2 * model.item_bias[i]
    grads["global_bias"][()] = err
    return grads


def mf_objective(model: MFModel, groups: np.ndarray, items: np.ndarray, targets: np.ndarray, l2: float) -> float:
    """Mean per-sample loss over a rating set."""
    p, q = model.group_factors[groups], model.item_factors[items]
    pred = float(model.global_bias) + model.group_bias[groups] + model.item_bias[items] + np.einsum("ij,ij->i", p, q)
    err = pred - targets
    reg = (p * p).sum(1) + (q * q).sum(1) + model.group_bias[groups] ** 2 + model.item_bias[items] ** 2
    return float(np.mean(0.5 * err * err + 0.5 * l2 * reg))


def rmse(model: MFModel, groups: np.ndarray, items: np.ndarray, targets: np.ndarray) -> float:
    if len(targets) == 0:
        return float("nan")
    pred = (
        float(model.global_bias)
        + model.group_bias[groups]
        + model.item_bias[items]
        + np.einsum("ij,ij->i", model.group_factors[groups], model.item_factors[items])
    )
    return float(np.sqrt(np.mean((pred - targets) ** 2)))


def _arrays(ratings: pd.DataFrame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        ratings["group_id"].to_numpy(np.int64),
        ratings["item_id"].to_numpy(np.int64),
        label_targets(ratings["label"].to_numpy()),
    )


def train_mf(
    train: pd.DataFrame,
    n_groups: int,
    n_items: int,
    config: MFConfig = MFConfig(),
    val: pd.DataFrame | None = None,
) -> tuple[MFModel, pd.DataFrame]:
    """Fit the reward model by per-sample SGD on squared error with L2.

    Returns the model and a per-epoch history frame with columns
    ``epoch, train_loss, train_rmse, val_rmse``. With validation data and
    ``keep_best`` the parameters of the lowest-validation-RMSE epoch are
    returned.
    """
    if len(train) == 0:
        raise EnvError("cannot train MF on an empty rating set")
    gs, its, ys = _arrays(train)
    if gs.max() >= n_groups or its.max() >= n_items:
        raise EnvError("rating ids exceed the declared group/item counts")
    rng = np.random.default_rng(config.seed)
    k = config.components
    P = rng.normal(0.0, config.init_scale, size=(n_groups, k))
    Q = rng.normal(0.0, config.init_scale, size=(n_items, k))
    bg = np.zeros(n_groups)
    bi = np.zeros(n_items)
    mu = float(ys.mean()) if config.use_bias else 0.0
    model = MFModel(P, Q, bg, bi, np.array(mu))
    val_arrays = _arrays(val) if val is not None and len(val) else None

    lr, l2, use_bias = config.lr, config.l2, config.use_bias
    rows = []
    best: tuple[float, dict] | None = None
    for epoch in range(1, config.epochs + 1):
        for s in rng.permutation(len(ys)):
            g, i = gs[s], its[s]
            p, q = P[g], Q[i]
            err = mu + bg[g] + bi[i] + p @ q - ys[s]
            if use_bias:
                bg[g] -= lr * (err + l2 * bg[g])
                bi[i] -= lr * (err + l2 * bi[i])
                mu -= lr * err
            p_new = p - lr * (err * q + l2 * p)
            Q[i] = q - lr * (err * p + l2 * q)
            P[g] = p_new
        model.global_bias[()] = mu
        loss = mf_objective(model, gs, its, ys, l2)
        if not np.isfinite(loss):
            raise NonFiniteError(f"MF training diverged at epoch {epoch}")
        row = {
            "epoch": epoch,
            "train_loss": loss,
            "train_rmse": rmse(model, gs, its, ys),
            "val_rmse": rmse(model, *val_arrays) if val_arrays else float("nan"),
        }
        log.debug("mf epoch %(epoch)d loss %(train_loss).5f val_rmse %(val_rmse).4f", row)
        rows.append(row)
        if val_arrays and config.keep_best and (best is None or row["val_rmse"] < best[0]):
            best = (row["val_rmse"], {k: v.copy() for k, v in model.blocks().items()})
    if best is not None:
        model = MFModel(**best[1])
    return model, pd.DataFrame(rows)


# --------------------------------------------------------------------------- #
# the MDP
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class EnvState:
    group_id: int
    history: tuple[int, ...]


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    reward_source: str


@dataclass
class EnvConfig:
    history_length: int = 5
    gamma: float = 0.9
    episode_length: int = 20
    override_observed: bool = True

    def __post_init__(self) -> None:
        if self.history_length < 1:
            raise EnvError("history_length must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise EnvError("gamma must lie in [0, 1]")
        if self.episode_length < 1:
            raise EnvError("episode_length must be >= 1")


def build_lookup(train: pd.DataFrame) -> dict[tuple[int, int], int]:
    return {(int(g), int(i)): int(lab) for g, i, lab in train[["group_id", "item_id", "label"]].itertuples(index=False)}


def _check_ids(model: MFModel, group_id: int, item_id: int) -> None:
    if not 0 <= group_id < model.n_groups:
        raise EnvError(f"group id {group_id} out of range [0, {model.n_groups})")
    if not 0 <= item_id < model.n_items:
        raise EnvError(f"item id {item_id} out of range [0, {model.n_items})")


def predict_reward(
    model: MFModel,
    group_id: int,
    item_id: int,
    train_lookup: Mapping[tuple[int, int], int],
    override: bool = True,
) -> tuple[float, str]:
    _check_ids(model, group_id, item_id)
    if override:
        label = train_lookup.get((group_id, item_id))
        if label is not None:
            return (1.0 if label == 1 else -1.0), OBSERVED
    score = float(model.raw_score(group_id, item_id))
    return float(np.clip(score, -1.0, 1.0)), SIMULATED


def group_positives(train: pd.DataFrame) -> dict[int, list[int]]:
    """Label-1 training items per group in (timestamp, item_id) order."""
    pos = train[train["label"] == 1].sort_values(["group_id", "timestamp", "item_id"], kind="mergesort")
    return {int(g): sub["item_id"].astype(int).tolist() for g, sub in pos.groupby("group_id")}


def env_reset(group_id: int, positives: Mapping[int, Sequence[int]], config: EnvConfig) -> EnvState:
    """Start an episode from the group's earliest ``N`` positive training items."""
    items = positives.get(group_id, [])
    n = config.history_length
    if len(items) < n:
        raise EnvError(f"group {group_id} has {len(items)} positive training ratings, needs {n}")
    return EnvState(group_id, tuple(items[:n]))


def next_history(history: tuple[int, ...], action_item: int, reward: float) -> tuple[int, ...]:
    if reward > 0:
        return history[1:] + (action_item,)
    return history


def env_step(
    state: EnvState,
    action_item: int,
    model: MFModel,
    train_lookup: Mapping[tuple[int, int], int],
    config: EnvConfig,
) -> StepOutcome:
    reward, source = predict_reward(model, state.group_id, action_item, train_lookup, config.override_observed)
    nxt = EnvState(state.group_id, next_history(state.history, int(action_item), reward))
    return StepOutcome(nxt, reward, source)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise EnvError("gamma must lie in [0, 1]")
    total, scale = 0.0, 1.0
    for r in rewards:
        total += scale * r
        scale *= gamma
    return total


class GroupRecEnv:
    """Bundles the reward model, the observed training labels and the config."""

    def __init__(self, model: MFModel, train: pd.DataFrame, config: EnvConfig | None = None):
        self.model = model
        self.config = config or EnvConfig()
        self.lookup = build_lookup(train)
        self.positives = group_positives(train)

    @property
    def n_items(self) -> int:
        return self.model.n_items

    def eligible_groups(self) -> list[int]:
        n = self.config.history_length
        return sorted(g for g, items in self.positives.items() if len(items) >= n)

    def reset(self, group_id: int) -> EnvState:
        return env_reset(group_id, self.positives, self.config)

    def step(self, state: EnvState, action_item: int) -> StepOutcome:
        return env_step(state, action_item, self.model, self.lookup, self.config)

    def reward(self, group_id: int, item_id: int) -> float:
        return predict_reward(self.model, group_id, item_id, self.lookup, self.config.override_observed)[0]
