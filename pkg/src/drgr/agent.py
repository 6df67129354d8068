"""DDPG actor-critic agent with self-attention group embeddings.

State embedding
    Member embeddings ``u_j`` are scored with ``o_j = h . relu(P u_j + b)``,
    softmax-normalised over the group and summed into ``g``. The state vector
    is ``[g, i_1, ..., i_N]`` where ``i_k`` are the history item embeddings.

Actor / critic
    The actor maps the state vector to a proto-action ``w`` (same space as
    item embeddings); the recommended item is ``argmax_j w . i_j`` over the
    candidate set. The critic scores ``Q(s, a)`` where ``a`` is a 32-d action
    vector: the chosen item's embedding when fitting the TD target, and the
    proto-action itself when pushing the actor uphill.

All gradients are written out by hand on top of :mod:`drgr.nncore`.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from .envsim import EnvState, GroupRecEnv
from .nncore import (
    MLP,
    AdamState,
    EmbeddingTable,
    NonFiniteError,
    adam_step,
    embedding_grad,
    load_checkpoint,
    save_checkpoint,
    softmax,
    softmax_backward,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    embedding_dim: int = 32
    attention_dim: int = 32
    history_length: int = 5
    actor_hidden: tuple[int, ...] = (128, 64)
    critic_hidden: tuple[int, ...] = (32, 16)
    gamma: float = 0.9
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-6
    episodes: int = 1000
    episode_length: int = 20
    tau: float = 0.001
    replay_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma_start: float = 0.2
    ou_sigma_end: float = 0.01
    embedding_init_scale: float = 0.1
    target_action: str = "item"
    action_l2: float = 0.1
    freeze_item_embeddings: bool = False
    train_embeddings: bool = True
    train_actor: bool = True
    eval_every: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        self.actor_hidden = tuple(int(x) for x in self.actor_hidden)
        self.critic_hidden = tuple(int(x) for x in self.critic_hidden)
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.target_action not in ("item", "proto"):
            raise ValueError(f"target_action must be 'item' or 'proto', got {self.target_action!r}")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must hold at least one batch")

    @property
    def state_dim(self) -> int:
        return (self.history_length + 1) * self.embedding_dim


# --------------------------------------------------------------------------- #
# parameters
# --------------------------------------------------------------------------- #

EMBEDDER_BLOCKS = ("user_emb", "item_emb", "att_P", "att_b", "att_h")


@dataclass
class AgentParams:
    user_emb: EmbeddingTable
    item_emb: EmbeddingTable
    att_P: np.ndarray  # (d_a, d)
    att_b: np.ndarray  # (d_a,)
    att_h: np.ndarray  # (d_a,)
    actor: MLP
    critic: MLP

    @classmethod
    def init(cls, n_users: int, n_items: int, config: TrainConfig, rng: np.random.Generator) -> "AgentParams":
        d, da = config.embedding_dim, config.attention_dim
        bound = 1.0 / np.sqrt(d)
        return cls(
            user_emb=EmbeddingTable.init(n_users, d, rng, config.embedding_init_scale),
            item_emb=EmbeddingTable.init(n_items, d, rng, config.embedding_init_scale),
            att_P=rng.uniform(-bound, bound, size=(da, d)),
            att_b=rng.uniform(-bound, bound, size=da),
            att_h=rng.uniform(-1.0 / np.sqrt(da), 1.0 / np.sqrt(da), size=da),
            actor=MLP.init([config.state_dim, *config.actor_hidden, d], rng),
            critic=MLP.init([config.state_dim + d, *config.critic_hidden, 1], rng),
        )

    def blocks(self) -> dict[str, np.ndarray]:
        """Every parameter array by name; the arrays are live, not copies."""
        out = {
            "user_emb": self.user_emb.rows,
            "item_emb": self.item_emb.rows,
            "att_P": self.att_P,
            "att_b": self.att_b,
            "att_h": self.att_h,
        }
        out.update({f"actor.{k}": v for k, v in self.actor.params().items()})
        out.update({f"critic.{k}": v for k, v in self.critic.params().items()})
        return out

    def copy(self) -> "AgentParams":
        return copy.deepcopy(self)

    def assign(self, blocks: Mapping[str, np.ndarray]) -> None:
        for name, arr in self.blocks().items():
            arr[...] = blocks[name]


# --------------------------------------------------------------------------- #
# state embedding
# --------------------------------------------------------------------------- #


@dataclass
class _AttentionCache:
    members: np.ndarray
    U: np.ndarray
    z: np.ndarray
    r: np.ndarray
    alpha: np.ndarray


def _attention(params: AgentParams, members: Sequence[int]) -> tuple[np.ndarray, _AttentionCache]:
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("a group needs at least one member")
    U = params.user_emb.rows[members]
    z = U @ params.att_P.T + params.att_b
    r = np.maximum(z, 0.0)
    alpha = softmax(r @ params.att_h)
    return alpha @ U, _AttentionCache(members, U, z, r, alpha)


def attention_aggregate(params: AgentParams, members: Sequence[int]) -> np.ndarray:
    """Group embedding: attention-weighted sum of the member embeddings."""
    return _attention(params, members)[0]


def _attention_backward(params: AgentParams, cache: _AttentionCache, dg: np.ndarray, grads: dict) -> None:
    """Accumulate d(loss)/d(attention params, member rows) given d(loss)/dg."""
    dalpha = cache.U @ dg
    dU = np.outer(cache.alpha, dg)
    do = softmax_backward(cache.alpha, dalpha)
    grads["att_h"] += cache.r.T @ do
    dz = np.outer(do, params.att_h) * (cache.z > 0.0)
    grads["att_P"] += dz.T @ cache.U
    grads["att_b"] += dz.sum(axis=0)
    dU += dz @ params.att_P
    np.add.at(grads["user_emb"], cache.members, dU)


def embed_state(params: AgentParams, state: EnvState, members: Mapping[int, Sequence[int]]) -> np.ndarray:
    """``[g, i_1, ..., i_N]`` flattened to length ``(N + 1) * d``."""
    g, _ = _attention(params, members[state.group_id])
    hist = params.item_emb.rows[np.asarray(state.history, dtype=np.int64)]
    return np.concatenate([g, hist.reshape(-1)])


def _embed_batch(
    params: AgentParams, states: Sequence[EnvState], members: Mapping[int, Sequence[int]]
) -> tuple[np.ndarray, list[_AttentionCache]]:
    d = params.item_emb.dim
    n = len(states[0].history)
    out = np.empty((len(states), (n + 1) * d))
    caches = []
    for k, s in enumerate(states):
        g, cache = _attention(params, members[s.group_id])
        out[k, :d] = g
        out[k, d:] = params.item_emb.rows[np.asarray(s.history, dtype=np.int64)].reshape(-1)
        caches.append(cache)
    return out, caches


def _embed_backward(
    params: AgentParams, states: Sequence[EnvState], caches: list[_AttentionCache], dS: np.ndarray, grads: dict
) -> None:
    d = params.item_emb.dim
    for k, (s, cache) in enumerate(zip(states, caches)):
        _attention_backward(params, cache, dS[k, :d], grads)
        np.add.at(grads["item_emb"], np.asarray(s.history, dtype=np.int64), dS[k, d:].reshape(-1, d))


def _greedy_items(item_rows: np.ndarray, protos: np.ndarray, states: Sequence[EnvState]) -> np.ndarray:
    """Per row, the best-scoring item outside that state's history."""
    scores = protos @ item_rows.T
    for k, s in enumerate(states):
        scores[k, list(s.history)] = -np.inf
    return np.argmax(scores, axis=1)


def _zero_embedder_grads(params: AgentParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(params.blocks()[name]) for name in EMBEDDER_BLOCKS}


# --------------------------------------------------------------------------- #
# actor, critic, action selection
# --------------------------------------------------------------------------- #


def actor_forward(actor: MLP, state_embedding: np.ndarray) -> np.ndarray:
    return actor(state_embedding)


def critic_forward(critic: MLP, state_embedding: np.ndarray, action: np.ndarray) -> float | np.ndarray:
    """Q-value(s); batched inputs give a vector."""
    x = np.concatenate([state_embedding, action], axis=-1)
    return critic(x)[..., 0]


def _best(scores: np.ndarray, items: np.ndarray) -> int:
    top = scores.max()
    return int(items[scores == top].min())


def select_action(
    proto_action: np.ndarray,
    candidate_items: Sequence[int],
    item_embeddings: np.ndarray,
    noise: np.ndarray | None = None,
) -> int:
    """Candidate with the largest inner product; ties go to the smallest id."""
    items = np.asarray(candidate_items, dtype=np.int64)
    if items.size == 0:
        raise ValueError("empty candidate set")
    w = proto_action if noise is None else proto_action + noise
    return _best(item_embeddings[items] @ w, items)


def rank_by_scores(scores: np.ndarray, items: np.ndarray, k: int) -> list[int]:
    order = np.lexsort((items, -scores))
    return items[order[:k]].tolist()


class OUNoise:
    """Discrete Ornstein-Uhlenbeck process ``x <- x + theta (mu - x) + sigma eps``."""

    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0, seed: int | None = None):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.theta, self.sigma, self.mu = theta, sigma, mu
        self.rng = np.random.default_rng(seed)
        self.x = np.full(dim, mu, dtype=np.float64)

    def reset(self) -> None:
        self.x[:] = self.mu

    def sample(self) -> np.ndarray:
        eps = self.rng.standard_normal(self.x.shape)
        self.x = self.x + self.theta * (self.mu - self.x) + self.sigma * eps
        return self.x.copy()


def linear_schedule(start: float, end: float, step: int, total: int) -> float:
    if total <= 1:
        return end
    frac = min(max(step / (total - 1), 0.0), 1.0)
    return start + frac * (end - start)


# --------------------------------------------------------------------------- #
# replay
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action_item: int
    proto_action: np.ndarray
    reward: float
    next_state: EnvState


class ReplayBuffer:
    def __init__(self, capacity: int, seed: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._next = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._data)

    def push(self, t: Transition) -> None:
        if len(self._data) < self.capacity:
            self._data.append(t)
        else:
            self._data[self._next] = t
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int) -> list[Transition]:
        if n > len(self._data):
            raise ValueError(f"cannot sample {n} from a buffer of {len(self._data)}")
        idx = self.rng.choice(len(self._data), size=n, replace=False)
        return [self._data[i] for i in idx]


# --------------------------------------------------------------------------- #
# the agent
# --------------------------------------------------------------------------- #


@dataclass
class UpdateReport:
    critic_loss: float
    actor_loss: float
    mean_q: float
    mean_target: float


@dataclass
class DDPGGradients:
    critic: dict[str, np.ndarray]  # critic.* and embedder blocks, from the TD loss
    actor: dict[str, np.ndarray]  # actor.* and embedder blocks, from -Q(s, pi(s))
    report: UpdateReport


class DRGRAgent:
    def __init__(
        self,
        n_users: int,
        n_items: int,
        members: Mapping[int, Sequence[int]],
        config: TrainConfig | None = None,
        item_init: np.ndarray | None = None,
    ):
        self.config = config or TrainConfig()
        self.members = {int(g): tuple(int(u) for u in m) for g, m in members.items()}
        rng = np.random.default_rng(self.config.seed)
        self.params = AgentParams.init(n_users, n_items, self.config, rng)
        if item_init is not None:
            if item_init.shape != self.params.item_emb.rows.shape:
                raise ValueError(f"item_init shape {item_init.shape} != {self.params.item_emb.rows.shape}")
            self.params.item_emb.rows[...] = item_init
        self.target = self.params.copy()
        self.optim = AdamState(lr=self.config.lr, weight_decay=self.config.weight_decay)

    @property
    def n_items(self) -> int:
        return len(self.params.item_emb)

    def trainable_blocks(self) -> list[str]:
        names = []
        for name in self.params.blocks():
            if name.startswith("actor.") and not self.config.train_actor:
                continue
            if name in EMBEDDER_BLOCKS and not self.config.train_embeddings:
                continue
            if name == "item_emb" and self.config.freeze_item_embeddings:
                continue
            names.append(name)
        return names

    # inference ---------------------------------------------------------------

    def embed(self, state: EnvState, target: bool = False) -> np.ndarray:
        return embed_state(self.target if target else self.params, state, self.members)

    def proto_action(self, state: EnvState) -> np.ndarray:
        return actor_forward(self.params.actor, self.embed(state))

    def item_scores(self, state: EnvState, items: np.ndarray | None = None) -> np.ndarray:
        w = self.proto_action(state)
        rows = self.params.item_emb.rows if items is None else self.params.item_emb.rows[items]
        return rows @ w

    def q_value(self, state: EnvState, item: int) -> float:
        return float(critic_forward(self.params.critic, self.embed(state), self.params.item_emb.rows[item]))

    # learning ----------------------------------------------------------------

    def gradients(self, batch: Sequence[Transition]) -> DDPGGradients:
        """TD-loss and policy-loss gradients at the current parameters."""
        cfg, p, tgt = self.config, self.params, self.target
        B = len(batch)
        d = p.item_emb.dim
        states = [t.state for t in batch]
        actions = np.asarray([t.action_item for t in batch], dtype=np.int64)
        rewards = np.asarray([t.reward for t in batch], dtype=np.float64)

        # bootstrap target from the lagged networks
        next_states = [t.next_state for t in batch]
        S2, _ = _embed_batch(tgt, next_states, self.members)
        W2 = tgt.actor(S2)
        if cfg.target_action == "item":
            W2 = tgt.item_emb.rows[_greedy_items(tgt.item_emb.rows, W2, next_states)]
        q_next = critic_forward(tgt.critic, S2, W2)
        y = rewards + cfg.gamma * q_next

        S, caches = _embed_batch(p, states, self.members)

        # critic: mean (Q(s, emb(a)) - y)^2
        c_acts = p.critic.forward(np.concatenate([S, p.item_emb.rows[actions]], axis=1))
        q = c_acts[-1][:, 0]
        diff = q - y
        critic_loss = float(np.mean(diff**2))
        c_param_grads, dX = p.critic.backward(c_acts, (2.0 / B) * diff[:, None])
        cg = _zero_embedder_grads(p)
        _embed_backward(p, states, caches, dX[:, :-d], cg)
        np.add.at(cg["item_emb"], actions, dX[:, -d:])
        cg.update({f"critic.{k}": v for k, v in c_param_grads.items()})

        # actor: -mean Q(s, pi(s)) + action_l2 * mean |pi(s)|^2; the critic is only differentiated through
        a_acts = p.actor.forward(S)
        W = a_acts[-1]
        qa_acts = p.critic.forward(np.concatenate([S, W], axis=1))
        actor_loss = -float(np.mean(qa_acts[-1][:, 0])) + cfg.action_l2 * float(np.mean((W * W).sum(axis=1)))
        _, dX2 = p.critic.backward(qa_acts, np.full((B, 1), -1.0 / B))
        dW = dX2[:, -d:] + (2.0 * cfg.action_l2 / B) * W
        a_param_grads, dS_actor = p.actor.backward(a_acts, dW)
        ag = _zero_embedder_grads(p)
        _embed_backward(p, states, caches, dX2[:, :-d] + dS_actor, ag)
        ag.update({f"actor.{k}": v for k, v in a_param_grads.items()})

        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise NonFiniteError(
                f"non-finite loss: critic {critic_loss}, actor {actor_loss}, "
                f"max |Q| {np.abs(q).max():.3g}, max |y| {np.abs(y).max():.3g}"
            )
        report = UpdateReport(critic_loss, actor_loss, float(q.mean()), float(y.mean()))
        return DDPGGradients(cg, ag, report)

    def update(self, batch: Sequence[Transition]) -> UpdateReport:
        """One DDPG step: Adam on the summed gradients, then the soft target update."""
        g = self.gradients(batch)
        combined: dict[str, np.ndarray] = {}
        for part in (g.critic, g.actor):
            for name, arr in part.items():
                combined[name] = combined[name] + arr if name in combined else arr
        keep = set(self.trainable_blocks())
        adam_step(self.params.blocks(), {k: v for k, v in combined.items() if k in keep}, self.optim)
        self.soft_update()
        return g.report

    def soft_update(self, tau: float | None = None) -> None:
        tau = self.config.tau if tau is None else tau
        online = self.params.blocks()
        for name, arr in self.target.blocks().items():
            arr *= 1.0 - tau
            arr += tau * online[name]

    # ranking -----------------------------------------------------------------

    def rank_items(self, state: EnvState, candidate_items: Sequence[int], k: int) -> list[int]:
        return rank_items(self, state, candidate_items, k)

    # persistence -------------------------------------------------------------

    def save(self, path, extra_meta: Mapping | None = None) -> None:
        blocks = dict(self.params.blocks())
        blocks.update({f"target/{k}": v for k, v in self.target.blocks().items()})
        meta = {
            "kind": "drgr-agent",
            "config": asdict(self.config),
            "n_users": len(self.params.user_emb),
            "n_items": self.n_items,
            "members": {str(g): list(m) for g, m in sorted(self.members.items())},
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, blocks, meta)

    @classmethod
    def load(cls, path) -> "DRGRAgent":
        blocks, meta = load_checkpoint(path)
        if meta.get("kind") != "drgr-agent":
            raise ValueError(f"{path} is not an agent checkpoint")
        known = {f.name for f in fields(TrainConfig)}
        config = TrainConfig(**{k: v for k, v in meta["config"].items() if k in known})
        members = {int(g): m for g, m in meta["members"].items()}
        agent = cls(meta["n_users"], meta["n_items"], members, config)
        agent.params.assign(blocks)
        agent.target.assign({k[len("target/"):]: v for k, v in blocks.items() if k.startswith("target/")})
        return agent


def ddpg_update(agent: DRGRAgent, batch: Sequence[Transition]) -> UpdateReport:
    return agent.update(batch)


def rank_items(agent: DRGRAgent, state: EnvState, candidate_items: Sequence[int], k: int) -> list[int]:
    """Top-``k`` candidates by actor score ``w . i_j``, ties by item id."""
    if k <= 0:
        raise ValueError(f"K must be positive, got {k}")
    items = np.asarray(candidate_items, dtype=np.int64)
    if len(items) < k:
        raise ValueError(f"need at least {k} candidates, got {len(items)}")
    return rank_by_scores(agent.item_scores(state, items), items, k)


# --------------------------------------------------------------------------- #
# training loop and rollouts
# --------------------------------------------------------------------------- #


@dataclass
class TrainResult:
    curve: pd.DataFrame  # episode, mean_reward, critic_loss, actor_loss
    best_score: float | None = None
    best_episode: int | None = None
    best_blocks: dict[str, np.ndarray] | None = field(default=None, repr=False)


def _candidate_mask(n_items: int, history: Sequence[int], used: set[int]) -> np.ndarray:
    mask = np.ones(n_items, dtype=bool)
    mask[list(history)] = False
    if used:
        mask[list(used)] = False
    return mask


def _masked_argmax(scores: np.ndarray, mask: np.ndarray) -> int:
    s = np.where(mask, scores, -np.inf)
    return int(np.argmax(s))  # first maximum, i.e. the smallest item id


def run_episode(
    env: GroupRecEnv,
    group_id: int,
    policy: Callable[[EnvState, np.ndarray], int],
    length: int,
) -> tuple[list[float], list[tuple[EnvState, int, float, EnvState]]]:
    """Roll out ``length`` steps, never repeating history or already-recommended items."""
    state = env.reset(group_id)
    used: set[int] = set()
    rewards, steps = [], []
    for _ in range(length):
        mask = _candidate_mask(env.n_items, state.history, used)
        if not mask.any():
            break
        item = policy(state, mask)
        out = env.step(state, item)
        used.add(item)
        rewards.append(out.reward)
        steps.append((state, item, out.reward, out.next_state))
        state = out.next_state
    return rewards, steps


def greedy_policy(agent: DRGRAgent) -> Callable[[EnvState, np.ndarray], int]:
    def act(state: EnvState, mask: np.ndarray) -> int:
        return _masked_argmax(agent.item_scores(state), mask)

    return act


def random_policy(seed: int) -> Callable[[EnvState, np.ndarray], int]:
    rng = np.random.default_rng(seed)

    def act(state: EnvState, mask: np.ndarray) -> int:
        return int(rng.choice(np.flatnonzero(mask)))

    return act


def mean_episode_return(
    env: GroupRecEnv,
    policy: Callable[[EnvState, np.ndarray], int],
    groups: Sequence[int],
    length: int,
    repeats: int = 1,
) -> float:
    """Average undiscounted return of ``policy`` started once per group per repeat."""
    totals = [sum(run_episode(env, g, policy, length)[0]) for _ in range(repeats) for g in groups]
    return float(np.mean(totals))


def train_loop(
    env: GroupRecEnv,
    agent: DRGRAgent,
    groups: Sequence[int] | None = None,
    validate: Callable[[DRGRAgent], float] | None = None,
    progress: Callable[[int, dict], None] | None = None,
) -> TrainResult:
    """Train ``agent`` for ``config.episodes`` episodes of ``config.episode_length`` steps.

    Groups are visited round-robin over one seeded shuffle. An update runs
    after every step once the replay buffer holds a full batch. With
    ``validate`` and ``eval_every > 0`` the best-scoring parameters are kept.
    """
    cfg = agent.config
    if groups is None:
        groups = env.eligible_groups()
    if not groups:
        raise ValueError("no groups with enough positive training history")
    rng = np.random.default_rng([cfg.seed, 1])
    order = rng.permutation(np.asarray(groups, dtype=np.int64))
    buffer = ReplayBuffer(cfg.replay_capacity, seed=int(rng.integers(2**31)))
    noise = OUNoise(cfg.embedding_dim, cfg.ou_theta, cfg.ou_sigma_start, seed=int(rng.integers(2**31)))
    item_rows = agent.params.item_emb.rows

    rows = []
    best_score, best_episode, best_blocks = None, None, None
    for ep in range(cfg.episodes):
        group = int(order[ep % len(order)])
        noise.sigma = linear_schedule(cfg.ou_sigma_start, cfg.ou_sigma_end, ep, cfg.episodes)
        noise.reset()
        c_losses, a_losses = [], []

        def act(state: EnvState, mask: np.ndarray) -> int:
            w = agent.proto_action(state)
            if noise.sigma > 0:
                w = w + noise.sample()
            act.last_proto = w
            return _masked_argmax(item_rows @ w, mask)

        state = env.reset(group)
        used: set[int] = set()
        rewards = []
        for _ in range(cfg.episode_length):
            mask = _candidate_mask(env.n_items, state.history, used)
            if not mask.any():
                break
            item = act(state, mask)
            out = env.step(state, item)
            used.add(item)
            rewards.append(out.reward)
            buffer.push(Transition(state, item, act.last_proto, out.reward, out.next_state))
            state = out.next_state
            if len(buffer) >= cfg.batch_size:
                rep = agent.update(buffer.sample(cfg.batch_size))
                c_losses.append(rep.critic_loss)
                a_losses.append(rep.actor_loss)

        row = {
            "episode": ep + 1,
            "mean_reward": float(np.mean(rewards)) if rewards else float("nan"),
            "critic_loss": float(np.mean(c_losses)) if c_losses else float("nan"),
            "actor_loss": float(np.mean(a_losses)) if a_losses else float("nan"),
        }
        rows.append(row)
        if validate is not None and cfg.eval_every > 0 and ((ep + 1) % cfg.eval_every == 0 or ep + 1 == cfg.episodes):
            score = float(validate(agent))
            row["val_score"] = score
            if best_score is None or score > best_score:
                best_score, best_episode = score, ep + 1
                best_blocks = {k: v.copy() for k, v in agent.params.blocks().items()}
        if progress is not None:
            progress(ep + 1, row)
    curve = pd.DataFrame(rows)[["episode", "mean_reward", "critic_loss", "actor_loss"]]
    return TrainResult(curve, best_score, best_episode, best_blocks)
