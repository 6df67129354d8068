"""Small float64 neural-network substrate with hand-written backprop.

Everything the agent and the environment simulator train with lives here:
dense layers, embedding tables, softmax, Adam with decoupled weight decay,
a central-difference gradient checker and the checkpoint file format.

Dense ops accept either a single vector ``(in,)`` or a batch ``(B, in)``;
batched gradients are the sum of the per-row gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

ACTIVATIONS = ("relu", "identity")


class NonFiniteError(FloatingPointError):
    """Raised when a gradient, loss or parameter stops being finite."""


# --------------------------------------------------------------------------- #
# dense layers
# --------------------------------------------------------------------------- #


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"inconsistent layer shapes {self.weight.shape} / {self.bias.shape}")

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        bound = 1.0 / np.sqrt(n_in)
        return cls(
            rng.uniform(-bound, bound, size=(n_out, n_in)),
            rng.uniform(-bound, bound, size=n_out),
            activation,
        )

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """activation(W x + b) for a vector or a row-batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"expected input of size {layer.n_in}, got shape {x.shape}")
    z = x @ layer.weight.T + layer.bias
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    return z


def dense_backward(
    layer: DenseLayer,
    x: np.ndarray,
    upstream: np.ndarray,
    out: np.ndarray | None = None,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Return ``({"weight": dW, "bias": db}, dx)`` for the forward map at ``x``.

    ``out`` is the forward output; passing it avoids recomputing the
    pre-activation for the ReLU mask.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape[-1] != layer.n_in or upstream.shape[-1] != layer.n_out:
        raise ValueError(f"shape mismatch: input {x.shape}, upstream {upstream.shape}")
    if x.shape[:-1] != upstream.shape[:-1]:
        raise ValueError(f"batch mismatch: input {x.shape}, upstream {upstream.shape}")
    if layer.activation == "relu":
        if out is None:
            out = dense_forward(layer, x)
        dz = upstream * (out > 0.0)
    else:
        dz = upstream
    if x.ndim == 1:
        grads = {"weight": np.outer(dz, x), "bias": dz.copy()}
    else:
        grads = {"weight": dz.T @ x, "bias": dz.sum(axis=0)}
    return grads, dz @ layer.weight


@dataclass
class MLP:
    """A stack of dense layers; hidden layers use ReLU, the last is linear."""

    layers: list[DenseLayer]

    @classmethod
    def init(cls, sizes: Iterable[int], rng: np.random.Generator) -> "MLP":
        sizes = list(sizes)
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = "identity" if k == len(sizes) - 2 else "relu"
            layers.append(DenseLayer.init(n_in, n_out, act, rng))
        return cls(layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def forward(self, x: np.ndarray) -> list[np.ndarray]:
        """Activations of every layer, input first; the last entry is the output."""
        acts = [np.asarray(x, dtype=np.float64)]
        for layer in self.layers:
            acts.append(dense_forward(layer, acts[-1]))
        return acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def backward(self, acts: list[np.ndarray], upstream: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        g = upstream
        for k in range(len(self.layers) - 1, -1, -1):
            layer_grads, g = dense_backward(self.layers[k], acts[k], g, out=acts[k + 1])
            grads[f"{k}.weight"] = layer_grads["weight"]
            grads[f"{k}.bias"] = layer_grads["bias"]
        return grads, g

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"{k}.weight"] = layer.weight
            out[f"{k}.bias"] = layer.bias
        return out


# --------------------------------------------------------------------------- #
# embeddings and softmax
# --------------------------------------------------------------------------- #


@dataclass
class EmbeddingTable:
    rows: np.ndarray  # (n_entities, dim)

    @classmethod
    def init(cls, n: int, dim: int, rng: np.random.Generator, scale: float = 0.1) -> "EmbeddingTable":
        return cls(rng.normal(0.0, scale, size=(n, dim)))

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def _check_index(table: EmbeddingTable, index) -> np.ndarray:
    idx = np.asarray(index)
    if idx.size and (idx.min() < 0 or idx.max() >= len(table)):
        raise IndexError(f"embedding index out of range [0, {len(table)}): {index}")
    return idx


def embedding_lookup(table: EmbeddingTable, index) -> np.ndarray:
    """Copy of the row(s) at ``index`` (an int or an integer array)."""
    return table.rows[_check_index(table, index)].copy()


def embedding_grad(table: EmbeddingTable, index, upstream: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Scatter-add ``upstream`` into a table-shaped gradient.

    Repeated indices accumulate, so a row looked up twice gets the sum of both
    upstream gradients.
    """
    idx = _check_index(table, index)
    if out is None:
        out = np.zeros_like(table.rows)
    np.add.at(out, idx, upstream)
    return out


def softmax(scores: np.ndarray) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("softmax of an empty vector")
    if np.isnan(s).any():
        raise ValueError("softmax input contains NaN")
    e = np.exp(s - s.max())
    return e / e.sum()


def softmax_backward(probs: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return probs * (upstream - probs @ upstream)


# --------------------------------------------------------------------------- #
# optimizer
# --------------------------------------------------------------------------- #


@dataclass
class AdamState:
    lr: float = 1e-4
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """In-place Adam update of every block named in ``grads``.

    Weight decay is decoupled: ``p -= lr * wd * p`` happens before the Adam
    delta, so the coefficient acts as pure shrinkage.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in block {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --------------------------------------------------------------------------- #
# gradient checking
# --------------------------------------------------------------------------- #


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def __str__(self) -> str:
        lines = [f"{name}: {err:.3e}" for name, err in self.max_rel_error.items()]
        return "\n".join(lines + [f"worst {self.worst:.3e} (tol {self.tolerance:g})"])


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences of ``loss_fn``.

    ``params`` are perturbed in place and restored. ``max_entries`` caps the
    number of probed entries per block (chosen at random) for large tables.
    """
    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name, p in params.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        flat = p.reshape(-1)
        if p.size and not np.shares_memory(flat, p):
            raise ValueError(f"parameter {name!r} must be a contiguous array")
        idx = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            idx = np.sort(rng.choice(p.size, max_entries, replace=False))
        numeric = np.empty(idx.size)
        for j, k in enumerate(idx):
            old = flat[k]
            flat[k] = old + eps
            f_plus = loss_fn()
            flat[k] = old - eps
            f_minus = loss_fn()
            flat[k] = old
            numeric[j] = (f_plus - f_minus) / (2.0 * eps)
        err = relative_error(a.reshape(-1)[idx], numeric)
        report[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(report, tolerance)


# --------------------------------------------------------------------------- #
# checkpoints
# --------------------------------------------------------------------------- #

CHECKPOINT_MAGIC = b"DRGRCKPT 1\n"


def save_checkpoint(path: str | Path, blocks: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    """Write named float64 blocks to ``path``.

    Layout: the magic line ``DRGRCKPT 1``, one line of JSON
    ``{"meta": {...}, "blocks": [{"name", "shape", "offset"}, ...]}``, then
    the concatenated little-endian float64 values of every block in row-major
    order (``offset`` counts bytes from the start of that payload).
    """
    entries = []
    payload = []
    offset = 0
    for name in blocks:
        arr = np.asarray(blocks[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes(order="C")
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": dict(meta or {}), "blocks": entries}, sort_keys=True)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        for raw in payload:
            fh.write(raw)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    rest = data[len(CHECKPOINT_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl].decode("utf-8"))
    payload = rest[nl + 1:]
    blocks = {}
    for entry in header["blocks"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=entry["offset"])
        blocks[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return blocks, header["meta"]
