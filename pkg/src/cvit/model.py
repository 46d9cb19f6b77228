"""Contextual vision transformer for next-hour risk maps.

Pipeline: patchify -> patch embedding -> prepend regression token -> add the
sinusoidal position table -> post-norm encoder layers -> regression-token
output, concatenated with the context embedding -> 2-layer head -> I x J map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Iterator

import numpy as np

from cvit import tensor as tn
from cvit.context import CONTEXT_DIM
from cvit.tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    rows: int = 20
    cols: int = 20
    channels: int = 7
    patch: int = 5
    dim: int = 64
    heads: int = 8
    layers: int = 6
    ffn_hidden: int = 256
    head_hidden: int = 128
    context_dim: int = CONTEXT_DIM

    def __post_init__(self):
        if self.rows % self.patch or self.cols % self.patch:
            raise ValueError(f"grid {self.rows}x{self.cols} not divisible by patch size {self.patch}")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.dim % 2:
            raise ValueError("dim must be even for the sinusoidal position table")

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols // self.patch**2

    @property
    def patch_len(self) -> int:
        return self.channels * self.patch**2

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


def closed_form_param_count(cfg: ModelConfig) -> int:
    d = cfg.dim
    linear = lambda i, o: i * o + o  # noqa: E731
    per_layer = 4 * linear(d, d) + linear(d, cfg.ffn_hidden) + linear(cfg.ffn_hidden, d) + 4 * d
    return (
        linear(cfg.patch_len, d)
        + d  # regression token
        + linear(cfg.channels * cfg.context_dim, d)
        + cfg.layers * per_layer
        + linear(2 * d, cfg.head_hidden)
        + linear(cfg.head_hidden, cfg.rows * cfg.cols)
    )


# ---------------------------------------------------------------- building blocks


def patchify(x, patch: int):
    """(..., T, I, J) -> (..., N, T*P*P).

    Patch ``n = r * (J // P) + c`` covers rows ``[rP, (r+1)P)`` and cols
    ``[cP, (c+1)P)``; each patch is flattened in (channel, row, col) order.
    Works on numpy arrays and on tensors.
    """
    shape = x.shape
    lead, (t, i, j) = shape[:-3], shape[-3:]
    if i % patch or j % patch:
        raise ValueError(f"grid {i}x{j} not divisible by patch size {patch}")
    gr, gc = i // patch, j // patch
    k = len(lead)
    split = (*lead, t, gr, patch, gc, patch)
    axes = (*range(k), k + 1, k + 3, k, k + 2, k + 4)
    out = (*lead, gr * gc, t * patch * patch)
    if isinstance(x, Tensor):
        return x.reshape(split).transpose(*axes).reshape(out)
    return np.asarray(x).reshape(split).transpose(axes).reshape(out)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal table: even slots sin(a / 10000^(2k/D)), odd slots cos(...)."""
    if dim % 2:
        raise ValueError("dim must be even")
    pos = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * k / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes; returns (output, weights)."""
    d_k = q.shape[-1]
    scores = tn.matmul(q, k.transpose(*range(k.data.ndim - 2), k.data.ndim - 1, k.data.ndim - 2))
    weights = tn.softmax(scores * (1.0 / math.sqrt(d_k)), axis=-1)
    return tn.matmul(weights, v), weights


def linear(x: Tensor, params: dict[str, Tensor], name: str) -> Tensor:
    return x @ params[name + ".weight"] + params[name + ".bias"]


def multi_head_attention(x: Tensor, params: dict[str, Tensor], prefix: str, heads: int):
    """Self-attention over the token axis of ``x`` (B, S, D); returns (output, weights)."""
    b, s, d = x.shape
    dk = d // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(b, s, heads, dk).transpose(0, 2, 1, 3)

    q = split(linear(x, params, prefix + ".wq"))
    k = split(linear(x, params, prefix + ".wk"))
    v = split(linear(x, params, prefix + ".wv"))
    out, weights = scaled_dot_product_attention(q, k, v)
    out = out.transpose(0, 2, 1, 3).reshape(b, s, d)
    return linear(out, params, prefix + ".wo"), weights


# ---------------------------------------------------------------- model


class CvitModel:
    """Parameter container plus forward pass.

    ``params`` maps dotted names to leaf tensors; linear weights are stored
    (in, out) so a layer is ``x @ W + b``.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        self.config = config
        self.pos_encoding = positional_encoding(config.n_patches + 1, config.dim)
        self.params: dict[str, Tensor] = {}
        self.last_attention: list[np.ndarray] = []
        rng = np.random.Generator(np.random.Philox(seed))
        c, d = config, config.dim

        def lin(name, fan_in, fan_out):
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name + ".weight"] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
            self.params[name + ".bias"] = Tensor(rng.uniform(-bound, bound, fan_out), requires_grad=True)

        lin("patch_embed", c.patch_len, d)
        self.params["reg_token"] = Tensor(np.zeros(d), requires_grad=True)
        lin("context_embed", c.channels * c.context_dim, d)
        for i in range(c.layers):
            p = f"layers.{i}"
            for w in ("wq", "wk", "wv", "wo"):
                lin(f"{p}.attn.{w}", d, d)
            lin(f"{p}.ffn.fc1", d, c.ffn_hidden)
            lin(f"{p}.ffn.fc2", c.ffn_hidden, d)
            for ln in ("ln1", "ln2"):
                self.params[f"{p}.{ln}.gain"] = Tensor(np.ones(d), requires_grad=True)
                self.params[f"{p}.{ln}.bias"] = Tensor(np.zeros(d), requires_grad=True)
        lin("head.fc1", 2 * d, c.head_hidden)
        lin("head.fc2", c.head_hidden, c.rows * c.cols)

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) - set(state)
            extra = set(state) - set(self.params)
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{k}: expected shape {t.shape}, got {arr.shape}")
            t.data = arr.copy()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def embed_patches(self, history) -> Tensor:
        """(B, T, I, J) -> patch embeddings (B, N, D)."""
        return linear(patchify(tn.as_tensor(history), self.config.patch), self.params, "patch_embed")

    def encode_tokens(self, tokens: Tensor, pos_encoding: np.ndarray | None = None) -> Tensor:
        """Prepend the regression token, add positions, run the encoder stack -> (B, N+1, D)."""
        c, p = self.config, self.params
        pe = self.pos_encoding if pos_encoding is None else pos_encoding
        b = tokens.shape[0]
        reg = p["reg_token"].reshape(1, 1, c.dim) * np.ones((b, 1, 1))
        x = tn.concat([reg, tokens], axis=1) + pe
        self.last_attention = []
        for i in range(c.layers):
            pre = f"layers.{i}"
            attn, weights = multi_head_attention(x, p, pre + ".attn", c.heads)
            self.last_attention.append(weights.data)
            x = tn.layer_norm(x + attn, p[pre + ".ln1.gain"], p[pre + ".ln1.bias"])
            ffn = linear(tn.relu(linear(x, p, pre + ".ffn.fc1")), p, pre + ".ffn.fc2")
            x = tn.layer_norm(x + ffn, p[pre + ".ln2.gain"], p[pre + ".ln2.bias"])
        return x

    def forward(self, history, context) -> Tensor:
        """Standardized history (B, T, I, J) + encoded context (B, T, F) -> (B, I, J).

        Unbatched inputs (T, I, J) / (T, F) give a (I, J) output.
        """
        c, p = self.config, self.params
        history = np.asarray(history.data if isinstance(history, Tensor) else history, dtype=np.float64)
        context = np.asarray(context.data if isinstance(context, Tensor) else context, dtype=np.float64)
        single = history.ndim == 3
        if single:
            history, context = history[None], context[None]
        if history.shape[1:] != (c.channels, c.rows, c.cols):
            raise ValueError(f"history shape {history.shape[1:]} != {(c.channels, c.rows, c.cols)}")
        if context.shape[1:] != (c.channels, c.context_dim) or context.shape[0] != history.shape[0]:
            raise ValueError(f"context shape {context.shape} does not match config / batch")
        b = history.shape[0]
        reg_out = self.encode_tokens(self.embed_patches(history))[:, 0, :]
        ctx = linear(Tensor(context.reshape(b, -1)), p, "context_embed")
        h = tn.relu(linear(tn.concat([reg_out, ctx], axis=1), p, "head.fc1"))
        out = linear(h, p, "head.fc2").reshape(b, c.rows, c.cols)
        return out[0] if single else out

    __call__ = forward
