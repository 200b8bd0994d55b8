"""Per-agent temporal encoder.

Conv1D + position-wise MLP embedding, sinusoidal positions, a stack of
pre-norm self-attention blocks over time, then an LSTM whose final hidden
and cell states summarize each agent. Agents never exchange information here.
"""

from dataclasses import dataclass

import numpy as np

from gatraj.autodiff import Tensor, conv1d, dropout, softmax
from gatraj.autodiff.tensor import ShapeError
from gatraj.nn import LSTM, MLP, LayerNorm, Linear, Module, _uniform


def positional_encoding(length, dim):
    """PE[pos, 2i] = sin(pos / 10000^(2i/dim)), PE[pos, 2i+1] = cos(same)."""
    if dim % 2:
        raise ValueError(f"positional encoding needs an even width, got {dim}")
    pos = np.arange(length)[:, None]
    freq = 10000.0 ** (np.arange(0, dim, 2) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


class Embedding(Module):
    def __init__(self, n_in, dim, rng, kernel=3):
        self.conv_weight = _uniform(rng, (kernel, n_in, dim), kernel * n_in, "conv_weight")
        self.conv_bias = _uniform(rng, (dim,), kernel * n_in, "conv_bias")
        self.mlp = MLP([dim, dim, dim], rng)

    def __call__(self, x):
        if x.shape[1] < 1:
            raise ShapeError("embed: need at least two observed steps (one offset)")
        return self.mlp(conv1d(x, self.conv_weight, self.conv_bias).relu())


class SelfAttention(Module):
    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ValueError(f"width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def __call__(self, x, return_weights=False):
        n, s, d = x.shape
        hd = d // self.heads

        def split(t):
            return t.reshape(n, s, self.heads, hd).transpose(0, 2, 1, 3)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        weights = softmax(q @ k.transpose(0, 1, 3, 2) * (1.0 / np.sqrt(hd)), axis=-1)
        mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(n, s, d)
        out = self.out(mixed)
        return (out, weights) if return_weights else out


class TransformerBlock(Module):
    """Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x))."""

    def __init__(self, dim, heads, ff_width, rng):
        self.norm1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP([dim, ff_width, dim], rng)

    def __call__(self, x, dropout_rate=0.0, rng=None, return_weights=False):
        attended, weights = self.attn(self.norm1(x), return_weights=True)
        x = x + dropout(attended, dropout_rate, rng)
        x = x + dropout(self.ffn(self.norm2(x)), dropout_rate, rng)
        return (x, weights) if return_weights else x


@dataclass
class EncoderState:
    h: Tensor  # [N, D]
    c: Tensor  # [N, D]
    sequence_features: Tensor  # [N, S, D]


class TemporalEncoder(Module):
    def __init__(self, n_in, dim, heads, n_blocks, ff_width, rng, use_attention=True):
        self.embed = Embedding(n_in, dim, rng)
        self.blocks = [TransformerBlock(dim, heads, ff_width, rng) for _ in range(n_blocks)] if use_attention else []
        self.lstm = LSTM(dim, dim, rng)
        self.dim = dim

    def __call__(self, inputs, dropout_rate=0.0, rng=None) -> EncoderState:
        x = self.embed(inputs)
        n, s, _ = x.shape
        if self.blocks:
            # Positions are added once, below the first block.
            x = x + Tensor(positional_encoding(s, self.dim))
            for block in self.blocks:
                x = block(x, dropout_rate, rng)
        h, c = self.lstm.zero_state(n)
        x_proj = self.lstm.project(x)  # all steps in one matmul
        for t in range(s):
            h, c = self.lstm.step_projected(x_proj[:, t, :], h, c)
        return EncoderState(h, c, x)


def encode(inputs, encoder, **kwargs) -> EncoderState:
    """Encode per-agent input sequences [N, T-1, C] into final LSTM states."""
    if not isinstance(inputs, Tensor):
        inputs = Tensor(inputs)
    return encoder(inputs, **kwargs)


__all__ = [
    "Embedding",
    "EncoderState",
    "SelfAttention",
    "TemporalEncoder",
    "TransformerBlock",
    "encode",
    "positional_encoding",
]
