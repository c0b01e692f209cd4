"""Hierarchical feature transformer.

One encoder layer fuses the shallow and middle similarity maps (both carrying
a learnable positional table) and gates the result with a modulation layer;
a stack of decoder layers then queries the deep map, which carries no
positional information, against the encoder memory.

All tensors are ``(..., L, C)`` with ``L = W*H`` locations.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import FFN, LayerNorm, Linear, Module
from .tensor import Parameter, Tensor

VARIANTS = ("hft", "ft", "ot", "baseline")


def attention(q, k, v, return_weights=False):
    """Softmax(q k^T / sqrt(c)) v with ``c`` the query width."""
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = T.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    weights = T.softmax(scores, axis=-1)
    out = T.matmul(weights, v)
    return (out, weights) if return_weights else out


class MultiHeadAttention(Module):
    """Cat(a^1..a^N) W_c with a^j = Att(Q W1^j, K W2^j, V W3^j).

    The per-head projections are stored side by side: columns
    ``j*C_d:(j+1)*C_d`` of ``w_q`` are W1^j, and likewise for keys/values.
    """

    def __init__(self, dim, heads, rng):
        if heads < 1 or dim % heads:
            raise ConfigError(f"{heads} heads do not divide width {dim}")
        self.heads = heads
        self.w_q = Linear(dim, dim, rng, bias=False)
        self.w_k = Linear(dim, dim, rng, bias=False)
        self.w_v = Linear(dim, dim, rng, bias=False)
        self.w_c = Linear(dim, dim, rng, bias=False)

    def _split(self, x):
        # (..., L, C) -> (..., N, L, C_d)
        *lead, n, c = x.shape
        x = x.reshape(tuple(lead) + (n, self.heads, c // self.heads))
        return x.swapaxes(-2, -3)

    def __call__(self, q, k, v):
        for x in (q, k, v):
            if x.shape[-1] != self.w_q.weight.shape[0]:
                raise ShapeError(f"input width {x.shape[-1]} != {self.w_q.weight.shape[0]}")
        a = attention(self._split(self.w_q(q)), self._split(self.w_k(k)), self._split(self.w_v(v)))
        a = a.swapaxes(-2, -3)
        *lead, n, h, cd = a.shape
        return self.w_c(a.reshape(tuple(lead) + (n, h * cd)))


class EncoderState(NamedTuple):
    me1: Tensor
    me2: Tensor
    me3: Tensor
    me4: Tensor
    w_prime: Tensor
    gamma1: Tensor


class Modulation(Module):
    """Channel-gated residual: me3 + gamma1 * W' * me3.

    W' = F(Cat(me3, m4')) * FFN(GAP(m4')), where F is a 1x1 projection from
    2C back to C and the GAP branch yields one gate per channel broadcast
    over all locations. Products are elementwise.
    """

    def __init__(self, dim, hidden, rng):
        self.fuse = Linear(2 * dim, dim, rng)
        self.gate = FFN(dim, hidden, rng)
        self.gamma1 = Parameter(np.zeros(()))

    def weight(self, me3, m4p):
        fused = self.fuse(T.concat([me3, m4p], axis=-1))
        gap = T.mean(m4p, axis=-2, keepdims=True)
        return fused * self.gate(gap)

    def __call__(self, me3, m4p, return_weight=False):
        if me3.shape != m4p.shape:
            raise ShapeError(f"modulation inputs differ: {me3.shape} vs {m4p.shape}")
        w = self.weight(me3, m4p)
        out = me3 + self.gamma1 * (w * me3)
        return (out, w) if return_weight else out


class Encoder(Module):
    def __init__(self, dim, heads, hidden, rng, modulate=True):
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.modulation = Modulation(dim, hidden, rng) if modulate else None
        self.ffn = FFN(dim, hidden, rng)
        self.norm3 = LayerNorm(dim)

    def states(self, m3p, m4p) -> tuple[Tensor, EncoderState]:
        if m3p.shape != m4p.shape:
            raise ShapeError(f"encoder inputs differ: {m3p.shape} vs {m4p.shape}")
        me1 = self.norm1(m3p + m4p)
        me2 = self.attn(me1, me1, m3p)
        me3 = self.norm2(m3p + me2)
        if self.modulation is not None:
            me4, w = self.modulation(me3, m4p, return_weight=True)
            gamma = self.modulation.gamma1
        else:
            me4, w, gamma = me3, None, None
        out = self.norm3(self.ffn(me4) + me4)
        return out, EncoderState(me1, me2, me3, me4, w, gamma)

    def __call__(self, m3p, m4p):
        return self.states(m3p, m4p)[0]


class DecoderLayer(Module):
    """Post-norm layer: self-attention, cross-attention on memory, FFN."""

    def __init__(self, dim, heads, hidden, rng):
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = FFN(dim, hidden, rng)
        self.norm3 = LayerNorm(dim)

    def __call__(self, x, memory):
        x = self.norm1(x + self.self_attn(x, x, x))
        x = self.norm2(x + self.cross_attn(x, memory, memory))
        return self.norm3(x + self.ffn(x))


class Decoder(Module):
    def __init__(self, dim, heads, hidden, rng, layers=2):
        self.layers = [DecoderLayer(dim, heads, hidden, rng) for _ in range(layers)]

    def __call__(self, query, memory):
        if query.shape[-2:] != memory.shape[-2:]:
            raise ShapeError(f"decoder query {query.shape} vs memory {memory.shape}")
        x = query
        for layer in self.layers:
            x = layer(x, memory)
        return x


class HierarchicalTransformer(Module):
    """Encoder/decoder stack with the ablation switches.

    ``variant``:
      * ``hft`` - full model (modulation on, deep map as decoder query)
      * ``ft``  - modulation layer removed
      * ``ot``  - plain transformer: no modulation, and the decoder query is a
        learned object-query table, so the deep map is unused
    ``decoder_pe`` adds the positional table to the deep map as well.
    """

    def __init__(self, dim, locations, rng, heads=4, ffn_mult=2, decoder_layers=2,
                 variant="hft", decoder_pe=False):
        if variant not in ("hft", "ft", "ot"):
            raise ConfigError(f"unknown transformer variant {variant!r}")
        hidden = ffn_mult * dim
        self.variant = variant
        self.decoder_pe = decoder_pe
        self.pe = Parameter(rng.standard_normal((locations, dim)) * 0.1)
        self.encoder = Encoder(dim, heads, hidden, rng, modulate=variant == "hft")
        self.decoder = Decoder(dim, heads, hidden, rng, layers=decoder_layers)
        if variant == "ot":
            self.query = Parameter(rng.standard_normal((locations, dim)) * 0.1)

    def encode(self, m3, m4):
        if m3.shape[-2:] != self.pe.shape or m4.shape[-2:] != self.pe.shape:
            raise ShapeError(f"maps {m3.shape}/{m4.shape} do not match positional table {self.pe.shape}")
        return self.encoder(m3 + self.pe, m4 + self.pe)

    def decode(self, m5, memory):
        if self.variant == "ot":
            query = T.as_tensor(self.query) + T.Tensor(np.zeros(memory.shape))
        else:
            query = m5 + self.pe if self.decoder_pe else m5
        return self.decoder(query, memory)

    def __call__(self, m3, m4, m5):
        return self.decode(m5, self.encode(m3, m4))
