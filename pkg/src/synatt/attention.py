"""Gated local/global self-attention layer and its building blocks.

One logits matrix per head feeds two masked softmaxes: the global scores see
a padding-only mask, the local scores a syntax (or window) mask. A per-token
sigmoid gate, shared across heads, mixes the two score distributions row-wise
before the value multiplication. Layer layout is post-norm:
attention -> add & norm -> feed-forward -> add & norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, NumericError
from .masks import AdditiveMask


@dataclass
class LayerParams:
    """One encoder layer: projections, gate, feed-forward, layer norms.

    The attention projections and feed-forward maps carry no bias terms; the
    gate contributes exactly hidden + 1 trainable scalars per layer.
    """

    w_q: Tensor  # (hidden, hidden)
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w_gate: Tensor  # (hidden, 1)
    b_gate: Tensor  # (1,)
    w_ff1: Tensor  # (hidden, 4 * hidden)
    w_ff2: Tensor  # (4 * hidden, hidden)
    ln1_scale: Tensor  # (hidden,)
    ln1_shift: Tensor
    ln2_scale: Tensor
    ln2_shift: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def gate_parameter_count(n_layers: int, hidden: int) -> int:
    """Trainable scalars added by the gate units: one (hidden -> 1) map plus
    a bias per layer."""
    return n_layers * (hidden + 1)


def gate_parameters(n_layers: int, hidden: int) -> list[np.ndarray]:
    """Instantiate just the gate parameters of an n_layers-deep encoder."""
    params = []
    for _ in range(n_layers):
        params.append(np.zeros((hidden, 1)))
        params.append(np.zeros(1))
    return params


def _mask_values(mask) -> np.ndarray:
    return mask.m_vals if isinstance(mask, AdditiveMask) else np.asarray(mask, dtype=np.float64)


def masked_softmax(logits, mask) -> Tensor:
    """Row-stochastic softmax of (logits + mask) over the last axis.

    Masked entries come out as exactly zero probability; each row sums to 1
    up to float64 rounding. Raises NumericError on non-finite logits.
    """
    logits = ad.as_tensor(logits)
    if not np.isfinite(logits.data).all():
        raise NumericError("non-finite attention logits")
    mask_vals = _mask_values(mask)
    if logits.shape[-2:] != mask_vals.shape[-2:]:
        raise DataError(
            f"logits shape {logits.shape} does not match mask shape {mask_vals.shape}"
        )
    return ad.softmax_lastaxis(logits, Tensor(mask_vals))


def attention_logits(h, w_q, w_k, n_heads: int) -> Tensor:
    """Scaled query-key logits for every head: (Q_h K_h^T) / sqrt(d).

    ``h`` is (..., L, hidden); the result is (..., n_heads, L, L) with head h
    using columns [h*d, (h+1)*d) of the projections.
    """
    h = ad.as_tensor(h)
    w_q, w_k = ad.as_tensor(w_q), ad.as_tensor(w_k)
    hidden = w_q.shape[0]
    if h.shape[-1] != hidden:
        raise DataError(f"hidden size mismatch: {h.shape[-1]} vs {hidden}")
    if hidden % n_heads != 0:
        raise DataError(f"hidden {hidden} not divisible by n_heads {n_heads}")
    d = hidden // n_heads
    q = _split_heads(ad.matmul(h, w_q), n_heads)
    k = _split_heads(ad.matmul(h, w_k), n_heads)
    kt = ad.transpose(k, _swap_last_two(k.ndim))
    return ad.mul(ad.matmul(q, kt), 1.0 / math.sqrt(d))


def _swap_last_two(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(..., L, hidden) -> (..., n_heads, L, d)."""
    *lead, L, hidden = x.shape
    d = hidden // n_heads
    x = ad.reshape(x, (*lead, L, n_heads, d))
    ndim = x.ndim
    axes = list(range(ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ad.transpose(x, tuple(axes))


def _merge_heads(x: Tensor) -> Tensor:
    """(..., n_heads, L, d) -> (..., L, n_heads * d)."""
    ndim = x.ndim
    axes = list(range(ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = ad.transpose(x, tuple(axes))
    *lead, L, n_heads, d = x.shape
    return ad.reshape(x, (*lead, L, n_heads * d))


def gate(h, w_gate, b_gate) -> Tensor:
    """Per-token mixing gate sigmoid(h @ w_gate + b_gate), shape (..., L, 1)."""
    return ad.sigmoid(ad.add(ad.matmul(ad.as_tensor(h), ad.as_tensor(w_gate)), ad.as_tensor(b_gate)))


def aggregate(g, s_loc, s_glb, v) -> Tensor:
    """Row-wise score mixture (g * S_loc + (1 - g) * S_glb) applied to values.

    ``g`` broadcasts against the score matrices; a plain length-L vector is
    treated as one gate value per query row.
    """
    g = ad.as_tensor(g)
    s_loc, s_glb, v = ad.as_tensor(s_loc), ad.as_tensor(s_glb), ad.as_tensor(v)
    if g.ndim == 1:
        g = ad.reshape(g, (g.shape[0], 1))
    mixed = ad.add(ad.mul(g, s_loc), ad.mul(ad.sub(Tensor(1.0), g), s_glb))
    return ad.matmul(mixed, v)


class TraceCollector:
    """Accumulates per-layer score matrices and gate values during a forward."""

    def __init__(self):
        self.s_glb: list[np.ndarray] = []  # per layer (B, n_heads, L, L)
        self.s_loc: list[np.ndarray] = []
        self.gates: list[np.ndarray] = []  # per layer (B, L)

    def record(self, s_glb: np.ndarray, s_loc: np.ndarray, g: np.ndarray):
        self.s_glb.append(s_glb.copy())
        self.s_loc.append(s_loc.copy())
        self.gates.append(g.copy())


def sla_layer_forward(
    h,
    params: LayerParams,
    m_glb,
    m_loc,
    n_heads: int,
    trace: TraceCollector | None = None,
) -> Tensor:
    """One encoder layer over hidden states ``h`` of shape (B, L, hidden).

    A 2D input (L, hidden) is treated as a batch of one. Masks may be
    AdditiveMask objects, (L, L) arrays, or batched (B, L, L) arrays.
    """
    h = ad.as_tensor(h)
    squeeze = h.ndim == 2
    if squeeze:
        h = ad.reshape(h, (1, *h.shape))
    B, L, hidden = h.shape
    if hidden % n_heads != 0:
        raise DataError(f"hidden {hidden} not divisible by n_heads {n_heads}")
    d = hidden // n_heads

    glb_vals = _broadcast_mask(_mask_values(m_glb), B, L)
    loc_vals = _broadcast_mask(_mask_values(m_loc), B, L)

    logits = attention_logits(h, params.w_q, params.w_k, n_heads)  # (B, nh, L, L)
    s_glb = masked_softmax(logits, glb_vals)
    s_loc = masked_softmax(logits, loc_vals)

    g = gate(h, params.w_gate, params.b_gate)  # (B, L, 1)
    g_rows = ad.reshape(g, (B, 1, L, 1))  # one gate per query row, all heads

    v = _split_heads(ad.matmul(h, params.w_v), n_heads)  # (B, nh, L, d)
    context = _merge_heads(aggregate(g_rows, s_loc, s_glb, v))  # (B, L, hidden)
    attn_out = ad.matmul(context, params.w_o)

    h1 = ad.layer_norm(ad.add(h, attn_out), params.ln1_scale, params.ln1_shift)
    ff = ad.matmul(ad.gelu(ad.matmul(h1, params.w_ff1)), params.w_ff2)
    out = ad.layer_norm(ad.add(h1, ff), params.ln2_scale, params.ln2_shift)

    if trace is not None:
        trace.record(s_glb.data, s_loc.data, g.data[..., 0])
    if squeeze:
        out = ad.reshape(out, (L, hidden))
    return out


def _broadcast_mask(vals: np.ndarray, B: int, L: int) -> np.ndarray:
    """Normalize mask values to (B, 1, L, L) for broadcasting over heads."""
    if vals.ndim == 2:
        vals = vals[None, :, :]
    if vals.shape != (B, L, L) and vals.shape != (1, L, L):
        raise DataError(f"mask shape {vals.shape} incompatible with batch ({B}, {L})")
    return vals[:, None, :, :]
