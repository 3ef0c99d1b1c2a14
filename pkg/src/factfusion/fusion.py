"""Multi-modal multi-type fusion: six shared-weight co-attention blocks.

Fixed pairing order (claim/document x image/text):

    1 (CI, DI)   2 (CT, DT)   3 (CI, DT)
    4 (CI, CT)   5 (DI, CT)   6 (DI, DT)

Each block holds ONE set of Q/K/V projections, feed-forward weights and two
layer norms, reused for both attention directions. Fusing four streams yields
12 mean-aggregated context vectors (two directions per pairing) plus the 4
mean-aggregated stream embeddings, concatenated downstream in that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autograd import (
    ShapeError,
    Tensor,
    add,
    concat,
    dropout,
    layer_norm,
    matmul,
    mean,
    relu,
    reshape,
    softmax,
    tensor_max,
    transpose,
)
from .embedding import glorot_uniform

PAIRINGS = (
    ("CI", "DI"),
    ("CT", "DT"),
    ("CI", "DT"),
    ("CI", "CT"),
    ("DI", "CT"),
    ("DI", "DT"),
)
STREAM_ORDER = ("CT", "CI", "DT", "DI")
AGGREGATIONS = ("mean", "mean_max_last")


def _key_mask(length: Optional[int], total: int, dtype) -> Optional[np.ndarray]:
    if length is None or length >= total:
        return None
    mask = np.zeros((1, 1, total), dtype=dtype)
    mask[..., length:] = -np.inf
    return mask


class CoAttentionBlock:
    """One co-attention block; weights shared across both directions."""

    def __init__(
        self,
        d: int,
        heads: int,
        ff_inner: int,
        rng: np.random.Generator,
        dropout_rate: float = 0.1,
        full_width_scaling: bool = False,
        dtype=np.float32,
    ):
        if d % heads != 0:
            raise ValueError(f"model width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.dropout_rate = dropout_rate
        # Per-head scores scale by 1/sqrt(d/h); the flag switches to the
        # single-head 1/sqrt(d) convention.
        self.scale = 1.0 / np.sqrt(d if full_width_scaling else self.head_dim)
        self.Wq = Tensor.param(glorot_uniform(rng, d, d, dtype))
        self.Wk = Tensor.param(glorot_uniform(rng, d, d, dtype))
        self.Wv = Tensor.param(glorot_uniform(rng, d, d, dtype))
        self.ffn_W1 = Tensor.param(glorot_uniform(rng, d, ff_inner, dtype))
        self.ffn_b1 = Tensor.param(np.zeros(ff_inner, dtype=dtype))
        self.ffn_W2 = Tensor.param(glorot_uniform(rng, ff_inner, d, dtype))
        self.ffn_b2 = Tensor.param(np.zeros(d, dtype=dtype))
        self.norm1_gain = Tensor.param(np.ones(d, dtype=dtype))
        self.norm1_bias = Tensor.param(np.zeros(d, dtype=dtype))
        self.norm2_gain = Tensor.param(np.ones(d, dtype=dtype))
        self.norm2_bias = Tensor.param(np.zeros(d, dtype=dtype))

    def _split_heads(self, x: Tensor) -> Tensor:
        seq = x.shape[0]
        return transpose(reshape(x, (seq, self.heads, self.head_dim)), (1, 0, 2))

    def _merge_heads(self, x: Tensor) -> Tensor:
        seq = x.shape[1]
        return reshape(transpose(x, (1, 0, 2)), (seq, self.d))

    def _attend(
        self,
        queries: Tensor,
        keys: Tensor,
        values: Tensor,
        key_mask: Optional[np.ndarray],
        training: bool,
        rng: Optional[np.random.Generator],
    ) -> tuple[Tensor, Tensor]:
        scores = matmul(queries, transpose(keys, (0, 2, 1))) * self.scale
        if key_mask is not None:
            scores = add(scores, Tensor.constant(key_mask, dtype=scores.dtype))
        weights = softmax(scores, axis=-1)
        dropped = dropout(weights, self.dropout_rate, rng=rng, training=training)
        return matmul(dropped, values), weights

    def _sublayers(
        self,
        residual: Tensor,
        context: Tensor,
        training: bool,
        rng: Optional[np.random.Generator],
    ) -> Tensor:
        z = layer_norm(add(residual, context), self.norm1_gain, self.norm1_bias)
        h = relu(add(matmul(z, self.ffn_W1), self.ffn_b1))
        h = dropout(h, self.dropout_rate, rng=rng, training=training)
        f = add(matmul(h, self.ffn_W2), self.ffn_b2)
        f = dropout(f, self.dropout_rate, rng=rng, training=training)
        return layer_norm(add(f, z), self.norm2_gain, self.norm2_bias)

    def co_attend(
        self,
        a: Tensor,
        b: Tensor,
        a_len: Optional[int] = None,
        b_len: Optional[int] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        return_weights: bool = False,
    ):
        """Both attention directions of a pair with the same parameters.

        Returns (O_ab, O_ba): O_ab queries a against keys/values of b and
        O_ba the reverse. a_len/b_len mark the valid prefix when the inputs
        are padded; masked key positions receive exactly zero attention.
        """
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != self.d or b.shape[1] != self.d:
            raise ShapeError(
                f"co_attend: inputs {a.shape} / {b.shape} must both have width {self.d}"
            )
        qa, ka, va = (self._split_heads(matmul(a, w)) for w in (self.Wq, self.Wk, self.Wv))
        qb, kb, vb = (self._split_heads(matmul(b, w)) for w in (self.Wq, self.Wk, self.Wv))
        mask_b = _key_mask(b_len, b.shape[0], a.dtype)
        mask_a = _key_mask(a_len, a.shape[0], a.dtype)
        ctx_ab, w_ab = self._attend(qa, kb, vb, mask_b, training, rng)
        ctx_ba, w_ba = self._attend(qb, ka, va, mask_a, training, rng)
        out_ab = self._sublayers(a, self._merge_heads(ctx_ab), training, rng)
        out_ba = self._sublayers(b, self._merge_heads(ctx_ba), training, rng)
        if return_weights:
            return out_ab, out_ba, w_ab, w_ba
        return out_ab, out_ba

    def parameters(self) -> dict[str, Tensor]:
        return {
            "Wq": self.Wq,
            "Wk": self.Wk,
            "Wv": self.Wv,
            "ffn.W1": self.ffn_W1,
            "ffn.b1": self.ffn_b1,
            "ffn.W2": self.ffn_W2,
            "ffn.b2": self.ffn_b2,
            "norm1.gain": self.norm1_gain,
            "norm1.bias": self.norm1_bias,
            "norm2.gain": self.norm2_gain,
            "norm2.bias": self.norm2_bias,
        }


@dataclass
class FusionOutput:
    """12 aggregated context vectors + 4 aggregated stream vectors."""

    contexts: list  # pairing order, (a->b, b->a) per pairing
    streams: list  # STREAM_ORDER

    def all_vectors(self) -> list:
        return self.contexts + self.streams

    def concatenated(self) -> Tensor:
        return concat(self.all_vectors(), axis=0)


def aggregate(x: Tensor, length: Optional[int] = None, mode: str = "mean") -> Tensor:
    """Collapse a [seq x d] tensor to a vector; mean, or mean|max|last stacked."""
    if length is not None and length < x.shape[0]:
        x = x[:length]
    if mode == "mean":
        return mean(x, axis=0)
    if mode == "mean_max_last":
        return concat([mean(x, axis=0), tensor_max(x, axis=0), x[x.shape[0] - 1]], axis=0)
    raise ValueError(f"unknown aggregation {mode!r}")


class FusionStack:
    """The co-attention blocks for every pairing both streams provide."""

    def __init__(
        self,
        d: int,
        heads: int,
        ff_inner: int,
        rng: np.random.Generator,
        dropout_rate: float = 0.1,
        full_width_scaling: bool = False,
        streams: Sequence[str] = STREAM_ORDER,
        dtype=np.float32,
    ):
        self.d = d
        self.streams = tuple(streams)
        self.pairings = tuple(
            (i, pair) for i, pair in enumerate(PAIRINGS)
            if pair[0] in self.streams and pair[1] in self.streams
        )
        self.blocks = {
            i: CoAttentionBlock(
                d, heads, ff_inner, rng, dropout_rate, full_width_scaling, dtype
            )
            for i, _ in self.pairings
        }

    def fuse(
        self,
        embedded: dict[str, Tensor],
        lengths: Optional[dict[str, int]] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        aggregation: str = "mean",
    ) -> FusionOutput:
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        lengths = lengths or {}
        contexts = []
        for i, (sa, sb) in self.pairings:
            out_ab, out_ba = self.blocks[i].co_attend(
                embedded[sa],
                embedded[sb],
                a_len=lengths.get(sa),
                b_len=lengths.get(sb),
                training=training,
                rng=rng,
            )
            contexts.append(aggregate(out_ab, lengths.get(sa), aggregation))
            contexts.append(aggregate(out_ba, lengths.get(sb), aggregation))
        streams = [
            aggregate(embedded[s], lengths.get(s), aggregation)
            for s in STREAM_ORDER
            if s in self.streams
        ]
        return FusionOutput(contexts=contexts, streams=streams)

    def vector_width(self, aggregation: str = "mean") -> int:
        per = self.d if aggregation == "mean" else 3 * self.d
        return (2 * len(self.pairings) + len(self.streams)) * per

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, _ in self.pairings:
            for name, p in self.blocks[i].parameters().items():
                out[f"fusion.pair{i + 1}.{name}"] = p
        return out
