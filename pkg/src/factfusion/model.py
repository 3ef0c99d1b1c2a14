"""The full verification network.

Four input streams — claim text (CT), claim image (CI), document text (DT),
document image (DI) — arrive as backbone embedding sequences. Image streams
pass through the adapter-augmented backbone tail (tail_text_streams extends
it to the text streams), every stream through its own embedding layer, all
pairs through the co-attention stack, and the concatenated fusion vector
(plus the 32 statistical text features) through the classifier head.

The text-only ablation keeps just CT/DT, their single pairing, and drops the
feature vector; without tail_text_streams it therefore has no tail at all.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .autograd import ShapeError, Tensor, concat, stack_rows
from .classifier import ClassifierHead
from .config import RunConfig
from .data import LABELS
from .embedding import BackboneTail, StreamEmbedder
from .features import FEATURE_DIM
from .fusion import STREAM_ORDER, FusionStack
from .tensor_io import read_checkpoint, write_checkpoint

TEXT_STREAMS = ("CT", "DT")
IMAGE_STREAMS = ("CI", "DI")


class VerificationModel:
    def __init__(
        self,
        config: RunConfig,
        backbone_dim: int,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        self.config = config
        self.backbone_dim = backbone_dim
        # The stock d=256 / heads=12 pairing passes range validation so it
        # can be printed and audited, but no model can be built from it.
        if config.d % config.heads != 0:
            raise ValueError(
                f"model width {config.d} must be a positive multiple of "
                f"heads={config.heads}"
            )
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.streams = TEXT_STREAMS if config.text_only else STREAM_ORDER
        self.use_features = not config.text_only
        tailed = IMAGE_STREAMS + (TEXT_STREAMS if config.tail_text_streams else ())
        self.tail_streams = tuple(s for s in self.streams if s in tailed)
        self.tail = (
            BackboneTail(
                backbone_dim, rng, trainable_scope=config.adapter_scope, dtype=dtype
            )
            if self.tail_streams
            else None
        )
        self.embedders = {
            s: StreamEmbedder(s, backbone_dim, config.d, rng, dtype=dtype)
            for s in self.streams
        }
        self.fusion = FusionStack(
            config.d,
            config.heads,
            config.ff_inner,
            rng,
            dropout_rate=config.dropout,
            full_width_scaling=config.full_width_scaling,
            streams=self.streams,
            dtype=dtype,
        )
        self.feature_dim = FEATURE_DIM if self.use_features else 0
        self.in_dim = self.fusion.vector_width(config.aggregation) + self.feature_dim
        self.head = ClassifierHead(
            self.in_dim, config.d_m, len(LABELS), rng,
            dropout_rate=config.dropout, dtype=dtype,
        )

    def forward_sample(
        self,
        tensors: dict,
        features: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """One sample's fusion vector, features appended when enabled."""
        embedded = {}
        for s in self.streams:
            x = tensors[s]
            if s in self.tail_streams:
                x = self.tail(x)
            embedded[s] = self.embedders[s](x)
        fused = self.fusion.fuse(
            embedded,
            training=training,
            rng=rng,
            aggregation=self.config.aggregation,
        )
        vec = fused.concatenated()
        if self.use_features:
            if features is None:
                raise ValueError(
                    f"model expects a {FEATURE_DIM}-wide feature vector per sample"
                )
            feat = Tensor.constant(np.asarray(features), dtype=vec.dtype)
            vec = concat([vec, feat], axis=0)
        return vec

    def forward_batch(
        self,
        batch: Sequence[dict],
        features: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, Tensor]:
        """Class probabilities and classifier hidden states for a batch."""
        vecs = [
            self.forward_sample(
                tensors,
                features[i] if features is not None else None,
                training=training,
                rng=rng,
            )
            for i, tensors in enumerate(batch)
        ]
        return self.head(stack_rows(vecs), training=training, rng=rng)

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.tail.parameters()) if self.tail is not None else {}
        for emb in self.embedders.values():
            out.update(emb.parameters())
        out.update(self.fusion.parameters())
        out.update(self.head.parameters())
        return out

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.parameters().items() if v.requires_grad}

    def param_groups(self) -> list:
        """Two optimizer groups: backbone tail at its own rate, rest at the primary."""
        tail = (
            list(self.tail.trainable_parameters().values())
            if self.tail is not None
            else []
        )
        tail_ids = {id(p) for p in tail}
        rest = [
            p for p in self.trainable_parameters().values() if id(p) not in tail_ids
        ]
        groups = []
        if tail:
            groups.append({"params": tail, "lr": self.config.tail_learning_rate})
        groups.append({"params": rest, "lr": self.config.learning_rate})
        return groups

    def save(self, path, extra_entries: Optional[dict] = None) -> None:
        entries = {name: t.data for name, t in self.parameters().items()}
        if extra_entries:
            entries.update(extra_entries)
        write_checkpoint(path, entries)

    def load_state(self, entries: dict) -> None:
        for name, param in self.parameters().items():
            if name not in entries:
                raise ValueError(f"checkpoint is missing parameter {name!r}")
            stored = np.asarray(entries[name])
            if stored.shape != param.data.shape:
                raise ShapeError(
                    f"parameter {name!r}: checkpoint shape {stored.shape} does not "
                    f"match model shape {param.data.shape}"
                )
            param.data = stored.astype(param.data.dtype, copy=True)

    @classmethod
    def from_checkpoint(
        cls, path, config: RunConfig, backbone_dim: int
    ) -> tuple["VerificationModel", dict]:
        """Rebuilt model plus the raw checkpoint entries (for scaler state)."""
        entries = read_checkpoint(path)
        model = cls(config, backbone_dim)
        model.load_state(entries)
        return model, entries
