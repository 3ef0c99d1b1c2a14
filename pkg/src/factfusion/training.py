"""Training loop and checkpoint evaluation.

Batches are built by sorting samples by their longest stream and chunking,
which bounds padding waste; only the chunk order is reshuffled each epoch,
with the run seed. Two optimizer groups run at different rates: the backbone
tail at tail_learning_rate, everything else at learning_rate. Per-step loss
components are appended to a JSON-lines log, and the checkpoint with the best
validation weighted F1 is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .autograd import Tensor
from .classifier import LossConfig, total_loss
from .config import RunConfig
from .data import LABEL_TO_INDEX, DatasetManifest, ingest, load_manifest
from .ensemble import ProbMatrix
from .features import FeatureScaler, raw_feature_vector
from .metrics import confusion_matrix, weighted_f1
from .model import VerificationModel
from .optim import Adam

ManifestLike = Union[str, Path, DatasetManifest]


@dataclass
class TrainResult:
    checkpoint: str
    prob_matrix: ProbMatrix
    best_f1: float
    best_epoch: int
    history: list
    log_path: str


@dataclass
class EvalResult:
    prob_matrix: ProbMatrix
    f1: Optional[float] = None
    per_class: Optional[np.ndarray] = None
    confusion: Optional[np.ndarray] = None


def _resolve(manifest: ManifestLike) -> DatasetManifest:
    if manifest is None:
        raise ValueError("no manifest given (set train/val manifest paths)")
    if isinstance(manifest, DatasetManifest):
        return manifest
    return load_manifest(manifest)


def _labels_of(data: list) -> np.ndarray:
    missing = [rec.sample_id for rec, _ in data if rec.label is None]
    if missing:
        raise ValueError(f"unlabeled samples: {missing[:3]}")
    return np.array([LABEL_TO_INDEX[rec.label] for rec, _ in data])


def _scaled_features(
    data: list, scaler: FeatureScaler, dtype=np.float32
) -> np.ndarray:
    rows = [scaler.transform(raw_feature_vector(rec)) for rec, _ in data]
    return np.asarray(rows, dtype=dtype)


def _as_tensors(arrays: dict) -> dict:
    return {s: Tensor.constant(a) for s, a in arrays.items()}


def _sorted_chunks(data: list, batch_size: int) -> list:
    order = sorted(
        range(len(data)),
        key=lambda i: (max(a.shape[0] for a in data[i][1].values()), i),
    )
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _predict_probs(
    model: VerificationModel,
    data: list,
    features: Optional[np.ndarray],
    batch_size: int,
) -> np.ndarray:
    out = []
    for start in range(0, len(data), batch_size):
        idx = range(start, min(start + batch_size, len(data)))
        batch = [_as_tensors(data[i][1]) for i in idx]
        feats = features[list(idx)] if features is not None else None
        probs, _ = model.forward_batch(batch, feats, training=False)
        out.append(probs.data.astype(np.float64))
    return np.vstack(out)


def train(
    config: RunConfig,
    train_manifest: Optional[ManifestLike] = None,
    val_manifest: Optional[ManifestLike] = None,
    run_dir: Optional[str] = None,
    model_id: Optional[str] = None,
) -> TrainResult:
    train_man = _resolve(train_manifest if train_manifest is not None else config.train_manifest)
    val_man = _resolve(val_manifest if val_manifest is not None else config.val_manifest)
    run_path = Path(run_dir if run_dir is not None else config.out_dir)
    run_path.mkdir(parents=True, exist_ok=True)
    model_id = model_id or f"seed{config.seed}"

    train_data = list(ingest(train_man, config.max_seq_len))
    val_data = list(ingest(val_man, config.max_seq_len))
    if not train_data or not val_data:
        raise ValueError("training needs non-empty train and validation manifests")
    train_labels = _labels_of(train_data)
    val_labels = _labels_of(val_data)
    backbone_dim = train_data[0][1]["CI"].shape[1]

    scaler = None
    train_feats = val_feats = None
    if not config.text_only:
        scaler = FeatureScaler.fit(raw_feature_vector(rec) for rec, _ in train_data)
        train_feats = _scaled_features(train_data, scaler)
        val_feats = _scaled_features(val_data, scaler)

    init_ss, drop_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(3)
    model = VerificationModel(config, backbone_dim, rng=np.random.default_rng(init_ss))
    dropout_rng = np.random.default_rng(drop_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    optimizer = Adam(model.param_groups())
    loss_cfg = LossConfig(alpha=config.alpha, tau=config.tau)
    # A stranded 1-sample batch cannot form contrastive pairs; it trains on
    # cross entropy alone.
    ce_only = LossConfig(alpha=1.0, tau=config.tau)

    chunks = _sorted_chunks(train_data, config.batch_size)
    ckpt_path = run_path / "checkpoint.pcfc"
    log_path = run_path / "train_log.jsonl"
    history = []
    best_f1, best_epoch = -1.0, -1
    best_probs = None
    step = 0

    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, config.epochs + 1):
            order = list(range(len(chunks)))
            shuffle_rng.shuffle(order)
            epoch_total = 0.0
            for ci in order:
                chunk = chunks[ci]
                batch = [_as_tensors(train_data[i][1]) for i in chunk]
                feats = train_feats[chunk] if train_feats is not None else None
                cfg = loss_cfg if len(chunk) > 1 else ce_only
                probs, hidden = model.forward_batch(
                    batch, feats, training=True, rng=dropout_rng
                )
                parts = total_loss(probs, hidden, train_labels[chunk], cfg)
                values = {
                    "total": float(parts.total.data),
                    "ce": float(parts.cross_entropy.data),
                    "supcon": float(parts.contrastive.data),
                }
                if not np.isfinite(values["total"]):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} step {step}: "
                        f"total={values['total']}, ce={values['ce']}, "
                        f"supcon={values['supcon']}"
                    )
                optimizer.zero_grad()
                parts.total.backward()
                optimizer.step()
                log.write(json.dumps({"epoch": epoch, "step": step, **values}) + "\n")
                epoch_total += values["total"] * len(chunk)
                step += 1

            val_probs = _predict_probs(model, val_data, val_feats, config.batch_size)
            f1, _ = weighted_f1(val_labels, val_probs.argmax(axis=1), len(LABEL_TO_INDEX))
            history.append(
                {
                    "epoch": epoch,
                    "train_loss": epoch_total / len(train_data),
                    "val_f1": f1,
                }
            )
            if f1 > best_f1:
                best_f1, best_epoch = f1, epoch
                best_probs = val_probs
                extra = scaler.entries() if scaler is not None else None
                model.save(ckpt_path, extra_entries=extra)
                _write_meta(ckpt_path, config, backbone_dim, best_epoch, best_f1)

    matrix = ProbMatrix(
        model_id=model_id,
        sample_ids=[rec.sample_id for rec, _ in val_data],
        probs=best_probs,
    )
    matrix.save(run_path / "val_probs.csv")
    return TrainResult(
        checkpoint=str(ckpt_path),
        prob_matrix=matrix,
        best_f1=best_f1,
        best_epoch=best_epoch,
        history=history,
        log_path=str(log_path),
    )


def _write_meta(
    ckpt_path: Path, config: RunConfig, backbone_dim: int, epoch: int, f1: float
) -> None:
    meta = {
        "config": config.to_dict(),
        "backbone_dim": backbone_dim,
        "best_epoch": epoch,
        "best_f1": f1,
    }
    Path(str(ckpt_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )


def evaluate(
    checkpoint: Union[str, Path],
    manifest: ManifestLike,
    model_id: Optional[str] = None,
) -> EvalResult:
    ckpt = Path(checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"missing checkpoint file {ckpt}")
    meta_path = Path(str(ckpt) + ".meta.json")
    if not meta_path.is_file():
        raise FileNotFoundError(f"missing checkpoint metadata {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    config = RunConfig(**meta["config"])
    model, entries = VerificationModel.from_checkpoint(
        ckpt, config, meta["backbone_dim"]
    )

    data = list(ingest(_resolve(manifest), config.max_seq_len))
    if not data:
        raise ValueError("cannot evaluate an empty manifest")
    feats = None
    if not config.text_only:
        scaler = FeatureScaler.from_entries(entries)
        feats = _scaled_features(data, scaler)

    probs = _predict_probs(model, data, feats, config.batch_size)
    matrix = ProbMatrix(
        model_id=model_id or ckpt.stem,
        sample_ids=[rec.sample_id for rec, _ in data],
        probs=probs,
    )
    if any(rec.label is None for rec, _ in data):
        return EvalResult(prob_matrix=matrix)
    labels = _labels_of(data)
    preds = probs.argmax(axis=1)
    conf = confusion_matrix(labels, preds, len(LABEL_TO_INDEX))
    f1, per_class = weighted_f1(labels, preds, len(LABEL_TO_INDEX))
    return EvalResult(prob_matrix=matrix, f1=f1, per_class=per_class, confusion=conf)
