"""Power-weighted probability ensembling and its validation-set tuner.

The blend of M probability matrices is

    S = w_1 * P_1^{N_1} + ... + w_M * P_M^{N_M}

with elementwise powers and no renormalization: the scores only ever feed an
argmax, which is invariant to positive scaling. Four nested variants:

    average   equal weights, all powers 1
    weighted  free weights,  all powers 1
    power     free weights,  one shared power
    unified   free weights,  free powers

Each earlier variant is the next one with parameters tied, so with matching
parameters they blend bit-for-bit identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import weighted_f1_batch

VARIANTS = ("average", "weighted", "power", "unified")
WEIGHT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
POWER_GRID = (0.125, 0.25, 0.5, 1.0, 2.0)
ROW_SUM_TOL = 1e-4
PROB_FLOOR = 1e-12
N_CLASSES = 5


@dataclass
class ProbMatrix:
    """One model's per-sample class probabilities, the unit the blend consumes."""

    model_id: str
    sample_ids: list
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] != N_CLASSES:
            raise ValueError(
                f"{self.model_id}: probability block must be [n x {N_CLASSES}], "
                f"got {self.probs.shape}"
            )
        if len(self.sample_ids) != self.probs.shape[0]:
            raise ValueError(
                f"{self.model_id}: {len(self.sample_ids)} sample ids for "
                f"{self.probs.shape[0]} probability rows"
            )
        sums = self.probs.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(
                f"{self.model_id}: row {bad[0]} sums to {sums[bad[0]]:.6f}, "
                f"outside 1 +/- {ROW_SUM_TOL}"
            )

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    def save(self, path) -> None:
        lines = [f"{self.model_id},{self.n_samples}"]
        for sid, row in zip(self.sample_ids, self.probs):
            lines.append(sid + "," + ",".join(f"{p:.10g}" for p in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ProbMatrix":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty probability file")
        header = lines[0].rsplit(",", 1)
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {lines[0]!r}")
        model_id, declared = header[0], int(header[1])
        ids, rows = [], []
        for line in lines[1:]:
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 1 + N_CLASSES:
                raise ValueError(f"{path}: malformed row {line!r}")
            ids.append(parts[0])
            rows.append([float(p) for p in parts[1:]])
        if len(rows) != declared:
            raise ValueError(
                f"{path}: header declares {declared} samples, found {len(rows)}"
            )
        return cls(model_id=model_id, sample_ids=ids, probs=np.array(rows))


def _check_aligned(mats: Sequence[ProbMatrix]) -> None:
    if not mats:
        raise ValueError("ensemble needs at least one probability matrix")
    counts = [m.n_samples for m in mats]
    if len(set(counts)) > 1:
        raise ValueError(f"misaligned matrices: row counts {counts}")
    first = mats[0].sample_ids
    for m in mats[1:]:
        if m.sample_ids != first:
            for i, (a, b) in enumerate(zip(first, m.sample_ids)):
                if a != b:
                    raise ValueError(
                        f"sample order mismatch at row {i}: "
                        f"{mats[0].model_id}={a!r} vs {m.model_id}={b!r}"
                    )


@dataclass
class EnsembleSpec:
    variant: str
    weights: tuple
    powers: tuple

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        self.powers = tuple(float(p) for p in self.powers)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown ensemble variant {self.variant!r}")
        if len(self.weights) != len(self.powers) or not self.weights:
            raise ValueError(
                f"need matching non-empty weights/powers, got "
                f"{len(self.weights)} and {len(self.powers)}"
            )
        if min(self.weights) <= 0 or min(self.powers) <= 0:
            raise ValueError("weights and powers must be positive")
        if self.variant in ("average", "weighted") and any(
            p != 1.0 for p in self.powers
        ):
            raise ValueError(f"variant {self.variant} requires all powers = 1")
        if self.variant == "average" and len(set(self.weights)) > 1:
            raise ValueError("variant average requires equal weights")
        if self.variant == "power" and len(set(self.powers)) > 1:
            raise ValueError("variant power requires one shared power")

    @property
    def n_models(self) -> int:
        return len(self.weights)

    @classmethod
    def average(cls, m: int) -> "EnsembleSpec":
        return cls("average", (1.0 / m,) * m, (1.0,) * m)

    def save(self, path, achieved_f1: Optional[float] = None) -> None:
        lines = [f"variant = {self.variant}", f"models = {self.n_models}"]
        for i, w in enumerate(self.weights, 1):
            lines.append(f"w{i} = {w:.10g}")
        for i, p in enumerate(self.powers, 1):
            lines.append(f"n{i} = {p:.10g}")
        if achieved_f1 is not None:
            lines.append(f"achieved_f1 = {achieved_f1:.10g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        kv = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            kv[key] = value
        try:
            m = int(kv["models"])
            return cls(
                variant=kv["variant"],
                weights=tuple(float(kv[f"w{i}"]) for i in range(1, m + 1)),
                powers=tuple(float(kv[f"n{i}"]) for i in range(1, m + 1)),
            )
        except KeyError as missing:
            raise ValueError(f"{path}: missing key {missing}") from None


def blend(mats: Sequence[ProbMatrix], spec: EnsembleSpec) -> np.ndarray:
    """Unnormalized score matrix [samples x 5]; predict with an argmax."""
    _check_aligned(mats)
    if len(mats) != spec.n_models:
        raise ValueError(
            f"spec covers {spec.n_models} models but {len(mats)} matrices given"
        )
    scores = np.zeros_like(mats[0].probs)
    for mat, w, p in zip(mats, spec.weights, spec.powers):
        scores += w * np.clip(mat.probs, PROB_FLOOR, 1.0) ** p
    return scores


def predict(scores: np.ndarray) -> np.ndarray:
    return scores.argmax(axis=1)


@dataclass
class TuneResult:
    spec: EnsembleSpec
    f1: float
    evaluations: int


def _score_weight_block(
    powered: np.ndarray, weight_block: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """F1 for many weight rows against one stack of powered matrices."""
    scores = np.einsum("km,msc->ksc", weight_block, powered)
    return weighted_f1_batch(labels, scores.argmax(axis=2), N_CLASSES)


def _weight_combos(m: int) -> np.ndarray:
    grids = np.meshgrid(*([np.array(WEIGHT_GRID)] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _power_combos(variant: str, m: int) -> list:
    if variant in ("average", "weighted"):
        return [(1.0,) * m]
    if variant == "power":
        return [(p,) * m for p in POWER_GRID]
    grids = np.meshgrid(*([np.array(POWER_GRID)] * m), indexing="ij")
    return [tuple(row) for row in np.stack([g.ravel() for g in grids], axis=1)]


def tune(
    mats: Sequence[ProbMatrix],
    labels,
    variant: str = "unified",
    budget: int = 200_000,
    seed: int = 0,
) -> TuneResult:
    """Grid search plus seeded random refinement, maximizing weighted F1.

    Beyond the grid, one corner candidate per model is always evaluated
    (that model at the maximum weight, the rest at the clip floor), so the
    tuned ensemble never scores below its best single member except through
    argmax near-ties. Deterministic for a given seed. Ties are broken toward
    the lexicographically smallest (weights, powers) tuple so that reruns
    and differently-batched evaluations agree on the winner.
    """
    _check_aligned(mats)
    if variant not in VARIANTS:
        raise ValueError(f"unknown ensemble variant {variant!r}")
    if budget < 1:
        raise ValueError(f"budget must be at least 1, got {budget}")
    labels = np.asarray(labels)
    if labels.shape != (mats[0].n_samples,):
        raise ValueError(
            f"{labels.shape[0] if labels.ndim else 0} labels for "
            f"{mats[0].n_samples} samples"
        )
    m = len(mats)
    clamped = np.stack([np.clip(mat.probs, PROB_FLOOR, 1.0) for mat in mats])

    if variant == "average":
        spec = EnsembleSpec.average(m)
        f1 = _score_weight_block(
            clamped, np.full((1, m), 1.0 / m), labels
        )[0]
        return TuneResult(spec=spec, f1=float(f1), evaluations=1)

    best_key: Optional[tuple] = None
    best_f1 = -1.0
    evaluations = 0
    weight_block = _weight_combos(m)

    for powers in _power_combos(variant, m):
        if evaluations >= budget:
            break
        block = weight_block[: budget - evaluations]
        powered = clamped ** np.asarray(powers)[:, None, None]
        f1s = _score_weight_block(powered, block, labels)
        evaluations += block.shape[0]
        top = f1s.max()
        if top < best_f1:
            continue
        contenders = np.flatnonzero(f1s == top)
        key = min(
            (tuple(block[i]), tuple(powers)) for i in contenders
        )
        if top > best_f1 or key < best_key:
            best_f1, best_key = float(top), key

    # Corner candidates isolating each model at the clip extremes; with the
    # other members suppressed to w=0.01 (and, for unified, flattened by
    # power 8) the blend reproduces that model's own predictions on all but
    # razor-thin argmax margins.
    for j in range(m):
        w = np.full(m, 0.01)
        w[j] = 10.0
        p = np.ones(m)
        if variant == "unified":
            p = np.full(m, 8.0)
            p[j] = 1.0
        score = np.zeros(mats[0].probs.shape)
        for i in range(m):
            score += w[i] * clamped[i] ** p[i]
        f1 = float(
            weighted_f1_batch(labels, score.argmax(axis=1)[None, :], N_CLASSES)[0]
        )
        evaluations += 1
        key = (tuple(w), tuple(p))
        if f1 > best_f1 or (f1 == best_f1 and key < best_key):
            best_f1, best_key = f1, key

    rng = np.random.default_rng(seed)
    while evaluations < budget:
        k = min(256, budget - evaluations)
        base_w = np.asarray(best_key[0])
        base_p = np.asarray(best_key[1])
        w_prop = np.clip(base_w + rng.normal(0.0, 0.05, size=(k, m)), 0.01, 10.0)
        if variant == "weighted":
            p_prop = np.ones((k, m))
        elif variant == "power":
            shared = np.clip(
                base_p[0] * np.exp(rng.normal(0.0, 0.2, size=(k, 1))), 0.01, 8.0
            )
            p_prop = np.repeat(shared, m, axis=1)
        else:
            p_prop = np.clip(
                base_p * np.exp(rng.normal(0.0, 0.2, size=(k, m))), 0.01, 8.0
            )
        scores = np.zeros((k,) + mats[0].probs.shape)
        for j in range(m):
            scores += w_prop[:, j, None, None] * clamped[j] ** p_prop[:, j, None, None]
        f1s = weighted_f1_batch(labels, scores.argmax(axis=2), N_CLASSES)
        evaluations += k
        top = f1s.max()
        if top >= best_f1:
            contenders = np.flatnonzero(f1s == top)
            key = min(
                (tuple(w_prop[i]), tuple(p_prop[i])) for i in contenders
            )
            if top > best_f1 or key < best_key:
                best_f1, best_key = float(top), key

    weights, powers = best_key
    if variant == "weighted":
        powers = (1.0,) * m
    elif variant == "power":
        powers = (powers[0],) * m
    spec = EnsembleSpec(variant=variant, weights=weights, powers=powers)
    return TuneResult(spec=spec, f1=best_f1, evaluations=evaluations)
