"""Explicit text statistics for each sample: 8 stats over 4 text fields.

Counting rules (all applied to the raw, pre-normalization string):

  * a word is a maximal non-whitespace run,
  * a URL token starts with "http://", "https://", or "www." (case-insensitive),
  * a mention token starts with "@" followed by at least one word character,
  * every token is classified into exactly one bucket (url, mention, plain);
    stopword and punctuation statistics scan plain tokens only, so the "@"
    of a mention or the "://" of a URL is never double-counted as style
    punctuation,
  * character and digit counts scan the whole string; word count and mean
    word length cover all tokens.

Normalization (applied before embedding, after counting) replaces emoji with
their lowercased Unicode names, expands a fixed abbreviation table, drops
mention and URL tokens, and collapses whitespace.
"""

from __future__ import annotations

import hashlib
import re
import string
import unicodedata
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tensor_io

FIELD_ORDER = ("claim_text", "doc_text", "claim_ocr", "doc_ocr")
STAT_NAMES = (
    "word_count",
    "char_count",
    "stopword_count",
    "mention_count",
    "url_count",
    "mean_word_length",
    "digit_count",
    "punctuation_count",
)
FEATURE_DIM = len(FIELD_ORDER) * len(STAT_NAMES)  # 32

STOPWORDS_SHA256 = "73804769a098558757cde89333e47b2c9a39733b3540dc724d1bd981f49943b8"

_PUNCT = set(string.punctuation)

# Codepoint ranges treated as emoji; joiners and variation selectors are
# dropped rather than named.
_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0x1F900, 0x1F9FF),
)
_EMOJI_DROP = {0x200D, 0xFE0E, 0xFE0F}


def _resource_text(name: str) -> str:
    return resources.files("factfusion").joinpath("resources", name).read_text("utf-8")


def _load_stopwords() -> frozenset[str]:
    text = _resource_text("stopwords.txt")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != STOPWORDS_SHA256:
        raise RuntimeError(
            f"stopword list checksum mismatch: {digest} != {STOPWORDS_SHA256}"
        )
    return frozenset(w for w in text.split("\n") if w)


def _load_abbreviations() -> dict[str, str]:
    table = {}
    for line in _resource_text("abbreviations.txt").splitlines():
        if not line.strip():
            continue
        short, expansion = line.split("\t")
        table[short.lower()] = expansion
    return table


STOPWORDS = _load_stopwords()
ABBREVIATIONS = _load_abbreviations()

_ABBREV_RE = re.compile(
    "|".join(
        r"(?<!\w)" + re.escape(short) + r"(?!\w)"
        for short in sorted(ABBREVIATIONS, key=len, reverse=True)
    ),
    re.IGNORECASE,
)


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def _is_url(token: str) -> bool:
    lower = token.lower()
    return lower.startswith(("http://", "https://", "www."))


def _is_mention(token: str) -> bool:
    return len(token) > 1 and token[0] == "@" and (token[1].isalnum() or token[1] == "_")


def replace_emoji(text: str) -> str:
    out: list[str] = []
    for ch in text:
        cp = ord(ch)
        if cp in _EMOJI_DROP:
            continue
        if _is_emoji(ch):
            name = unicodedata.name(ch, "").lower()
            out.append(f" {name} " if name else " ")
        else:
            out.append(ch)
    return "".join(out)


def normalize_text(raw: str) -> str:
    """Emoji to names, abbreviations expanded, mentions/URLs dropped."""
    text = replace_emoji(raw)
    text = _ABBREV_RE.sub(lambda m: ABBREVIATIONS[m.group(0).lower()], text)
    kept = [t for t in text.split() if not (_is_url(t) or _is_mention(t))]
    return " ".join(kept)


def extract_field_features(text: str) -> np.ndarray:
    """The 8 statistics for one text field, in STAT_NAMES order."""
    tokens = text.split()
    word_count = len(tokens)
    char_count = len(text)
    digit_count = sum(c.isdigit() for c in text)
    stopword_count = 0
    mention_count = 0
    url_count = 0
    punctuation_count = 0
    for tok in tokens:
        if _is_url(tok):
            url_count += 1
        elif _is_mention(tok):
            mention_count += 1
        else:
            if tok.strip(string.punctuation).lower() in STOPWORDS:
                stopword_count += 1
            punctuation_count += sum(c in _PUNCT for c in tok)
    mean_word_length = (
        sum(len(t) for t in tokens) / word_count if word_count else 0.0
    )
    return np.array(
        [
            word_count,
            char_count,
            stopword_count,
            mention_count,
            url_count,
            mean_word_length,
            digit_count,
            punctuation_count,
        ],
        dtype=np.float64,
    )


def raw_feature_vector(sample) -> np.ndarray:
    """Pre-scaling 32-vector: fields in FIELD_ORDER, stats in STAT_NAMES order."""
    parts = [extract_field_features(getattr(sample, f)) for f in FIELD_ORDER]
    return np.concatenate(parts)


@dataclass
class FeatureScaler:
    """log(1+x) then z-score, with statistics frozen from the training split.

    Dimensions with zero variance map to 0 (std replaced by 1).
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, raw_vectors: Iterable[np.ndarray]) -> "FeatureScaler":
        mat = np.log1p(np.asarray(list(raw_vectors), dtype=np.float64))
        if mat.size == 0:
            raise ValueError("cannot fit scaler on an empty corpus")
        std = mat.std(axis=0)
        std[std < 1e-12] = 1.0
        return cls(mean=mat.mean(axis=0), std=std)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return (np.log1p(raw) - self.mean) / self.std

    def save(self, path) -> None:
        tensor_io.write_checkpoint(
            path, {"scaler.mean": self.mean, "scaler.std": self.std}
        )

    @classmethod
    def load(cls, path) -> "FeatureScaler":
        entries = tensor_io.read_checkpoint(path)
        return cls.from_entries(entries)

    @classmethod
    def from_entries(cls, entries: dict) -> "FeatureScaler":
        return cls(
            mean=np.asarray(entries["scaler.mean"], dtype=np.float64),
            std=np.asarray(entries["scaler.std"], dtype=np.float64),
        )

    def entries(self) -> dict[str, np.ndarray]:
        return {"scaler.mean": self.mean, "scaler.std": self.std}


def extract(sample, scaler: Optional[FeatureScaler] = None) -> np.ndarray:
    """Scaled (or raw, if no scaler) 32-dim feature vector for one sample."""
    raw = raw_feature_vector(sample)
    return scaler.transform(raw) if scaler is not None else raw


def extract_corpus(
    samples: Sequence, scaler: Optional[FeatureScaler] = None
) -> np.ndarray:
    rows = [raw_feature_vector(s) for s in samples]
    mat = np.asarray(rows, dtype=np.float64).reshape(len(rows), FEATURE_DIM)
    if scaler is not None:
        mat = np.stack([scaler.transform(r) for r in mat]) if len(rows) else mat
    return mat
