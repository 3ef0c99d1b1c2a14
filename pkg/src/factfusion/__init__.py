"""Multi-modal fact verification: co-attention fusion over claim/document
text and image embeddings, statistical text features, an adapter-augmented
backbone tail, and power-weighted probability ensembling — all on a small
reverse-mode autodiff core.
"""

from .autograd import GraphError, ShapeError, Tensor, no_grad
from .config import RunConfig
from .data import LABELS, DatasetManifest, RawSample, ingest, load_manifest, synthesize
from .ensemble import EnsembleSpec, ProbMatrix, blend, predict, tune
from .metrics import confusion_matrix, per_class_f1, weighted_f1
from .model import VerificationModel
from .training import EvalResult, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "GraphError",
    "ShapeError",
    "Tensor",
    "no_grad",
    "RunConfig",
    "LABELS",
    "DatasetManifest",
    "RawSample",
    "ingest",
    "load_manifest",
    "synthesize",
    "EnsembleSpec",
    "ProbMatrix",
    "blend",
    "predict",
    "tune",
    "confusion_matrix",
    "per_class_f1",
    "weighted_f1",
    "VerificationModel",
    "EvalResult",
    "TrainResult",
    "evaluate",
    "train",
    "__version__",
]
