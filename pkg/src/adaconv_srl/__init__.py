"""Adaptive convolution for dependency-based semantic role labeling."""

from ._accel import backend_name
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, load_config
from .conll import parse_conll09, read_conll09, serialize_conll09, write_conll09
from .model import SrlModel
from .scoring import score_srl
from .train import disambiguate_predicates, evaluate, predict, train

__version__ = "0.1.0"

__all__ = [
    "ModelCheckpoint", "SrlModel", "TrainConfig", "backend_name", "disambiguate_predicates",
    "evaluate", "load_checkpoint", "load_config", "parse_conll09", "predict", "read_conll09",
    "save_checkpoint", "score_srl", "serialize_conll09", "train", "write_conll09",
]
