"""Weakly supervised online action detection for 2D skeleton sequences."""

from .config import RunConfig, TrainConfig
from .dataset import (SkeletonSequence, SynthParams, load_sequences, preprocess,
                      save_sequences, synthesize)
from .evaluation import EvalReport, evaluate
from .model import ActionDetector
from .trainer import load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ActionDetector",
    "EvalReport",
    "RunConfig",
    "SkeletonSequence",
    "SynthParams",
    "TrainConfig",
    "evaluate",
    "load_checkpoint",
    "load_sequences",
    "preprocess",
    "save_checkpoint",
    "save_sequences",
    "synthesize",
    "train",
    "__version__",
]
