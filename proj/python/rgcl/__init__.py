"""Rationale-aware graph contrastive pre-training (C++ core)."""

from ._rgcl import (
    ConfigError,
    Dataset,
    FormatError,
    NumericError,
    TrainState,
    evaluate,
    generate_planted_motif,
    load_checkpoint,
    load_json,
    load_tu,
    pretrain,
    rationale_scores,
    run_cli,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "FormatError",
    "NumericError",
    "TrainState",
    "evaluate",
    "generate_planted_motif",
    "load_checkpoint",
    "load_json",
    "load_tu",
    "pretrain",
    "rationale_scores",
    "run_cli",
]
