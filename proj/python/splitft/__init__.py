"""Split fine-tuning: a toy transformer trained across an edge and a cloud
process, with the split FFN rewritten via truncated SVD so the exchanged
activations shrink by hidden_dim / rank.

The heavy lifting lives in the C++ extension; this package re-exports it.
"""

from ._core import (
    Dataset,
    Model,
    ModelConfig,
    OptimConfig,
    SplitPlan,
    TrainMetrics,
    breakeven_bandwidth_bps,
    build_model,
    comm_volume,
    decompose_ffn,
    estimate_iter_ms,
    gen_majority_task,
    reconstruction_error,
    run_local,
    run_split_loopback,
    svd,
)

__all__ = [
    "Dataset",
    "Model",
    "ModelConfig",
    "OptimConfig",
    "SplitPlan",
    "TrainMetrics",
    "breakeven_bandwidth_bps",
    "build_model",
    "comm_volume",
    "decompose_ffn",
    "estimate_iter_ms",
    "gen_majority_task",
    "reconstruction_error",
    "run_local",
    "run_split_loopback",
    "svd",
]

__version__ = "0.1.0"
