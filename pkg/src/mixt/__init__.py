"""Tensor-mixture structured linear layers and the tooling around them:
the executable operator, ALS weight matching, toy-scale compression sweeps
with recovery training, output/geometry diagnostics, and an analytic
parameter/FLOP/storage profiler.
"""

__version__ = "0.1.0"

from .tensor import (
    DenseTensor,
    contract,
    frobenius_norm,
    pad_axis,
    permute,
    reshape,
    slice_axis,
)
from .operator import (
    MixtOperator,
    MixtSpec,
    branch_expansion,
    expand_to_dense,
    flop_count,
    load_operator,
    minimal_order,
    mixt_forward,
    param_count,
    remaining_ratio,
    save_operator,
)
from .matching import (
    MatchConfig,
    ReconstructionError,
    branch_update,
    match_weights,
    reconstruction_error,
)
from .plan import CompressionPlan, normalize_direction
from .metrics import (
    AnswerDistBatch,
    SimilarityMap,
    SweepReport,
    assemble_report,
    default_output_pairs,
    drift_profile,
    drift_summaries,
    entry_from_records,
    geometry_drift,
    interlayer_similarity,
    output_entropy,
    prediction_entropy,
    segmented_fit,
    transformed_pe,
    transition_threshold,
    trend_fit,
)
from .profiler import (
    ArchConfig,
    ResourceReport,
    build_report,
    count_params,
    flops,
    render_report,
    scaling_curve,
    storage,
)
from .sweep import SweepConfig, analyze_records, run_sweep

__all__ = [
    "__version__",
    # tensor core
    "DenseTensor",
    "contract",
    "frobenius_norm",
    "pad_axis",
    "permute",
    "reshape",
    "slice_axis",
    # operator
    "MixtOperator",
    "MixtSpec",
    "branch_expansion",
    "expand_to_dense",
    "flop_count",
    "load_operator",
    "minimal_order",
    "mixt_forward",
    "param_count",
    "remaining_ratio",
    "save_operator",
    # matching
    "MatchConfig",
    "ReconstructionError",
    "branch_update",
    "match_weights",
    "reconstruction_error",
    # plan
    "CompressionPlan",
    "normalize_direction",
    # metrics
    "AnswerDistBatch",
    "SimilarityMap",
    "SweepReport",
    "assemble_report",
    "default_output_pairs",
    "drift_profile",
    "drift_summaries",
    "entry_from_records",
    "geometry_drift",
    "interlayer_similarity",
    "output_entropy",
    "prediction_entropy",
    "segmented_fit",
    "transformed_pe",
    "transition_threshold",
    "trend_fit",
    # profiler
    "ArchConfig",
    "ResourceReport",
    "build_report",
    "count_params",
    "flops",
    "render_report",
    "scaling_curve",
    "storage",
    # sweep
    "SweepConfig",
    "analyze_records",
    "run_sweep",
]
