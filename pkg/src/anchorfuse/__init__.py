"""Sparse-anchor depth densification by Poisson fusion and affinity refinement."""

from .grid import IndexPartition, assemble_dirichlet_field, build_partition
from .metrics import EvalReport, evaluate, l1l2_loss, masked_rmse_mae, normalize, silog_loss
from .poisson import CgSettings, SolveReport, densify, scale_shift_align
from .refine import AffinityStack, RefineParams, affinity_weights, handcrafted_features, refine

__all__ = [
    "AffinityStack", "CgSettings", "EvalReport", "IndexPartition", "RefineParams", "SolveReport",
    "affinity_weights", "assemble_dirichlet_field", "build_partition", "densify", "evaluate",
    "handcrafted_features", "l1l2_loss", "masked_rmse_mae", "normalize", "refine",
    "scale_shift_align", "silog_loss",
]
__version__ = "0.1.0"
