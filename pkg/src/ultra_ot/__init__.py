"""Exact optimal transport on finite ultrametric spaces."""

from .ultra_core import (
    DistanceMatrix,
    Srt,
    StructureError,
    UltrametricError,
    Violation,
    covering_number,
    covering_partition,
    lca_distance,
    matrix_from_srt,
    quantize_heights,
    srt_from_matrix,
    validate_ultrametric,
)
from .transport import (
    L1Coordinates,
    Measure,
    TransportPlan,
    ball_masses,
    embed_l1,
    oracle_cost,
    tree_optimal_plan,
    wasserstein,
    wasserstein_pp,
)

__version__ = "0.1.0"

__all__ = [
    "DistanceMatrix", "Srt", "StructureError", "UltrametricError", "Violation",
    "covering_number", "covering_partition", "lca_distance", "matrix_from_srt",
    "quantize_heights", "srt_from_matrix", "validate_ultrametric",
    "L1Coordinates", "Measure", "TransportPlan", "ball_masses", "embed_l1",
    "oracle_cost", "tree_optimal_plan", "wasserstein", "wasserstein_pp",
]
