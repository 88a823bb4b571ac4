"""Two-dimensional evaluation: group-validated ranking accuracy against
serendipity, with per-user improvement deltas."""

from .clustering import (
    DEFAULT_K,
    DEFAULT_MAX_ITER,
    ClusterAssignment,
    cluster_users,
    elbow_curve,
)
from .deltas import (
    ACCURACY_METRICS,
    BASIS_RATINGS,
    BASIS_USERS,
    DEFAULT_PLANE,
    DELTA_HEADER,
    DeltaPoint,
    DeltaReport,
    Quadrant,
    UserEval,
    critical_groups,
    delta_points,
    percent_positive,
    plane_positive,
    quadrant,
    read_delta_csv,
    write_delta_csv,
)
from .metrics import RankingMetrics, mean_or_zero, ranking_metrics
from .serendipity import (
    FORMULA_COMPLEMENT,
    FORMULA_PAPER_LITERAL,
    serendipity,
)
from .svg import scatter_svg, write_scatter_svg

__all__ = [
    "ACCURACY_METRICS",
    "BASIS_RATINGS",
    "BASIS_USERS",
    "DEFAULT_K",
    "DEFAULT_MAX_ITER",
    "DEFAULT_PLANE",
    "DELTA_HEADER",
    "ClusterAssignment",
    "DeltaPoint",
    "DeltaReport",
    "FORMULA_COMPLEMENT",
    "FORMULA_PAPER_LITERAL",
    "Quadrant",
    "RankingMetrics",
    "UserEval",
    "cluster_users",
    "critical_groups",
    "delta_points",
    "elbow_curve",
    "mean_or_zero",
    "percent_positive",
    "plane_positive",
    "quadrant",
    "ranking_metrics",
    "read_delta_csv",
    "scatter_svg",
    "serendipity",
    "write_delta_csv",
    "write_scatter_svg",
]
