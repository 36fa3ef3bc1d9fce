"""Cayley-Klein (curved Mahalanobis) distances, metric learning and geometry."""

from .classify import (
    AccuracyReport,
    LeaveOneOut,
    RandomSplit,
    evaluate,
    evaluate_many,
    knn_classify,
    knn_predict,
)
from .compgeom import (
    Hyperplane,
    MahalanobisQuadric,
    PowerBall,
    VoronoiDiagram2D,
    ball_to_quadric,
    bisector,
    ck_voronoi,
    quadric_to_sphere,
    to_power_ball,
)
from .dataio import DatasetSchema, load_dataset, load_metric, save_metric
from .datasets import bundled_path, load_bundled
from .geometry import (
    BilinearForm,
    CurvedMahalanobisParam,
    GeometryKind,
    MixedMetric,
    canonical_decompose,
    ck_distance,
    classify_form,
    cross_ratio_distance_oracle,
    curved_mahalanobis_distance,
    curved_to_form,
    distance_matrix,
    mixed_distance,
)
from .learning import LabeledDataset, LmnnConfig, MetricState, TrainReport, train, train_mixed
from .svg import Scene, render_svg

__version__ = "0.1.0"
