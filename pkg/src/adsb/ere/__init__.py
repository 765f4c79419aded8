"""Experience Referencing Engine: severity labeling, similar-accident
search and crash-severity classification trained on historical records."""

from .labels import (  # noqa: F401  (import order matters: labels is a leaf)
    CSI_WEIGHTS,
    SeverityCounts,
    SeverityLevel,
    binary_severity,
    compute_csi,
    severity_level,
)
from .cluster import ClusterModel, ClusterParams, kmeans_fit, train_similar_search  # noqa: F401
from .forest import ForestParams, RandomForest, train_forest  # noqa: F401
from .reducer import Reducer, fit_reducer, reduce_matrix, reduce_vector  # noqa: F401
from .report import ClassificationReport, classification_report  # noqa: F401
from .model import (  # noqa: F401
    ARTIFACT_VERSION,
    EreAssessment,
    EreModel,
    EreTrainConfig,
    ExemplarIndex,
    SimilarMatch,
    build_schema,
    engineer_features,
    ere_assess,
    evaluate,
    find_similar,
    load_model,
    predict_rating,
    predict_severe,
    save_model,
    train_ere,
)
