"""Classification metrics, rubric aggregation, and the blinded review workflow."""

from .classification import (
    ConfusionStats,
    MetricUndefinedError,
    PredictionSet,
    auroc,
    balanced_accuracy,
    confusion_stats,
    f1_from_counts,
    load_predictions,
    per_concept_auroc,
    save_predictions,
)
from .review import (
    CaseBundle,
    ReviewProtocolError,
    export_case_bundles,
    exported_case_ids,
    import_scores,
    read_sealed_key,
    redact_labels,
    unseal,
)
from .rubric import (
    BAS_LEVELS,
    CIGS_LEVELS,
    RubricSchemaError,
    RubricScore,
    aggregate_rubric,
    import_rubric_scores,
)

__all__ = [
    "BAS_LEVELS",
    "CIGS_LEVELS",
    "CaseBundle",
    "ConfusionStats",
    "MetricUndefinedError",
    "PredictionSet",
    "ReviewProtocolError",
    "RubricSchemaError",
    "RubricScore",
    "aggregate_rubric",
    "auroc",
    "balanced_accuracy",
    "confusion_stats",
    "export_case_bundles",
    "f1_from_counts",
    "exported_case_ids",
    "import_rubric_scores",
    "import_scores",
    "load_predictions",
    "per_concept_auroc",
    "read_sealed_key",
    "redact_labels",
    "save_predictions",
    "unseal",
]
