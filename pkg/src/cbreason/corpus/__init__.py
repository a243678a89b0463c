"""Dataset ingestion, validation, patient-level splitting, preprocessing, synthesis."""

from .preprocess import INPUT_SIZE, AugmentConfig, RoiBoundsError, augment, crop_and_resize
from .records import (
    BANK_COLUMNS,
    BIRADS_GRADES,
    DEFAULT_LABEL_SET,
    MANIFEST_COLUMNS,
    BankError,
    ConceptBank,
    ConceptEntry,
    DatasetManifest,
    ManifestError,
    SampleRecord,
    display_name_for_key,
    load_bank,
    load_manifest,
    save_bank,
    save_manifest,
)
from .splits import (
    TRAIN_ONLY_TAG,
    SplitError,
    SplitPlan,
    fold_members,
    load_split_plan,
    make_patient_folds,
    save_split_plan,
)
from .synthetic import (
    default_bank,
    label_from_concepts,
    load_sidecar,
    oracle_labels,
    render_sample,
    synth_generate,
)

__all__ = [
    "AugmentConfig",
    "BANK_COLUMNS",
    "BIRADS_GRADES",
    "BankError",
    "ConceptBank",
    "ConceptEntry",
    "DEFAULT_LABEL_SET",
    "DatasetManifest",
    "INPUT_SIZE",
    "MANIFEST_COLUMNS",
    "ManifestError",
    "RoiBoundsError",
    "SampleRecord",
    "SplitError",
    "SplitPlan",
    "TRAIN_ONLY_TAG",
    "augment",
    "crop_and_resize",
    "default_bank",
    "display_name_for_key",
    "fold_members",
    "label_from_concepts",
    "load_bank",
    "load_manifest",
    "load_sidecar",
    "load_split_plan",
    "make_patient_folds",
    "oracle_labels",
    "render_sample",
    "save_bank",
    "save_manifest",
    "save_split_plan",
    "synth_generate",
]
