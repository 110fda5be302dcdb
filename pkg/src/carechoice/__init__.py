"""Predicting the hospital level a patient will choose for an outpatient visit.

The package turns raw claims-style records into per-visit feature vectors
(continuity-of-care indices, provider votes, incident flags), trains small
feed-forward classifiers with an optional autoencoder representation,
scores them with one-vs-rest macro metrics, and explains predictions with
Shapley values. A synthetic cohort generator and a CLI tie the stages
together end to end.
"""

from .domain import (
    CalendarCoverageError,
    CodeSets,
    Dataset,
    EmptyDatasetError,
    ExclusionReason,
    GENDERS,
    HospitalLevel,
    LEVEL_NAMES,
    N_LEVELS,
    PatientProfile,
    ProviderProfile,
    RegionStats,
    SETTINGS,
    VisitRecord,
    WorkdayCalendar,
    apply_exclusions,
    validate_record,
)
from .features import (
    ContinuityIndices,
    FEATURE_NAMES,
    MissingRegionError,
    N_FEATURES,
    ProviderVotes,
    SCALED_FEATURES,
    ScalerParams,
    VisitFeatureVector,
    VisitSequence,
    age_at,
    assemble_visit_vector,
    build_feature_vectors,
    build_visit_sequences,
    continuity_indices,
    disease_importance_rate,
    feature_matrix,
    fit_scaler,
    incident_flags,
    provider_votes,
    read_feature_csv,
    scale_vector,
    write_feature_csv,
)
from .ingest import (
    DataPaths,
    IngestError,
    STANDARD_FILENAMES,
    load_dataset,
    write_dataset,
)
from .pipeline import (
    SamplingError,
    SplitSpec,
    kfold_indices,
    make_kfolds,
    split_indices,
    split_train_test,
    undersample_indices,
    undersample_majority,
)
from .neuralnet import (
    AeConfig,
    LayerParams,
    MlpConfig,
    TrainConfig,
    TrainedModel,
    TrainingDivergedError,
    dataset_loss,
    decode,
    encode,
    forward,
    forward_logits,
    gradient_check,
    load_model,
    model_from_dict,
    model_to_dict,
    models_equal,
    n_parameters,
    predict,
    predict_batch,
    save_model,
    train_autoencoder,
    train_classifier,
)
from .metrics import (
    ClassCounts,
    ClassMetrics,
    ConfusionCounts,
    MetricReport,
    TABLE_METRICS,
    auc_ovr,
    binary_auc,
    build_report,
    comparison_rows,
    confusion_counts,
    macro_metrics,
    per_class_metrics,
)
from .explain import (
    Attribution,
    BackgroundSet,
    ExactLimitError,
    GlobalImportance,
    LocalReport,
    classifier_model_fn,
    exact_shapley,
    global_importance,
    local_report,
    sampled_shapley,
    write_importance_csv,
)
from .synthgen import (
    CohortSpec,
    GeneratedCohort,
    cohort_spec_from_config,
    generate_cohort,
)

__version__ = "0.1.0"
