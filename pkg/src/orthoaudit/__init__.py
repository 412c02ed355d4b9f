"""Post-hoc removal and auditing of protected-feature influence in
embedding matrices.

The core operation subtracts from an embedding its least-squares
projection onto the column space of a protected-feature design matrix,
leaving features that carry no linear trace of age, sex, or race.  The
rest of the package measures the effect: probe models, influence
statistics, classification/regression metrics, subgroup gaps, and PCA
summaries, plus a synthetic data generator to exercise it all.
"""

from ._backend import backend_name
from .design import (
    RACES,
    SEXES,
    DesignMatrix,
    FeatureSchema,
    ProtectedRecord,
    encode_design,
)
from .errors import (
    AlignmentError,
    DegenerateClassesWarning,
    Diverged,
    EmptyGroupWarning,
    InsufficientSamples,
    InvalidInput,
    MissingData,
    OrthoAuditError,
    RankDeficient,
    ShapeMismatch,
    SmallSampleWarning,
    UndefinedMetric,
    UnknownCategory,
    ZeroVariance,
)
from .glm import (
    ProbeModel,
    TrainConfig,
    dataset_loss,
    fit_binary_probe,
    fit_linear_probe,
    fit_multinomial_probe,
    predict_scores,
)
from .linalg import (
    DEFAULT_TOL,
    EmbeddingMatrix,
    ThinQR,
    orthogonalize,
    orthogonalize_unseen,
    thin_qr,
)
from .metrics import (
    GroupDelta,
    MetricsReport,
    SubgroupAucReport,
    auc,
    confusion_metrics,
    regression_metrics,
    subgroup_auc_delta,
)
from .pca import (
    GroupMarginals,
    PcaModel,
    group_marginals,
    pca_fit,
    pca_transform,
)
from .pipeline import audit
from .stats import (
    AggregatedInfluence,
    InfluenceReport,
    aggregate_reports,
    influence_report,
    ols_fit,
    student_t_p_two_sided,
)
from .synth import (
    SyntheticDataset,
    SyntheticSpec,
    biased_spec,
    generate,
    no_signal_spec,
    oracle_auc_paircount,
    oracle_residualize,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedInfluence",
    "AlignmentError",
    "DEFAULT_TOL",
    "DegenerateClassesWarning",
    "DesignMatrix",
    "Diverged",
    "EmbeddingMatrix",
    "EmptyGroupWarning",
    "FeatureSchema",
    "GroupDelta",
    "GroupMarginals",
    "InfluenceReport",
    "InsufficientSamples",
    "InvalidInput",
    "MetricsReport",
    "MissingData",
    "OrthoAuditError",
    "PcaModel",
    "ProbeModel",
    "ProtectedRecord",
    "RACES",
    "RankDeficient",
    "SEXES",
    "ShapeMismatch",
    "SmallSampleWarning",
    "SubgroupAucReport",
    "SyntheticDataset",
    "SyntheticSpec",
    "ThinQR",
    "TrainConfig",
    "UndefinedMetric",
    "UnknownCategory",
    "ZeroVariance",
    "aggregate_reports",
    "auc",
    "audit",
    "backend_name",
    "biased_spec",
    "confusion_metrics",
    "dataset_loss",
    "encode_design",
    "fit_binary_probe",
    "fit_linear_probe",
    "fit_multinomial_probe",
    "generate",
    "group_marginals",
    "influence_report",
    "no_signal_spec",
    "ols_fit",
    "oracle_auc_paircount",
    "oracle_residualize",
    "orthogonalize",
    "orthogonalize_unseen",
    "pca_fit",
    "pca_transform",
    "predict_scores",
    "regression_metrics",
    "student_t_p_two_sided",
    "subgroup_auc_delta",
    "thin_qr",
]
