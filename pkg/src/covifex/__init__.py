"""covifex: chest X-ray/CT COVID-19 screening pipeline.

Deep-feature extraction behind pluggable backends, six tree-based
classifiers built from shared CART machinery, stratified cross-validation
with a benchmark grid, and an HTTP prediction service.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Dataset,
    FeatureMatrix,
    ImageTensor,
    Sample,
    dataset_from_manifest,
    feature_matrix_validate,
)
from .ensemble import (  # noqa: F401
    ClassifierKind,
    EnsembleConfig,
    TrainedModel,
    default_config,
    model_load,
    model_save,
    predict,
    predict_proba,
    train,
)
from .errors import FileFormatError, ValidationError  # noqa: F401
from .evaluation import (  # noqa: F401
    ConfusionCounts,
    FoldPlan,
    MetricSummary,
    confusion,
    cross_validate,
    metrics,
    stratified_kfold,
    time_block,
)
from .extract import (  # noqa: F401
    ExtractorSpec,
    PrecomputedBackend,
    StubBackend,
    TorchScriptBackend,
    extract_features,
    features_load,
    features_save,
    registry_get,
    registry_list,
    stub_features,
)
from .preprocess import (  # noqa: F401
    PreprocessConfig,
    grayscale_to_rgb,
    load_image,
    mean_subtract,
    min_max_normalize,
    preprocess_pipeline,
    resize_bilinear,
)
