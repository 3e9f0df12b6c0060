"""Contextual outlier detection with mixture-noise regression filters."""

__version__ = "0.1.0"

from .dataset import Dataset, DatasetError, column, from_columns, load_csv, write_csv
from .templates import (
    CorrelationTemplate,
    DesignMatrix,
    TemplateError,
    Transform,
    compile_template,
    describe,
    load_templates,
    parse_templates,
)
from .em import (
    DegenerateFitError,
    EMError,
    EMSettings,
    FilterFit,
    FilterParams,
    fit,
    flag_top_k,
)
from .detector import DetectionReport, detect, export
from .baselines import CooksResult, RatioResult, cooks_distance, ratio_detector
from .inject import InjectedDataset, InjectionSpec, inject, pick_contextual_target, standardize
from .synthetic import linear_dataset
from .metrics import (
    ConfusionCounts,
    LabeledSet,
    RankedScores,
    auc_pr,
    confusion,
    estimate_population,
    pr_curve,
    precision_at_k,
    rank,
)
