"""Subgroup performance analysis and CUSUM drift monitoring for binary classifiers."""

__version__ = "0.1.0"

from .ingest import (  # noqa: E402
    EXCLUDED,
    DataError,
    Dataset,
    PredictionRecord,
    bin_age,
    derive_label,
    load_dataset,
)
from .metrics import (  # noqa: E402
    MetricSet,
    auroc,
    confusion,
    f1_score,
    metric_set,
    prevalence,
    select_threshold,
    uncertainty,
)
from .monitor import (  # noqa: E402
    CusumCalibration,
    CusumState,
    calibrate,
    evaluate_alarms,
    run_chart,
    tune_k,
    update,
)
from .simulate import DriftScenario, run_scenario, sweep_delta  # noqa: E402
from .stats import (  # noqa: E402
    TestResult,
    cramers_v,
    dunn_posthoc,
    kruskal_wallis,
    mann_whitney_u,
    pearson,
    spearman,
)
from .subgroup import analyze, association_scan, disparity_tests, partition  # noqa: E402
