from .data import Dataset, generate_fried, load_csv, load_dataset
from .experiment import (
    ExperimentConfig,
    ResultRow,
    ablation_ratios,
    evaluate_splits,
    grid_search,
    kfold_split,
    run_ablation,
    run_experiment,
    significantly_different,
    t_interval,
)
from .report import emit_report, read_results_csv

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ResultRow",
    "ablation_ratios",
    "emit_report",
    "evaluate_splits",
    "generate_fried",
    "grid_search",
    "kfold_split",
    "load_csv",
    "load_dataset",
    "read_results_csv",
    "run_ablation",
    "run_experiment",
    "significantly_different",
    "t_interval",
]
