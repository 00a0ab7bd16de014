"""Conditional outlier detection in high-dimensional regression data.

Robust penalized selection of K predictors, a robust refit (LTS, MM or GS)
on the selected columns and a scaled-residual flag rule.
"""

from .data import Dataset, load_csv, robust_standardize, write_csv
from .errors import InfeasibleError, RoboutError, StageError
from .evaluation import outlier_metrics, predictor_metrics, run_benchmark
from .losses import LossSpec
from .pipeline import DetectionOutcome, RoboutVariant, all_variants, detect, detect_all_variants, parse_variant
from .regression import RobustFit, fit_gs, fit_lts, fit_mm
from .scale import flag_outliers
from .selection import fit_penalized_path, select_top_k
from .simulate import ScenarioConfig, generate, scenario_preset

__version__ = "0.1.0"
