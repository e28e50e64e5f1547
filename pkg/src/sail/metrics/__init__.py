"""Evaluation and corruption diagnostics."""

from .evaluation import EvalReport, aggregate, eval_policy, iqm, stderr
from .io import CORRUPTION_COLUMNS, METRICS_COLUMNS, read_csv, write_corruption_diag, write_metrics
from .outliers import LofReport, corrupted_variance, lof
