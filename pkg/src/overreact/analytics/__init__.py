"""Performance measures, Sharpe-difference inference and Shapley attribution."""
from .inference import JKResult, jobson_korkie, jk_statistic, write_jk_csv
from .metrics import (PerfReport, annualization_factor, higher_moments, max_drawdown,
                      perf_report, sharpe, sortino)
from .shapley import ShapExplanation, ShapSummary, shap_summary, shapley_exact, shapley_sampled

__all__ = [
    "JKResult", "jobson_korkie", "jk_statistic", "write_jk_csv", "PerfReport",
    "annualization_factor", "higher_moments", "max_drawdown", "perf_report", "sharpe",
    "sortino", "ShapExplanation", "ShapSummary", "shap_summary", "shapley_exact",
    "shapley_sampled",
]
