from .cumulant import (FAST_LIMIT, SLOW_LIMIT, RateEstimate, classify_regime, crossing_time, cumulant_g,
                       dephasing_function, extract_rate)
from .fitting import CorrelationFit, FitReport, autocorrelation, fit_correlation
from .pipeline import (CLASSIFICATION, DephasingResult, EnsembleStats, ResolvedRow, analyze_correlation,
                       disorder_ensemble, localization, pure_dephasing, resolve_contributions)
from .report import SEQUENCES, aggregate_report

__all__ = [
    "FAST_LIMIT", "SLOW_LIMIT", "RateEstimate", "classify_regime", "crossing_time", "cumulant_g",
    "dephasing_function", "extract_rate", "CorrelationFit", "FitReport", "autocorrelation",
    "fit_correlation", "CLASSIFICATION", "DephasingResult", "EnsembleStats", "ResolvedRow",
    "analyze_correlation", "disorder_ensemble", "localization", "pure_dephasing",
    "resolve_contributions", "SEQUENCES", "aggregate_report",
]
