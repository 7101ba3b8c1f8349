"""One-sample survival tests for single-arm trials compared with an external
control, under proportional and non-proportional hazards."""

from ._data import DegenerateStatisticError, SurvivalSample, SurvivalWarning, check_survival_data
from .analysis import AnalysisReport, fit_all_families, full_report, load_ipd, truncate_at
from .battery import TestSpec, default_battery, evaluate_battery
from .distributions import (
    MEDIAN_TWO_YEARS_RATE,
    ROUNDED_RATE,
    Family,
    FittedModel,
    eval_model,
    fit_mle,
    inverse_cum_hazard,
    parse_model,
    rmst_parametric,
)
from .estimators import KaplanMeier, MaxComboTest, OneSampleTest, ParametricSurvival, RMSTTest
from .km import KMCurve, drmst_test, greenwood_variance, km_estimate, rmst_km, select_tau
from .maxcombo import ComboResult, ComboSpec, covariance_matrix, hochberg_p, maxcombo, mvn_upper_orthant
from .score_tests import (
    ChangePointSpec,
    TestOutcome,
    crossing_time,
    moslrt,
    oslrt,
    z_crossing,
    z_delayed,
    z_early,
    z_middle,
)
from .simulate import (
    PiecewiseHazardSpec,
    ScenarioConfig,
    SimulationReport,
    calibrate_censor_rate,
    control_variability_study,
    cp_misspecification_sweep,
    misspecified_analysis_study,
    run_study,
    run_study_config,
    sample_piecewise_exponential,
    scenario_hazards,
    simulate_trial,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "ChangePointSpec",
    "ComboResult",
    "ComboSpec",
    "DegenerateStatisticError",
    "Family",
    "FittedModel",
    "KMCurve",
    "KaplanMeier",
    "MEDIAN_TWO_YEARS_RATE",
    "MaxComboTest",
    "OneSampleTest",
    "ROUNDED_RATE",
    "ParametricSurvival",
    "PiecewiseHazardSpec",
    "RMSTTest",
    "ScenarioConfig",
    "SimulationReport",
    "SurvivalSample",
    "SurvivalWarning",
    "TestOutcome",
    "TestSpec",
    "calibrate_censor_rate",
    "check_survival_data",
    "control_variability_study",
    "covariance_matrix",
    "cp_misspecification_sweep",
    "crossing_time",
    "default_battery",
    "drmst_test",
    "eval_model",
    "evaluate_battery",
    "fit_all_families",
    "fit_mle",
    "full_report",
    "greenwood_variance",
    "hochberg_p",
    "inverse_cum_hazard",
    "km_estimate",
    "load_ipd",
    "maxcombo",
    "misspecified_analysis_study",
    "moslrt",
    "mvn_upper_orthant",
    "oslrt",
    "parse_model",
    "rmst_km",
    "rmst_parametric",
    "run_study",
    "run_study_config",
    "sample_piecewise_exponential",
    "scenario_hazards",
    "select_tau",
    "simulate_trial",
    "truncate_at",
    "z_crossing",
    "z_delayed",
    "z_early",
    "z_middle",
]
