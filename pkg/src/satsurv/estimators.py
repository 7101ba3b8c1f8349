"""Estimator-style wrappers around the functional API.

``X`` is either a :class:`SurvivalSample`, an ``(n, 2)`` array of
``(time, status)`` rows, or times with the event indicators passed as ``y``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._data import check_survival_data
from .analysis import fit_all_families
from .distributions import FittedModel, fit_mle, parse_model, rmst_parametric
from .km import drmst_test, km_estimate, rmst_km, select_tau
from .maxcombo import ComboSpec, maxcombo
from .score_tests import ChangePointSpec, moslrt

__all__ = ["ParametricSurvival", "KaplanMeier", "OneSampleTest", "RMSTTest", "MaxComboTest"]


def _control(control) -> FittedModel:
    if isinstance(control, FittedModel):
        return control
    if isinstance(control, str):
        return parse_model(control)
    if isinstance(control, ParametricSurvival):
        check_is_fitted(control, "model_")
        return control.model_
    raise TypeError("control must be a FittedModel, a 'family:params' string or a fitted ParametricSurvival")


class ParametricSurvival(BaseEstimator):
    """Maximum-likelihood fit of one family, or of all families ranked by AIC
    when ``family="auto"``.

    Attributes:
        model_: the selected :class:`FittedModel`.
        ranking_: all fitted models by ascending AIC (``family="auto"`` only).
    """

    def __init__(self, family: str = "exponential"):
        self.family = family

    def fit(self, X, y=None):
        sample = check_survival_data(X, y)
        if self.family == "auto":
            self.ranking_ = fit_all_families(sample)
            self.model_ = self.ranking_[0]
        else:
            self.model_ = fit_mle(sample, self.family)
        self.aic_ = self.model_.aic
        return self

    def predict(self, t):
        """Survival probabilities at times ``t``."""
        check_is_fitted(self, "model_")
        return self.model_.survival(np.asarray(t, dtype=np.float64))

    def cumulative_hazard(self, t):
        check_is_fitted(self, "model_")
        return self.model_.cum_hazard(np.asarray(t, dtype=np.float64))

    def rmst(self, tau: float) -> float:
        check_is_fitted(self, "model_")
        return rmst_parametric(self.model_, tau)


class KaplanMeier(BaseEstimator):
    def __init__(self, method: str = "trapezoid"):
        self.method = method

    def fit(self, X, y=None):
        self.curve_ = km_estimate(check_survival_data(X, y))
        return self

    def predict(self, t):
        check_is_fitted(self, "curve_")
        return self.curve_(t)

    def rmst(self, tau: float) -> float:
        check_is_fitted(self, "curve_")
        return rmst_km(self.curve_, tau, self.method)


class OneSampleTest(BaseEstimator):
    """Score test against a fixed control model.

    ``kind`` is ``"ph"`` (OSLRT), ``"moslrt"``, ``"early"``, ``"middle"``,
    ``"delayed"`` or ``"crossing"``.
    """

    def __init__(self, control="exponential:0.35", kind: str = "ph", k=None, k1=None, k2=None, alpha: float = 0.05):
        self.control = control
        self.kind = kind
        self.k = k
        self.k1 = k1
        self.k2 = k2
        self.alpha = alpha

    def fit(self, X, y=None):
        sample = check_survival_data(X, y)
        control = _control(self.control)
        if self.kind == "moslrt":
            self.result_ = moslrt(sample, control, self.alpha)
        else:
            spec = ChangePointSpec(self.kind, self.k, self.k1, self.k2)
            self.result_ = spec.evaluate(sample, control, self.alpha)
        self.statistic_ = self.result_.statistic
        self.pvalue_ = self.result_.pvalue
        return self

    def predict(self, X=None):
        """1 if the null hypothesis is rejected, else 0."""
        check_is_fitted(self, "result_")
        return int(self.result_.reject)


class RMSTTest(BaseEstimator):
    def __init__(self, control="exponential:0.35", tau=None, control_max_time=None, alpha: float = 0.05, method: str = "trapezoid"):
        self.control = control
        self.tau = tau
        self.control_max_time = control_max_time
        self.alpha = alpha
        self.method = method

    def fit(self, X, y=None):
        sample = check_survival_data(X, y)
        tau = self.tau
        if tau is None:
            tau = sample.max_time if self.control_max_time is None else select_tau(sample, self.control_max_time)
        self.tau_ = tau
        self.result_ = drmst_test(sample, _control(self.control), tau, self.alpha, self.method)
        self.statistic_ = self.result_.statistic
        self.pvalue_ = self.result_.pvalue
        return self

    def predict(self, X=None):
        check_is_fitted(self, "result_")
        return int(self.result_.reject)


class MaxComboTest(BaseEstimator):
    def __init__(self, control="exponential:0.35", early=(1.0, 3.0), delayed=(3.0, 5.0), alpha: float = 0.05, seed: int = 0, exact: bool = True):
        self.control = control
        self.early = early
        self.delayed = delayed
        self.alpha = alpha
        self.seed = seed
        self.exact = exact

    def fit(self, X, y=None):
        sample = check_survival_data(X, y)
        spec = ComboSpec.default(tuple(self.early), tuple(self.delayed))
        self.result_ = maxcombo(sample, _control(self.control), spec, alpha=self.alpha, seed=self.seed, exact=self.exact)
        self.statistic_ = self.result_.statistic
        self.pvalue_hochberg_ = self.result_.p_hochberg
        self.pvalue_exact_ = self.result_.p_exact
        return self

    def predict(self, X=None):
        """Rejection decision based on the exact p-value when available."""
        check_is_fitted(self, "result_")
        p = self.pvalue_exact_ if self.exact else self.pvalue_hochberg_
        return int(p < self.alpha)
