import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from satsurv import (
    Family,
    FittedModel,
    SurvivalSample,
    eval_model,
    fit_mle,
    inverse_cum_hazard,
    parse_model,
    rmst_parametric,
)
from satsurv.distributions import MEDIAN_TWO_YEARS_RATE, ROUNDED_RATE

MODELS = [
    FittedModel.exponential(0.35),
    FittedModel.weibull(1.5, 2.0),
    FittedModel.weibull(0.7, 3.0),
    FittedModel.loglogistic(1.7, 2.0),
    FittedModel.loglogistic(0.8, 1.0),
    FittedModel.lognormal(0.5, 0.9),
    FittedModel.lognormal(-1.0, 2.0),
    FittedModel.gamma(2.0, 1.5),
    FittedModel.gamma(0.6, 2.0),
]


class TestFamily:
    def test_parameter_counts(self):
        assert Family.EXPONENTIAL.n_params == 1
        assert all(f.n_params == 2 for f in Family if f is not Family.EXPONENTIAL)

    def test_aliases(self):
        assert Family.coerce("llogis") is Family.LOGLOGISTIC
        assert Family.coerce("Log-Normal") is Family.LOGNORMAL
        with pytest.raises(ValueError, match="unknown family"):
            Family.coerce("pareto")


class TestFittedModel:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            FittedModel.exponential(0.0)
        with pytest.raises(ValueError):
            FittedModel.weibull(-1.0, 2.0)
        with pytest.raises(ValueError):
            FittedModel(Family.WEIBULL, (1.0,))
        with pytest.raises(ValueError):
            FittedModel.lognormal(0.0, 0.0)
        # meanlog may be negative
        FittedModel.lognormal(-3.0, 1.0)

    def test_user_supplied_has_no_fit(self):
        m = FittedModel.exponential(0.35)
        assert m.n_fit == 0 and math.isnan(m.aic) and math.isnan(m.loglik)

    def test_dict_round_trip(self):
        for m in MODELS:
            assert FittedModel.from_dict(m.to_dict()) == m

    def test_parse_model(self):
        assert parse_model("exponential:0.35") == FittedModel.exponential(0.35)
        assert parse_model("weibull:1.5,2") == FittedModel.weibull(1.5, 2.0)
        for bad in ("exponential", "weibull:1.5", "exponential:x", "foo:1"):
            with pytest.raises(ValueError):
                parse_model(bad)

    def test_rate_constants(self):
        assert FittedModel.exponential(MEDIAN_TWO_YEARS_RATE).median() == pytest.approx(2.0, rel=1e-12)
        assert ROUNDED_RATE == 0.35


class TestEvalModel:
    def test_exponential_example(self):
        h, H, S = eval_model(FittedModel.exponential(0.35), 2.0)
        assert h == pytest.approx(0.35)
        assert H == pytest.approx(0.7, rel=1e-14)
        assert S == pytest.approx(math.exp(-0.7), rel=1e-14)
        assert S == pytest.approx(0.4966, abs=1e-4)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
    def test_origin(self, model):
        _, H, S = eval_model(model, 0.0)
        assert H == 0.0 and S == 1.0

    def test_loglogistic_at_scale(self):
        _, _, S = eval_model(FittedModel.loglogistic(1.7, 2.0), 2.0)
        assert S == pytest.approx(0.5, abs=1e-14)

    def test_lognormal_and_gamma_closed_forms(self):
        from scipy import stats

        t = np.array([0.3, 1.0, 4.0])
        m = FittedModel.lognormal(0.5, 0.9)
        assert_allclose(m.survival(t), stats.lognorm.sf(t, 0.9, scale=math.exp(0.5)), rtol=1e-12)
        g = FittedModel.gamma(2.0, 1.5)
        assert_allclose(g.survival(t), stats.gamma.sf(t, 2.0, scale=1.5), rtol=1e-12)
        # hazard = pdf / sf
        assert_allclose(g.hazard(t), stats.gamma.pdf(t, 2.0, scale=1.5) / stats.gamma.sf(t, 2.0, scale=1.5), rtol=1e-10)
        w = FittedModel.weibull(1.5, 2.0)
        assert_allclose(w.hazard(t), stats.weibull_min.pdf(t, 1.5, scale=2) / stats.weibull_min.sf(t, 1.5, scale=2), rtol=1e-10)
        ll = FittedModel.loglogistic(1.7, 2.0)
        assert_allclose(ll.hazard(t), stats.fisk.pdf(t, 1.7, scale=2) / stats.fisk.sf(t, 1.7, scale=2), rtol=1e-10)

    @pytest.mark.parametrize("t", [-1.0, math.nan, math.inf])
    def test_invalid_time(self, t):
        with pytest.raises(ValueError):
            eval_model(FittedModel.exponential(1.0), t)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
    def test_grid_invariants(self, model):
        t = np.linspace(0, 20, 1000)
        H = model.cum_hazard(t)
        assert H[0] == 0.0
        assert np.all(np.diff(H) >= 0)
        assert_allclose(model.survival(t), np.exp(-H), rtol=0, atol=1e-12)


class TestInverseCumHazard:
    def test_examples(self):
        assert inverse_cum_hazard(FittedModel.exponential(0.35), 0.25) == pytest.approx(0.25 / 0.35, rel=1e-14)
        assert inverse_cum_hazard(FittedModel.weibull(2.0, 1.0), 1.0) == pytest.approx(1.0, rel=1e-14)
        for m in MODELS:
            assert inverse_cum_hazard(m, 0.0) == 0.0

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
    def test_right_inverse(self, model):
        u = np.logspace(-6, 1, 40)
        t = inverse_cum_hazard(model, u)
        assert np.max(np.abs(model.cum_hazard(t) - u)) < 1e-8

    def test_rejects_invalid(self):
        for u in (-0.1, math.nan, math.inf):
            with pytest.raises(ValueError):
                inverse_cum_hazard(FittedModel.gamma(2.0, 1.0), u)


class TestRmstParametric:
    def test_exponential_closed_form(self):
        assert rmst_parametric(FittedModel.exponential(1.0), 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)

    def test_weibull_shape_one(self):
        v = rmst_parametric(FittedModel.weibull(1.0, 2.0), 2.0)
        assert v == pytest.approx(2 * (1 - math.exp(-1)), abs=1e-9)

    @pytest.mark.parametrize("rate,tau", [(0.35, 7.0), (1.0, 0.5), (0.05, 30.0)])
    def test_exponential_paths_agree(self, rate, tau):
        m = FittedModel.exponential(rate)
        assert abs(rmst_parametric(m, tau) - rmst_parametric(m, tau, method="quad")) < 1e-8

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
    def test_matches_independent_quadrature(self, model):
        ref, _ = integrate.quad(lambda x: float(model.survival(x)), 0, 5.0, epsabs=1e-12, limit=200)
        assert rmst_parametric(model, 5.0) == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
    def test_small_tau(self, model):
        tau = 1e-4
        v = rmst_parametric(model, tau)
        assert v <= tau and v / tau > 0.99

    @pytest.mark.parametrize("tau", [0.0, -1.0, math.nan, math.inf])
    def test_invalid_tau(self, tau):
        with pytest.raises(ValueError):
            rmst_parametric(FittedModel.exponential(1.0), tau)


class TestFitMle:
    def test_exponential_examples(self):
        s = SurvivalSample([1.0, 2.0, 3.0], [1, 1, 0])
        assert fit_mle(s, "exponential").params[0] == pytest.approx(2 / 6, rel=1e-6)
        assert fit_mle(SurvivalSample([1.0], [1]), "exponential").params[0] == pytest.approx(1.0, rel=1e-6)

    def test_exponential_loglik_and_aic(self, rng):
        t = rng.exponential(2.0, 200)
        d = (rng.random(200) < 0.8).astype(int)
        s = SurvivalSample(t, d)
        m = fit_mle(s, Family.EXPONENTIAL)
        lam = d.sum() / t.sum()
        assert m.params[0] == pytest.approx(lam, rel=1e-6)
        assert m.loglik == pytest.approx(d.sum() * math.log(lam) - lam * t.sum(), rel=1e-9)
        assert m.aic == pytest.approx(2 - 2 * m.loglik)
        assert m.n_fit == 200

    def test_weibull_recovery(self):
        rng = np.random.default_rng(2024)
        t = 2.0 * rng.weibull(1.5, 5000)
        m = fit_mle(SurvivalSample(t, np.ones(5000, int)), "weibull")
        assert abs(m.params[0] / 1.5 - 1) < 0.03
        assert m.converged

    @pytest.mark.parametrize("family", list(Family))
    def test_all_families_converge(self, family, rng):
        t = rng.gamma(2.0, 1.0, 300)
        c = rng.exponential(5.0, 300)
        s = SurvivalSample(np.minimum(t, c), (t <= c).astype(int))
        m = fit_mle(s, family)
        assert m.converged and math.isfinite(m.loglik)
        assert m.aic == pytest.approx(2 * family.n_params - 2 * m.loglik)

    def test_errors(self):
        with pytest.raises(ValueError, match="without events"):
            fit_mle(SurvivalSample([1.0, 2.0], [0, 0]), "weibull")
        with pytest.raises(ValueError, match="> 0"):
            fit_mle(SurvivalSample([0.0, 2.0], [1, 1]), "lognormal")

    def test_non_convergence_is_flagged(self, rng):
        s = SurvivalSample(rng.exponential(1.0, 50), np.ones(50, int))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            m = fit_mle(s, "weibull", maxfev=5)
        assert not m.converged
        assert any("did not converge" in str(w.message) for w in caught)

    @given(st.floats(0.2, 5.0))
    def test_scale_equivariance(self, c):
        rng = np.random.default_rng(7)
        t = rng.weibull(1.3, 80)
        s1 = fit_mle(SurvivalSample(t, np.ones(80, int)), "weibull")
        s2 = fit_mle(SurvivalSample(c * t, np.ones(80, int)), "weibull")
        assert s2.params[0] == pytest.approx(s1.params[0], rel=1e-5)
        assert s2.params[1] == pytest.approx(c * s1.params[1], rel=1e-5)
