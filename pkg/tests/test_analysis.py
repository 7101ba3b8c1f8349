import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from scipy import stats

from satsurv import (
    AnalysisReport,
    ChangePointSpec,
    ComboSpec,
    FittedModel,
    SurvivalSample,
    SurvivalWarning,
    fit_all_families,
    full_report,
    load_ipd,
    oslrt,
    truncate_at,
)

from conftest import random_sample, samples, write_ipd

DATA = Path(__file__).parent / "data"


class TestLoadIPD:
    def test_basic(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("time,status\n1.0,1\n2.5,0")
        s = load_ipd(p)
        assert s.times.tolist() == [1.0, 2.5] and s.events.tolist() == [1, 0]
        assert s.max_time == 2.5

    def test_fixture(self):
        s = load_ipd(DATA / "control_91.csv")
        assert len(s) == 91 and s.n_events == 68
        assert s.censoring_proportion == pytest.approx(0.25, abs=0.005)

    @pytest.mark.parametrize(
        "text, match",
        [
            ("", "empty"),
            ("\n\n", "empty"),
            ("t,s\n1,1\n", "header"),
            ("time,status\n", "no data"),
            ("time,status\nx,1\n", "line 2"),
            ("time,status\n1,1\n2,1,3\n", "line 3"),
            ("time,status\n-1,1\n", "line 2"),
            ("time,status\ninf,1\n", "line 2"),
            ("time,status\n1,2\n", "status"),
        ],
    )
    def test_errors(self, tmp_path, text, match):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(ValueError, match=match):
            load_ipd(p)

    def test_round_trip(self, tmp_path, rng):
        s = random_sample(rng, 25)
        assert load_ipd(write_ipd(tmp_path / "s.csv", s)) == s


def _draw(model, n, seed):
    rng = np.random.default_rng(seed)
    t = model.inverse_cum_hazard(rng.standard_exponential(n))
    return SurvivalSample(t, np.ones(n, int))


class TestFitAllFamilies:
    def test_exponential_data(self):
        ranked = fit_all_families(_draw(FittedModel.exponential(1.0), 2000, 1))
        aic = {m.family.value: m.aic for m in ranked}
        assert aic["exponential"] - ranked[0].aic < 2.0
        assert [m.aic for m in ranked] == sorted(m.aic for m in ranked)
        assert len(ranked) == 5

    def test_loglogistic_data(self):
        ranked = fit_all_families(_draw(FittedModel.loglogistic(1.7, 2.0), 2000, 2))
        aic = {m.family.value: m.aic for m in ranked}
        assert ranked[0].family.value == "loglogistic"
        assert aic["exponential"] - aic["loglogistic"] > 10

    def test_rescaling_preserves_ranking(self):
        s = load_ipd(DATA / "control_91.csv")
        a = fit_all_families(s)
        b = fit_all_families(SurvivalSample(s.times * 30.4, s.events))
        assert [m.family for m in a] == [m.family for m in b]
        da = np.diff([m.aic for m in a])
        db = np.diff([m.aic for m in b])
        np.testing.assert_allclose(da, db, atol=1e-3)

    def test_reproducible(self):
        s = load_ipd(DATA / "control_91.csv")
        assert [m.to_dict() for m in fit_all_families(s)] == [m.to_dict() for m in fit_all_families(s)]

    def test_subset_and_errors(self):
        s = load_ipd(DATA / "control_91.csv")
        assert [m.family.value for m in fit_all_families(s, ["exponential"])] == ["exponential"]
        with pytest.raises(ValueError, match="2 events"):
            fit_all_families(SurvivalSample(np.array([1.0, 2.0]), np.array([1, 0])))


class TestTruncate:
    def test_example(self):
        s = truncate_at(SurvivalSample(np.array([10.0, 20.0]), np.array([1, 1])), 15.0)
        assert s.times.tolist() == [10.0, 15.0] and s.events.tolist() == [1, 0]

    def test_identity(self, rng):
        s = random_sample(rng, 20)
        assert truncate_at(s, s.max_time) is s
        with pytest.raises(ValueError):
            truncate_at(s, 0.0)

    def test_lowers_expected_events(self, rng):
        t = rng.uniform(0.5, 25.0, 60)
        t[0] = 25.0
        s = SurvivalSample(t, rng.integers(0, 2, 60))
        control = FittedModel.weibull(1.2, 15.0)
        before = oslrt(s, control)
        after = oslrt(truncate_at(s, 17.60), control)
        assert after.expected < before.expected
        assert after.observed <= before.observed

    @given(samples(min_size=2))
    def test_monotone(self, s):
        control = FittedModel.exponential(0.3)
        cut = float(np.median(s.times))
        before = oslrt(s, control)
        after = oslrt(truncate_at(s, cut), control)
        assert after.observed <= before.observed
        assert after.expected <= before.expected + 1e-12


CONTROL = FittedModel.exponential(0.35)


class TestFullReport:
    def _sample(self, seed=3):
        return random_sample(np.random.default_rng(seed), 50, rate=0.25, censor_rate=0.1)

    def test_layout(self):
        cps = [ChangePointSpec("early", k=2.0), ChangePointSpec("middle", k1=1.0, k2=4.0),
               ChangePointSpec("delayed", k=3.0), ChangePointSpec("crossing")]
        rep = full_report(self._sample(), [CONTROL, FittedModel.weibull(1.2, 3.0)], cps, ComboSpec(),
                          control_max_time=8.0, seed=1)
        assert rep.tests == [
            "OSLRT", "mOSLRT", "Z_EE(k=2)", "Z_ME(k1=1,k2=4)", "Z_DE(k=3)", "Z_CH",
            f"dRMST(tau={rep.tau:g})", "maxCombo-Hochberg", "maxCombo-exact",
        ]
        assert rep.columns == ["exponential", "weibull"]
        assert rep.tau == pytest.approx(min(self._sample().max_time, 8.0))
        assert len(rep.cells) == 18
        table = rep.pvalue_table()
        assert all(0 <= p <= 1 for row in table.values() for p in row.values())

    def test_empty_change_points(self):
        rep = full_report(self._sample(), [CONTROL])
        assert rep.tests == ["OSLRT", "mOSLRT", f"dRMST(tau={rep.tau:g})"]

    def test_degenerate_cell(self):
        rep = full_report(self._sample(), [CONTROL], [ChangePointSpec("delayed", k=100.0)])
        cell = rep.cells[("Z_DE(k=100)", "exponential")]
        assert isinstance(cell, str)
        assert math.isnan(rep.pvalue("Z_DE(k=100)", "exponential"))
        assert rep.warnings
        assert "n/a" in rep.to_text()

    def test_deterministic_and_round_trip(self):
        args = (self._sample(), [CONTROL], [ChangePointSpec("early", k=2.0)], ComboSpec())
        a = full_report(*args, seed=4)
        b = full_report(*args, seed=4)
        assert a.to_json() == b.to_json()
        back = AnalysisReport.from_json(a.to_json())
        assert back.to_json() == a.to_json()
        assert json.loads(a.to_json())["note"]
        assert a.to_csv().splitlines()[0] == "test,model,statistic,pvalue,observed,expected,error"

    def test_truncation_is_recorded(self):
        rep = full_report(self._sample(), [CONTROL], truncation=5.0)
        assert rep.truncation == 5.0 and rep.tau <= 5.0

    def test_rmst_direction_matches_score_tests(self):
        # long survival: every test should favour the experimental arm
        rng = np.random.default_rng(8)
        s = SurvivalSample(rng.exponential(1 / 0.1, 80), np.ones(80, int))
        rep = full_report(s, [CONTROL], control_max_time=10.0)
        for t in rep.tests:
            assert rep.pvalue(t, "exponential") < 0.05, t

    def test_null_battery_is_uniform(self):
        rng = np.random.default_rng(10)
        ps = []
        for _ in range(300):
            s = SurvivalSample(rng.exponential(1 / 0.35, 60), np.ones(60, int))
            ps.append(full_report(s, [CONTROL]).pvalue("OSLRT", "exponential"))
        assert stats.kstest(ps, "uniform").pvalue > 0.001

    def test_requires_models(self):
        with pytest.raises(ValueError):
            full_report(self._sample(), [])


def test_weibull_warning_channel():
    # a control with only two distinct event times may fail some fits
    s = SurvivalSample(np.array([1.0, 1.0, 2.0, 2.0, 3.0]), np.array([1, 1, 1, 1, 0]))
    import warnings

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ranked = fit_all_families(s)
    assert ranked
    assert all(issubclass(w.category, SurvivalWarning) for w in caught)
