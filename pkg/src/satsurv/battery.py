"""A named collection of tests evaluated together on one sample."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._data import DegenerateStatisticError, SurvivalSample, SurvivalWarning
from .distributions import FittedModel
from .km import drmst_test, select_tau
from .maxcombo import ComboSpec, maxcombo
from .score_tests import (
    TestOutcome,
    _crossing,
    _cum_hazards,
    _delayed,
    _early,
    _middle,
    _moslrt,
    _oslrt,
)

__all__ = ["TestSpec", "default_battery", "evaluate_battery", "METHODS"]

METHODS = (
    "oslrt",
    "moslrt",
    "early",
    "middle",
    "delayed",
    "crossing",
    "rmst",
    "maxcombo_hochberg",
    "maxcombo_exact",
)

# Analysis-side change-points of the simulation study, by scenario.
_EARLY_K = {1: 4.0, 2: 4.0, 3: 1.0, 4: 4.0, 5: 3.0, 6: 1.0}
_MIDDLE_K = {1: (1.0, 6.0), 2: (1.0, 6.0), 3: (1.0, 7.0), 4: (1.0, 4.0), 5: (0.0, 3.0), 6: (1.0, 4.0)}
_DELAYED_K = {1: 2.0, 2: 2.0, 3: 1.0, 4: 1.0, 5: 3.0, 6: 1.0}


@dataclass(frozen=True)
class TestSpec:
    """One test of a battery.

    ``method`` is one of :data:`METHODS`. ``k`` is the change-point of the
    early/delayed tests, ``k1``/``k2`` those of the middle test. For ``rmst``,
    ``tau`` is the control group's largest follow-up time and the horizon is
    ``min(max X, tau)``. The two max-Combo methods share ``combo``.
    """

    __test__ = False

    method: str
    k: float | None = None
    k1: float | None = None
    k2: float | None = None
    tau: float | None = None
    combo: ComboSpec | None = None

    def __post_init__(self):
        method = self.method.lower()
        if method not in METHODS:
            raise ValueError(f"unknown test method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", method)
        if method in ("early", "delayed") and (self.k is None or not self.k >= 0):
            raise ValueError(f"{method} test needs a change-point k >= 0")
        if method == "middle":
            if self.k1 is None or self.k2 is None or not 0 <= self.k1 < self.k2:
                raise ValueError("middle test needs change-points 0 <= k1 < k2")
        if method == "rmst" and self.tau is not None and not self.tau > 0:
            raise ValueError("rmst horizon must be positive")
        if method.startswith("maxcombo") and self.combo is None:
            object.__setattr__(self, "combo", ComboSpec())

    @property
    def name(self) -> str:
        m = self.method
        if m == "oslrt":
            return "OSLRT"
        if m == "moslrt":
            return "mOSLRT"
        if m == "early":
            return f"Z_EE(k={self.k:g})"
        if m == "middle":
            return f"Z_ME(k1={self.k1:g},k2={self.k2:g})"
        if m == "delayed":
            return f"Z_DE(k={self.k:g})"
        if m == "crossing":
            return "Z_CH"
        if m == "rmst":
            return "dRMST" if self.tau is None else f"dRMST(tau<={self.tau:g})"
        return "maxCombo-Hochberg" if m == "maxcombo_hochberg" else "maxCombo-exact"

    def shifted(self, offset: float) -> "TestSpec":
        """Same test with its change-point(s) moved by ``offset`` (clipped at 0)."""
        def clip(v):
            if v is None:
                return None
            if v + offset < 0:
                warnings.warn(
                    f"shifted change-point {v + offset:g} clipped to 0", SurvivalWarning, stacklevel=3
                )
            return max(0.0, v + offset)

        return TestSpec(self.method, clip(self.k), clip(self.k1), clip(self.k2), self.tau, self.combo)

    def to_dict(self) -> dict:
        d = {"method": self.method}
        for key in ("k", "k1", "k2", "tau"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.combo is not None:
            d["combo"] = self.combo.to_dict()["components"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestSpec":
        combo = d.get("combo")
        if combo is not None:
            combo = ComboSpec(tuple((kind, k) for kind, k in combo))
        return cls(d["method"], d.get("k"), d.get("k1"), d.get("k2"), d.get("tau"), combo)


def default_battery(scenario: int, horizon: float = 7.0, combo: ComboSpec | None = None) -> list[TestSpec]:
    """The nine tests of the simulation study with the scenario's change-points."""
    if scenario not in _EARLY_K:
        raise ValueError(f"scenario must be in 1..6, got {scenario}")
    combo = ComboSpec() if combo is None else combo
    k1, k2 = _MIDDLE_K[scenario]
    return [
        TestSpec("oslrt"),
        TestSpec("moslrt"),
        TestSpec("early", k=_EARLY_K[scenario]),
        TestSpec("middle", k1=k1, k2=k2),
        TestSpec("delayed", k=_DELAYED_K[scenario]),
        TestSpec("crossing"),
        TestSpec("rmst", tau=horizon),
        TestSpec("maxcombo_hochberg", combo=combo),
        TestSpec("maxcombo_exact", combo=combo),
    ]


def evaluate_battery(
    sample: SurvivalSample,
    control: FittedModel,
    specs: list[TestSpec],
    *,
    alpha: float = 0.05,
    seed=0,
) -> dict[str, TestOutcome | Exception]:
    """Run every test of ``specs``; degenerate tests map to their exception.

    The control cumulative hazard at the observed times is computed once and
    shared by all score tests.
    """
    times, events = sample.times, sample.events
    lam = _cum_hazards(sample, control)
    out: dict[str, TestOutcome | Exception] = {}
    combos: dict[ComboSpec, object] = {}
    for spec in specs:
        m = spec.method
        try:
            if m == "oslrt":
                res = _oslrt(events, lam, alpha)
            elif m == "moslrt":
                res = _moslrt(events, lam, alpha)
            elif m == "early":
                res = _early(times, events, lam, spec.k, control.cum_hazard(spec.k), alpha)
            elif m == "middle":
                res = _middle(
                    times, events, lam, spec.k1, spec.k2,
                    control.cum_hazard(spec.k1), control.cum_hazard(spec.k2), alpha,
                )
            elif m == "delayed":
                res = _delayed(times, events, lam, spec.k, control.cum_hazard(spec.k), alpha)
            elif m == "crossing":
                res = _crossing(events.astype(np.float64), lam, alpha)
            elif m == "rmst":
                tau = sample.max_time if spec.tau is None else select_tau(sample, spec.tau)
                res = drmst_test(sample, control, tau, alpha)
            else:
                if spec.combo not in combos:
                    want_exact = any(
                        s.method == "maxcombo_exact" and s.combo == spec.combo for s in specs
                    )
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", SurvivalWarning)
                            combos[spec.combo] = maxcombo(
                                sample, control, spec.combo, alpha=alpha, seed=seed, exact=want_exact
                            )
                    except DegenerateStatisticError as exc:
                        combos[spec.combo] = exc
                combo_res = combos[spec.combo]
                if isinstance(combo_res, Exception):
                    raise combo_res
                hoch, exact = combo_res.outcomes()
                res = hoch if m == "maxcombo_hochberg" else exact
        except DegenerateStatisticError as exc:
            res = exc
        out[spec.name] = res
    return out


def rejected(result: TestOutcome | Exception) -> bool:
    """Degenerate evaluations count as non-rejections."""
    if isinstance(result, Exception):
        return False
    return not math.isnan(result.pvalue) and result.reject
