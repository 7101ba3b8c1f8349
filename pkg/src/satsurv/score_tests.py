"""One-sample log-rank test, its modified version, and score tests for
early, middle, delayed and crossing treatment effects.

All statistics compare the events observed in the experimental arm with the
cumulative hazard of a fixed external control model. Every test rejects for
large negative values (experimental arm better); p-values are the lower tail
``Phi(Z)``.

Ties between an observed time and a change-point are resolved exactly as the
indicator functions of the underlying likelihoods are written: the early-effect
sums use ``X <= k`` and ``X >= k`` (so a tie enters both), the middle-effect
numerator uses ``(k1, k2]`` while its variance uses ``[k1, k2]``, and the
delayed-effect sums use ``X > k``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from ._data import DegenerateStatisticError, SurvivalSample
from .distributions import FittedModel

__all__ = [
    "TestOutcome",
    "ChangePointSpec",
    "oslrt",
    "moslrt",
    "z_early",
    "z_middle",
    "z_delayed",
    "z_crossing",
    "crossing_time",
]


@dataclass(frozen=True)
class TestOutcome:
    """Result of a one-sided test.

    ``observed`` and ``expected`` are the event count and expected event count
    inside the test's time window (for the RMST test they hold the estimated
    and reference restricted means). ``alternative`` is ``"less"`` when small
    statistics favour the experimental arm, ``"greater"`` otherwise.
    """

    __test__ = False  # not a pytest class

    label: str
    statistic: float
    pvalue: float
    observed: float
    expected: float
    alpha: float = 0.05
    alternative: str = "less"

    @property
    def reject(self) -> bool:
        return self.pvalue < self.alpha

    @property
    def p_one_sided(self) -> float:
        return self.pvalue

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reject"] = self.reject
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        fields = ("label", "statistic", "pvalue", "observed", "expected", "alpha", "alternative")
        return cls(**{k: d[k] for k in fields if k in d})


def _outcome(label, numerator, radicand, observed, expected, alpha) -> TestOutcome:
    if not radicand > 0:
        raise DegenerateStatisticError(
            f"{label}: variance term is {radicand:.6g}; the statistic is undefined"
        )
    z = numerator / math.sqrt(radicand)
    return TestOutcome(label, z, float(ndtr(z)), float(observed), float(expected), alpha)


def _cum_hazards(sample: SurvivalSample, control: FittedModel) -> np.ndarray:
    return np.asarray(control.cum_hazard(sample.times), dtype=np.float64)


def _check_time(k, name="k") -> float:
    k = float(k)
    if math.isnan(k) or k < 0:
        raise ValueError(f"change-point {name} must be a nonnegative time, got {k}")
    return k


def _count_times(mask: np.ndarray, value: float) -> float:
    """``sum(mask) * value`` with the empty sum equal to 0 even for value = inf."""
    count = int(np.count_nonzero(mask))
    return count * value if count else 0.0


# Array-level kernels; ``lam`` holds Lambda0(X_i), ``lam_k`` Lambda0 at the change-point.


def _oslrt(events, lam, alpha=0.05) -> TestOutcome:
    observed = float(np.sum(events))
    expected = float(np.sum(lam))
    return _outcome("OSLRT", observed - expected, expected, observed, expected, alpha)


def _moslrt(events, lam, alpha=0.05) -> TestOutcome:
    observed = float(np.sum(events))
    expected = float(np.sum(lam))
    return _outcome(
        "mOSLRT", observed - expected, (observed + expected) / 2.0, observed, expected, alpha
    )


def _early(times, events, lam, k, lam_k, alpha=0.05) -> TestOutcome:
    before = times <= k
    observed = float(np.sum(events[before]))
    expected = float(np.sum(lam[before])) + _count_times(times >= k, lam_k)
    return _outcome(f"Z_EE(k={k:g})", observed - expected, expected, observed, expected, alpha)


def _middle(times, events, lam, k1, k2, lam_k1, lam_k2, alpha=0.05) -> TestOutcome:
    open_window = (times > k1) & (times <= k2)
    closed_window = (times >= k1) & (times <= k2)
    at_risk_k1 = _count_times(times >= k1, lam_k1)
    at_risk_k2 = _count_times(times >= k2, lam_k2)
    observed = float(np.sum(events[open_window]))
    expected = float(np.sum(lam[open_window])) - at_risk_k1 + at_risk_k2
    radicand = float(np.sum(lam[closed_window])) - at_risk_k1 + at_risk_k2
    label = f"Z_ME(k1={k1:g},k2={k2:g})"
    return _outcome(label, observed - expected, radicand, observed, expected, alpha)


def _delayed(times, events, lam, k, lam_k, alpha=0.05) -> TestOutcome:
    after = times > k
    label = f"Z_DE(k={k:g})"
    if not np.any(after):
        raise DegenerateStatisticError(f"{label}: no observation beyond the change-point")
    observed = float(np.sum(events[after]))
    expected = float(np.sum(lam[after] - lam_k))
    return _outcome(label, observed - expected, expected, observed, expected, alpha)


def _crossing(events, lam, alpha=0.05) -> TestOutcome:
    if np.any(lam <= 0):
        raise DegenerateStatisticError(
            "Z_CH: log cumulative hazard is undefined for an observation at time zero"
        )
    log_lam = np.log(lam)
    numerator = float(np.sum(events - (lam - events) * log_lam))
    radicand = -float(np.sum((events - lam * (1.0 + log_lam)) * log_lam))
    return _outcome(
        "Z_CH", numerator, radicand, float(np.sum(events)), float(np.sum(lam)), alpha
    )


# Public API


def oslrt(sample: SurvivalSample, control: FittedModel, alpha: float = 0.05) -> TestOutcome:
    """One-sample log-rank test ``(O - E) / sqrt(E)``.

    ``O`` is the number of events and ``E`` the sum of the control cumulative
    hazard at the observed times.
    """
    return _oslrt(sample.events, _cum_hazards(sample, control), alpha)


def moslrt(sample: SurvivalSample, control: FittedModel, alpha: float = 0.05) -> TestOutcome:
    """Modified one-sample log-rank test ``(O - E) / sqrt((O + E) / 2)``."""
    return _moslrt(sample.events, _cum_hazards(sample, control), alpha)


def z_early(
    sample: SurvivalSample, control: FittedModel, k: float, alpha: float = 0.05
) -> TestOutcome:
    """Score test for an effect confined to ``[0, k]``.

    ``k = inf`` gives the one-sample log-rank test.
    """
    k = _check_time(k)
    lam = _cum_hazards(sample, control)
    return _early(sample.times, sample.events, lam, k, control.cum_hazard(k), alpha)


def z_middle(
    sample: SurvivalSample, control: FittedModel, k1: float, k2: float, alpha: float = 0.05
) -> TestOutcome:
    """Score test for an effect confined to ``(k1, k2]``.

    ``(0, k)`` reduces to :func:`z_early`, ``(k, inf)`` to :func:`z_delayed`.

    Raises:
        ValueError: ``k1 >= k2``.
        DegenerateStatisticError: nonpositive variance term.
    """
    k1, k2 = _check_time(k1, "k1"), _check_time(k2, "k2")
    if not k1 < k2:
        raise ValueError(f"middle effect needs k1 < k2, got k1={k1}, k2={k2}")
    lam = _cum_hazards(sample, control)
    return _middle(
        sample.times,
        sample.events,
        lam,
        k1,
        k2,
        control.cum_hazard(k1),
        control.cum_hazard(k2),
        alpha,
    )


def z_delayed(
    sample: SurvivalSample, control: FittedModel, k: float, alpha: float = 0.05
) -> TestOutcome:
    """Score test for an effect starting after ``k``; ``k = 0`` gives the OSLRT."""
    k = _check_time(k)
    lam = _cum_hazards(sample, control)
    return _delayed(sample.times, sample.events, lam, k, control.cum_hazard(k), alpha)


def z_crossing(sample: SurvivalSample, control: FittedModel, alpha: float = 0.05) -> TestOutcome:
    """Score test of the accelerated hazards model (crossing hazards).

    Uses every observation; rejects for late benefit relative to the control.
    Requires ``Lambda0(X_i) > 0`` for all patients.
    """
    return _crossing(sample.events.astype(np.float64), _cum_hazards(sample, control), alpha)


def crossing_time(control: FittedModel, beta: float) -> float:
    """Time at which the accelerated-hazards alternative with log-effect
    ``beta`` crosses the control hazard: ``Lambda0^-1(exp(-beta / (e^beta - 1)))``.
    """
    beta = float(beta)
    if beta == 0.0 or not math.isfinite(beta):
        raise ValueError("crossing time is defined only for a finite, nonzero beta")
    return control.inverse_cum_hazard(math.exp(-beta / math.expm1(beta)))


@dataclass(frozen=True)
class ChangePointSpec:
    """Which score test to run and at which change-points.

    ``kind`` is one of ``"ph"`` (the OSLRT), ``"early"`` (uses ``k``),
    ``"middle"`` (uses ``k1 < k2``; ``k2`` may be ``inf``), ``"delayed"``
    (uses ``k``) or ``"crossing"``.
    """

    kind: str
    k: float | None = None
    k1: float | None = None
    k2: float | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind in ("early", "delayed"):
            if self.k is None:
                raise ValueError(f"{kind} effect needs a change-point k")
            _check_time(self.k)
        elif kind == "middle":
            if self.k1 is None or self.k2 is None:
                raise ValueError("middle effect needs change-points k1 and k2")
            if not _check_time(self.k1, "k1") < _check_time(self.k2, "k2"):
                raise ValueError(f"middle effect needs k1 < k2, got {self.k1}, {self.k2}")
        elif kind not in ("ph", "crossing"):
            raise ValueError(f"unknown change-point kind {self.kind!r}")

    @classmethod
    def early(cls, k: float) -> "ChangePointSpec":
        return cls("early", k=k)

    @classmethod
    def middle(cls, k1: float, k2: float) -> "ChangePointSpec":
        return cls("middle", k1=k1, k2=k2)

    @classmethod
    def delayed(cls, k: float) -> "ChangePointSpec":
        return cls("delayed", k=k)

    def evaluate(self, sample: SurvivalSample, control: FittedModel, alpha=0.05) -> TestOutcome:
        if self.kind == "ph":
            return oslrt(sample, control, alpha)
        if self.kind == "early":
            return z_early(sample, control, self.k, alpha)
        if self.kind == "middle":
            return z_middle(sample, control, self.k1, self.k2, alpha)
        if self.kind == "delayed":
            return z_delayed(sample, control, self.k, alpha)
        return z_crossing(sample, control, alpha)
