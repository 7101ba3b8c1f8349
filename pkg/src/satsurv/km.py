"""Kaplan-Meier estimation and the one-sample RMST difference test."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ._data import DegenerateStatisticError, SurvivalSample, SurvivalWarning
from .distributions import FittedModel, rmst_parametric
from .score_tests import TestOutcome

__all__ = [
    "KMCurve",
    "km_estimate",
    "rmst_km",
    "greenwood_variance",
    "select_tau",
    "drmst_test",
]

_METHODS = ("trapezoid", "step")


@dataclass(frozen=True, eq=False)
class KMCurve:
    """Product-limit estimate at the distinct event times.

    ``survival[j]`` is the value just after ``times[j]``; the curve starts at
    ``S(0) = 1``. ``last_time`` is the largest observed time of the sample
    (event or censored), which bounds the usable horizon.
    """

    times: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray
    survival: np.ndarray
    last_time: float

    def __call__(self, t):
        """Right-continuous step function evaluated at ``t``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[1.0], self.survival])[idx]
        return out if out.ndim else float(out)

    def with_origin(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots and values including the point ``(0, 1)``."""
        return np.concatenate([[0.0], self.times]), np.concatenate([[1.0], self.survival])


def km_estimate(sample: SurvivalSample) -> KMCurve:
    """Kaplan-Meier estimator.

    The risk set at an event time includes patients censored at that same
    time, so censoring at a tied time is applied after the events.
    """
    times, events = sample.times, sample.events
    event_times = np.unique(times[events == 1])
    order = np.sort(times)
    n_at_risk = times.size - np.searchsorted(order, event_times, side="left")
    ev_sorted = np.sort(times[events == 1])
    n_events = np.searchsorted(ev_sorted, event_times, side="right") - np.searchsorted(
        ev_sorted, event_times, side="left"
    )
    survival = np.cumprod(1.0 - n_events / n_at_risk)
    return KMCurve(
        event_times, n_at_risk.astype(np.int64), n_events.astype(np.int64), survival,
        float(times.max()),
    )


def _knots(curve: KMCurve, tau: float):
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be a positive finite time, got {tau}")
    if tau > curve.last_time * (1 + 1e-12):
        raise ValueError(
            f"tau={tau:g} lies beyond the last observed time {curve.last_time:g}"
        )
    keep = curve.times <= tau
    s_keep = curve.survival[keep]
    s_tau = s_keep[-1] if s_keep.size else 1.0
    knots = np.concatenate([[0.0], curve.times[keep], [tau]])
    values = np.concatenate([[1.0], s_keep, [s_tau]])
    return knots, values, int(keep.sum())


def _segment_areas(knots, values, method):
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}, got {method!r}")
    widths = np.diff(knots)
    if method == "trapezoid":
        return widths * (values[:-1] + values[1:]) / 2.0
    return widths * values[:-1]


def rmst_km(curve: KMCurve, tau: float, method: str = "trapezoid") -> float:
    """Restricted mean survival time of the KM curve on ``[0, tau]``.

    The default integrates with the trapezoidal rule over the knots
    ``{0, event times <= tau, tau}`` using the post-jump survival at each
    event time and carrying the last value to ``tau``. ``method="step"``
    integrates the step function exactly.
    """
    knots, values, _ = _knots(curve, tau)
    return float(np.sum(_segment_areas(knots, values, method)))


def greenwood_variance(curve: KMCurve, tau: float, method: str = "trapezoid") -> float:
    """Greenwood plug-in variance of :func:`rmst_km`.

    Sums ``[int_{t_j}^{tau} S(t) dt]^2 * d_j / (n_j (n_j - d_j))`` over event
    times ``t_j <= tau``, the tail integrals using the same rule as the RMST.
    Terms with ``n_j == d_j`` are skipped (with a warning); their tail
    integral is zero because the curve has dropped to zero.
    """
    knots, values, m = _knots(curve, tau)
    areas = _segment_areas(knots, values, method)
    # tail[j] = integral from knot j to tau
    tail = np.concatenate([np.cumsum(areas[::-1])[::-1], [0.0]])
    n = curve.n_at_risk[:m].astype(np.float64)
    d = curve.n_events[:m].astype(np.float64)
    depleted = n == d
    if np.any(depleted):
        warnings.warn(
            "Greenwood term with n_i == d_i skipped (risk set exhausted)",
            SurvivalWarning,
            stacklevel=2,
        )
    inner = tail[1 : m + 1]
    ok = ~depleted
    return float(np.sum(inner[ok] ** 2 * d[ok] / (n[ok] * (n[ok] - d[ok]))))


def select_tau(experimental: SurvivalSample | float, control_max_time: float) -> float:
    """Restriction horizon: the smaller of the two groups' largest observed times."""
    exp_max = experimental.max_time if isinstance(experimental, SurvivalSample) else float(experimental)
    control_max_time = float(control_max_time)
    if not (exp_max > 0 and control_max_time > 0):
        raise ValueError("both maximum follow-up times must be positive")
    return min(exp_max, control_max_time)


def drmst_test(
    sample: SurvivalSample,
    control: FittedModel,
    tau: float,
    alpha: float = 0.05,
    method: str = "trapezoid",
    curve: KMCurve | None = None,
) -> TestOutcome:
    """Difference between the KM and the control-model RMST up to ``tau``.

    The statistic is ``(RMST_1 - RMST_0) / sqrt(Var(RMST_1))`` and the p-value
    is the upper tail ``1 - Phi(Z)`` (longer survival favours the experimental
    arm). ``observed`` holds the KM RMST and ``expected`` the control RMST.

    Raises:
        DegenerateStatisticError: zero Greenwood variance.
    """
    curve = km_estimate(sample) if curve is None else curve
    rmst1 = rmst_km(curve, tau, method)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SurvivalWarning)
        var = greenwood_variance(curve, tau, method)
    label = f"dRMST(tau={tau:g})"
    if not var > 0:
        raise DegenerateStatisticError(f"{label}: Greenwood variance is zero")
    rmst0 = rmst_parametric(control, tau)
    z = (rmst1 - rmst0) / math.sqrt(var)
    return TestOutcome(label, z, float(ndtr(-z)), rmst1, rmst0, alpha, "greater")
