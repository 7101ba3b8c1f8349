"""Survival data container, input validation and package-wide exceptions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DegenerateStatisticError(ValueError):
    """A test statistic has a zero (or negative) variance term.

    Raised instead of returning an infinite statistic, typically when the time
    window of a score test contains no information.
    """


class SurvivalWarning(UserWarning):
    """Non-fatal numerical or data condition worth reporting."""


@dataclass(frozen=True, eq=False)
class SurvivalSample:
    """Observed times and event indicators for one group.

    Attributes:
        times: observed times ``X_i = min(T_i, C_i)``, nonnegative.
        events: event indicators ``delta_i`` (1 = event, 0 = censored).
    """

    times: NDArray[np.float64]
    events: NDArray[np.int64]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).ravel()
        events = np.asarray(self.events).ravel()
        if times.size == 0:
            raise ValueError("survival sample must contain at least one observation")
        if times.shape != events.shape:
            raise ValueError(
                f"times and events differ in length ({times.size} != {events.size})"
            )
        if not np.all(np.isfinite(times)):
            raise ValueError("times must be finite")
        if np.any(times < 0):
            raise ValueError("times must be nonnegative")
        if not np.all((events == 0) | (events == 1)):
            raise ValueError("events must be binary (0 = censored, 1 = event)")
        times.setflags(write=False)
        events = events.astype(np.int64)
        events.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def max_time(self) -> float:
        return float(self.times.max())

    @property
    def censoring_proportion(self) -> float:
        return 1.0 - self.n_events / len(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalSample):
            return NotImplemented
        return bool(
            np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
        )

    def __repr__(self) -> str:
        return f"SurvivalSample(n={len(self)}, events={self.n_events})"


def check_survival_data(X, y: ArrayLike | None = None) -> SurvivalSample:
    """Coerce estimator-style input into a :class:`SurvivalSample`.

    Accepted forms:

    * ``X`` is already a ``SurvivalSample`` (``y`` must be None);
    * ``X`` is an ``(n, 2)`` array whose columns are time and status;
    * ``X`` holds the times (1-D, or ``(n, 1)``) and ``y`` the event indicators.
    """
    if isinstance(X, SurvivalSample):
        if y is not None:
            raise ValueError("y must be None when X is a SurvivalSample")
        return X
    arr = np.asarray(X, dtype=np.float64)
    if y is None:
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(
                "expected X of shape (n, 2) with columns (time, status) "
                f"when y is None, got shape {arr.shape}"
            )
        return SurvivalSample(arr[:, 0], arr[:, 1])
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D times when y is given, got shape {arr.shape}")
    return SurvivalSample(arr, np.asarray(y))
