"""Parametric survival models for the external control group.

Each family exposes its hazard, cumulative hazard and survival function, the
inverse of the cumulative hazard, the restricted mean survival time, and a
censored maximum-likelihood fit ranked by AIC.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import integrate, optimize, special

from ._data import SurvivalSample, SurvivalWarning

__all__ = [
    "Family",
    "FittedModel",
    "eval_model",
    "inverse_cum_hazard",
    "rmst_parametric",
    "fit_mle",
    "parse_model",
    "MEDIAN_TWO_YEARS_RATE",
    "ROUNDED_RATE",
]

#: Exponential rate with a median of exactly two years.
MEDIAN_TWO_YEARS_RATE = math.log(2.0) / 2.0
#: ``MEDIAN_TWO_YEARS_RATE`` rounded to two decimals.
ROUNDED_RATE = 0.35


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    LOGLOGISTIC = "loglogistic"
    LOGNORMAL = "lognormal"
    GAMMA = "gamma"

    @property
    def n_params(self) -> int:
        return 1 if self is Family.EXPONENTIAL else 2

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @classmethod
    def coerce(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"exp": "exponential", "llogis": "loglogistic", "lnorm": "lognormal"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r}; expected one of {names}") from None


_PARAM_NAMES = {
    Family.EXPONENTIAL: ("rate",),
    Family.WEIBULL: ("shape", "scale"),
    Family.LOGLOGISTIC: ("shape", "scale"),
    Family.LOGNORMAL: ("meanlog", "sdlog"),
    Family.GAMMA: ("shape", "scale"),
}


def _check_params(family: Family, params: tuple[float, ...]) -> None:
    if len(params) != family.n_params:
        raise ValueError(
            f"{family.value} takes {family.n_params} parameter(s) "
            f"{family.param_names}, got {len(params)}"
        )
    if not all(math.isfinite(p) for p in params):
        raise ValueError(f"parameters must be finite, got {params}")
    positive = params[1:] if family is Family.LOGNORMAL else params
    if any(p <= 0 for p in positive):
        raise ValueError(f"{family.value} parameters {family.param_names} must be positive")


# ---------------------------------------------------------------------------
# Closed forms. All functions take t >= 0 as an ndarray.


def _cum_hazard(family: Family, p, t):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family is Family.EXPONENTIAL:
            return p[0] * t
        if family is Family.WEIBULL:
            return (t / p[1]) ** p[0]
        if family is Family.LOGLOGISTIC:
            return np.log1p((t / p[1]) ** p[0])
        if family is Family.LOGNORMAL:
            z = (np.log(t) - p[0]) / p[1]
            return -special.log_ndtr(-z)
        # gamma: survival is the regularized upper incomplete gamma function
        return -np.log(special.gammaincc(p[0], t / p[1]))


def _log_hazard(family: Family, p, t):
    """Log hazard at t > 0."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family is Family.EXPONENTIAL:
            return np.full_like(t, math.log(p[0]))
        if family is Family.WEIBULL:
            a, b = p
            return math.log(a / b) + (a - 1.0) * np.log(t / b)
        if family is Family.LOGLOGISTIC:
            a, b = p
            lx = np.log(t / b)
            return math.log(a / b) + (a - 1.0) * lx - np.logaddexp(0.0, a * lx)
        if family is Family.LOGNORMAL:
            mu, sigma = p
            z = (np.log(t) - mu) / sigma
            log_pdf = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi)
            return log_pdf - math.log(sigma) - np.log(t) - special.log_ndtr(-z)
        a, b = p
        x = t / b
        log_pdf = (a - 1.0) * np.log(x) - x - special.gammaln(a) - math.log(b)
        return log_pdf - np.log(special.gammaincc(a, x))


@dataclass(frozen=True)
class FittedModel:
    """A parametric survival law, either fitted or user supplied.

    ``params`` follow :attr:`Family.param_names`: the rate for the
    exponential, ``(shape, scale)`` for Weibull, log-logistic and gamma, and
    ``(meanlog, sdlog)`` for the log-normal. ``n_fit`` is 0 for user-supplied
    parameters, in which case ``loglik`` and ``aic`` are NaN.
    """

    family: Family
    params: tuple[float, ...]
    loglik: float = math.nan
    aic: float = math.nan
    n_fit: int = 0
    converged: bool = True
    n_evaluations: int = field(default=0, compare=False)

    def __post_init__(self):
        family = Family.coerce(self.family)
        params = tuple(float(p) for p in np.atleast_1d(self.params))
        _check_params(family, params)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)

    @classmethod
    def exponential(cls, rate: float) -> "FittedModel":
        return cls(Family.EXPONENTIAL, (rate,))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "FittedModel":
        return cls(Family.WEIBULL, (shape, scale))

    @classmethod
    def loglogistic(cls, shape: float, scale: float) -> "FittedModel":
        return cls(Family.LOGLOGISTIC, (shape, scale))

    @classmethod
    def lognormal(cls, meanlog: float, sdlog: float) -> "FittedModel":
        return cls(Family.LOGNORMAL, (meanlog, sdlog))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "FittedModel":
        return cls(Family.GAMMA, (shape, scale))

    @property
    def n_params(self) -> int:
        return self.family.n_params

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(zip(self.family.param_names, self.params))

    def cum_hazard(self, t):
        """Cumulative hazard; ``+inf`` at ``t = inf``."""
        t = np.asarray(t, dtype=np.float64)
        out = _cum_hazard(self.family, self.params, t)
        out = np.where(t == 0, 0.0, out)
        out = np.where(np.isposinf(t), np.inf, out)
        return out if out.ndim else float(out)

    def hazard(self, t):
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore", over="ignore"):
            out = np.exp(_log_hazard(self.family, self.params, t))
        out = np.where(t == 0, self._hazard_at_zero(), out)
        return out if out.ndim else float(out)

    def _hazard_at_zero(self) -> float:
        if self.family is Family.EXPONENTIAL:
            return self.params[0]
        if self.family is Family.LOGNORMAL:
            return 0.0
        shape, scale = self.params
        if shape == 1.0:
            return 1.0 / scale
        return math.inf if shape < 1.0 else 0.0

    def survival(self, t):
        with np.errstate(over="ignore"):
            return np.exp(-self.cum_hazard(t))

    def inverse_cum_hazard(self, u):
        return inverse_cum_hazard(self, u)

    def median(self) -> float:
        return inverse_cum_hazard(self, math.log(2.0))

    def with_fit(self, loglik: float, n_fit: int, **kwargs) -> "FittedModel":
        return replace(
            self, loglik=loglik, aic=2.0 * self.n_params - 2.0 * loglik, n_fit=n_fit, **kwargs
        )

    def label(self) -> str:
        values = ",".join(f"{p:.6g}" for p in self.params)
        return f"{self.family.value}:{values}"

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "params": self.param_dict,
            "loglik": None if math.isnan(self.loglik) else self.loglik,
            "aic": None if math.isnan(self.aic) else self.aic,
            "n_fit": self.n_fit,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        family = Family.coerce(d["family"])
        params = d["params"]
        if isinstance(params, dict):
            params = tuple(params[name] for name in family.param_names)
        return cls(
            family,
            tuple(params),
            loglik=math.nan if d.get("loglik") is None else d["loglik"],
            aic=math.nan if d.get("aic") is None else d["aic"],
            n_fit=d.get("n_fit", 0),
            converged=d.get("converged", True),
        )


def parse_model(text: str) -> FittedModel:
    """Parse ``family:param1[,param2]``, e.g. ``exponential:0.35``."""
    family, sep, rest = text.partition(":")
    if not sep or not rest.strip():
        raise ValueError(f"control model {text!r} is not of the form family:p1[,p2]")
    try:
        params = tuple(float(v) for v in rest.split(","))
    except ValueError:
        raise ValueError(f"control model {text!r} has non-numeric parameters") from None
    return FittedModel(Family.coerce(family), params)


def _as_time(t, name="t") -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"{name} must be finite, got {t}")
    if t < 0:
        raise ValueError(f"{name} must be nonnegative, got {t}")
    return t


def eval_model(model: FittedModel, t: float) -> tuple[float, float, float]:
    """Return ``(hazard, cumulative hazard, survival)`` of ``model`` at ``t``."""
    t = _as_time(t)
    cum = model.cum_hazard(t)
    return model.hazard(t), cum, math.exp(-cum)


# ---------------------------------------------------------------------------
# Inverse cumulative hazard


def _bisect_inverse(model: FittedModel, u: float, rtol: float = 1e-10) -> float:
    hi = 1.0
    for _ in range(2000):
        if model.cum_hazard(hi) >= u:
            break
        hi *= 2.0
    else:
        raise ValueError(f"could not bracket the inverse cumulative hazard at u={u}")
    lo = hi / 2.0
    while lo > 0.0 and model.cum_hazard(lo) >= u:
        hi, lo = lo, lo / 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if model.cum_hazard(mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inverse_scalar(model: FittedModel, u: float) -> float:
    u = float(u)
    if not math.isfinite(u):
        raise ValueError(f"u must be finite, got {u}")
    if u < 0:
        raise ValueError(f"u must be nonnegative, got {u}")
    if u == 0.0:
        return 0.0
    p = model.params
    family = model.family
    if family is Family.EXPONENTIAL:
        return u / p[0]
    if family is Family.WEIBULL:
        return p[1] * u ** (1.0 / p[0])
    if family is Family.LOGLOGISTIC:
        return p[1] * math.expm1(u) ** (1.0 / p[0])
    return _bisect_inverse(model, u)


def inverse_cum_hazard(model: FittedModel, u):
    """Time ``t`` with ``Lambda0(t) = u``.

    Closed form for exponential, Weibull and log-logistic models; bracketed
    bisection to a relative tolerance of 1e-10 for log-normal and gamma.
    """
    if np.ndim(u) == 0:
        return _inverse_scalar(model, u)
    u = np.asarray(u, dtype=np.float64)
    return np.array([_inverse_scalar(model, v) for v in u.ravel()]).reshape(u.shape)


# ---------------------------------------------------------------------------
# Restricted mean survival time


def rmst_parametric(model: FittedModel, tau: float, method: str = "auto") -> float:
    """Area under the model survival curve on ``[0, tau]``.

    ``method="auto"`` uses the closed form for the exponential family and
    adaptive quadrature (absolute tolerance 1e-9) otherwise; ``"quad"`` forces
    quadrature for every family.
    """
    tau = _as_time(tau, "tau")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if method not in ("auto", "quad"):
        raise ValueError(f"method must be 'auto' or 'quad', got {method!r}")
    if method == "auto" and model.family is Family.EXPONENTIAL:
        rate = model.params[0]
        return -math.expm1(-rate * tau) / rate
    points = [model.median()] if 0 < model.median() < tau else None
    value, _ = integrate.quad(
        model.survival, 0.0, tau, epsabs=1e-9, epsrel=1e-10, limit=200, points=points
    )
    return float(value)


# ---------------------------------------------------------------------------
# Maximum likelihood


def _loglik(family: Family, params, times, events) -> float:
    cum = _cum_hazard(family, params, times)
    cum = np.where(times == 0, 0.0, cum)
    ev = events.astype(bool)
    ll = np.sum(_log_hazard(family, params, times[ev])) - np.sum(cum)
    return float(ll)


def _to_params(family: Family, x) -> tuple[float, ...]:
    if family is Family.LOGNORMAL:
        return (float(x[0]), float(math.exp(x[1])))
    return tuple(float(math.exp(v)) for v in x)


def _to_free(family: Family, params) -> np.ndarray:
    if family is Family.LOGNORMAL:
        return np.array([params[0], math.log(params[1])])
    return np.log(np.asarray(params, dtype=np.float64))


def _initial_params(family: Family, event_times: np.ndarray) -> tuple[float, ...]:
    """Method-of-moments starting values from the uncensored times."""
    mean = float(event_times.mean())
    spread = event_times.size >= 2 and np.ptp(event_times) > 0
    if family is Family.EXPONENTIAL:
        return (1.0 / mean,)
    if family is Family.WEIBULL:
        if not spread:
            return (1.0, mean)
        cv = event_times.std(ddof=1) / mean
        shape = float(np.clip(cv ** -1.086, 0.1, 20.0))
        return (shape, mean / math.gamma(1.0 + 1.0 / shape))
    if family is Family.GAMMA:
        if not spread:
            return (1.0, mean)
        var = event_times.var(ddof=1)
        return (mean**2 / var, var / mean)
    logs = np.log(event_times)
    sd = float(logs.std(ddof=1)) if spread else 1.0
    if family is Family.LOGNORMAL:
        return (float(logs.mean()), sd)
    return (math.pi / (math.sqrt(3.0) * sd), float(math.exp(np.median(logs))))


def fit_mle(
    sample: SurvivalSample,
    family,
    *,
    xatol: float = 1e-8,
    maxfev: int = 10_000,
) -> FittedModel:
    """Censored maximum-likelihood fit of one family.

    Maximizes ``sum(delta_i * log(hazard(X_i)) - Lambda(X_i))`` with a
    Nelder-Mead simplex in log-parameter coordinates (the log-normal
    ``meanlog`` stays on its natural scale), started from method-of-moments
    values on the uncensored times. The search stops once the simplex diameter
    drops below ``xatol`` or after ``maxfev`` evaluations; in the latter case
    the best iterate is returned with ``converged=False`` and a warning.

    Raises:
        ValueError: the sample has no events, or a log-time family is asked to
            fit an event at time zero.
    """
    family = Family.coerce(family)
    times, events = sample.times, sample.events
    if sample.n_events == 0:
        raise ValueError("cannot fit a parametric model to a sample without events")
    event_times = times[events == 1]
    if family is not Family.EXPONENTIAL and np.any(event_times <= 0):
        raise ValueError(f"{family.value} fit requires all event times > 0")
    if times.sum() <= 0:
        raise ValueError("cannot fit a parametric model when all times are zero")
    event_times = event_times[event_times > 0]
    if event_times.size == 0:
        event_times = np.array([times.sum() / sample.n_events])

    def objective(x):
        ll = _loglik(family, _to_params(family, x), times, events)
        return -ll if math.isfinite(ll) else np.inf

    x0 = _to_free(family, _initial_params(family, event_times))
    res = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": np.inf, "maxfev": maxfev, "maxiter": maxfev},
    )
    converged = bool(res.success)
    if not converged:
        warnings.warn(
            f"{family.value} fit did not converge after {res.nfev} evaluations "
            "(best iterate returned)",
            SurvivalWarning,
            stacklevel=2,
        )
    params = _to_params(family, res.x)
    model = FittedModel(family, params)
    return model.with_fit(
        -float(res.fun), len(sample), converged=converged, n_evaluations=int(res.nfev)
    )
