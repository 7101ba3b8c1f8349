"""Simulation of single-arm trials and operating-characteristic studies.

Experimental survival times follow a piecewise exponential law relative to an
exponential control. Patients enter uniformly over the accrual period, are
followed until the administrative cutoff ``accrual + followup`` and may drop
out at an exponential rate calibrated to a target censoring proportion.

Every replication draws from its own random stream derived from
``(seed, replicate_index)``, so results do not depend on execution order or on
the number of worker processes.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._data import SurvivalSample, SurvivalWarning
from .battery import TestSpec, default_battery, evaluate_battery, rejected
from .distributions import MEDIAN_TWO_YEARS_RATE, FittedModel
from .score_tests import crossing_time

__all__ = [
    "PiecewiseHazardSpec",
    "ScenarioConfig",
    "SimulationReport",
    "scenario_hazards",
    "sample_piecewise_exponential",
    "calibrate_censor_rate",
    "censoring_proportion",
    "simulate_trial",
    "draw_patients",
    "observe",
    "draw_control_medians",
    "run_study",
    "cp_misspecification_sweep",
    "control_variability_study",
    "misspecified_analysis_study",
    "load_study_config",
    "configs_from_study",
    "run_study_config",
    "CALIBRATION_SEED",
]

CALIBRATION_SEED = 20240607
_MEDIAN_STREAM = 1


@dataclass(frozen=True)
class PiecewiseHazardSpec:
    """Hazard ``r_j * control_rate`` on successive intervals split at ``change_points``."""

    control_rate: float
    change_points: tuple[float, ...] = ()
    segment_hrs: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        cps = tuple(float(k) for k in self.change_points)
        hrs = tuple(float(r) for r in self.segment_hrs)
        if not self.control_rate > 0 or not math.isfinite(self.control_rate):
            raise ValueError(f"control rate must be positive, got {self.control_rate}")
        if len(hrs) != len(cps) + 1:
            raise ValueError("need exactly one more hazard ratio than change-points")
        if any(not r > 0 for r in hrs):
            raise ValueError("hazard ratios must be positive")
        if any(k < 0 for k in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("change-points must be nonnegative and strictly ascending")
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "segment_hrs", hrs)
        object.__setattr__(self, "control_rate", float(self.control_rate))

    def _knots(self):
        starts = np.concatenate([[0.0], self.change_points])
        slopes = self.control_rate * np.asarray(self.segment_hrs)
        widths = np.diff(starts)
        cum = np.concatenate([[0.0], np.cumsum(slopes[:-1] * widths)])
        return starts, slopes, cum

    def hazard(self, t):
        t = np.asarray(t, dtype=np.float64)
        starts, slopes, _ = self._knots()
        # the hazard of a segment applies on (k_{j-1}, k_j]
        idx = np.clip(np.searchsorted(starts, t, side="left") - 1, 0, None)
        return slopes[idx]

    def cum_hazard(self, t):
        t = np.asarray(t, dtype=np.float64)
        starts, slopes, cum = self._knots()
        idx = np.searchsorted(starts, t, side="right") - 1
        return cum[idx] + slopes[idx] * (t - starts[idx])

    def survival(self, t):
        return np.exp(-self.cum_hazard(t))

    def inverse_cum_hazard(self, target):
        target = np.asarray(target, dtype=np.float64)
        starts, slopes, cum = self._knots()
        idx = np.searchsorted(cum, target, side="right") - 1
        return starts[idx] + (target - cum[idx]) / slopes[idx]


def scenario_hazards(
    scenario: int,
    hr: float,
    control_rate: float = MEDIAN_TWO_YEARS_RATE,
    crossing_cp: float | None = 1.0,
) -> PiecewiseHazardSpec:
    """Piecewise hazard of the experimental arm for scenarios 1-6.

    1 null, 2 proportional hazards, 3 effect on ``[0, 1]``, 4 effect on
    ``(1, 4]``, 5 effect after 3, 6 crossing hazards: ratio ``1/hr`` up to
    the change-point and ``hr`` afterwards. ``crossing_cp=None`` places the
    scenario-6 change-point at the accelerated-hazards crossing time for
    ``log(hr)``.
    """
    hr = float(hr)
    if scenario == 1:
        return PiecewiseHazardSpec(control_rate)
    if scenario == 2:
        return PiecewiseHazardSpec(control_rate, (), (hr,))
    if scenario == 3:
        return PiecewiseHazardSpec(control_rate, (1.0,), (hr, 1.0))
    if scenario == 4:
        return PiecewiseHazardSpec(control_rate, (1.0, 4.0), (1.0, hr, 1.0))
    if scenario == 5:
        return PiecewiseHazardSpec(control_rate, (3.0,), (1.0, hr))
    if scenario == 6:
        if crossing_cp is None:
            crossing_cp = crossing_time(FittedModel.exponential(control_rate), math.log(hr))
        return PiecewiseHazardSpec(control_rate, (crossing_cp,), (1.0 / hr, hr))
    raise ValueError(f"scenario must be in 1..6, got {scenario}")


def sample_piecewise_exponential(spec: PiecewiseHazardSpec, u):
    """Inverse-transform draw ``H^-1(-log u)`` for uniforms ``u`` in (0, 1)."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any((u_arr <= 0) | (u_arr >= 1)) or np.any(np.isnan(u_arr)):
        raise ValueError("uniform draws must lie strictly inside (0, 1)")
    out = spec.inverse_cum_hazard(-np.log(u_arr))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Censoring


def _censor_flags(event, dropout, admin, mode):
    if mode == "dropout":
        return (dropout < event) & (dropout < admin)
    return ~((event <= dropout) & (event <= admin))


def censoring_proportion(
    spec: PiecewiseHazardSpec,
    accrual: float,
    followup: float,
    hazard: float,
    *,
    mode: str = "total",
    n_draws: int = 200_000,
    seed=CALIBRATION_SEED,
) -> float:
    """Monte Carlo censoring proportion for a given dropout hazard.

    ``mode="dropout"`` counts patients lost to dropout before both their
    event and the administrative cutoff; ``mode="total"`` counts every
    censored patient (dropout or administrative).
    """
    if mode not in ("dropout", "total"):
        raise ValueError(f"mode must be 'dropout' or 'total', got {mode!r}")
    rng = np.random.default_rng(seed)
    entry = accrual * rng.random(n_draws)
    event = spec.inverse_cum_hazard(rng.standard_exponential(n_draws))
    dropout = rng.standard_exponential(n_draws) / hazard if hazard > 0 else np.inf
    admin = accrual + followup - entry
    return float(np.mean(_censor_flags(event, dropout, admin, mode)))


@functools.lru_cache(maxsize=256)
def calibrate_censor_rate(
    spec: PiecewiseHazardSpec,
    accrual: float,
    followup: float,
    target: float,
    *,
    mode: str = "total",
    tol: float = 1e-3,
    strict: bool = False,
    n_draws: int = 200_000,
    seed=CALIBRATION_SEED,
) -> float:
    """Exponential dropout hazard giving a censoring proportion of ``target``.

    Bisection on the hazard, with the proportion estimated on a fixed set of
    ``n_draws`` simulated patients (common random numbers make it monotone in
    the hazard). A target of 0 returns 0: administrative censoring only.

    With ``mode="total"`` a target below the administrative censoring
    proportion cannot be reached; the hazard is then 0 and a warning is
    issued, or ``ValueError`` is raised when ``strict`` is set.
    """
    if not 0 <= target < 1:
        raise ValueError(f"censoring target must be in [0, 1), got {target}")
    if mode not in ("dropout", "total"):
        raise ValueError(f"mode must be 'dropout' or 'total', got {mode!r}")
    if target == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    entry = accrual * rng.random(n_draws)
    event = spec.inverse_cum_hazard(rng.standard_exponential(n_draws))
    unit_dropout = rng.standard_exponential(n_draws)
    admin = accrual + followup - entry

    def proportion(c):
        dropout = unit_dropout / c if c > 0 else np.inf
        return float(np.mean(_censor_flags(event, dropout, admin, mode)))

    base = proportion(0.0)
    if base > target + tol:
        if strict:
            raise ValueError(
                f"censoring target {target:g} unattainable: administrative censoring alone "
                f"gives {base:.3f}"
            )
        warnings.warn(
            f"censoring target {target:g} is below the administrative censoring "
            f"proportion {base:.3f}; no dropout is simulated",
            SurvivalWarning,
            stacklevel=2,
        )
        return 0.0
    if abs(base - target) <= tol:
        return 0.0
    lo, hi = 0.0, spec.control_rate
    for _ in range(200):
        if proportion(hi) >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ValueError(f"censoring target {target:g} unattainable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = proportion(mid)
        if abs(p - target) <= tol:
            return mid
        if p < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@functools.lru_cache(maxsize=256)
def _calibrate_quiet(spec, accrual, followup, target, mode):
    return calibrate_censor_rate(spec, accrual, followup, target, mode=mode)


# ---------------------------------------------------------------------------
# Trials


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of a simulation study.

    ``control_rate`` is the exponential control hazard used to generate data
    and, unless ``analysis_control`` is given, to analyze it.
    """

    scenario: int
    n: int
    hr: float = 0.5
    censor_target: float = 0.15
    accrual_years: float = 3.0
    followup_years: float = 4.0
    control_rate: float = MEDIAN_TWO_YEARS_RATE
    replications: int = 2000
    seed: int = 0
    censoring_mode: str = "total"
    crossing_cp: float | None = 1.0
    analysis_control: FittedModel | None = None

    def __post_init__(self):
        if self.scenario not in range(1, 7):
            raise ValueError(f"scenario must be in 1..6, got {self.scenario}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.n}")
        if not self.hr > 0:
            raise ValueError(f"hr must be positive, got {self.hr}")
        if not 0 <= self.censor_target < 1:
            raise ValueError(f"censoring target must be in [0, 1), got {self.censor_target}")
        if not (self.accrual_years > 0 and self.followup_years >= 0):
            raise ValueError("accrual must be positive and follow-up nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.censoring_mode not in ("dropout", "total"):
            raise ValueError("censoring_mode must be 'dropout' or 'total'")
        object.__setattr__(self, "n", int(self.n))

    @property
    def horizon(self) -> float:
        return self.accrual_years + self.followup_years

    @property
    def control(self) -> FittedModel:
        if self.analysis_control is not None:
            return self.analysis_control
        return FittedModel.exponential(self.control_rate)

    def hazards(self, control_rate: float | None = None) -> PiecewiseHazardSpec:
        rate = self.control_rate if control_rate is None else control_rate
        return scenario_hazards(self.scenario, self.hr, rate, self.crossing_cp)

    def dropout_hazard(self) -> float:
        # calibrated on the nominal law; drawn control rates reuse it
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SurvivalWarning)
            return _calibrate_quiet(
                self.hazards(), self.accrual_years, self.followup_years,
                self.censor_target, mode=self.censoring_mode,
            )

    def key(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "censor_target": self.censor_target,
            "hr": self.hr,
        }


def draw_patients(config: ScenarioConfig, rng, n: int | None = None, *, control_rate=None):
    """Independent ``(entry, event, dropout)`` times for ``n`` patients."""
    n = config.n if n is None else n
    spec = config.hazards(control_rate)
    dropout_rate = config.dropout_hazard()
    entry = config.accrual_years * rng.random(n)
    event = spec.inverse_cum_hazard(rng.standard_exponential(n))
    unit_dropout = rng.standard_exponential(n)
    dropout = unit_dropout / dropout_rate if dropout_rate > 0 else np.full(n, np.inf)
    return entry, event, dropout


def observe(entry, event, dropout, horizon: float) -> SurvivalSample:
    """``X = min(event, dropout, horizon - entry)``, an event when the event
    time is the minimum."""
    entry, event, dropout = (np.asarray(a, dtype=np.float64) for a in (entry, event, dropout))
    admin = horizon - entry
    observed = np.minimum(np.minimum(event, dropout), admin)
    status = (event <= dropout) & (event <= admin)
    return SurvivalSample(observed, status.astype(np.int64))


def simulate_trial(
    config: ScenarioConfig, replicate_index: int, *, control_rate: float | None = None
) -> SurvivalSample:
    """Simulate one trial of ``config``.

    Entry is uniform on the accrual period, the event time follows the
    scenario's piecewise exponential law (with ``control_rate`` overriding the
    configured control hazard) and dropout is exponential at the calibrated
    hazard. The random stream depends only on ``(config.seed, replicate_index)``.
    """
    rng = np.random.default_rng([config.seed, int(replicate_index)])
    entry, event, dropout = draw_patients(config, rng, control_rate=control_rate)
    return observe(entry, event, dropout, config.horizon)


def draw_control_medians(
    seed: int, indices, shape: float = 80.0, rate: float = 40.0
) -> np.ndarray:
    """Gamma(shape, rate) medians, one per replicate index, from streams
    independent of the trial streams."""
    return np.array(
        [
            np.random.default_rng([seed, int(i), _MEDIAN_STREAM]).gamma(shape, 1.0 / rate)
            for i in indices
        ]
    )


# ---------------------------------------------------------------------------
# Reports


_COLUMNS = (
    "study",
    "scenario",
    "test",
    "n",
    "censor_target",
    "hr",
    "replications",
    "rejections",
    "rejection_rate",
    "mcse",
    "n_degenerate",
    "mean_events",
    "mean_censoring",
    "relative_difference",
)


@dataclass
class SimulationReport:
    """Rejection rates per (study, scenario, test, n, censoring target, HR)."""

    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, row: dict) -> None:
        self.rows.append({c: row.get(c) for c in _COLUMNS})

    def extend(self, other: "SimulationReport") -> "SimulationReport":
        self.rows.extend(other.rows)
        return self

    def select(self, **criteria) -> list[dict]:
        def match(row):
            for key, value in criteria.items():
                if isinstance(value, float) and isinstance(row[key], float):
                    if not math.isclose(row[key], value, abs_tol=1e-12):
                        return False
                elif row[key] != value:
                    return False
            return True

        return [r for r in self.rows if match(r)]

    def rate(self, **criteria) -> float:
        rows = self.select(**criteria)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {criteria}")
        return rows[0]["rejection_rate"]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: ("" if v is None else _fmt(v)) for k, v in row.items()})
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_long_csv(self, path=None) -> str:
        """Plot-ready long format: one row per (panel, test, x) point.

        ``x`` is the sample size and ``events`` the mean number of events
        (the secondary axis of power curves); ``y`` is the rejection rate.
        """
        buf = io.StringIO()
        cols = ("study", "scenario", "censor_target", "hr", "test", "x", "events", "y", "y_low", "y_high")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.rows:
            half = 1.96 * r["mcse"]
            writer.writerow(
                [r["study"], r["scenario"], _fmt(r["censor_target"]), _fmt(r["hr"]), r["test"], r["n"],
                 _fmt(r["mean_events"]), _fmt(r["rejection_rate"]),
                 _fmt(max(0.0, r["rejection_rate"] - half)), _fmt(min(1.0, r["rejection_rate"] + half))]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path=None) -> str:
        text = json.dumps({"metadata": self.metadata, "rows": self.rows}, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "SimulationReport":
        d = json.loads(text)
        return cls(rows=d["rows"], metadata=d.get("metadata", {}))

    @classmethod
    def from_csv(cls, text: str) -> "SimulationReport":
        ints = {"scenario", "n", "replications", "rejections", "n_degenerate"}
        rows = []
        for raw in csv.DictReader(io.StringIO(text)):
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in ("study", "test"):
                    row[k] = v
                elif k in ints:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
        return cls(rows=rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# Studies


def _replicate(args):
    config, idx, battery, controls, control_rate, alpha = args
    sample = simulate_trial(config, idx, control_rate=control_rate)
    rejects, degenerate = [], []
    for control in controls:
        res = evaluate_battery(sample, control, battery, alpha=alpha, seed=[config.seed, idx])
        rejects.append([rejected(r) for r in res.values()])
        degenerate.append([isinstance(r, Exception) for r in res.values()])
    return rejects, degenerate, sample.n_events, sample.censoring_proportion


def _run_chunk(args):
    config, indices, battery, controls, rates, alpha = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SurvivalWarning)
        with np.errstate(all="ignore"):
            return [
                _replicate((config, i, battery, controls, rate, alpha))
                for i, rate in zip(indices, rates)
            ]


def _simulate_cell(config, battery, controls, rates=None, alpha=0.05, n_jobs=1):
    """Replicate one configuration; returns arrays indexed [control, rep, test]."""
    indices = list(range(config.replications))
    rates = [None] * len(indices) if rates is None else list(rates)
    config.dropout_hazard()  # warm the calibration cache before fanning out
    if n_jobs == 1:
        results = _run_chunk((config, indices, battery, controls, rates, alpha))
    else:
        chunks = np.array_split(np.arange(len(indices)), n_jobs * 4)
        jobs = [
            (config, [indices[i] for i in c], battery, controls, [rates[i] for i in c], alpha)
            for c in chunks if len(c)
        ]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = [r for part in pool.map(_run_chunk, jobs) for r in part]
    rejects = np.array([r[0] for r in results], dtype=bool).transpose(1, 0, 2)
    degenerate = np.array([r[1] for r in results], dtype=bool).transpose(1, 0, 2)
    events = np.array([r[2] for r in results], dtype=np.float64)
    censoring = np.array([r[3] for r in results], dtype=np.float64)
    return rejects, degenerate, events, censoring


def _rows(study, config, battery, rejects, degenerate, events, censoring):
    reps = rejects.shape[0]
    out = []
    for j, spec in enumerate(battery):
        count = int(rejects[:, j].sum())
        p = count / reps
        out.append(
            {
                "study": study,
                **config.key(),
                "test": spec.name,
                "replications": reps,
                "rejections": count,
                "rejection_rate": p,
                "mcse": math.sqrt(p * (1 - p) / reps),
                "n_degenerate": int(degenerate[:, j].sum()),
                "mean_events": float(events.mean()),
                "mean_censoring": float(censoring.mean()),
            }
        )
    return out


def _relative(new: float, ref: float) -> float | None:
    return None if ref == 0 else (new - ref) / ref


def _battery_for(config: ScenarioConfig, battery) -> list[TestSpec]:
    if battery is None or battery == "default":
        return default_battery(config.scenario, horizon=config.horizon)
    if isinstance(battery, dict):
        chosen = battery.get(config.scenario, battery.get(str(config.scenario), "default"))
        return _battery_for(config, chosen)
    return list(battery)


def _metadata(configs, **extra) -> dict:
    def cfg(c):
        d = asdict(c)
        d["analysis_control"] = None if c.analysis_control is None else c.analysis_control.to_dict()
        d["dropout_hazard"] = c.dropout_hazard()
        return d

    return {"configs": [cfg(c) for c in configs], **extra}


def run_study(configs, battery=None, *, alpha: float = 0.05, n_jobs: int = 1) -> SimulationReport:
    """Rejection rates of a test battery over a grid of configurations.

    ``battery`` is a list of :class:`TestSpec`, ``None``/``"default"`` for the
    scenario-specific default battery, or a dict keyed by scenario. Degenerate
    evaluations count as non-rejections and are tallied in ``n_degenerate``.
    """
    configs = [configs] if isinstance(configs, ScenarioConfig) else list(configs)
    if not configs:
        raise ValueError("the study grid is empty")
    report = SimulationReport(metadata=_metadata(configs, study="standard", alpha=alpha))
    for config in configs:
        tests = _battery_for(config, battery)
        rej, deg, ev, cens = _simulate_cell(config, tests, [config.control], alpha=alpha, n_jobs=n_jobs)
        for row in _rows("standard", config, tests, rej[0], deg[0], ev, cens):
            report.add(row)
    return report


def cp_misspecification_sweep(
    scenario: int,
    offsets=(-0.5, -0.25, 0.25, 0.5),
    *,
    n_values=(80,),
    censor_target: float = 0.15,
    hr: float = 0.5,
    replications: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
    n_jobs: int = 1,
    **config_kwargs,
) -> SimulationReport:
    """Power of the scenario's optimal score test at shifted change-points.

    Scenario 3 uses the early-effect test (true k = 1), scenario 5 the
    delayed-effect test (true k = 3). The OSLRT and mOSLRT are reported as
    baselines; the test at the true change-point (offset 0) is always
    included. Change-points shifted below zero are clipped to zero.
    """
    if scenario == 3:
        base = TestSpec("early", k=1.0)
    elif scenario == 5:
        base = TestSpec("delayed", k=3.0)
    else:
        raise ValueError("change-point sweeps are defined for scenarios 3 and 5")
    shifts = [0.0] + [float(o) for o in offsets if o != 0]
    tests = [TestSpec("oslrt"), TestSpec("moslrt")] + [base.shifted(o) for o in shifts]
    # the same change-point can appear twice after clipping
    tests = list(dict.fromkeys(tests))
    configs = [
        ScenarioConfig(scenario, n, hr, censor_target, replications=replications, seed=seed, **config_kwargs)
        for n in n_values
    ]
    report = run_study(configs, tests, alpha=alpha, n_jobs=n_jobs)
    report.metadata.update(study="cp_misspecification", offsets=list(shifts), true_test=base.name)
    for row in report.rows:
        row["study"] = "cp_misspecification"
    return report


def control_variability_study(
    configs,
    battery=None,
    *,
    median_shape: float | None = 80.0,
    median_rate: float = 40.0,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> SimulationReport:
    """Effect of an uncertain control hazard on the operating characteristics.

    For each replication the control median is drawn from
    Gamma(``median_shape``, rate ``median_rate``) and the data are generated
    with rate ``log(2) / median``, while the analysis keeps the nominal
    control model. Rows of study ``"fixed"`` use the nominal rate for
    generation, rows of study ``"variable"`` the drawn one and carry the
    relative difference to the fixed rows. ``median_shape=None`` bypasses the
    draw.
    """
    configs = [configs] if isinstance(configs, ScenarioConfig) else list(configs)
    report = SimulationReport(
        metadata=_metadata(
            configs, study="control_variability", alpha=alpha,
            median_shape=median_shape, median_rate=median_rate,
        )
    )
    for config in configs:
        tests = _battery_for(config, battery)
        fixed = _simulate_cell(config, tests, [config.control], alpha=alpha, n_jobs=n_jobs)
        if median_shape is None:
            rates = None
        else:
            medians = draw_control_medians(config.seed, range(config.replications), median_shape, median_rate)
            rates = math.log(2.0) / medians
        variable = _simulate_cell(config, tests, [config.control], rates, alpha=alpha, n_jobs=n_jobs)
        fixed_rows = _rows("fixed", config, tests, fixed[0][0], fixed[1][0], fixed[2], fixed[3])
        var_rows = _rows("variable", config, tests, variable[0][0], variable[1][0], variable[2], variable[3])
        for f, v in zip(fixed_rows, var_rows):
            v["relative_difference"] = _relative(v["rejection_rate"], f["rejection_rate"])
            report.add(f)
            report.add(v)
    return report


def misspecified_analysis_study(
    configs,
    battery=None,
    *,
    analysis_control: FittedModel | None = None,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> SimulationReport:
    """Analyze each simulated trial with both the true exponential control and
    ``analysis_control`` (default log-logistic, shape 1.7, scale 2).

    Rows of study ``"misspecified"`` carry the relative difference to the
    ``"well_specified"`` rows computed on the same trials.
    """
    analysis_control = (
        FittedModel.loglogistic(1.7, 2.0) if analysis_control is None else analysis_control
    )
    configs = [configs] if isinstance(configs, ScenarioConfig) else list(configs)
    report = SimulationReport(
        metadata=_metadata(
            configs, study="misspecified_analysis", alpha=alpha,
            analysis_control=analysis_control.to_dict(),
        )
    )
    for config in configs:
        tests = _battery_for(config, battery)
        rej, deg, ev, cens = _simulate_cell(
            config, tests, [config.control, analysis_control], alpha=alpha, n_jobs=n_jobs
        )
        good = _rows("well_specified", config, tests, rej[0], deg[0], ev, cens)
        bad = _rows("misspecified", config, tests, rej[1], deg[1], ev, cens)
        for g, b in zip(good, bad):
            b["relative_difference"] = _relative(b["rejection_rate"], g["rejection_rate"])
            report.add(g)
            report.add(b)
    return report


# ---------------------------------------------------------------------------
# Study configuration documents

_STUDIES = ("standard", "cp_misspecification", "control_variability", "misspecified_analysis")
_CONFIG_KEYS = {
    "study", "scenarios", "n", "hr", "censoring", "censoring_mode", "replications", "seed",
    "alpha", "control_rate", "accrual_years", "followup_years", "crossing_cp", "battery",
    "offsets", "analysis_control", "median_shape", "median_rate",
}


def _as_list(value, name):
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ValueError(f"'{name}' must not be empty")
    return values


def _parse_battery(raw):
    if raw is None or raw == "default":
        return None
    if isinstance(raw, list):
        return [TestSpec.from_dict(d) for d in raw]
    if isinstance(raw, dict):
        return {int(k): _parse_battery(v) for k, v in raw.items()}
    raise ValueError("'battery' must be \"default\", a list of tests or a per-scenario mapping")


def load_study_config(source) -> dict:
    """Read and validate a JSON study definition (path, JSON text or dict).

    See ``docs/study_config.md`` for the schema. Returns the normalized
    document; unknown keys are rejected so typos do not pass silently.
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"study config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("study config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown study config keys: {sorted(unknown)}")
    doc.setdefault("study", "standard")
    if doc["study"] not in _STUDIES:
        raise ValueError(f"'study' must be one of {_STUDIES}")
    if "scenarios" not in doc:
        raise ValueError("study config needs 'scenarios'")
    doc["scenarios"] = [int(s) for s in _as_list(doc["scenarios"], "scenarios")]
    doc["n"] = [int(n) for n in _as_list(doc.get("n", 80), "n")]
    doc["hr"] = [float(h) for h in _as_list(doc.get("hr", 0.5), "hr")]
    doc["censoring"] = [float(c) for c in _as_list(doc.get("censoring", 0.15), "censoring")]
    doc["battery"] = _parse_battery(doc.get("battery"))
    return doc


def configs_from_study(doc: dict, seed: int | None = None) -> list[ScenarioConfig]:
    """Expand a study document into its grid of :class:`ScenarioConfig`."""
    common = {
        key: doc[key]
        for key in ("replications", "control_rate", "accrual_years", "followup_years",
                    "censoring_mode", "crossing_cp")
        if key in doc
    }
    seed = doc.get("seed", 0) if seed is None else seed
    return [
        ScenarioConfig(s, n, hr, c, seed=int(seed), **common)
        for s in doc["scenarios"]
        for hr in doc["hr"]
        for c in doc["censoring"]
        for n in doc["n"]
    ]


def run_study_config(source, *, seed: int | None = None, n_jobs: int = 1) -> SimulationReport:
    """Run the study described by a configuration document.

    ``seed`` overrides the document's seed.
    """
    from .distributions import parse_model

    doc = load_study_config(source)
    alpha = float(doc.get("alpha", 0.05))
    study = doc["study"]
    if study == "cp_misspecification":
        report = SimulationReport()
        seed_value = doc.get("seed", 0) if seed is None else seed
        extra = {k: doc[k] for k in ("control_rate", "accrual_years", "followup_years",
                                     "censoring_mode") if k in doc}
        for s in doc["scenarios"]:
            for hr in doc["hr"]:
                for c in doc["censoring"]:
                    part = cp_misspecification_sweep(
                        s, tuple(doc.get("offsets", (-0.5, -0.25, 0.25, 0.5))),
                        n_values=tuple(doc["n"]), censor_target=c, hr=hr,
                        replications=int(doc.get("replications", 2000)), seed=int(seed_value),
                        alpha=alpha, n_jobs=n_jobs, **extra,
                    )
                    report.extend(part)
                    report.metadata.setdefault("parts", []).append(part.metadata)
        report.metadata["study"] = study
        return report
    configs = configs_from_study(doc, seed)
    battery = doc["battery"]
    if study == "standard":
        return run_study(configs, battery, alpha=alpha, n_jobs=n_jobs)
    if study == "control_variability":
        return control_variability_study(
            configs, battery, median_shape=doc.get("median_shape", 80.0),
            median_rate=float(doc.get("median_rate", 40.0)), alpha=alpha, n_jobs=n_jobs,
        )
    control = doc.get("analysis_control")
    return misspecified_analysis_study(
        configs, battery,
        analysis_control=None if control is None else parse_model(control),
        alpha=alpha, n_jobs=n_jobs,
    )
