"""Real-data workflow: load patient-level data, fit the external control,
and tabulate every test under each candidate control model."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._data import DegenerateStatisticError, SurvivalSample, SurvivalWarning
from .distributions import Family, FittedModel, fit_mle
from .km import drmst_test, select_tau
from .maxcombo import ComboSpec, maxcombo
from .score_tests import ChangePointSpec, TestOutcome, moslrt, oslrt

__all__ = [
    "AnalysisReport",
    "load_ipd",
    "fit_all_families",
    "full_report",
    "truncate_at",
]

_NOTE = (
    "Individual patient data reconstructed from published curves reproduce "
    "orderings and significance, not exact p-values."
)


def load_ipd(path) -> SurvivalSample:
    """Read a CSV file with header ``time,status`` (status 1 = event).

    Raises:
        ValueError: empty file, wrong header, malformed row, negative time or
            non-binary status; the message names the offending line.
    """
    path = Path(path)
    text = path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    line, header = rows[0]
    if [c.strip().lower() for c in header] != ["time", "status"]:
        raise ValueError(f"{path}: line {line}: expected header 'time,status', got {','.join(header)!r}")
    if len(rows) == 1:
        raise ValueError(f"{path}: no data rows")
    times, status = [], []
    for line, row in rows[1:]:
        if len(row) != 2:
            raise ValueError(f"{path}: line {line}: expected 2 columns, got {len(row)}")
        try:
            t = float(row[0])
            s = float(row[1])
        except ValueError:
            raise ValueError(f"{path}: line {line}: non-numeric value in {','.join(row)!r}") from None
        if not math.isfinite(t) or t < 0:
            raise ValueError(f"{path}: line {line}: time must be a nonnegative number, got {row[0]!r}")
        if s not in (0.0, 1.0):
            raise ValueError(f"{path}: line {line}: status must be 0 or 1, got {row[1]!r}")
        times.append(t)
        status.append(int(s))
    return SurvivalSample(np.array(times), np.array(status))


def truncate_at(sample: SurvivalSample, t_max: float) -> SurvivalSample:
    """Administratively censor every observation beyond ``t_max``."""
    t_max = float(t_max)
    if not t_max > 0:
        raise ValueError(f"truncation time must be positive, got {t_max}")
    beyond = sample.times > t_max
    if not beyond.any():
        return sample
    times = np.where(beyond, t_max, sample.times)
    events = np.where(beyond, 0, sample.events)
    return SurvivalSample(times, events)


def fit_all_families(control: SurvivalSample, families=None) -> list[FittedModel]:
    """Fit each family by maximum likelihood and sort by ascending AIC.

    Families whose fit fails or does not converge are left out with a warning.

    Raises:
        ValueError: fewer than two events, or no family could be fitted.
    """
    if control.n_events < 2:
        raise ValueError("fitting the control group needs at least 2 events")
    families = list(Family) if families is None else [Family.coerce(f) for f in families]
    fitted = []
    for family in families:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                model = fit_mle(control, family)
            except (ValueError, FloatingPointError) as exc:
                warnings.warn(f"{family.value} fit failed: {exc}", SurvivalWarning, stacklevel=2)
                continue
        if not model.converged or not math.isfinite(model.aic):
            warnings.warn(f"{family.value} fit excluded (no convergence)", SurvivalWarning, stacklevel=2)
            continue
        for w in caught:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        fitted.append(model)
    if not fitted:
        raise ValueError("no parametric family could be fitted to the control group")
    return sorted(fitted, key=lambda m: m.aic)


@dataclass
class AnalysisReport:
    """P-values of every test (rows) under every control model (columns).

    All p-values are one-sided with small values favouring the experimental
    arm. A cell holding a string records why that test was undefined.
    """

    models: list[FittedModel]
    tests: list[str]
    cells: dict[tuple[str, str], TestOutcome | str]
    tau: float | None = None
    truncation: float | None = None
    warnings: list[str] = field(default_factory=list)
    note: str = _NOTE

    @property
    def columns(self) -> list[str]:
        return _column_names(self.models)

    def pvalue(self, test: str, column: str) -> float:
        cell = self.cells[(test, column)]
        return math.nan if isinstance(cell, str) else cell.pvalue

    def pvalue_table(self) -> dict[str, dict[str, float]]:
        return {t: {c: self.pvalue(t, c) for c in self.columns} for t in self.tests}

    def to_dict(self) -> dict:
        cols = self.columns
        return {
            "note": self.note,
            "tau": self.tau,
            "truncation": self.truncation,
            "warnings": list(self.warnings),
            "models": [dict(m.to_dict(), column=c) for m, c in zip(self.models, cols)],
            "tests": list(self.tests),
            "cells": [
                {
                    "test": t,
                    "model": c,
                    **(
                        {"error": cell}
                        if isinstance(cell, str)
                        else {"outcome": cell.to_dict()}
                    ),
                }
                for (t, c), cell in self.cells.items()
            ],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(_jsonable(self.to_dict()), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        d = json.loads(text)
        models = [FittedModel.from_dict(m) for m in d["models"]]
        cells = {}
        for cell in d["cells"]:
            key = (cell["test"], cell["model"])
            if "error" in cell:
                cells[key] = cell["error"]
            else:
                o = dict(cell["outcome"])
                for k in ("statistic", "pvalue", "observed", "expected"):
                    o[k] = math.nan if o.get(k) is None else o[k]
                cells[key] = TestOutcome.from_dict(o)
        return cls(models, d["tests"], cells, d.get("tau"), d.get("truncation"), d.get("warnings", []), d.get("note", _NOTE))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["test", "model", "statistic", "pvalue", "observed", "expected", "error"])
        for (t, c), cell in self.cells.items():
            if isinstance(cell, str):
                writer.writerow([t, c, "", "", "", "", cell])
            else:
                writer.writerow([t, c, repr(cell.statistic), repr(cell.pvalue), repr(cell.observed), repr(cell.expected), ""])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_text(self) -> str:
        cols = self.columns
        width = max(len(t) for t in self.tests) if self.tests else 4
        colw = [max(10, len(c)) for c in cols]
        lines = []
        if any(m.n_fit for m in self.models):
            lines.append("Control models (ascending AIC):")
            for m, c in zip(self.models, cols):
                aic = "" if math.isnan(m.aic) else f"  AIC={m.aic:.2f}"
                lines.append(f"  {c}: {m.label()}{aic}")
            lines.append("")
        header = "test".ljust(width) + "  " + "  ".join(c.rjust(w) for c, w in zip(cols, colw))
        lines.append(header)
        lines.append("-" * len(header))
        for t in self.tests:
            vals = []
            for c, w in zip(cols, colw):
                cell = self.cells[(t, c)]
                vals.append(("n/a" if isinstance(cell, str) else _fmt_p(cell.pvalue)).rjust(w))
            lines.append(t.ljust(width) + "  " + "  ".join(vals))
        lines.append("")
        if self.tau is not None:
            lines.append(f"RMST horizon tau = {self.tau:g}")
        if self.truncation is not None:
            lines.append(f"Experimental follow-up truncated at {self.truncation:g}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        lines.append(self.note)
        return "\n".join(lines) + "\n"


def _fmt_p(p: float) -> str:
    if math.isnan(p):
        return "nan"
    return "<0.0001" if p < 1e-4 else f"{p:.4f}"


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _column_names(models) -> list[str]:
    names = [m.family.value for m in models]
    if len(set(names)) == len(names):
        return names
    return [m.label() for m in models]


def _run(fn, label, problems):
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SurvivalWarning)
            out = fn()
        for w in caught:
            problems.append(f"{label}: {w.message}")
        return out
    except DegenerateStatisticError as exc:
        problems.append(str(exc))
        return str(exc)


def full_report(
    experimental: SurvivalSample,
    control_models,
    change_points=(),
    combo: ComboSpec | None = None,
    tau: float | None = None,
    *,
    control_max_time: float | None = None,
    truncation: float | None = None,
    alpha: float = 0.05,
    seed=0,
) -> AnalysisReport:
    """Run the test battery under each control model.

    Rows are the OSLRT, the mOSLRT, one score test per entry of
    ``change_points`` (a collection of :class:`ChangePointSpec`), the RMST
    difference test and, when ``combo`` is given, the max-Combo test with
    Hochberg and exact p-values. ``tau`` defaults to ``select_tau`` with
    ``control_max_time``, or to the experimental arm's last time when that is
    unknown. ``truncation`` censors the experimental arm at that time first.
    """
    models = list(control_models)
    if not models:
        raise ValueError("at least one control model is required")
    if truncation is not None:
        experimental = truncate_at(experimental, truncation)
    if tau is None:
        tau = (
            experimental.max_time
            if control_max_time is None
            else select_tau(experimental, control_max_time)
        )
    specs = [cp if isinstance(cp, ChangePointSpec) else ChangePointSpec(*cp) for cp in change_points]
    problems: list[str] = []
    cols = _column_names(models)
    cells: dict[tuple[str, str], TestOutcome | str] = {}
    tests: list[str] = []

    def put(label, col, value):
        if label not in tests:
            tests.append(label)
        cells[(label, col)] = value

    for model, col in zip(models, cols):
        put("OSLRT", col, _run(lambda: oslrt(experimental, model, alpha), "OSLRT", problems))
        put("mOSLRT", col, _run(lambda: moslrt(experimental, model, alpha), "mOSLRT", problems))
        for cp in specs:
            res = _run(lambda: cp.evaluate(experimental, model, alpha), cp.kind, problems)
            put(_cp_label(cp), col, res)
        put(f"dRMST(tau={tau:g})", col, _run(lambda: drmst_test(experimental, model, tau, alpha), "dRMST", problems))
        if combo is not None:
            res = _run(lambda: maxcombo(experimental, model, combo, alpha=alpha, seed=seed), "maxCombo", problems)
            if isinstance(res, str):
                put("maxCombo-Hochberg", col, res)
                put("maxCombo-exact", col, res)
            else:
                hoch, exact = res.outcomes()
                put("maxCombo-Hochberg", col, hoch)
                put("maxCombo-exact", col, exact)
    # keep first occurrence only, in order
    problems = list(dict.fromkeys(problems))
    return AnalysisReport(models, tests, cells, tau, truncation, problems)


def _cp_label(cp: ChangePointSpec) -> str:
    if cp.kind == "ph":
        return "OSLRT"
    if cp.kind == "early":
        return f"Z_EE(k={cp.k:g})"
    if cp.kind == "middle":
        return f"Z_ME(k1={cp.k1:g},k2={cp.k2:g})"
    if cp.kind == "delayed":
        return f"Z_DE(k={cp.k:g})"
    return "Z_CH"
