"""Command-line interface: ``satsurv fit|test|simulate|analyze``.

Exit status is 0 on success, 2 for invalid input (arguments, files, configs)
and 1 when a statistic cannot be computed. Warnings go to standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

from ._data import DegenerateStatisticError
from .analysis import AnalysisReport, fit_all_families, full_report, load_ipd
from .distributions import Family, fit_mle, parse_model
from .km import drmst_test, select_tau
from .maxcombo import ComboSpec, maxcombo
from .score_tests import ChangePointSpec, moslrt, oslrt, z_crossing, z_delayed, z_early, z_middle
from .simulate import run_study_config

__all__ = ["main", "build_parser"]

_TEST_METHODS = ("oslrt", "moslrt", "early", "middle", "delayed", "crossing", "rmst", "maxcombo")


class InputError(Exception):
    """Invalid user input; reported with exit status 2."""


def _alpha(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number, got {text!r}") from None
    if not 0 < value <= 0.5:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 0.5], got {value}")
    return value


def _nonneg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value >= 0):
        raise argparse.ArgumentTypeError(f"expected a nonnegative time, got {text!r}")
    return value


def _positive(text: str) -> float:
    value = _nonneg(text)
    if value == 0:
        raise argparse.ArgumentTypeError("expected a positive time, got 0")
    return value


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected k1,k2, got {text!r}")
    k1, k2 = (_nonneg(p) for p in parts)
    if not k1 < k2:
        raise argparse.ArgumentTypeError(f"expected k1 < k2, got {text!r}")
    return k1, k2


def _times(text: str) -> tuple[float, ...]:
    return tuple(_nonneg(p) for p in text.split(","))


def _add_control(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    g = p.add_argument_group("control model (exactly one source)")
    g.add_argument(
        "--control",
        action="append" if multiple else "store",
        metavar="FAMILY:PARAMS",
        help="explicit control model, e.g. exponential:0.35 or weibull:1.5,2"
        + (" (repeatable)" if multiple else ""),
    )
    g.add_argument("--control-ipd", metavar="CSV", help="control-group data (time,status) to fit")
    g.add_argument(
        "--family",
        default="auto" if multiple else "exponential",
        help="family fitted to --control-ipd; 'auto' picks the lowest AIC"
        + ("; 'all' reports every family" if multiple else ""),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satsurv",
        description="Single-arm survival trials against an external control: score tests, "
        "RMST, max-Combo and simulation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit every parametric family to control data and rank by AIC")
    p.add_argument("--ipd", required=True, metavar="CSV", help="control-group data with header time,status")
    p.add_argument("--families", help="comma-separated families (default: all five)")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format (default text)")

    p = sub.add_parser("test", help="run one test and print its outcome as JSON")
    p.add_argument("--method", required=True, choices=_TEST_METHODS, help="test to run")
    p.add_argument("--ipd", required=True, metavar="CSV", help="experimental-arm data with header time,status")
    _add_control(p)
    p.add_argument("--k", type=_nonneg, help="change-point of the early/delayed test")
    p.add_argument("--k1", type=_nonneg, help="start of the middle-effect window")
    p.add_argument("--k2", type=_nonneg, help="end of the middle-effect window")
    p.add_argument("--tau", type=_positive, help="RMST horizon (default: select from follow-up)")
    p.add_argument("--early", type=_times, default=(1.0, 3.0), help="max-Combo early change-points (default 1,3)")
    p.add_argument("--delayed", type=_times, default=(3.0, 5.0), help="max-Combo delayed change-points (default 3,5)")
    p.add_argument("--alpha", type=_alpha, default=0.05, help="one-sided level in (0, 0.5] (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="seed of the max-Combo integration (default 0)")

    p = sub.add_parser("simulate", help="run a simulation study from a JSON configuration")
    p.add_argument("--config", required=True, metavar="JSON", help="study definition (see docs/study_config.md)")
    p.add_argument("--seed", required=True, type=int, help="master seed (required)")
    p.add_argument("--replications", type=int, help="override the replication count")
    p.add_argument("--out", default="simulation", metavar="PREFIX",
                   help="output prefix: writes PREFIX.csv, PREFIX.json and PREFIX_long.csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")

    p = sub.add_parser("analyze", help="full test table under one or several control models")
    p.add_argument("--ipd", required=True, metavar="CSV", help="experimental-arm data with header time,status")
    _add_control(p, multiple=True)
    p.add_argument("--early", type=_nonneg, action="append", default=[], metavar="K", help="add Z_EE(K) (repeatable)")
    p.add_argument("--middle", type=_pair, action="append", default=[], metavar="K1,K2", help="add Z_ME(K1,K2) (repeatable)")
    p.add_argument("--delayed", type=_nonneg, action="append", default=[], metavar="K", help="add Z_DE(K) (repeatable)")
    p.add_argument("--crossing", action="store_true", help="add Z_CH")
    p.add_argument("--combo", action="store_true", help="add max-Combo rows")
    p.add_argument("--combo-early", type=_times, default=(1.0, 3.0), help="max-Combo early change-points (default 1,3)")
    p.add_argument("--combo-delayed", type=_times, default=(3.0, 5.0), help="max-Combo delayed change-points (default 3,5)")
    p.add_argument("--tau", type=_positive, help="RMST horizon")
    p.add_argument("--control-max-time", type=_positive, help="last follow-up time of the control group (for tau)")
    trunc = p.add_mutually_exclusive_group()
    trunc.add_argument("--truncate", type=_positive, metavar="T", help="censor experimental data beyond T")
    trunc.add_argument("--truncate-at-control", action="store_true",
                       help="censor experimental data beyond the control group's last time")
    p.add_argument("--alpha", type=_alpha, default=0.05, help="one-sided level (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="seed of the max-Combo integration (default 0)")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here")
    p.add_argument("--csv", metavar="PATH", help="write all (test, model) p-values as CSV here")
    return parser


def _load(path) -> object:
    if path is None:
        return None
    if not Path(path).is_file():
        raise InputError(f"file not found: {path}")
    try:
        return load_ipd(path)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _single_control(args):
    """The control model of ``test`` and the control's last follow-up time."""
    if (args.control is None) == (args.control_ipd is None):
        raise InputError("give exactly one of --control or --control-ipd")
    if args.control is not None:
        try:
            return parse_model(args.control), None
        except ValueError as exc:
            raise InputError(str(exc)) from None
    sample = _load(args.control_ipd)
    family = args.family
    try:
        model = fit_all_families(sample)[0] if family == "auto" else fit_mle(sample, Family.coerce(family))
    except ValueError as exc:
        raise InputError(f"{args.control_ipd}: {exc}") from None
    return model, sample.max_time


def _cmd_fit(args, out) -> int:
    sample = _load(args.ipd)
    families = None
    if args.families:
        try:
            families = [Family.coerce(f) for f in args.families.split(",")]
        except ValueError as exc:
            raise InputError(str(exc)) from None
    try:
        models = fit_all_families(sample, families)
    except ValueError as exc:
        raise InputError(f"{args.ipd}: {exc}") from None
    if args.format == "json":
        out.write(json.dumps([m.to_dict() for m in models], indent=2) + "\n")
        return 0
    best = models[0].aic
    out.write(f"{'family':<12} {'AIC':>12} {'dAIC':>9} {'loglik':>12}  parameters\n")
    for m in models:
        params = ", ".join(f"{k}={v:.6g}" for k, v in m.param_dict.items())
        out.write(f"{m.family.value:<12} {m.aic:>12.4f} {m.aic - best:>9.4f} {m.loglik:>12.4f}  {params}\n")
    return 0


def _cmd_test(args, out) -> int:
    sample = _load(args.ipd)
    control, control_max = _single_control(args)
    m = args.method
    if m in ("early", "delayed") and args.k is None:
        raise InputError(f"--method {m} needs --k")
    if m == "middle" and (args.k1 is None or args.k2 is None):
        raise InputError("--method middle needs --k1 and --k2")
    if m == "middle" and not args.k1 < args.k2:
        raise InputError("--k1 must be smaller than --k2")
    a = args.alpha
    if m == "oslrt":
        res = oslrt(sample, control, a)
    elif m == "moslrt":
        res = moslrt(sample, control, a)
    elif m == "early":
        res = z_early(sample, control, args.k, a)
    elif m == "middle":
        res = z_middle(sample, control, args.k1, args.k2, a)
    elif m == "delayed":
        res = z_delayed(sample, control, args.k, a)
    elif m == "crossing":
        res = z_crossing(sample, control, a)
    elif m == "rmst":
        tau = args.tau
        if tau is None:
            tau = sample.max_time if control_max is None else select_tau(sample, control_max)
        try:
            res = drmst_test(sample, control, tau, a)
        except DegenerateStatisticError:
            raise
        except ValueError as exc:
            raise InputError(str(exc)) from None
    else:
        combo = maxcombo(sample, control, ComboSpec.default(args.early, args.delayed), alpha=a, seed=args.seed)
        doc = combo.to_dict()
        doc["control"] = control.to_dict()
        out.write(json.dumps(_finite(doc), indent=2) + "\n")
        return 0
    doc = res.to_dict()
    doc["control"] = control.to_dict()
    out.write(json.dumps(_finite(doc), indent=2) + "\n")
    return 0


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _cmd_simulate(args, out) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    if args.replications is not None:
        if args.replications < 1:
            raise InputError("--replications must be at least 1")
        if isinstance(doc, dict):
            doc["replications"] = args.replications
    try:
        report = run_study_config(doc, seed=args.seed, n_jobs=args.jobs)
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, DegenerateStatisticError):
            raise
        raise InputError(f"{path}: {exc}") from None
    prefix = Path(args.out)
    if prefix.parent and not prefix.parent.exists():
        raise InputError(f"output directory does not exist: {prefix.parent}")
    report.metadata["seed"] = args.seed
    report.to_csv(f"{prefix}.csv")
    report.to_json(f"{prefix}.json")
    report.to_long_csv(f"{prefix}_long.csv")
    out.write(f"wrote {prefix}.csv, {prefix}.json and {prefix}_long.csv ({len(report.rows)} rows)\n")
    return 0


def _cmd_analyze(args, out) -> int:
    sample = _load(args.ipd)
    if bool(args.control) == bool(args.control_ipd):
        raise InputError("give --control (one or more) or --control-ipd, not both")
    control_max = args.control_max_time
    if args.control:
        try:
            models = [parse_model(c) for c in args.control]
        except ValueError as exc:
            raise InputError(str(exc)) from None
    else:
        control = _load(args.control_ipd)
        control_max = control.max_time if control_max is None else control_max
        try:
            if args.family in ("auto", "all"):
                models = fit_all_families(control)
                if args.family == "auto":
                    models = models[:1]
            else:
                models = [fit_mle(control, Family.coerce(args.family))]
        except ValueError as exc:
            raise InputError(f"{args.control_ipd}: {exc}") from None
    truncation = args.truncate
    if args.truncate_at_control:
        if control_max is None:
            raise InputError("--truncate-at-control needs --control-ipd or --control-max-time")
        truncation = control_max
    cps = [ChangePointSpec.early(k) for k in args.early]
    cps += [ChangePointSpec.middle(k1, k2) for k1, k2 in args.middle]
    cps += [ChangePointSpec.delayed(k) for k in args.delayed]
    if args.crossing:
        cps.append(ChangePointSpec("crossing"))
    combo = ComboSpec.default(args.combo_early, args.combo_delayed) if args.combo else None
    try:
        report: AnalysisReport = full_report(
            sample, models, cps, combo, args.tau, control_max_time=control_max,
            truncation=truncation, alpha=args.alpha, seed=args.seed,
        )
    except DegenerateStatisticError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.json:
        report.to_json(args.json)
    if args.csv:
        report.to_csv(args.csv)
    out.write(report.to_text())
    return 0


_COMMANDS = {"fit": _cmd_fit, "test": _cmd_test, "simulate": _cmd_simulate, "analyze": _cmd_analyze}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    sys.stderr.write(f"warning: {message}\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        warnings.showwarning = _show_warning
        try:
            return _COMMANDS[args.command](args, sys.stdout)
        except InputError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return 2
        except DegenerateStatisticError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return 1
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            sys.stderr.write(f"error: computation failed: {exc}\n")
            return 1


if __name__ == "__main__":
    sys.exit(main())
