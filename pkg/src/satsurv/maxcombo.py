"""Max-Combo combination of the mOSLRT with early and delayed score tests.

The combined statistic is the largest evidence ``max_i(-Z_i)`` among the
components (each component rejects for negative ``Z``). Multiplicity is handled
either by the Hochberg step-up correction of the component p-values or by the
exact tail probability of the maximum under a multivariate normal law whose
correlations are ratios of expected event counts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from ._data import DegenerateStatisticError, SurvivalSample, SurvivalWarning
from .distributions import FittedModel
from .score_tests import TestOutcome, _cum_hazards, _delayed, _early, _moslrt

__all__ = [
    "ComboSpec",
    "ComboResult",
    "expected_events",
    "covariance_matrix",
    "maxcombo",
    "hochberg_p",
    "mvn_upper_orthant",
]

_KINDS = ("moslrt", "early", "delayed")


@dataclass(frozen=True)
class ComboSpec:
    """Ordered components ``(kind, change_point)`` of a max-Combo test.

    ``kind`` is ``"moslrt"`` (change-point ignored, use None), ``"early"`` or
    ``"delayed"``.
    """

    components: tuple[tuple[str, float | None], ...] = (
        ("moslrt", None),
        ("early", 1.0),
        ("early", 3.0),
        ("delayed", 3.0),
        ("delayed", 5.0),
    )

    def __post_init__(self):
        comps = []
        for kind, k in self.components:
            kind = kind.lower()
            if kind not in _KINDS:
                raise ValueError(f"unknown max-Combo component {kind!r}; expected one of {_KINDS}")
            if kind == "moslrt":
                k = None
            elif k is None or not float(k) >= 0:
                raise ValueError(f"{kind} component needs a nonnegative change-point")
            else:
                k = float(k)
            comps.append((kind, k))
        if not comps:
            raise ValueError("max-Combo needs at least one component")
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def default(cls, early=(1.0, 3.0), delayed=(3.0, 5.0)) -> "ComboSpec":
        """mOSLRT plus early-effect tests at ``early`` and delayed-effect tests at ``delayed``."""
        return cls(
            (("moslrt", None),)
            + tuple(("early", k) for k in early)
            + tuple(("delayed", k) for k in delayed)
        )

    def labels(self) -> list[str]:
        names = {"moslrt": "mOSLRT", "early": "Z_EE", "delayed": "Z_DE"}
        return [names[kind] + ("" if k is None else f"(k={k:g})") for kind, k in self.components]

    def to_dict(self) -> dict:
        return {"components": [[kind, k] for kind, k in self.components]}


@dataclass
class ComboResult:
    labels: list[str]
    component_statistics: np.ndarray
    component_pvalues: np.ndarray
    expected_events: np.ndarray
    covariance: np.ndarray
    statistic: float
    argmax: int
    p_hochberg: float
    p_exact: float
    p_exact_se: float
    dropped: list[str] = field(default_factory=list)
    alpha: float = 0.05

    def outcomes(self) -> tuple[TestOutcome, TestOutcome]:
        """The combination as two outcomes (Hochberg and exact p-value)."""
        return (
            TestOutcome("maxCombo-Hochberg", self.statistic, self.p_hochberg, math.nan, math.nan, self.alpha, "greater"),
            TestOutcome("maxCombo-exact", self.statistic, self.p_exact, math.nan, math.nan, self.alpha, "greater"),
        )

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "component_statistics": self.component_statistics.tolist(),
            "component_pvalues": self.component_pvalues.tolist(),
            "expected_events": self.expected_events.tolist(),
            "covariance": self.covariance.tolist(),
            "statistic": self.statistic,
            "argmax": self.argmax,
            "p_hochberg": self.p_hochberg,
            "p_exact": self.p_exact,
            "p_exact_se": self.p_exact_se,
            "dropped": list(self.dropped),
        }


def _expected(times, lam, kind, k, lam_k) -> float:
    if kind == "moslrt":
        return float(np.sum(lam))
    if kind == "early":
        before = times <= k
        at_risk = np.count_nonzero(times >= k)
        return float(np.sum(lam[before])) + (at_risk * lam_k if at_risk else 0.0)
    after = times > k
    return float(np.sum(lam[after] - lam_k))


def expected_events(sample: SurvivalSample, control: FittedModel, component) -> float:
    """Expected events driving one component's correlation.

    ``component`` is a ``(kind, change_point)`` pair as in :class:`ComboSpec`.
    """
    kind, k = ComboSpec((component,)).components[0]
    lam = _cum_hazards(sample, control)
    lam_k = None if k is None else control.cum_hazard(k)
    return _expected(sample.times, lam, kind, k, lam_k)


def covariance_matrix(expected, spec: ComboSpec):
    """Correlation matrix of the components from expected-event ratios.

    Pairs within the early family, within the delayed family, or involving
    the mOSLRT get ``sqrt(E_small / E_large)``; early/delayed pairs get 0.
    Components with zero expected events are dropped with a warning.

    Returns:
        ``(cov, kept)``: the matrix over the kept components and their indices
        into ``spec.components``.
    """
    expected = np.asarray(expected, dtype=np.float64)
    kinds = [kind for kind, _ in spec.components]
    if expected.shape != (len(kinds),):
        raise ValueError("one expected-event value per component is required")
    kept = [i for i, e in enumerate(expected) if e > 0]
    if len(kept) < len(kinds):
        dropped = [spec.labels()[i] for i in range(len(kinds)) if i not in kept]
        warnings.warn(
            f"max-Combo components with zero expected events dropped: {dropped}",
            SurvivalWarning,
            stacklevel=2,
        )
    m = len(kept)
    cov = np.eye(m)
    for a in range(m):
        for b in range(a):
            i, j = kept[a], kept[b]
            ki, kj = kinds[i], kinds[j]
            if {ki, kj} == {"early", "delayed"}:
                continue
            lo, hi = sorted((expected[i], expected[j]))
            cov[a, b] = cov[b, a] = math.sqrt(lo / hi)
    return cov, kept


def hochberg_p(pvalues) -> float:
    """Smallest Hochberg step-up adjusted p-value: ``min_j (m - j + 1) p_(j)``."""
    p = np.sort(np.asarray(pvalues, dtype=np.float64))
    if p.size == 0:
        raise ValueError("at least one p-value is required")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    return float(min(1.0, np.min((m - np.arange(m)) * p)))


def _cholesky_jittered(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("covariance matrix is not positive definite, even after jitter")


def mvn_upper_orthant(
    threshold: float,
    cov,
    *,
    seed=0,
    target_se: float = 1e-4,
    max_points: int = 1_000_000,
    n_randomizations: int = 16,
    return_se: bool = False,
):
    """``P(U_i <= threshold for all i)`` with ``U ~ N(0, cov)``.

    Sequential conditioning on the Cholesky factor turns the orthant
    probability into an integral over the unit cube, estimated with
    ``n_randomizations`` independently scrambled Sobol sequences. The
    per-sequence sample size doubles until the standard error across
    randomizations is below ``target_se`` or ``max_points`` points in total
    have been used.

    Returns:
        The probability, or ``(probability, standard_error)`` if
        ``return_se``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    d = cov.shape[0]
    if d == 0 or cov.shape != (d, d):
        raise ValueError(f"covariance must be a nonempty square matrix, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance matrix must be symmetric")
    if not np.allclose(np.diag(cov), 1.0, atol=1e-9):
        raise ValueError("covariance matrix must have a unit diagonal")
    u = float(threshold)
    if math.isnan(u):
        raise ValueError("threshold must not be NaN")
    if d == 1 or math.isinf(u):
        value = float(u > 0) if math.isinf(u) else float(ndtr(u))
        return (value, 0.0) if return_se else value
    chol = _cholesky_jittered(cov)
    diag = np.diag(chol)
    rng = np.random.default_rng(seed)
    engines = [qmc.Sobol(d - 1, scramble=True, seed=rng) for _ in range(n_randomizations)]
    tiny = np.finfo(np.float64).tiny

    def integrand(w):
        n = w.shape[0]
        y = np.empty((n, d - 1))
        e = np.full(n, ndtr(u / diag[0]))
        f = e.copy()
        for i in range(1, d):
            y[:, i - 1] = ndtri(np.clip(w[:, i - 1] * e, tiny, 1.0 - 1e-16))
            shift = y[:, :i] @ chol[i, :i]
            e = ndtr((u - shift) / diag[i])
            f *= e
        return f

    sums = np.zeros(n_randomizations)
    count = 0
    batch = 256
    while True:
        for r, engine in enumerate(engines):
            sums[r] += integrand(engine.random(batch)).sum()
        count += batch
        means = sums / count
        se = float(means.std(ddof=1) / math.sqrt(n_randomizations))
        if se < target_se or count * n_randomizations * 2 > max_points:
            break
        batch = count  # double the per-sequence size, keeping Sobol balance
    value = float(np.clip(means.mean(), 0.0, 1.0))
    return (value, se) if return_se else value


def maxcombo(
    sample: SurvivalSample,
    control: FittedModel,
    spec: ComboSpec | None = None,
    *,
    alpha: float = 0.05,
    seed=0,
    sign: str = "negate",
    exact: bool = True,
) -> ComboResult:
    """Evaluate a max-Combo test.

    Components with a degenerate statistic (e.g. nobody beyond a delayed
    change-point) are dropped with a warning. ``sign="raw"`` takes the
    maximum of the raw statistics instead of their negations, for comparison
    only. ``exact=False`` skips the multivariate normal integration.

    Raises:
        DegenerateStatisticError: every component is degenerate.
    """
    spec = ComboSpec() if spec is None else spec
    if sign not in ("negate", "raw"):
        raise ValueError(f"sign must be 'negate' or 'raw', got {sign!r}")
    times, events = sample.times, sample.events
    lam = _cum_hazards(sample, control)
    labels_all = spec.labels()
    labels, stats, expected, kept_spec, dropped = [], [], [], [], []
    for label, (kind, k) in zip(labels_all, spec.components):
        lam_k = None if k is None else control.cum_hazard(k)
        try:
            if kind == "moslrt":
                out = _moslrt(events, lam, alpha)
            elif kind == "early":
                out = _early(times, events, lam, k, lam_k, alpha)
            else:
                out = _delayed(times, events, lam, k, lam_k, alpha)
        except DegenerateStatisticError:
            dropped.append(label)
            continue
        labels.append(label)
        stats.append(out.statistic)
        expected.append(_expected(times, lam, kind, k, lam_k))
        kept_spec.append((kind, k))
    if dropped:
        warnings.warn(
            f"degenerate max-Combo components dropped: {dropped}", SurvivalWarning, stacklevel=2
        )
    if not stats:
        raise DegenerateStatisticError("max-Combo: every component is degenerate")
    sub = ComboSpec(tuple(kept_spec))
    cov, kept = covariance_matrix(np.array(expected), sub)
    if len(kept) < len(labels):
        dropped += [labels[i] for i in range(len(labels)) if i not in kept]
        labels = [labels[i] for i in kept]
        stats = [stats[i] for i in kept]
        expected = [expected[i] for i in kept]
    z = np.array(stats)
    evidence = -z if sign == "negate" else z
    argmax = int(np.argmax(evidence))
    combined = float(evidence[argmax])
    pvals = ndtr(-evidence)
    p_hoch = hochberg_p(pvals)
    if exact:
        prob, se = mvn_upper_orthant(combined, cov, seed=seed, return_se=True)
        p_exact = float(min(1.0, max(0.0, 1.0 - prob)))
    else:
        p_exact, se = math.nan, math.nan
    return ComboResult(
        labels, z, pvals, np.array(expected), cov, combined, argmax, p_hoch, p_exact, se,
        dropped, alpha,
    )
