"""Estimators over patient-level survival data.

Covers the product-limit curve, censored Weibull maximum likelihood, the
two-arm partial-likelihood fit, the pairwise probability of living longer,
and exact conversions between efficacy scales (hazard ratio, time ratio,
living-longer probability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dist import SurvivalCurve, WeibullDist, _as_times, _match
from .errors import (
    NOT_REACHED,
    DomainError,
    NotReachedError,
    NumericalError,
    UnsupportedCensoring,
)

__all__ = [
    "Measure",
    "EfficacySummary",
    "SurvivalSample",
    "KMCurve",
    "ARM_RX",
    "ARM_C",
    "km_fit",
    "km_median",
    "weibull_mle",
    "empirical_llp",
    "hr_from_llp",
    "llp_from_hr",
    "tr_to_hr",
    "hr_to_tr",
    "cox_fit_two_arm",
    "sample_tr",
]

ARM_RX = "Rx"
ARM_C = "C"


class Measure(str, Enum):
    """Efficacy scales the package can summarize on."""

    RR = "RR"
    TR = "TR"
    HR = "HR"
    LLP = "LLP"


@dataclass(frozen=True)
class EfficacySummary:
    """A point estimate on a named scale, optionally with a log-scale SE."""

    measure: Measure
    value: float
    log_se: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "measure", Measure(self.measure))
        value = float(self.value)
        if not (math.isfinite(value) and value > 0.0):
            raise DomainError(f"{self.measure.value} estimate must be positive, got {value!r}")
        if self.measure is Measure.LLP and not value < 1.0:
            raise DomainError("LLP must lie strictly inside (0, 1)")
        if self.log_se is not None and not (math.isfinite(self.log_se) and self.log_se >= 0.0):
            raise DomainError("log_se must be a nonnegative float")
        object.__setattr__(self, "value", value)


@dataclass(frozen=True)
class SurvivalSample:
    """Patient-level records: time on study, death indicator, arm, strata labels.

    ``is_rx`` is True for the treated arm. ``strata`` maps factor names to
    per-subject label arrays; every factor covers every subject.
    """

    time: np.ndarray
    event: np.ndarray
    is_rx: np.ndarray
    strata: dict = field(default_factory=dict)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        event = np.asarray(self.event, dtype=bool)
        is_rx = np.asarray(self.is_rx, dtype=bool)
        if time.ndim != 1 or time.size == 0:
            raise DomainError("sample must hold a non-empty 1-d time array")
        if event.shape != time.shape or is_rx.shape != time.shape:
            raise DomainError("time, event and arm arrays must be aligned")
        if not np.all(np.isfinite(time)) or np.any(time <= 0.0):
            raise DomainError("observation times must be finite and > 0")
        strata = {}
        for name, labels in dict(self.strata).items():
            arr = np.asarray(labels)
            if arr.shape != time.shape:
                raise DomainError(f"stratum factor {name!r} does not cover every subject")
            strata[str(name)] = arr
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "is_rx", is_rx)
        object.__setattr__(self, "strata", strata)

    @property
    def n(self) -> int:
        return self.time.size

    def arm(self, rx: bool):
        """(times, events) of one arm."""
        m = self.is_rx if rx else ~self.is_rx
        return self.time[m], self.event[m]

    def subset(self, mask) -> "SurvivalSample":
        mask = np.asarray(mask, dtype=bool)
        return SurvivalSample(
            self.time[mask],
            self.event[mask],
            self.is_rx[mask],
            {k: v[mask] for k, v in self.strata.items()},
        )

    @classmethod
    def from_arms(cls, rx_times, c_times, rx_events=None, c_events=None):
        rx_times = np.asarray(rx_times, dtype=float)
        c_times = np.asarray(c_times, dtype=float)
        rx_events = np.ones(rx_times.size, bool) if rx_events is None else np.asarray(rx_events, bool)
        c_events = np.ones(c_times.size, bool) if c_events is None else np.asarray(c_events, bool)
        time = np.concatenate([rx_times, c_times])
        event = np.concatenate([rx_events, c_events])
        is_rx = np.zeros(time.size, bool)
        is_rx[: rx_times.size] = True
        return cls(time, event, is_rx)


@dataclass(frozen=True)
class KMCurve(SurvivalCurve):
    """Right-continuous product-limit estimate with its risk-set bookkeeping.

    Rows cover the distinct event times only; ``survival_after[j]`` is the
    estimate just after ``times[j]``. When the largest observation is
    censored the curve plateaus above zero, which
    ``terminates_above_zero`` flags.
    """

    times: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    survival_after: np.ndarray
    max_time: float

    is_step = True

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "at_risk", np.asarray(self.at_risk, dtype=np.int64))
        object.__setattr__(self, "events", np.asarray(self.events, dtype=np.int64))
        object.__setattr__(self, "survival_after", np.asarray(self.survival_after, dtype=float))

    def _lookup(self, t, side):
        tt = _as_times(t)
        idx = np.searchsorted(self.times, tt, side=side)
        vals = np.concatenate(([1.0], self.survival_after))
        return _match(vals[idx], t)

    def survival(self, t):
        return self._lookup(t, "right")

    def survival_left(self, t):
        return self._lookup(t, "left")

    def final_survival(self):
        return float(self.survival_after[-1]) if self.survival_after.size else 1.0

    @property
    def terminates_above_zero(self) -> bool:
        return self.final_survival() > 0.0

    def scale_hint(self):
        return max(self.max_time, np.finfo(float).tiny)

    def jump_times(self):
        return self.times


@dataclass(frozen=True)
class _RiskTables:
    """Per-distinct-event-time counts shared by the rank tests and the Cox fit."""

    times: np.ndarray
    events: np.ndarray       # d_j, total deaths at the time
    events_rx: np.ndarray    # deaths in the Rx arm
    at_risk: np.ndarray      # n_j, subjects still under observation
    at_risk_rx: np.ndarray


def _risk_tables(time, event, is_rx) -> _RiskTables:
    order = np.argsort(time, kind="stable")
    t = np.asarray(time, dtype=float)[order]
    e = np.asarray(event, dtype=bool)[order]
    x = np.asarray(is_rx, dtype=bool)[order]
    uniq, first = np.unique(t, return_index=True)
    leaving = np.diff(np.append(first, t.size))
    d = np.add.reduceat(e.astype(np.int64), first)
    d_rx = np.add.reduceat((e & x).astype(np.int64), first)
    leaving_rx = np.add.reduceat(x.astype(np.int64), first)
    at_risk = t.size - np.concatenate(([0], np.cumsum(leaving)[:-1]))
    at_risk_rx = int(x.sum()) - np.concatenate(([0], np.cumsum(leaving_rx)[:-1]))
    keep = d > 0
    return _RiskTables(uniq[keep], d[keep], d_rx[keep], at_risk[keep], at_risk_rx[keep])


def km_fit(times, events) -> KMCurve:
    """Product-limit estimate from one group's times and death indicators."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    if t.ndim != 1 or t.size == 0 or e.shape != t.shape:
        raise DomainError("km_fit needs aligned, non-empty time and event arrays")
    if not np.all(np.isfinite(t)) or np.any(t <= 0.0):
        raise DomainError("observation times must be finite and > 0")
    tables = _risk_tables(t, e, np.zeros(t.size, bool))
    surv = np.cumprod(1.0 - tables.events / tables.at_risk)
    return KMCurve(
        times=tables.times,
        at_risk=tables.at_risk,
        events=tables.events,
        survival_after=surv,
        max_time=float(t.max()),
    )


def km_median(curve: KMCurve):
    """Smallest event time where the estimate is <= 1/2, else NOT_REACHED."""
    hits = np.flatnonzero(curve.survival_after <= 0.5)
    if hits.size == 0:
        return NOT_REACHED
    return float(curve.times[hits[0]])


def _km_regression_init(t, e):
    """Starting point (log shape, log scale) from the product-limit plot."""
    km = km_fit(t, e)
    s = km.survival_after
    usable = (s > 0.0) & (s < 1.0)
    if usable.sum() >= 2:
        y = np.log(-np.log(s[usable]))
        x = np.log(km.times[usable])
        slope, intercept = np.polyfit(x, y, 1)
        if math.isfinite(slope) and slope > 0.0:
            k0 = min(max(slope, 0.05), 50.0)
            lam0 = math.exp(-intercept / slope)
            if math.isfinite(lam0) and lam0 > 0.0:
                return math.log(k0), math.log(lam0)
    # fall back to the exponential fit
    return 0.0, math.log(float(t.sum()) / float(e.sum()))


def _weibull_loglik_parts(a, b, logt, d, sum_e_logt):
    k = math.exp(a)
    u = logt - b
    with np.errstate(over="ignore"):
        z = np.exp(k * u)
    sum_z = float(z.sum())
    ll = d * (a - b) + (k - 1.0) * (sum_e_logt - d * b) - sum_z
    return k, u, z, sum_z, ll


def weibull_mle(times, events, fixed_shape=None):
    """Censored Weibull fit by Newton iteration on (log shape, log scale).

    Parameters
    ----------
    times, events : aligned arrays; events flags deaths (False = censored).
    fixed_shape : pin the shape and solve the scale in closed form. With
        ``fixed_shape=1.0`` this is the exponential cross-check mode, where
        the fitted scale equals total time over number of deaths.

    Returns
    -------
    (WeibullDist, cov) where cov is the 2x2 covariance of
    (log shape, log scale) from the observed information. In fixed-shape
    mode the shape row and column are zero.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    if t.ndim != 1 or t.size == 0 or e.shape != t.shape:
        raise DomainError("weibull_mle needs aligned, non-empty time and event arrays")
    if not np.all(np.isfinite(t)) or np.any(t <= 0.0):
        raise DomainError("observation times must be finite and > 0")
    d = int(e.sum())
    if d < 2:
        raise DomainError("weibull_mle needs at least two deaths")

    if fixed_shape is not None:
        k = float(fixed_shape)
        if not (math.isfinite(k) and k > 0.0):
            raise DomainError("fixed_shape must be positive")
        lam = (float(np.power(t, k).sum()) / d) ** (1.0 / k)
        cov = np.zeros((2, 2))
        cov[1, 1] = 1.0 / (k * k * d)
        return WeibullDist(k, lam), cov

    if np.unique(t[e]).size < 2:
        raise NumericalError(
            "degenerate sample: fewer than two distinct event times", n_events=d
        )

    logt = np.log(t)
    sum_e_logt = float(logt[e].sum())
    a, b = _km_regression_init(t, e)
    d = float(d)

    ll = None
    for iteration in range(100):
        k, u, z, sum_z, ll = _weibull_loglik_parts(a, b, logt, d, sum_e_logt)
        sum_e_u = sum_e_logt - d * b
        zu = z * u
        zu2 = zu * u
        g_a = d + k * sum_e_u - k * float(zu.sum())
        g_b = k * (sum_z - d)
        if not (math.isfinite(g_a) and math.isfinite(g_b)):
            raise NumericalError("gradient overflow", iteration=iteration, params=(a, b))
        if math.hypot(g_a, g_b) <= 1e-8:
            break
        h_aa = k * sum_e_u - k * float(zu.sum()) - k * k * float(zu2.sum())
        h_ab = -k * d + k * k * float(zu.sum()) + k * sum_z
        h_bb = -k * k * sum_z
        hess = np.array([[h_aa, h_ab], [h_ab, h_bb]])
        try:
            step = np.linalg.solve(hess, [-g_a, -g_b])
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular hessian", iteration=iteration, params=(a, b)) from exc
        norm = float(np.abs(step).max())
        if norm > 4.0:
            step = step * (4.0 / norm)
        scale = 1.0
        for _ in range(40):
            cand = (a + scale * step[0], b + scale * step[1])
            cand_ll = _weibull_loglik_parts(cand[0], cand[1], logt, d, sum_e_logt)[4]
            if math.isfinite(cand_ll) and cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        a, b = a + scale * step[0], b + scale * step[1]
    else:
        raise NumericalError(
            "no convergence after 100 Newton iterations",
            gradient=(g_a, g_b),
            params=(a, b),
        )

    # observed information at the solution
    k, u, z, sum_z, _ = _weibull_loglik_parts(a, b, logt, d, sum_e_logt)
    sum_e_u = sum_e_logt - d * b
    zu = z * u
    h_aa = k * sum_e_u - k * float(zu.sum()) - k * k * float((zu * u).sum())
    h_ab = -k * d + k * k * float(zu.sum()) + k * sum_z
    h_bb = -k * k * sum_z
    info = -np.array([[h_aa, h_ab], [h_ab, h_bb]])
    det = info[0, 0] * info[1, 1] - info[0, 1] * info[1, 0]
    if not (det > 0.0 and info[0, 0] > 0.0):
        raise NumericalError("observed information is not positive definite", info=info.tolist())
    cov = np.linalg.inv(info)
    return WeibullDist(math.exp(a), math.exp(b)), cov


def _pair_stats(rx_times, c_times):
    rx = np.asarray(rx_times, dtype=float)
    c = np.asarray(c_times, dtype=float)
    if rx.size == 0 or c.size == 0:
        raise DomainError("both groups must be non-empty")
    cs = np.sort(c)
    below = np.searchsorted(cs, rx, side="left")
    at_or_below = np.searchsorted(cs, rx, side="right")
    wins = float(below.sum(dtype=np.int64))
    ties = float((at_or_below - below).sum(dtype=np.int64))
    return wins, ties, rx.size, c.size


def empirical_llp(rx_times, c_times, rx_events=None, c_events=None) -> float:
    """Fraction of (Rx, C) pairs where the Rx subject lives longer, ties half.

    Censored observations make pairwise comparisons undefined, so any
    False event flag raises UnsupportedCensoring.
    """
    for flags in (rx_events, c_events):
        if flags is not None and not np.all(np.asarray(flags, dtype=bool)):
            raise UnsupportedCensoring("the pairwise win fraction needs complete observations")
    wins, ties, n, m = _pair_stats(rx_times, c_times)
    return (wins + 0.5 * ties) / (n * m)


def hr_from_llp(llp) -> float:
    """Hazard ratio implied by a living-longer probability: (1-llp)/llp."""
    llp = float(llp)
    if not (0.0 < llp < 1.0):
        raise DomainError(f"llp must lie strictly inside (0, 1), got {llp!r}")
    return (1.0 - llp) / llp


def llp_from_hr(hr) -> float:
    """Living-longer probability implied by a hazard ratio: 1/(1+hr)."""
    hr = float(hr)
    if not (math.isfinite(hr) and hr > 0.0):
        raise DomainError(f"hr must be positive and finite, got {hr!r}")
    return 1.0 / (1.0 + hr)


def tr_to_hr(tr, shape) -> float:
    """Weibull bridge from a time ratio to its hazard ratio: tr ** -shape."""
    tr = float(tr)
    shape = float(shape)
    if not (math.isfinite(tr) and tr > 0.0):
        raise DomainError("tr must be positive and finite")
    if not (math.isfinite(shape) and shape > 0.0):
        raise DomainError("shape must be positive and finite")
    return tr ** -shape


def hr_to_tr(hr, shape) -> float:
    """Weibull bridge from a hazard ratio to its time ratio: hr ** (-1/shape)."""
    hr = float(hr)
    shape = float(shape)
    if not (math.isfinite(hr) and hr > 0.0):
        raise DomainError("hr must be positive and finite")
    if not (math.isfinite(shape) and shape > 0.0):
        raise DomainError("shape must be positive and finite")
    return hr ** (-1.0 / shape)


def _cox_score_info(tables, beta):
    eb = math.exp(beta)
    score = 0.0
    info = 0.0
    for tb in tables:
        n1 = tb.at_risk_rx.astype(float)
        n0 = (tb.at_risk - tb.at_risk_rx).astype(float)
        d = tb.events.astype(float)
        denom = n0 + n1 * eb
        score += float((tb.events_rx - d * n1 * eb / denom).sum())
        info += float((d * n0 * n1 * eb / (denom * denom)).sum())
    return score, info


def _cox_logpl(tables, beta):
    eb = math.exp(beta)
    total = 0.0
    for tb in tables:
        n1 = tb.at_risk_rx.astype(float)
        n0 = (tb.at_risk - tb.at_risk_rx).astype(float)
        total += float((tb.events_rx * beta - tb.events * np.log(n0 + n1 * eb)).sum())
    return total


def cox_fit_two_arm(sample: SurvivalSample, strata_factor=None):
    """Breslow partial-likelihood fit of the single treatment coefficient.

    Returns (log hazard ratio, standard error). With ``strata_factor`` the
    partial likelihood is a product over the factor's levels, each keeping
    its own risk sets. Monotone likelihoods (the arms separate the event
    order) are reported as NumericalError rather than a huge estimate.
    """
    if not sample.is_rx.any() or sample.is_rx.all():
        raise DomainError("both arms must be present")
    if strata_factor is None:
        masks = [np.ones(sample.n, bool)]
    else:
        if strata_factor not in sample.strata:
            raise DomainError(f"unknown stratum factor {strata_factor!r}")
        labels = sample.strata[strata_factor]
        masks = [labels == lv for lv in np.unique(labels)]
    tables = []
    for m in masks:
        tb = _risk_tables(sample.time[m], sample.event[m], sample.is_rx[m])
        if tb.events.sum() == 0:
            raise DomainError("every stratum used in the fit needs at least one death")
        tables.append(tb)

    # The score is strictly decreasing in beta, so a finite root exists only
    # when its limits bracket zero. Otherwise the likelihood is monotone.
    score_lo = 0.0
    score_hi = 0.0
    for tb in tables:
        n0 = tb.at_risk - tb.at_risk_rx
        score_lo += float((tb.events_rx - tb.events * (n0 == 0)).sum())
        score_hi += float((tb.events_rx - tb.events * (tb.at_risk_rx > 0)).sum())
    if score_lo <= 0.0 or score_hi >= 0.0:
        raise NumericalError(
            "monotone partial likelihood: the arms separate the event order",
            score_at_minus_inf=score_lo,
            score_at_plus_inf=score_hi,
        )

    beta = 0.0
    for _ in range(100):
        score, info = _cox_score_info(tables, beta)
        if not math.isfinite(score):
            raise NumericalError("partial-likelihood score overflow", beta=beta)
        if abs(score) <= 1e-10:
            break
        if info <= 0.0:
            raise NumericalError("partial likelihood has no curvature", beta=beta)
        step = max(min(score / info, 2.0), -2.0)
        ll0 = _cox_logpl(tables, beta)
        scale = 1.0
        for _ in range(40):
            if _cox_logpl(tables, beta + scale * step) >= ll0 - 1e-12:
                break
            scale *= 0.5
        beta += scale * step
        if abs(beta) > 30.0:
            raise NumericalError(
                "monotone partial likelihood: the arms separate the event order", beta=beta
            )
    else:
        raise NumericalError("no convergence after 100 Newton iterations", beta=beta)

    _, info = _cox_score_info(tables, beta)
    if info <= 0.0:
        raise NumericalError("no information about the treatment coefficient", beta=beta)
    return float(beta), float(1.0 / math.sqrt(info))


def sample_tr(rx_times, rx_events, c_times, c_events) -> EfficacySummary:
    """Ratio of product-limit median times, Rx over C.

    Raises NotReachedError (carrying the arm) when either curve never
    reaches its median.
    """
    med_rx = km_median(km_fit(rx_times, rx_events))
    if med_rx is NOT_REACHED:
        raise NotReachedError("Rx median never reached", arm=ARM_RX)
    med_c = km_median(km_fit(c_times, c_events))
    if med_c is NOT_REACHED:
        raise NotReachedError("C median never reached", arm=ARM_C)
    return EfficacySummary(Measure.TR, med_rx / med_c)
