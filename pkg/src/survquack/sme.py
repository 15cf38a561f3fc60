"""Aggregating subgroup efficacy into a single overall number.

Two aggregation rules are implemented side by side. The prevalence-weighted
geometric mean of per-stratum ratios is what stratified-analysis software
usually reports; it averages logs of ratios and never looks at the control
arm's prognosis, so its output can leave the range spanned by the
subgroup ratios. The mixable route instead mixes each arm's ingredients
(response rates or survival curves) over subgroup prevalences first and
only then forms a ratio, which keeps the overall value inside the subgroup
range by construction. ``stratified_audit`` runs both against real data,
one stratification factor at a time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dist import MixtureCurve, SurvivalCurve, quantile
from .errors import DomainError, NotReachedError, NumericalError
from .estim import (
    EfficacySummary,
    Measure,
    SurvivalSample,
    cox_fit_two_arm,
    hr_from_llp,
    km_fit,
    sample_tr,
    weibull_mle,
)

__all__ = [
    "QuadraturePolicy",
    "SubgroupRow",
    "SubgroupTable",
    "StratifiedComparison",
    "naive_stratified_ratio",
    "sme_overall_rr",
    "sme_overall_tr",
    "sme_overall_hr",
    "mixture_llp",
    "stratified_audit",
]


@dataclass(frozen=True)
class QuadraturePolicy:
    """Controls the integration behind curve-based win probabilities.

    ``tail_cutoff`` sets the horizon: integration stops once both arms'
    mixtures have survival below it. ``abs_tol`` is the absolute error
    budget of the adaptive Simpson rule; ``max_depth`` bounds its
    recursion before NumericalError is raised.
    """

    tail_cutoff: float = 1e-8
    abs_tol: float = 1e-9
    max_depth: int = 48


@dataclass(frozen=True)
class SubgroupRow:
    """One subgroup's prevalence and its per-arm ingredients.

    For RR tables the ingredients are response probabilities in [0, 1];
    for TR and HR tables they are survival curves.
    """

    label: str
    prevalence: float
    rx: object
    c: object


@dataclass(frozen=True)
class SubgroupTable:
    """Per-subgroup efficacy ingredients with prevalences summing to 1."""

    measure: Measure
    rows: tuple

    def __post_init__(self):
        measure = Measure(self.measure)
        rows = tuple(self.rows)
        if not rows:
            raise DomainError("subgroup table needs at least one row")
        total = math.fsum(r.prevalence for r in rows)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"prevalences sum to {total!r}, not 1")
        for r in rows:
            if not (0.0 < r.prevalence <= 1.0):
                raise DomainError(f"prevalence {r.prevalence!r} outside (0, 1]")
            if measure is Measure.RR:
                for p in (r.rx, r.c):
                    if not (0.0 <= float(p) <= 1.0):
                        raise DomainError("RR ingredients are response probabilities in [0, 1]")
            else:
                for curve in (r.rx, r.c):
                    if not isinstance(curve, SurvivalCurve):
                        raise DomainError(f"{measure.value} ingredients must be survival curves")
        object.__setattr__(self, "measure", measure)
        object.__setattr__(self, "rows", rows)

    def arm_mixture(self, rx: bool) -> MixtureCurve:
        return MixtureCurve(tuple((r.prevalence, r.rx if rx else r.c) for r in self.rows))


def naive_stratified_ratio(pairs) -> float:
    """Prevalence-weighted geometric mean of per-stratum ratios.

    ``pairs`` iterates (ratio, weight); weights must sum to 1 and ratios
    must be positive. This is the pooling rule under audit: it commutes
    with relabeling strata and with taking reciprocals, but it ignores
    the arms' ingredients entirely.
    """
    pairs = [(float(r), float(w)) for r, w in pairs]
    if not pairs:
        raise DomainError("at least one (ratio, weight) pair is required")
    for r, w in pairs:
        if not (math.isfinite(r) and r > 0.0):
            raise DomainError(f"ratio {r!r} must be positive and finite")
        if not (0.0 <= w <= 1.0):
            raise DomainError(f"weight {w!r} outside [0, 1]")
    total = math.fsum(w for _, w in pairs)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"weights sum to {total!r}, not 1")
    return math.exp(math.fsum(w * math.log(r) for r, w in pairs))


def sme_overall_rr(table: SubgroupTable) -> EfficacySummary:
    """Overall response ratio: mix response rates per arm, then divide."""
    if table.measure is not Measure.RR:
        raise DomainError("sme_overall_rr needs an RR table")
    num = math.fsum(r.prevalence * float(r.rx) for r in table.rows)
    den = math.fsum(r.prevalence * float(r.c) for r in table.rows)
    if den <= 0.0:
        raise DomainError("overall control response is zero; the ratio is undefined")
    return EfficacySummary(Measure.RR, num / den)


def sme_overall_tr(table: SubgroupTable, tol=1e-10) -> EfficacySummary:
    """Overall time ratio: median of each arm's mixture curve, then divide."""
    if table.measure is not Measure.TR:
        raise DomainError("sme_overall_tr needs a TR table")
    medians = {}
    for arm, rx in (("Rx", True), ("C", False)):
        try:
            medians[arm] = quantile(table.arm_mixture(rx), 0.5, tol=tol)
        except NotReachedError as exc:
            raise NotReachedError(f"{arm} mixture median never reached", arm=arm) from exc
    return EfficacySummary(Measure.TR, medians["Rx"] / medians["C"])


def sme_overall_hr(table: SubgroupTable, policy: QuadraturePolicy = QuadraturePolicy()) -> EfficacySummary:
    """Overall hazard ratio through the win-probability bijection.

    Each arm's curves are mixed over prevalences, the probability that a
    treated draw outlives a control draw is integrated, and the result is
    mapped through hr = (1 - llp) / llp. For a single subgroup whose arms
    are a power pair with exponent theta this recovers theta exactly (up
    to quadrature error).
    """
    if table.measure is not Measure.HR:
        raise DomainError("sme_overall_hr needs an HR table")
    llp = mixture_llp(table.arm_mixture(True), table.arm_mixture(False), policy)
    if not (0.0 < llp < 1.0):
        raise NumericalError("integrated win probability left (0, 1)", llp=llp)
    return EfficacySummary(Measure.HR, hr_from_llp(llp))


def _flatten_components(curve, weight=1.0):
    if isinstance(curve, MixtureCurve):
        out = []
        for p, c in curve.components:
            out.extend(_flatten_components(c, weight * p))
        return out
    return [(weight, curve)]


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if depth <= 0:
        raise NumericalError("quadrature failed to converge", interval=(a, b), residual=delta)
    return _adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _adaptive_simpson(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def _integrate(f, a, b, tol, max_depth):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _horizon(rx_curve, c_curve, cutoff):
    t = max(rx_curve.scale_hint(), c_curve.scale_hint(), 1e-6)
    for _ in range(1000):
        if rx_curve.survival(t) < cutoff and c_curve.survival(t) < cutoff:
            return t
        t *= 2.0
    raise NumericalError("no finite horizon where both curves vanish", cutoff=cutoff)


def _llp_against_component(rx_curve, comp, policy):
    jumps = comp.jump_times()
    if jumps is not None:
        if jumps.size == 0:
            # a step control with no jumps never dies, so nothing outlives it
            return 0.0
        mass = np.asarray(comp.survival_left(jumps)) - np.asarray(comp.survival(jumps))
        # half credit at shared jump points mirrors the tie rule of the
        # pairwise estimator
        rx_mid = 0.5 * (np.asarray(rx_curve.survival_left(jumps)) + np.asarray(rx_curve.survival(jumps)))
        return float(np.sum(mass * rx_mid))
    rx_jumps = rx_curve.jump_times()
    if rx_jumps is not None:
        # rx piecewise constant against an absolutely continuous component:
        # sum exactly over the constant pieces
        if rx_jumps.size == 0:
            return 1.0
        vals = np.concatenate(([1.0], np.asarray(rx_curve.survival(rx_jumps))))
        bounds = np.concatenate(([1.0], np.asarray(comp.survival(rx_jumps)), [0.0]))
        return float(np.sum(vals * (bounds[:-1] - bounds[1:])))
    if not comp.has_density:
        raise DomainError("control curve exposes neither jumps nor a density")
    horizon = _horizon(rx_curve, comp, policy.tail_cutoff)

    def integrand(x):
        # quartic substitution t = horizon * x^4 keeps the integrand finite
        # at the origin for shapes above 1/4 and spreads the mass evenly
        t = horizon * x**4
        if t <= 0.0:
            return 0.0
        return float(rx_curve.survival(t)) * float(comp.density(t)) * 4.0 * horizon * x**3

    cuts = np.linspace(0.0, 1.0, 9)
    tol = policy.abs_tol / (cuts.size - 1)
    return math.fsum(
        _integrate(integrand, float(a), float(b), tol, policy.max_depth)
        for a, b in zip(cuts[:-1], cuts[1:])
    )


def mixture_llp(rx_curve: SurvivalCurve, c_curve: SurvivalCurve, policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """Probability that a draw from ``rx_curve`` outlives one from ``c_curve``.

    The control side is decomposed into mixture components; step components
    contribute exact sums over their jumps (ties get half credit, matching
    the pairwise estimator), absolutely continuous components are handled
    by adaptive Simpson quadrature against an exact step-side shortcut when
    the Rx curve is piecewise constant.
    """
    total = 0.0
    for w, comp in _flatten_components(c_curve):
        total += w * _llp_against_component(rx_curve, comp, policy)
    return min(max(total, 0.0), 1.0)


@dataclass(frozen=True)
class StratifiedComparison:
    """Both pooling rules plus the unstratified value for one factor."""

    factor: str
    naive_value: float
    sme_value: float
    marginal_value: float
    dropped_levels: tuple = ()


def _level_curves(sub: SurvivalSample, curve_source: str):
    curves = {}
    for arm, rx in (("Rx", True), ("C", False)):
        t, e = sub.arm(rx)
        if curve_source == "km":
            curves[arm] = km_fit(t, e)
        else:
            curves[arm] = weibull_mle(t, e)[0]
    return curves["Rx"], curves["C"]


def _marginal_value(sample: SurvivalSample, measure: Measure) -> float:
    if measure is Measure.HR:
        log_hr, _ = cox_fit_two_arm(sample)
        return math.exp(log_hr)
    rx_t, rx_e = sample.arm(True)
    c_t, c_e = sample.arm(False)
    return sample_tr(rx_t, rx_e, c_t, c_e).value


def stratified_audit(
    sample: SurvivalSample,
    factors,
    measure: Measure = Measure.HR,
    curve_source: str = "auto",
    policy: QuadraturePolicy = QuadraturePolicy(),
):
    """Contrast both pooling rules against the marginal value, factor by factor.

    For each factor: the naive value pools per-level two-arm fits (Cox
    hazard ratios for HR, median ratios for TR) with the geometric-mean
    rule; the mixable value builds per-level, per-arm curves, mixes them
    over pooled level prevalences, and summarizes the mixtures; the
    marginal value refits the whole sample with the factor ignored.
    Levels lacking a death in either arm are dropped with a warning and
    the remaining prevalences are renormalized.

    ``curve_source`` picks the per-level curves: "km", "weibull", or
    "auto" (product-limit when the data are complete, Weibull fits when
    censoring is present).
    """
    measure = Measure(measure)
    if measure not in (Measure.HR, Measure.TR):
        raise DomainError("stratified_audit supports the HR and TR measures")
    if curve_source not in ("auto", "km", "weibull"):
        raise DomainError(f"unknown curve_source {curve_source!r}")
    source = curve_source
    if source == "auto":
        source = "km" if bool(sample.event.all()) else "weibull"

    marginal = _marginal_value(sample, measure)
    comparisons = []
    for factor in factors:
        if factor not in sample.strata:
            raise DomainError(f"unknown stratum factor {factor!r}")
        labels = sample.strata[factor]
        usable, dropped, counts = [], [], []
        for level in np.unique(labels):
            mask = labels == level
            sub = sample.subset(mask)
            has_both_arms = sub.is_rx.any() and not sub.is_rx.all()
            if has_both_arms and sub.event[sub.is_rx].any() and sub.event[~sub.is_rx].any():
                usable.append((str(level), sub))
                counts.append(int(mask.sum()))
            else:
                dropped.append(str(level))
        if not usable:
            raise DomainError(f"factor {factor!r} has no level with deaths in both arms")
        if dropped:
            warnings.warn(
                f"factor {factor!r}: dropped sparse level(s) {dropped}; prevalences renormalized",
                stacklevel=2,
            )
        prevalences = np.asarray(counts, dtype=float)
        prevalences /= prevalences.sum()
        # exact renormalization so the mixture constructor's 1e-12 check holds
        prevalences[-1] = 1.0 - prevalences[:-1].sum()

        ratios = []
        rows = []
        for (level, sub), prev in zip(usable, prevalences):
            if measure is Measure.HR:
                log_hr, _ = cox_fit_two_arm(sub)
                ratios.append(math.exp(log_hr))
            else:
                rx_t, rx_e = sub.arm(True)
                c_t, c_e = sub.arm(False)
                ratios.append(sample_tr(rx_t, rx_e, c_t, c_e).value)
            rx_curve, c_curve = _level_curves(sub, source)
            rows.append(SubgroupRow(level, float(prev), rx_curve, c_curve))

        naive = naive_stratified_ratio(zip(ratios, prevalences))
        table = SubgroupTable(measure, tuple(rows))
        if measure is Measure.HR:
            sme = sme_overall_hr(table, policy).value
        else:
            sme = sme_overall_tr(table).value
        comparisons.append(
            StratifiedComparison(str(factor), naive, sme, marginal, tuple(dropped))
        )
    return comparisons
