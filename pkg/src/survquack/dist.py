"""Survival curves, proportional-hazards transforms, mixtures, and quantiles.

Curves are immutable and evaluate vectorized over numpy arrays; scalar
inputs give scalar outputs. Every curve satisfies S(0) = 1 and is
nonincreasing. Step-function estimates produced by the estimation module
implement the same interface, so mixing and quantile machinery here does
not care whether a component is parametric or empirical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleScenario, NotReachedError

__all__ = [
    "SurvivalCurve",
    "WeibullDist",
    "LehmannCurve",
    "LehmannPair",
    "MixtureCurve",
    "survival_at",
    "quantile",
    "weibull_from_median",
    "solve_complement_scale",
    "lehmann_transform",
    "sample_times",
]

_LN2 = math.log(2.0)


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
        raise DomainError("times must be finite and >= 0")
    return arr


def _match(values, t):
    """Collapse to a python float when the original input was scalar."""
    return float(values) if np.ndim(t) == 0 else values


def _positive(value, name):
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


class SurvivalCurve:
    """Interface for survival functions S(t) = P(T > t)."""

    has_density = False
    is_step = False

    def survival(self, t):
        raise NotImplementedError

    def survival_left(self, t):
        """Left limit S(t-); differs from survival() only for step curves."""
        return self.survival(t)

    def density(self, t):
        raise DomainError(f"{type(self).__name__} exposes no density")

    def final_survival(self):
        """Limit of S(t) as t grows (nonzero only for plateaued step curves)."""
        return 0.0

    def scale_hint(self):
        """Rough time scale used to seed bracket searches."""
        return 1.0

    def jump_times(self):
        """Ascending jump locations for piecewise-constant curves, else None."""
        return None


@dataclass(frozen=True)
class WeibullDist(SurvivalCurve):
    """Two-parameter Weibull law, S(t) = exp(-(t/scale)^shape).

    ``shape`` is dimensionless and ``scale`` carries the time unit. For
    shape < 1 the density diverges at t = 0; that is the true limit, and
    integration routines avoid evaluating it there.
    """

    shape: float
    scale: float

    has_density = True

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive(self.shape, "shape"))
        object.__setattr__(self, "scale", _positive(self.scale, "scale"))

    def survival(self, t):
        tt = _as_times(t)
        return _match(np.exp(-np.power(tt / self.scale, self.shape)), t)

    def density(self, t):
        tt = _as_times(t)
        z = tt / self.scale
        with np.errstate(divide="ignore"):
            out = (self.shape / self.scale) * np.power(z, self.shape - 1.0) * np.exp(-np.power(z, self.shape))
        return _match(out, t)

    def hazard(self, t):
        tt = _as_times(t)
        with np.errstate(divide="ignore"):
            out = (self.shape / self.scale) * np.power(tt / self.scale, self.shape - 1.0)
        return _match(out, t)

    @property
    def median(self):
        return self.scale * _LN2 ** (1.0 / self.shape)

    def scale_hint(self):
        return self.scale


@dataclass(frozen=True)
class LehmannCurve(SurvivalCurve):
    """A reference curve raised pointwise to a positive exponent.

    The exponent is exactly the hazard ratio of the transformed curve
    against its reference whenever the reference is absolutely continuous:
    exponents above 1 depress survival (shorter lives), below 1 lift it.
    """

    reference: SurvivalCurve
    hr: float

    def __post_init__(self):
        if not isinstance(self.reference, SurvivalCurve):
            raise DomainError("reference must be a SurvivalCurve")
        object.__setattr__(self, "hr", _positive(self.hr, "hr"))

    @property
    def has_density(self):
        return self.reference.has_density

    @property
    def is_step(self):
        return self.reference.is_step

    def survival(self, t):
        return _match(np.power(self.reference.survival(t), self.hr), t)

    def survival_left(self, t):
        return _match(np.power(self.reference.survival_left(t), self.hr), t)

    def density(self, t):
        s = np.atleast_1d(np.asarray(self.reference.survival(t), dtype=float))
        f = np.atleast_1d(np.asarray(self.reference.density(t), dtype=float))
        out = np.zeros_like(s)
        ok = (f > 0.0) & (s > 0.0)
        out[ok] = self.hr * np.power(s[ok], self.hr - 1.0) * f[ok]
        return float(out[0]) if np.ndim(t) == 0 else out

    def final_survival(self):
        return self.reference.final_survival() ** self.hr

    def scale_hint(self):
        return self.reference.scale_hint()

    def jump_times(self):
        return self.reference.jump_times()


@dataclass(frozen=True)
class LehmannPair:
    """A control curve bundled with the hazard ratio of its treated arm."""

    reference: SurvivalCurve
    hr: float

    def __post_init__(self):
        object.__setattr__(self, "hr", _positive(self.hr, "hr"))

    @property
    def treated(self) -> SurvivalCurve:
        return lehmann_transform(self.reference, self.hr)

    def curves(self):
        """(treated, control) in that order."""
        return self.treated, self.reference


@dataclass(frozen=True)
class MixtureCurve(SurvivalCurve):
    """Prevalence-weighted mixture of survival curves.

    ``components`` is a sequence of (prevalence, curve) pairs whose
    prevalences must sum to 1 within 1e-12.
    """

    components: tuple

    def __post_init__(self):
        comps = tuple((float(p), c) for p, c in self.components)
        if not comps:
            raise DomainError("mixture needs at least one component")
        for p, c in comps:
            if not (0.0 < p <= 1.0):
                raise DomainError(f"component prevalence {p!r} outside (0, 1]")
            if not isinstance(c, SurvivalCurve):
                raise DomainError("mixture components must be SurvivalCurve instances")
        total = math.fsum(p for p, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"prevalences sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)

    @property
    def has_density(self):
        return all(c.has_density for _, c in self.components)

    def _accumulate(self, evaluate, t):
        acc = None
        for p, c in self.components:
            term = p * np.asarray(evaluate(c, t), dtype=float)
            acc = term if acc is None else acc + term
        return _match(acc, t)

    def survival(self, t):
        return self._accumulate(lambda c, x: c.survival(x), t)

    def survival_left(self, t):
        return self._accumulate(lambda c, x: c.survival_left(x), t)

    def density(self, t):
        return self._accumulate(lambda c, x: c.density(x), t)

    def final_survival(self):
        return math.fsum(p * c.final_survival() for p, c in self.components)

    def scale_hint(self):
        return max(c.scale_hint() for _, c in self.components)

    def jump_times(self):
        pieces = [c.jump_times() for _, c in self.components]
        if any(p is None for p in pieces):
            return None
        return np.unique(np.concatenate(pieces)) if pieces else None


def survival_at(curve: SurvivalCurve, t):
    """Evaluate S(t); negative or non-finite times are domain errors."""
    _as_times(t)
    return curve.survival(t)


def quantile(curve: SurvivalCurve, p, tol=1e-10):
    """Smallest time where survival reaches ``p``, by bracketed bisection.

    The bracket grows geometrically from the curve's scale hint and the
    bisection runs to an absolute time tolerance of ``tol``. For continuous,
    strictly decreasing curves the returned t also satisfies
    |S(t) - p| <= ~tol * |S'|; for step curves it is the jump time where the
    curve first drops through ``p``, located to within ``tol``.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    if curve.final_survival() >= p:
        raise NotReachedError(f"curve never falls to survival {p}")
    lo = 0.0
    hi = max(float(curve.scale_hint()), tol)
    for _ in range(300):
        if curve.survival(hi) <= p:
            break
        lo = hi
        hi *= 2.0
    else:  # pragma: no cover - final_survival() check makes this unreachable
        raise NotReachedError(f"no finite time reaches survival {p}")
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if curve.survival(mid) > p:
            lo = mid
        else:
            hi = mid
    return hi


def weibull_from_median(shape, median) -> WeibullDist:
    """Weibull law with the given shape whose median is exactly ``median``."""
    shape = _positive(shape, "shape")
    median = _positive(median, "median")
    return WeibullDist(shape, median / _LN2 ** (1.0 / shape))


def solve_complement_scale(shape_minus, overall_median, prevalence_plus, plus_curve):
    """Scale of the complementary Weibull making a two-part mixture hit its median.

    Given the favorable component's curve and prevalence, solve in closed
    form for the scale of the complementary Weibull (with shape
    ``shape_minus``) such that the mixture's survival at ``overall_median``
    is exactly 1/2. Infeasible targets (the required complement survival
    falling outside (0, 1)) raise InfeasibleScenario.
    """
    shape_minus = _positive(shape_minus, "shape_minus")
    overall_median = _positive(overall_median, "overall_median")
    prevalence_plus = float(prevalence_plus)
    if not (0.0 < prevalence_plus < 1.0):
        raise DomainError("prevalence_plus must lie strictly inside (0, 1)")
    s_plus = float(survival_at(plus_curve, overall_median))
    target = (0.5 - prevalence_plus * s_plus) / (1.0 - prevalence_plus)
    if not (0.0 < target < 1.0):
        raise InfeasibleScenario(
            f"complement survival would have to be {target:.6g} at t={overall_median}, "
            "which is not a probability"
        )
    return overall_median / (-math.log(target)) ** (1.0 / shape_minus)


def lehmann_transform(reference: SurvivalCurve, hr) -> SurvivalCurve:
    """Curve whose survival is the reference's raised to ``hr`` (hr=1: unchanged)."""
    hr = _positive(hr, "hr")
    if hr == 1.0:
        return reference
    return LehmannCurve(reference, hr)


def sample_times(dist: WeibullDist, rng, n):
    """Draw ``n`` i.i.d. event times from a Weibull law by inverse CDF.

    Exactly one uniform is consumed per subject, in subject order, so a
    stream shared across code paths reproduces the same cohort.
    """
    n = int(n)
    if n < 0:
        raise DomainError("sample size must be >= 0")
    u = rng.random(n)
    # rng.random() can return exactly 0.0, which would map to an infinite time
    u = np.maximum(u, np.finfo(float).tiny)
    return dist.scale * np.power(-np.log(u), 1.0 / dist.shape)
