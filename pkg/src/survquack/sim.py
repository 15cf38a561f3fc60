"""Monte Carlo study of the test-then-read-the-medians decision procedure.

A scenario is a two-arm trial whose event times come from a mixture of
Weibull subgroups. One subgroup's scales may be left open and solved so
that both arms share a prescribed overall median survival; the built-in
scenario does exactly that, producing arms with identical medians whose
hazards still cross. Replications are driven by counter-based seed
derivation, so results do not depend on worker count or execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .dist import (
    MixtureCurve,
    WeibullDist,
    quantile,
    sample_times,
    solve_complement_scale,
    weibull_from_median,
)
from .errors import DomainError, NumericalError, UnsupportedCensoring
from .estim import ARM_C, ARM_RX, SurvivalSample, tr_to_hr
from .infer import Claim, DecisionOutcome, decision_procedure, wald_test_cox
from .rng import derive_rng

__all__ = [
    "DEFAULT_MASTER_SEED",
    "SubgroupSpec",
    "ScenarioConfig",
    "RealizedSubgroup",
    "RealizedScenario",
    "realize_scenario",
    "build_section3_scenario",
    "ReplicationResult",
    "run_replication",
    "DirectionalErrorReport",
    "run_study",
    "SweepEntry",
    "sweep",
    "wilson_interval",
]

DEFAULT_MASTER_SEED = 210615


@dataclass(frozen=True)
class SubgroupSpec:
    """One latent subgroup: prevalence, Weibull shape, per-arm laws.

    Each arm is pinned by either its median or its scale (not both).
    Leave all four unset for the subgroup whose scales should be solved
    from the overall-median constraint.
    """

    label: str
    prevalence: float
    shape: float
    rx_median: float | None = None
    c_median: float | None = None
    rx_scale: float | None = None
    c_scale: float | None = None

    @property
    def is_open(self) -> bool:
        return all(v is None for v in (self.rx_median, self.c_median, self.rx_scale, self.c_scale))

    def _arm_dist(self, rx: bool) -> WeibullDist:
        median = self.rx_median if rx else self.c_median
        scale = self.rx_scale if rx else self.c_scale
        if (median is None) == (scale is None):
            raise DomainError(
                f"subgroup {self.label!r} must pin each arm by exactly one of median or scale"
            )
        if median is not None:
            return weibull_from_median(self.shape, median)
        return WeibullDist(self.shape, scale)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a simulation study."""

    subgroups: tuple
    n_total: int = 1000
    allocation: float = 0.5
    alpha: float = 0.05
    overall_median: float | None = None
    solve_subgroup: str | None = None
    membership: str = "stochastic"
    censoring: str = "none"
    replications: int = 1000
    master_seed: int = DEFAULT_MASTER_SEED


@dataclass(frozen=True)
class RealizedSubgroup:
    """A subgroup with both arms' Weibull laws pinned down."""

    label: str
    prevalence: float
    rx: WeibullDist
    c: WeibullDist

    @property
    def time_ratio(self) -> float:
        return self.rx.median / self.c.median

    @property
    def hazard_ratio(self) -> float:
        # both arms share the subgroup's shape, so the hazards are
        # proportional within the subgroup
        return tr_to_hr(self.time_ratio, self.rx.shape)


@dataclass(frozen=True)
class RealizedScenario:
    """Scenario with every distribution resolved, ready to simulate."""

    config: ScenarioConfig
    subgroups: tuple

    @property
    def n_rx(self) -> int:
        return int(round(self.config.allocation * self.config.n_total))

    def arm_mixture(self, rx: bool) -> MixtureCurve:
        return MixtureCurve(tuple((g.prevalence, g.rx if rx else g.c) for g in self.subgroups))

    def arm_median(self, rx: bool) -> float:
        return quantile(self.arm_mixture(rx), 0.5)


def _validate_config(config: ScenarioConfig):
    if config.censoring != "none":
        raise UnsupportedCensoring(f"censoring scheme {config.censoring!r} is not implemented")
    if config.membership not in ("stochastic", "quota"):
        raise DomainError(f"unknown membership rule {config.membership!r}")
    if config.n_total < 20:
        raise DomainError("n_total must be at least 20")
    if not (0.0 < config.allocation < 1.0):
        raise DomainError("allocation must lie strictly inside (0, 1)")
    n_rx = int(round(config.allocation * config.n_total))
    if n_rx < 1 or config.n_total - n_rx < 1:
        raise DomainError("allocation leaves an arm empty")
    if not (0.0 < config.alpha <= 0.5):
        raise DomainError("alpha must lie in (0, 0.5]")
    if config.replications < 1:
        raise DomainError("replications must be >= 1")
    if not config.subgroups:
        raise DomainError("a scenario needs at least one subgroup")
    labels = [g.label for g in config.subgroups]
    if len(set(labels)) != len(labels):
        raise DomainError("subgroup labels must be unique")
    total = math.fsum(g.prevalence for g in config.subgroups)
    if abs(total - 1.0) > 1e-12:
        raise DomainError(f"subgroup prevalences sum to {total!r}, not 1")
    for g in config.subgroups:
        if not (0.0 < g.prevalence < 1.0) and len(labels) > 1:
            raise DomainError(f"prevalence of {g.label!r} outside (0, 1)")
        if g.shape <= 0.0:
            raise DomainError(f"shape of {g.label!r} must be positive")
        if not g.is_open:
            g._arm_dist(True)
            g._arm_dist(False)


def realize_scenario(config: ScenarioConfig) -> RealizedScenario:
    """Resolve every subgroup's per-arm Weibull laws, solving the open one.

    With ``solve_subgroup`` set, that subgroup's per-arm scales are chosen
    in closed form so each arm's mixture has survival exactly 1/2 at
    ``overall_median``; an impossible target raises InfeasibleScenario.
    The realized arm medians are re-checked to one part in 10^6.
    """
    _validate_config(config)
    open_labels = [g.label for g in config.subgroups if g.is_open]
    if config.solve_subgroup is None:
        if open_labels:
            raise DomainError(f"subgroup(s) {open_labels} lack medians but solve_subgroup is unset")
        if config.overall_median is not None:
            raise DomainError("overall_median is only honored together with solve_subgroup")
    else:
        if config.overall_median is None:
            raise DomainError("solve_subgroup requires overall_median")
        if open_labels != [config.solve_subgroup]:
            raise DomainError(
                f"solve_subgroup={config.solve_subgroup!r} must name the one subgroup "
                f"without medians (found {open_labels})"
            )
        if len(config.subgroups) < 2:
            raise DomainError("solving a subgroup requires at least one pinned subgroup")

    pinned = {}
    for g in config.subgroups:
        if not g.is_open:
            pinned[g.label] = (g._arm_dist(True), g._arm_dist(False))

    solved = {}
    if config.solve_subgroup is not None:
        open_spec = next(g for g in config.subgroups if g.is_open)
        prev_plus = 1.0 - open_spec.prevalence
        for arm_idx in (0, 1):
            # conditional mixture of the pinned subgroups within this arm
            parts = tuple(
                (g.prevalence / prev_plus, pinned[g.label][arm_idx])
                for g in config.subgroups
                if not g.is_open
            )
            plus_curve = parts[0][1] if len(parts) == 1 else MixtureCurve(parts)
            scale = solve_complement_scale(
                open_spec.shape, config.overall_median, prev_plus, plus_curve
            )
            solved.setdefault(open_spec.label, []).append(WeibullDist(open_spec.shape, scale))

    rows = []
    for g in config.subgroups:
        rx, c = pinned[g.label] if g.label in pinned else tuple(solved[g.label])
        rows.append(RealizedSubgroup(g.label, g.prevalence, rx, c))
    realized = RealizedScenario(config, tuple(rows))

    if config.overall_median is not None:
        for rx in (True, False):
            med = realized.arm_median(rx)
            if abs(med - config.overall_median) > 1e-6 * config.overall_median:
                raise NumericalError(
                    "realized arm median missed the target",
                    arm=ARM_RX if rx else ARM_C,
                    realized=med,
                    target=config.overall_median,
                )
    return realized


def build_section3_scenario(
    n_total: int = 1000,
    alpha: float = 0.05,
    replications: int = 1000,
    master_seed: int = DEFAULT_MASTER_SEED,
) -> ScenarioConfig:
    """Built-in equal-median scenario with crossing hazards.

    Half the population responds well (shape 1.05, median 12 vs 6
    months); the other half (shape 1.2) has its scales solved so both
    arms' overall median is 8. The solved subgroup necessarily fares
    worse under treatment, so the within-subgroup effects point in
    opposite directions while the marginal medians agree exactly.

    Shape assignment note: giving the favorable subgroup the heavier
    1.2 shape instead produces marginal mixtures so close together
    that the test almost never rejects; only this assignment yields
    the intended one-in-three rejection rate at n=1000.
    """
    return ScenarioConfig(
        subgroups=(
            SubgroupSpec("g+", 0.5, 1.05, rx_median=12.0, c_median=6.0),
            SubgroupSpec("g-", 0.5, 1.2),
        ),
        n_total=n_total,
        allocation=0.5,
        alpha=alpha,
        overall_median=8.0,
        solve_subgroup="g-",
        membership="stochastic",
        censoring="none",
        replications=replications,
        master_seed=master_seed,
    )


@dataclass(frozen=True)
class ReplicationResult:
    """Outcome of one simulated trial."""

    rep: int
    outcome: DecisionOutcome
    cox_rejected: bool


def _quota_counts(prevalences, n):
    raw = prevalences * n
    base = np.floor(raw).astype(int)
    short = n - int(base.sum())
    if short:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def simulate_sample(scenario: RealizedScenario, rep: int) -> SurvivalSample:
    """Draw one trial's data. Fully determined by (master_seed, rep).

    Membership and event times use separate derived streams; times are
    drawn arm by arm in subgroup order, one uniform per subject.
    """
    cfg = scenario.config
    n_total, n_rx = cfg.n_total, scenario.n_rx
    prev = np.array([g.prevalence for g in scenario.subgroups])
    n_groups = prev.size

    is_rx = np.zeros(n_total, dtype=bool)
    is_rx[:n_rx] = True
    if cfg.membership == "stochastic":
        rng = derive_rng(cfg.master_seed, rep, "membership")
        u = rng.random(n_total)
        g_idx = np.minimum(np.searchsorted(np.cumsum(prev), u, side="right"), n_groups - 1)
    else:
        g_idx = np.concatenate(
            [np.repeat(np.arange(n_groups), _quota_counts(prev, n)) for n in (n_rx, n_total - n_rx)]
        )

    time = np.empty(n_total)
    for arm_label, arm_mask in ((ARM_RX, is_rx), (ARM_C, ~is_rx)):
        rng_t = derive_rng(cfg.master_seed, rep, "times", arm_label)
        for gi, row in enumerate(scenario.subgroups):
            members = arm_mask & (g_idx == gi)
            dist = row.rx if arm_label == ARM_RX else row.c
            time[members] = sample_times(dist, rng_t, int(members.sum()))

    labels = np.array([g.label for g in scenario.subgroups])
    return SurvivalSample(
        time, np.ones(n_total, dtype=bool), is_rx, {"subgroup": labels[g_idx]}
    )


def run_replication(scenario: RealizedScenario, rep: int) -> ReplicationResult:
    """Simulate one trial and apply both read-outs."""
    sample = simulate_sample(scenario, rep)
    outcome = decision_procedure(sample, scenario.config.alpha)
    _, p_cox = wald_test_cox(sample)
    return ReplicationResult(rep, outcome, bool(p_cox < scenario.config.alpha))


# counter layout for the mergeable per-chunk tallies
_N_REJECT, _N_RX, _N_C, _N_TIE, _N_COX = range(5)


def _tally_chunk(scenario: RealizedScenario, reps) -> np.ndarray:
    counts = np.zeros(5, dtype=np.int64)
    for rep in reps:
        res = run_replication(scenario, rep)
        if res.outcome.claim is not Claim.NO_CLAIM or res.outcome.tie:
            counts[_N_REJECT] += 1
        if res.outcome.claim is Claim.RX_LONGER_MEDIAN:
            counts[_N_RX] += 1
        elif res.outcome.claim is Claim.C_LONGER_MEDIAN:
            counts[_N_C] += 1
        elif res.outcome.tie:
            counts[_N_TIE] += 1
        if res.cox_rejected:
            counts[_N_COX] += 1
    return counts


def wilson_interval(successes: int, n: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise DomainError("interval needs at least one trial")
    if not (0 <= successes <= n):
        raise DomainError("successes must lie in [0, n]")
    if not (0.0 < level < 1.0):
        raise DomainError("level must lie strictly inside (0, 1)")
    z = NormalDist().inv_cdf(0.5 + 0.5 * level)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class DirectionalErrorReport:
    """Aggregated claim counts over a study's replications.

    A replication is counted as a rejection when the log-rank p-value
    falls below alpha; each rejection then lands in exactly one of the
    three claim buckets (treated-longer, control-longer, unreadable
    medians), so ``rejections == rx_longer + c_longer + ties`` always.
    Rates carry 95% Wilson intervals.
    """

    replications: int
    alpha: float
    master_seed: int
    rejections: int
    rx_longer: int
    c_longer: int
    ties: int
    cox_rejections: int

    def __post_init__(self):
        if self.rejections != self.rx_longer + self.c_longer + self.ties:
            raise NumericalError(
                "claim buckets do not add up to the rejection count",
                rejections=self.rejections,
                buckets=(self.rx_longer, self.c_longer, self.ties),
            )

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.replications

    @property
    def rx_longer_rate(self) -> float:
        return self.rx_longer / self.replications

    @property
    def c_longer_rate(self) -> float:
        return self.c_longer / self.replications

    @property
    def rejection_ci(self):
        return wilson_interval(self.rejections, self.replications)

    @property
    def rx_longer_ci(self):
        return wilson_interval(self.rx_longer, self.replications)

    @property
    def c_longer_ci(self):
        return wilson_interval(self.c_longer, self.replications)

    @property
    def cox_rejection_rate(self) -> float:
        return self.cox_rejections / self.replications


def run_study(
    scenario: RealizedScenario,
    replications: int | None = None,
    workers: int | None = None,
) -> DirectionalErrorReport:
    """Run the full study and tally directional claims.

    Replication ``i`` always uses the stream derived from
    (master_seed, i), so the tally is bit-identical for any ``workers``
    value; parallel chunks merge by addition.
    """
    reps = scenario.config.replications if replications is None else int(replications)
    if reps < 1:
        raise DomainError("replications must be >= 1")
    indices = range(reps)
    if workers is not None and workers > 1:
        n_chunks = min(workers * 4, reps)
        chunks = [list(indices[i::n_chunks]) for i in range(n_chunks)]
        counts = np.zeros(5, dtype=np.int64)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_tally_chunk, [scenario] * len(chunks), chunks):
                counts += part
    else:
        counts = _tally_chunk(scenario, indices)
    return DirectionalErrorReport(
        replications=reps,
        alpha=scenario.config.alpha,
        master_seed=scenario.config.master_seed,
        rejections=int(counts[_N_REJECT]),
        rx_longer=int(counts[_N_RX]),
        c_longer=int(counts[_N_C]),
        ties=int(counts[_N_TIE]),
        cox_rejections=int(counts[_N_COX]),
    )


@dataclass(frozen=True)
class SweepEntry:
    """One sweep point: its config and either a report or an error note."""

    index: int
    config: ScenarioConfig
    report: DirectionalErrorReport | None
    error: str | None = None


def sweep(configs, workers: int | None = None):
    """Run a study per config, capturing per-point failures instead of raising.

    Infeasible or invalid points come back with ``report=None`` and the
    error message; valid points carry their tallies. Useful for mapping
    where an equal-median construction stops being achievable.
    """
    entries = []
    for i, config in enumerate(configs):
        try:
            realized = realize_scenario(config)
            report = run_study(realized, workers=workers)
        except Exception as exc:  # noqa: BLE001 - sweep isolates per-point failures
            entries.append(SweepEntry(i, config, None, f"{type(exc).__name__}: {exc}"))
        else:
            entries.append(SweepEntry(i, config, report))
    return entries
