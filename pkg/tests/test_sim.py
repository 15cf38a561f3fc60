"""Scenario realization and the directional-error Monte Carlo machinery."""

import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import binomtest

from survquack import (
    Claim,
    ScenarioConfig,
    SubgroupSpec,
    build_section3_scenario,
    realize_scenario,
    run_replication,
    run_study,
    sweep,
    tr_to_hr,
    weibull_from_median,
)
from survquack.errors import (
    DomainError,
    InfeasibleScenario,
    UnsupportedCensoring,
)
from survquack.sim import simulate_sample, wilson_interval

from oracles import bisect_complement_scale


@pytest.fixture(scope="module")
def small_scenario():
    return realize_scenario(build_section3_scenario(n_total=60, replications=40))


# ------------------------------------------------------ build_section3_scenario

def test_builtin_scenario_config_fields():
    cfg = build_section3_scenario()
    assert cfg.n_total == 1000
    assert cfg.allocation == 0.5
    assert cfg.alpha == 0.05
    assert cfg.overall_median == 8.0
    assert cfg.solve_subgroup == "g-"
    assert cfg.membership == "stochastic"
    assert cfg.censoring == "none"
    assert cfg.replications == 1000
    gp, gm = cfg.subgroups
    assert (gp.label, gp.prevalence, gp.shape) == ("g+", 0.5, 1.05)
    assert (gp.rx_median, gp.c_median) == (12.0, 6.0)
    assert (gm.label, gm.prevalence, gm.shape) == ("g-", 0.5, 1.2)
    assert gm.is_open and not gp.is_open


def test_realized_scenario_matches_bisection_oracle():
    sc = realize_scenario(build_section3_scenario())
    gp, gm = sc.subgroups
    assert gp.rx.median == pytest.approx(12.0, rel=1e-12)
    assert gp.c.median == pytest.approx(6.0, rel=1e-12)
    assert gp.time_ratio == pytest.approx(2.0, rel=1e-12)
    assert gp.hazard_ratio == tr_to_hr(2.0, 1.05)

    assert gm.rx.scale == pytest.approx(7.9330603336157, rel=1e-12)
    assert gm.c.scale == pytest.approx(14.329010790988683, rel=1e-12)
    plus_rx = weibull_from_median(1.05, 12.0)
    plus_c = weibull_from_median(1.05, 6.0)
    assert gm.rx.scale == pytest.approx(
        bisect_complement_scale(1.2, 8.0, 0.5, float(plus_rx.survival(8.0))), rel=1e-9
    )
    assert gm.c.scale == pytest.approx(
        bisect_complement_scale(1.2, 8.0, 0.5, float(plus_c.survival(8.0))), rel=1e-9
    )
    # both arms share the overall median while the subgroups disagree in sign
    assert abs(sc.arm_median(True) - 8.0) < 1e-6
    assert abs(sc.arm_median(False) - 8.0) < 1e-6
    assert gp.time_ratio > 1.0 > gm.time_ratio
    assert gm.hazard_ratio > 1.0 > gp.hazard_ratio


# ------------------------------------------------------------ config validation

def _replace(cfg, **kw):
    return dataclasses.replace(cfg, **kw)

def test_config_validation_gates():
    cfg = build_section3_scenario()
    with pytest.raises(UnsupportedCensoring):
        realize_scenario(_replace(cfg, censoring="uniform"))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, membership="blocks"))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, n_total=19))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, allocation=0.0))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, n_total=20, allocation=0.01))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, alpha=0.0))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, alpha=0.6))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, replications=0))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, subgroups=()))


def test_subgroup_validation_gates():
    cfg = build_section3_scenario()
    gp, gm = cfg.subgroups
    dup = _replace(cfg, subgroups=(gp, dataclasses.replace(gm, label="g+")))
    with pytest.raises(DomainError):
        realize_scenario(dup)
    off_sum = _replace(cfg, subgroups=(dataclasses.replace(gp, prevalence=0.4), gm))
    with pytest.raises(DomainError):
        realize_scenario(off_sum)
    degenerate = _replace(
        cfg,
        subgroups=(dataclasses.replace(gp, prevalence=0.0), dataclasses.replace(gm, prevalence=1.0)),
    )
    with pytest.raises(DomainError):
        realize_scenario(degenerate)
    bad_shape = _replace(cfg, subgroups=(dataclasses.replace(gp, shape=-1.0), gm))
    with pytest.raises(DomainError):
        realize_scenario(bad_shape)
    double_pin = _replace(
        cfg, subgroups=(dataclasses.replace(gp, rx_scale=3.0), gm)
    )
    with pytest.raises(DomainError):
        realize_scenario(double_pin)


def test_solve_subgroup_wiring_is_checked():
    cfg = build_section3_scenario()
    gp, gm = cfg.subgroups
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, solve_subgroup=None))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, overall_median=None))
    with pytest.raises(DomainError):
        realize_scenario(_replace(cfg, solve_subgroup="g+"))
    pinned_only = ScenarioConfig(
        subgroups=(SubgroupSpec("all", 1.0, 1.0, rx_median=8.0, c_median=8.0),),
        overall_median=8.0,
    )
    with pytest.raises(DomainError):
        realize_scenario(pinned_only)
    lone_open = ScenarioConfig(
        subgroups=(SubgroupSpec("g-", 1.0, 1.2),),
        overall_median=8.0,
        solve_subgroup="g-",
    )
    with pytest.raises(DomainError):
        realize_scenario(lone_open)


def test_single_pinned_subgroup_needs_no_solving():
    cfg = ScenarioConfig(
        subgroups=(SubgroupSpec("all", 1.0, 1.0, rx_median=8.0, c_median=8.0),)
    )
    sc = realize_scenario(cfg)
    assert len(sc.subgroups) == 1
    assert sc.subgroups[0].time_ratio == 1.0


def test_infeasible_equal_median_target():
    # the pinned subgroup alone already holds more than half the survival
    # mass at the target median, so no complement scale can work
    cfg = ScenarioConfig(
        subgroups=(
            SubgroupSpec("g+", 0.8, 1.0, rx_median=16.0, c_median=16.0),
            SubgroupSpec("g-", 0.2, 1.0),
        ),
        overall_median=8.0,
        solve_subgroup="g-",
        n_total=100,
        replications=5,
    )
    with pytest.raises(InfeasibleScenario):
        realize_scenario(cfg)


# -------------------------------------------------------------- simulate/run

def test_simulate_sample_layout(small_scenario):
    sample = simulate_sample(small_scenario, 0)
    n = small_scenario.config.n_total
    assert sample.n == n
    assert sample.event.all()
    assert sample.is_rx.sum() == small_scenario.n_rx
    assert sample.is_rx[: small_scenario.n_rx].all()
    assert set(np.unique(sample.strata["subgroup"])) <= {"g+", "g-"}


def test_simulate_sample_is_deterministic(small_scenario):
    a = simulate_sample(small_scenario, 3)
    b = simulate_sample(small_scenario, 3)
    assert np.array_equal(a.time, b.time)
    assert np.array_equal(a.is_rx, b.is_rx)
    assert np.array_equal(a.strata["subgroup"], b.strata["subgroup"])
    c = simulate_sample(small_scenario, 4)
    assert not np.array_equal(a.time, c.time)


def test_quota_membership_hits_exact_counts():
    cfg = dataclasses.replace(
        build_section3_scenario(), membership="quota", n_total=20, replications=1
    )
    sample = simulate_sample(realize_scenario(cfg), 0)
    for arm in (True, False):
        labels = sample.strata["subgroup"][sample.is_rx == arm]
        _, counts = np.unique(labels, return_counts=True)
        assert list(counts) == [5, 5]

    uneven = ScenarioConfig(
        subgroups=(
            SubgroupSpec("a", 1.0 / 3.0, 1.0, rx_median=5.0, c_median=5.0),
            SubgroupSpec("b", 1.0 - 1.0 / 3.0, 1.0, rx_median=7.0, c_median=7.0),
        ),
        n_total=30,
        membership="quota",
        replications=1,
    )
    sample = simulate_sample(realize_scenario(uneven), 0)
    for arm in (True, False):
        labels = sample.strata["subgroup"][sample.is_rx == arm]
        counts = dict(zip(*np.unique(labels, return_counts=True)))
        assert counts == {"a": 5, "b": 10}


def test_run_replication_is_deterministic(small_scenario):
    a = run_replication(small_scenario, 7)
    b = run_replication(small_scenario, 7)
    assert a == b
    assert a.rep == 7
    assert isinstance(a.cox_rejected, bool)


def test_run_study_worker_count_is_invisible(small_scenario):
    seq = run_study(small_scenario)
    par = run_study(small_scenario, workers=2)
    assert seq == par
    assert seq.replications == 40


def test_run_study_replication_override_and_validation(small_scenario):
    short = run_study(small_scenario, replications=5)
    assert short.replications == 5
    with pytest.raises(DomainError):
        run_study(small_scenario, replications=0)


def test_builtin_study_frozen_tallies(study_1k):
    report, _elapsed = study_1k
    assert report.replications == 1000
    assert report.alpha == 0.05
    assert report.rejections == 307
    assert report.rx_longer == 266
    assert report.c_longer == 41
    assert report.ties == 0  # continuous times: exact median ties have mass zero
    assert report.cox_rejections == 307
    assert report.rejections == report.rx_longer + report.c_longer + report.ties
    assert report.rejection_rate == 0.307
    assert report.rejection_ci == wilson_interval(307, 1000)


# ------------------------------------------------------------- wilson_interval

@pytest.mark.parametrize("k,n", [(0, 10), (10, 10), (3, 17), (307, 1000), (52, 100)])
def test_wilson_matches_scipy(k, n):
    lo, hi = wilson_interval(k, n)
    ref = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    assert lo == pytest.approx(ref.low, abs=1e-12)
    assert hi == pytest.approx(ref.high, abs=1e-12)


def test_wilson_edges_and_validation():
    lo, hi = wilson_interval(0, 10)
    assert lo == pytest.approx(0.0, abs=1e-15)
    lo, hi = wilson_interval(10, 10)
    assert hi == 1.0
    with pytest.raises(DomainError):
        wilson_interval(1, 0)
    with pytest.raises(DomainError):
        wilson_interval(-1, 10)
    with pytest.raises(DomainError):
        wilson_interval(11, 10)
    with pytest.raises(DomainError):
        wilson_interval(5, 10, level=1.0)


# ----------------------------------------------------------------------- sweep

def test_sweep_isolates_infeasible_points():
    good = build_section3_scenario(n_total=100, replications=5)
    bad = ScenarioConfig(
        subgroups=(
            SubgroupSpec("g+", 0.8, 1.0, rx_median=16.0, c_median=16.0),
            SubgroupSpec("g-", 0.2, 1.0),
        ),
        overall_median=8.0,
        solve_subgroup="g-",
        n_total=100,
        replications=5,
    )
    entries = sweep([good, bad])
    assert [e.index for e in entries] == [0, 1]
    assert entries[0].config is good and entries[1].config is bad
    assert entries[0].report is not None and entries[0].error is None
    assert entries[1].report is None
    assert entries[1].error.startswith("InfeasibleScenario:")


def test_sweep_empty_and_structural():
    assert sweep([]) == []
    base = build_section3_scenario(n_total=100, replications=30)
    gp, gm = base.subgroups
    configs = [
        dataclasses.replace(
            base,
            subgroups=(
                dataclasses.replace(gp, prevalence=p),
                dataclasses.replace(gm, prevalence=1.0 - p),
            ),
        )
        for p in (0.3, 0.5, 0.7)
    ]
    entries = sweep(configs)
    assert len(entries) == 3
    assert all(e.report is not None for e in entries)
    assert all(e.report.replications == 30 for e in entries)
