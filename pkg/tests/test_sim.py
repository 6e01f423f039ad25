import math

import numpy as np
import pytest

from fxt_multirate.fxts import BarrierContext, derive_params
from fxt_multirate.geometry import Box
from fxt_multirate.mpc import ConfigurationError
from fxt_multirate.plant import single_integrator
from fxt_multirate.sim import (
    IntervalRecord,
    ScenarioConfig,
    TrajectoryLog,
    check_assumption1,
    check_assumptions,
    check_eq20_consistency,
    check_periodic_safety,
    check_slack_ratio_bound,
    doa_radius_gap,
    run_scenario,
)

from conftest import scenario


def _log(t, x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    nan = np.full((n, 1), np.nan)
    return TrajectoryLog(t=np.asarray(t, dtype=float), x=x, z=np.zeros_like(x), z_end=np.zeros_like(x),
                         u_m=nan, u_l=nan, u=nan, h=np.zeros(n), delta=np.zeros(n), ratio=np.zeros(n),
                         status=[""] * n, mpc_feasible=np.ones(n, dtype=bool), intervals=[])


def integrator_cfg(**kw):
    base = dict(x0=[0.0], XT_lo=[-1.0], XT_hi=[1.0], U_lo=[-25.0], U_hi=[25.0], Um_lo=[-1.0], Um_hi=[1.0],
                plant="integrator", n_intervals=3, lowlevel_rate=1000.0, N=5)
    base.update(kw)
    return ScenarioConfig(**base)


def test_periodic_safety_all_zero_log():
    assert check_periodic_safety(_log([0, 0.1, 0.2], np.zeros((3, 2))), Box([-1, -1], [1, 1]), 0.6, 0.2).safe


def test_periodic_safety_reports_margin():
    x = np.zeros((3, 1))
    x[1, 0] = 1.0 + 0.6 + 0.1
    v = check_periodic_safety(_log([0, 0.1, 0.2], x), Box([-1], [1]), 0.6, 0.2)
    assert not v.safe
    (t, what, margin), = v.violations
    assert t == 0.1 and what == "x(t) outside X"
    assert margin == pytest.approx(0.1)


def test_periodic_safety_checks_boundary_membership():
    x = np.array([[0.0], [1.2]])
    v = check_periodic_safety(_log([0, 0.2], x), Box([-1], [1]), 0.6, 0.2)
    assert [w[1] for w in v.violations] == ["x(iT) outside X_T"]


def test_boundary_check_generous_bounds():
    res = check_assumption1(BarrierContext(np.zeros(1)), [0.0], derive_params(), single_integrator(1),
                            Box([-25.0], [25.0]).to_polytope(), n_samples=16)
    assert res.ok
    assert res.worst_margin == pytest.approx(25 * derive_params().c)


def test_boundary_check_counterexample():
    from fxt_multirate.plant import LinearPlant

    outward = LinearPlant([[1.0]], [[1.0]])         # x' = x + u pushes away from 0
    res = check_assumption1(BarrierContext(np.zeros(1)), [0.0], derive_params(), outward,
                            Box([0.0], [0.0]).to_polytope(), n_samples=8)
    assert not res.ok
    assert res.worst_margin < 0


def test_slack_ratio_bound_scalar():
    res = check_slack_ratio_bound(BarrierContext(np.zeros(1)), [0.0], derive_params(), single_integrator(1),
                                  Box([-25.0], [25.0]).to_polytope(), n_samples=32)
    assert res.ok and res.max_ratio <= res.r_bar


@pytest.mark.parametrize("d,c,k,expected", [(0.6, 0.005, 0.5, True), (1.0, 0.04, 0.75, True)])
def test_doa_bound_consistency(d, c, k, expected):
    assert check_eq20_consistency(derive_params(mu=2, k=k, c=c, d=d)) is expected


def test_doa_bound_fails_for_inflated_ratio():
    p = derive_params(mu=2, k=0.5, c=0.005, d=0.6)
    inflated = type(p)(**{**p.as_dict(), "r_bar": 1.5 * p.r_bar})
    assert not check_eq20_consistency(inflated)
    assert doa_radius_gap(p, 1.5 * p.r_bar) < 0


def test_doa_gap_is_tight_at_r_bar():
    p = derive_params(mu=2, k=0.5, c=0.005, d=0.6)
    assert doa_radius_gap(p, p.r_bar) == pytest.approx(0.0, abs=1e-12)


def test_equilibrium_run_stays_at_origin():
    log, rep = run_scenario(integrator_cfg())
    assert rep.periodic_safety and rep.recursive_feasibility
    np.testing.assert_allclose(log.x, 0, atol=1e-12)
    np.testing.assert_allclose(log.u[:-1], 0, atol=1e-9)


def test_tick_count_and_held_planner_input():
    cfg = integrator_cfg(x0=[0.4], n_intervals=3)
    log, rep = run_scenario(cfg)
    K = cfg.ticks_per_interval
    assert log.n_rows == 3 * K + 1
    for i in range(3):
        block = log.u_m[i * K:(i + 1) * K]
        assert np.all(block == block[0])
    np.testing.assert_allclose(np.diff(log.t), cfg.T / K, rtol=1e-12)


def test_run_is_deterministic():
    cfg = integrator_cfg(x0=[0.4])
    a, ra = run_scenario(cfg)
    b, rb = run_scenario(cfg)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.u, b.u)
    assert [r.boundary_margin for r in a.intervals] == [r.boundary_margin for r in b.intervals]


def test_run_records_intervals_and_invariants():
    # At 10 kHz one tick moves x by at most 25e-4 < c, so the held input cannot jump over C.
    cfg = integrator_cfg(x0=[0.4], Um_lo=[-0.5], Um_hi=[0.5], lowlevel_rate=10_000.0)
    log, rep = run_scenario(cfg)
    assert rep.periodic_safety and rep.recursive_feasibility and rep.fixed_time_reach_ok
    assert rep.start_distance_violations == 0
    assert rep.input_bound_margin <= 1e-9
    for r in log.intervals:
        assert r.mpc_feasible and r.reached_C
        assert r.start_distance <= cfg.d + 1e-9
        assert r.post_entry_min_h >= -1e-6


def test_csv_h_column_recomputable():
    cfg = integrator_cfg(x0=[0.4])
    log, _ = run_scenario(cfg)
    e = log.x - log.z_end
    np.testing.assert_allclose(log.h, 0.5 * cfg.c ** 2 - 0.5 * np.sum(e * e, axis=1), rtol=0, atol=1e-12)


def test_infeasible_start_halts_with_diagnostic():
    log, rep = run_scenario(integrator_cfg(x0=[5.0]))
    assert rep.halted and not rep.initial_feasible and not rep.recursive_feasibility
    assert "recursive feasibility hypothesis" in rep.halt_reason
    assert log.n_rows == 1 and not log.intervals[0].mpc_feasible


def test_zero_intervals():
    log, rep = run_scenario(integrator_cfg(n_intervals=0))
    assert log.intervals == [] and log.n_rows == 1


@pytest.mark.parametrize("kw", [dict(plant="rocket"), dict(baseline="pid"), dict(T=0.0), dict(n_intervals=-1),
                                dict(lowlevel_rate=7.0), dict(integrator_substeps=0), dict(XF_lo=[-1.0]),
                                dict(x0=[np.nan]), dict(boundary_samples=0)])
def test_config_rejected(kw):
    with pytest.raises(ConfigurationError):
        run_scenario(integrator_cfg(**kw))


def test_plant_parameter_errors():
    with pytest.raises(ConfigurationError):
        integrator_cfg(plant_params={"mass": 1.0}).build_plant()
    with pytest.raises(ConfigurationError):
        integrator_cfg(plant="segway", plant_params={"mass": 1.0}).build_plant()


def test_state_dimension_checked():
    with pytest.raises(ConfigurationError):
        run_scenario(integrator_cfg(x0=[0.0, 0.0]))


def test_esclf_baseline_runs():
    log, rep = run_scenario(integrator_cfg(x0=[0.4], baseline="esclf", n_intervals=1))
    assert rep.baseline == "esclf"
    assert np.all(np.isfinite(log.u[:-1]))


def test_check_assumptions_toy():
    out = check_assumptions(scenario("toy1d"))
    assert out["initial_feasible"] and out["assumption1_ok"] and out["doa_bound_consistent"]
    assert out["terminal_set_invariant"] and out["terminal_rate_ok"]


def test_doubleint_scenario_feasible_throughout():
    log, rep = run_scenario(scenario("doubleint"))
    assert rep.recursive_feasibility
    assert rep.start_distance_violations == 0
    assert rep.input_bound_margin <= 1e-9
