import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fxt_multirate.fxts import (
    BarrierContext,
    assemble_lowlevel_qp,
    barrier,
    derive_params,
    es_clf_policy,
    fxt_doa,
    fxt_time,
    low_level_policy,
    predict_z_end,
    signed_deficiency_pow,
)
from fxt_multirate.geometry import Box, DiscreteLtiModel, zoh_discretize
from fxt_multirate.plant import Segway, rk4_step, single_integrator
from fxt_multirate.qp import QpStatus, SolverSettings, solve_qp

U25 = Box([-25.0], [25.0]).to_polytope()


def test_alpha_formula_limit():
    p = derive_params(mu=2, k=0.5, r_check=1e-12, T=0.2, c=0.005, d=0.6)
    assert p.alpha == pytest.approx(10 * math.pi, rel=1e-12)


def test_alpha_takes_larger_branch():
    p = derive_params(mu=2, k=0.9, r_check=0.5, T=0.2)
    assert p.alpha == pytest.approx(max(2 * 0.9 / (0.1 * 0.2), 2 * math.pi / (0.2 * math.sqrt(0.75))))


def test_exponents():
    p = derive_params(mu=2)
    assert (p.gamma1, p.gamma2) == (1.5, 0.5)
    q = derive_params(mu=3.7)
    assert q.gamma1 > 1 > q.gamma2 > 0
    assert q.gamma1 + q.gamma2 == pytest.approx(2.0)


def test_r_bar_first_scenario():
    p = derive_params(mu=2, k=0.5, T=0.2, c=0.005, d=0.6)
    s = math.sqrt((0.6 ** 2 - 0.005 ** 2) / 2)
    assert s == pytest.approx(0.42425, abs=1e-5)
    assert p.r_bar == pytest.approx(s / 1.0 + 0.5 / (2 * s), rel=1e-14)
    assert p.r_bar == pytest.approx(1.013525449, abs=1e-9)


@pytest.mark.parametrize("kw", [dict(mu=1.0), dict(k=1.0), dict(k=0.0), dict(r_check=1.0),
                                dict(T=0.0), dict(c=0.0), dict(c=0.7, d=0.6)])
def test_derive_params_rejects(kw):
    with pytest.raises(ValueError):
        derive_params(**kw)


@pytest.mark.parametrize("h,gamma,expected", [(0.7, 1.5, 0.0), (-1.0, 1.5, -1.0), (-1.0, 0.5, -1.0),
                                              (-0.25, 0.5, -0.5)])
def test_signed_deficiency_pow_examples(h, gamma, expected):
    assert signed_deficiency_pow(h, gamma) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 3))
def test_signed_deficiency_pow_properties(a, b, gamma):
    fa, fb = signed_deficiency_pow(a, gamma), signed_deficiency_pow(b, gamma)
    assert fa <= 0
    # Zero exactly on the safe side, or where |a|^gamma underflows.
    assert (fa == 0) == (a >= 0 or (-a) ** gamma == 0.0)
    if a <= b:
        assert fa <= fb


def test_signed_deficiency_pow_continuous_at_zero():
    assert abs(signed_deficiency_pow(-1e-12, 0.5)) < 1e-5


def test_barrier_examples():
    p = derive_params(c=0.005, d=0.6)
    ctx = BarrierContext(np.array([1.0, -2.0]))
    h, g = barrier(ctx.z_end, ctx, p)
    assert h == pytest.approx(1.25e-5, abs=1e-18)
    np.testing.assert_array_equal(g, 0)
    h, _ = barrier(ctx.z_end + [0.005, 0.0], ctx, p)
    assert h == pytest.approx(0.0, abs=1e-18)
    h, _ = barrier(ctx.z_end + [0.0, 0.6], ctx, p)
    assert h == pytest.approx(-0.1799875, abs=1e-15)


def test_barrier_gradient_finite_differences(rng):
    p = derive_params()
    ctx = BarrierContext(rng.standard_normal(4))
    eps = 1e-6
    for x in rng.standard_normal((1000, 4)):
        _, g = barrier(x, ctx, p)
        fd = [(barrier(x + eps * e, ctx, p)[0] - barrier(x - eps * e, ctx, p)[0]) / (2 * eps) for e in np.eye(4)]
        np.testing.assert_allclose(g, fd, atol=1e-6)


def test_barrier_context_rejects_nonfinite():
    with pytest.raises(ValueError):
        BarrierContext(np.array([np.nan]))


def test_predict_z_end_examples(rng):
    ident = DiscreteLtiModel(np.zeros((2, 2)), np.zeros((2, 1)), 1.0, np.eye(2), np.zeros((2, 1)))
    np.testing.assert_array_equal(predict_z_end(ident, [3.0, 4.0], [1.0]), [3.0, 4.0])
    di = zoh_discretize([[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0], 1.0)
    np.testing.assert_allclose(predict_z_end(di, [0.0, 0.0], [1.0]), [0.5, 1.0])
    m = zoh_discretize(-np.eye(3) + 0.1 * rng.standard_normal((3, 3)), np.ones(3), 0.2)
    z = rng.standard_normal(3)
    assert np.linalg.norm(predict_z_end(m, z, [0.0])) <= np.linalg.norm(m.Abar, 2) * np.linalg.norm(z) + 1e-12


def test_assemble_scalar_row_by_hand():
    p = derive_params(mu=2, k=0.5, r_check=0.5, T=0.25, c=0.04, d=1.0)
    ctx = BarrierContext(np.zeros(1))
    prob = assemble_lowlevel_qp([0.1], [0.0], ctx, p, single_integrator(1), U25)
    h = 0.5 * 0.04 ** 2 - 0.5 * 0.1 ** 2           # -0.0042
    # -L_g h u_l - h delta <= L_f h + L_g h u_m - alpha |h|^1.5 - alpha |h|^0.5, with L_g h = -0.1
    np.testing.assert_allclose(prob.G[-1], [0.1, -h], rtol=1e-15)
    rhs = -p.alpha * abs(h) ** 1.5 - p.alpha * abs(h) ** 0.5
    assert prob.h[-1] == pytest.approx(rhs, rel=1e-14)
    np.testing.assert_array_equal(prob.G[:2], [[1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_array_equal(prob.h[:2], [25.0, 25.0])
    np.testing.assert_array_equal(prob.q, [0.0, p.slack_coef])


def test_assemble_on_boundary_is_boundary_inequality():
    p = derive_params()
    ctx = BarrierContext(np.zeros(1))
    prob = assemble_lowlevel_qp([p.c], [0.0], ctx, p, single_integrator(1), U25)
    assert prob.G[-1, -1] == pytest.approx(0.0, abs=1e-18)
    assert prob.h[-1] == pytest.approx(0.0, abs=1e-18)


def test_policy_at_centre_is_zero():
    p = derive_params()
    ctx = BarrierContext(np.zeros(1))
    out = low_level_policy([0.0], [0.0], ctx, p, single_integrator(1), U25)
    assert out.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(out.u_l, 0.0, atol=1e-12)
    assert out.delta == pytest.approx(0.0, abs=1e-9)


def test_policy_respects_shifted_input_box():
    p = derive_params()
    ctx = BarrierContext(np.zeros(1))
    for x in np.linspace(-0.6, 0.6, 25):
        out = low_level_policy([x], [15.0], ctx, p, single_integrator(1), U25)
        assert abs(out.u_l[0] + 15.0) <= 25 + 1e-9


def test_compiled_path_matches_generic_solver(rng):
    plant = Segway()
    p = derive_params(c=0.005, d=0.6)
    U = Box([-25.0], [25.0]).to_polytope()
    for _ in range(100):
        ctx = BarrierContext(rng.uniform(-0.2, 0.2, 4))
        x = ctx.z_end + rng.uniform(-0.3, 0.3, 4)
        u_m = rng.uniform(-15, 15, 1)
        out = low_level_policy(x, u_m, ctx, p, plant, U)
        ref = solve_qp(assemble_lowlevel_qp(x, u_m, ctx, p, plant, U))
        assert out.status is ref.status
        if ref.optimal:
            np.testing.assert_allclose(out.u_l, ref.x[:-1], atol=1e-8)
            assert out.delta == pytest.approx(ref.x[-1], abs=1e-8)


def test_warm_started_policy_matches_cold(rng):
    plant = Segway()
    p = derive_params()
    ctx = BarrierContext(np.zeros(4))
    x, prev = np.array([0.1, 0.0, 0.05, 0.0]), None
    for _ in range(200):
        warm = low_level_policy(x, [0.0], ctx, p, plant, U25, SolverSettings(warm_start=prev))
        cold = low_level_policy(x, [0.0], ctx, p, plant, U25)
        np.testing.assert_allclose(warm.u_l, cold.u_l, atol=1e-8)
        prev = warm.solution
        x = rk4_step(plant, x, warm.u_l, 1e-3)


def test_policy_constraint_residuals(rng):
    plant = Segway()
    p = derive_params()
    for _ in range(200):
        ctx = BarrierContext(rng.uniform(-0.1, 0.1, 4))
        x = ctx.z_end + rng.uniform(-0.3, 0.3, 4)
        u_m = rng.uniform(-15, 15, 1)
        out = low_level_policy(x, u_m, ctx, p, plant, U25)
        if out.u_l is None:
            continue
        h, grad = barrier(x, ctx, p)
        lhs = grad @ plant.f(x) + grad @ plant.g(x) @ (u_m + out.u_l)
        rhs = -out.delta * h + p.alpha * abs(min(h, 0)) ** p.gamma1 + p.alpha * abs(min(h, 0)) ** p.gamma2
        assert lhs - rhs >= -1e-6
        assert np.all(U25.A @ (out.u_l + u_m) <= U25.b + 1e-9)


def test_policy_dimension_mismatch():
    with pytest.raises(ValueError):
        low_level_policy([0.0, 0.0], [0.0], BarrierContext(np.zeros(1)), derive_params(),
                         single_integrator(1), U25)


def test_scalar_closed_loop_reaches_ball():
    p = derive_params(c=0.005, d=0.6, T=0.2)
    plant, ctx = single_integrator(1), BarrierContext(np.zeros(1))
    for x0 in (0.6, -0.45, 0.2):
        x, prev = np.array([x0]), None
        for _ in range(2000):
            out = low_level_policy(x, [0.0], ctx, p, plant, U25, SolverSettings(warm_start=prev))
            prev = out.solution
            x = rk4_step(plant, x, out.u_l, 1e-4)
        assert barrier(x, ctx, p)[0] >= -1e-6


def test_esclf_at_centre_is_zero():
    out = es_clf_policy([0.0], [0.0], BarrierContext(np.zeros(1)), 1.0, 1.0, single_integrator(1), U25,
                        derive_params())
    np.testing.assert_allclose(out.u_l, 0.0, atol=1e-10)


def test_esclf_exponential_decay_without_bounds():
    lam = 2.0
    wide = Box([-1e6], [1e6]).to_polytope()
    plant, ctx = single_integrator(1), BarrierContext(np.zeros(1))
    x, dt = np.array([1.0]), 1e-3
    V0 = 0.5
    # A heavy slack weight keeps the slack inactive, so the decrease is exact.
    for _ in range(500):
        out = es_clf_policy(x, [0.0], ctx, lam, 1e8, plant, wide)
        x = rk4_step(plant, x, out.u_l, dt)
    assert 0.5 * x[0] ** 2 <= V0 * math.exp(-lam * 0.5) * (1 + 1e-6)


def test_esclf_rejects_bad_gains():
    with pytest.raises(ValueError):
        es_clf_policy([0.0], [0.0], BarrierContext(np.zeros(1)), 0.0, 1.0, single_integrator(1), U25)


def test_doa_examples():
    p = derive_params(mu=2, k=0.5)
    assert fxt_doa(p, 0.5).whole_space
    assert fxt_doa(p, 1.0).level == pytest.approx(-0.25, abs=1e-15)
    with pytest.raises(ValueError):
        fxt_doa(p, -0.1)


def test_fxt_time_examples():
    p = derive_params(mu=2, k=0.5, r_check=0.5, T=0.2)
    p = type(p)(**{**p.as_dict(), "alpha": 10 * math.pi})
    assert fxt_time(p, 0.1) == pytest.approx(2 * math.pi / (10 * math.pi * math.sqrt(0.75)), rel=1e-14)
    assert fxt_time(p, 0.9) == pytest.approx(1.0 / (10 * math.pi * 0.5), rel=1e-14)
    assert fxt_time(p, 0.1) == pytest.approx(0.2309, abs=1e-4)
    assert fxt_time(p, 0.9) == pytest.approx(0.06366, abs=1e-5)


@settings(deadline=None)
@given(st.floats(1.01, 5), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.01, 2))
def test_fxt_time_within_period(mu, k, r_check, T):
    p = derive_params(mu=mu, k=k, r_check=r_check, T=T, c=0.005, d=0.6)
    for r in np.linspace(0, 0.999, 50):
        assert fxt_time(p, float(r)) <= T * (1 + 1e-12)
