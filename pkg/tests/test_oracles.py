import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fxt_multirate.oracles import active_set_enumeration, euler_zoh, scalar_fxt_reach_time
from fxt_multirate.plant import double_integrator_zoh


def test_enumeration_hand_example():
    # min (x-2)^2/2 + (y-2)^2/2 s.t. x + y <= 2  ->  (1, 1), multiplier 1
    res = active_set_enumeration(np.eye(2), [-2.0, -2.0], [[1.0, 1.0]], [2.0])
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-14)
    assert res.active == (0,)


def test_enumeration_reports_infeasible():
    res = active_set_enumeration(np.eye(1), [0.0], [[1.0], [-1.0]], [0.0, -1.0])
    assert not res.feasible


def test_euler_refinement_double_integrator():
    Ad, Bd = euler_zoh([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 0.25)
    A_ref, B_ref = double_integrator_zoh(1, 0.25)
    np.testing.assert_allclose(Ad, A_ref, atol=1e-13)
    np.testing.assert_allclose(Bd, B_ref, atol=1e-13)


def test_euler_refinement_scalar():
    Ad, Bd = euler_zoh([[-2.0]], [[1.0]], 0.5)
    assert Ad[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-13)
    assert Bd[0, 0] == pytest.approx((1 - math.exp(-1.0)) / 2, abs=1e-13)


def test_euler_refinement_rejects_off_grid_period():
    with pytest.raises(ValueError):
        euler_zoh([[0.0]], [[1.0]], 0.3)


def test_scalar_reach_time_matches_integration():
    alpha, mu, c, e0 = 30.0, 2.0, 0.005, 0.6

    def rhs(t, y):
        V = max(0.5 * y[0] ** 2 - 0.5 * c * c, 0.0)
        return [-alpha * (V ** (1 + 1 / mu) + V ** (1 - 1 / mu)) / y[0]]

    def entered(t, y):
        return y[0] - c
    entered.terminal = True
    sol = solve_ivp(rhs, (0, 1), [e0], events=entered, rtol=1e-12, atol=1e-14)
    assert sol.t_events[0][0] == pytest.approx(scalar_fxt_reach_time(e0, alpha, mu, c), rel=1e-6)


def test_scalar_reach_time_zero_inside():
    assert scalar_fxt_reach_time(0.001, 30.0, 2.0, 0.005) == 0.0
