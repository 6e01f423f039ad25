"""Quick property checks runnable from the command line without pytest.

Each check draws a small random sample from a seeded generator and compares
the solvers against an independent reference.  The full suites live in the
test directory; these are the same properties at reduced sample counts.
"""
from __future__ import annotations

import logging
import math
from importlib import resources

import numpy as np

from .config import parse_config, serialize_config
from .fxts import BarrierContext, derive_params, fxt_doa, fxt_time, low_level_policy
from .geometry import Box, zoh_discretize
from .mpc import MpcConfig, ftocp_violation, shifted_candidate, solve_ftocp
from .oracles import active_set_enumeration, euler_zoh
from .plant import double_integrator, rk4_step, single_integrator
from .qp import QpProblem, SolverSettings, solve_qp

logger = logging.getLogger(__name__)

SCENARIO_FILES = ("scenario1.cfg", "scenario2.cfg", "toy1d.cfg", "doubleint.cfg")


def random_qp(rng: np.random.Generator, n_max: int = 10, mi_max: int = 20, me_max: int = 5):
    """Strictly convex QP that is feasible by construction (x0 satisfies every row)."""
    n = int(rng.integers(1, n_max + 1))
    mi = int(rng.integers(0, mi_max + 1))
    me = int(rng.integers(0, min(me_max, n - 1) + 1)) if n > 1 else 0
    L = rng.standard_normal((n, n))
    P = L @ L.T + rng.uniform(0.1, 1.0) * np.eye(n)
    q = 3.0 * rng.standard_normal(n)
    x0 = rng.standard_normal(n)
    G = rng.standard_normal((mi, n))
    h = G @ x0 + rng.uniform(0.0, 1.0, mi)
    A = rng.standard_normal((me, n))
    return P, q, G, h, A, A @ x0


def random_stable_system(rng: np.random.Generator, n_max: int = 5):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, 3))
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 2.0)) * np.eye(n)
    return A, rng.standard_normal((n, m))


def check_qp_oracle(rng, count: int = 40) -> tuple[bool, str]:
    worst_x = worst_f = 0.0
    for _ in range(count):
        P, q, G, h, A, b = random_qp(rng)
        sol = solve_qp(QpProblem(P, q, G, h, A, b))
        ref = active_set_enumeration(P, q, G, h, A, b)
        if not (sol.optimal and ref.feasible):
            return False, f"solver status {sol.status.value}, oracle feasible {ref.feasible}"
        worst_x = max(worst_x, float(np.abs(sol.x - ref.x).max()))
        worst_f = max(worst_f, abs(0.5 * sol.x @ P @ sol.x + q @ sol.x - ref.objective))
    return worst_x <= 1e-6 and worst_f <= 1e-8, f"max |dx|={worst_x:.2e}, max |df|={worst_f:.2e}"


def check_zoh(rng, count: int = 10) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(count):
        A, B = random_stable_system(rng)
        T = float(rng.choice([0.125, 0.25, 0.5]))
        model = zoh_discretize(A, B, T)
        Ad, Bd = euler_zoh(A, B, T)
        worst = max(worst, np.linalg.norm(model.Abar - Ad), np.linalg.norm(model.Bbar - Bd))
    return worst <= 1e-9, f"max Frobenius gap {worst:.2e}"


def check_doa(rng, count: int = 200) -> tuple[bool, str]:
    fxt = derive_params()
    low = rng.uniform(0.0, 1.0, count)
    if not all(fxt_doa(fxt, float(r)).whole_space for r in low):
        return False, "a ratio below 1 gave a bounded DoA"
    rs = np.sort(rng.uniform(1.0, 50.0, count))
    mags = [-fxt_doa(fxt, float(r)).level for r in rs]
    if not all(a > b for a, b in zip(mags, mags[1:])):
        return False, "DoA level magnitude not strictly decreasing"
    t_max = max(fxt_time(fxt, 0.0), fxt_time(fxt, 0.99))
    return t_max <= fxt.T + 1e-12, f"settling bound {t_max:.4f} <= T={fxt.T}"


def check_scalar_reach(rng, count: int = 5) -> tuple[bool, str]:
    fxt = derive_params(mu=2.0, k=0.5, r_check=0.5, T=0.2, c=0.005, d=0.6)
    plant = single_integrator(1)
    U = Box([-25.0], [25.0]).to_polytope()
    ctx = BarrierContext(np.zeros(1))
    dt, worst = 1e-4, math.inf
    for _ in range(count):
        x = np.array([rng.uniform(-fxt.d, fxt.d)])
        warm, h_min, entered = None, math.inf, False
        for _ in range(int(round(fxt.T / dt))):
            out = low_level_policy(x, np.zeros(1), ctx, fxt, plant, U, SolverSettings(warm_start=warm))
            warm = out.solution
            x = rk4_step(plant, x, out.u_l, dt)
            h = 0.5 * fxt.c ** 2 - 0.5 * float(x @ x)
            entered = entered or h >= 0
            if entered:
                h_min = min(h_min, h)
        worst = min(worst, h_min if entered else -math.inf)
    return worst >= -1e-6, f"min h after entry {worst:.2e}"


def check_shift(rng, count: int = 5) -> tuple[bool, str]:
    plant = double_integrator(1)
    model = zoh_discretize(plant.A, plant.B, 0.2)
    cfg = MpcConfig(N=10, Q=np.eye(2), R=np.eye(1), Qf=np.eye(2),
                    XT=Box([-5.0, -5.0], [5.0, 5.0]).to_polytope(), c=0.01, d=0.6,
                    Um=Box([-2.0], [2.0]).to_polytope(), model=model)
    worst, tried = 0.0, 0
    while tried < count:
        x = rng.uniform(-2.0, 2.0, 2)
        sol = solve_ftocp(x, cfg)
        if not sol.feasible:
            continue
        tried += 1
        z_end = sol.z_seq[1]
        e = rng.standard_normal(2)
        # Inside both the ball of radius c and its inscribed box.
        x_next = z_end + rng.uniform(0, 1) * cfg.c / math.sqrt(2) * e / np.abs(e).max()
        z, v = shifted_candidate(sol, model)
        worst = max(worst, ftocp_violation(z, v, x_next, cfg))
    return worst <= 1e-9, f"max shifted-plan violation {worst:.2e}"


def check_config_roundtrip(rng=None) -> tuple[bool, str]:
    root = resources.files("fxt_multirate") / "scenarios"
    for name in SCENARIO_FILES:
        text = serialize_config(parse_config((root / name).read_text()))
        if serialize_config(parse_config(text)) != text:
            return False, f"{name} does not round-trip"
    return True, f"{len(SCENARIO_FILES)} shipped files"


CHECKS = {
    "qp_vs_active_set_enumeration": check_qp_oracle,
    "zoh_vs_euler_refinement": check_zoh,
    "doa_formula": check_doa,
    "scalar_fixed_time_reach": check_scalar_reach,
    "shifted_plan_feasible": check_shift,
    "config_roundtrip": check_config_roundtrip,
}


def run_selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for k, (name, check) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        try:
            ok, detail = check(rng)
        except Exception as err:     # report, keep going
            logger.exception("selftest %s raised", name)
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        results.append((name, bool(ok), detail))
    return results
