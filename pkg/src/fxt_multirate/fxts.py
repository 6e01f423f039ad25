"""Fixed-time barrier low-level controller and the exponential CLF baseline.

The barrier for interval i is h(x) = c^2/2 - ||x - z_end||^2 / 2, where z_end
is the reference state predicted for the end of the interval.  Outside the
ball (h < 0) the QP demands

    L_f h + L_g h (u_m + u_l) >= -delta h + alpha |h|^gamma1 + alpha |h|^gamma2

which is the fixed-time Lyapunov decrease condition written for V = -h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .geometry import DiscreteLtiModel, Polytope
from .plant import ControlAffinePlant
from .qp import QpProblem, QpSolution, QpStatus, SolverSettings, _solve_ineq_core, solve_qp


@dataclass(frozen=True)
class FxtParams:
    mu: float
    k: float
    r_check: float
    T: float
    c: float
    d: float
    alpha: float
    gamma1: float
    gamma2: float
    r_bar: float
    slack_coef: float

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def derive_params(mu: float = 2.0, k: float = 0.5, r_check: float = 0.5, T: float = 0.2,
                  c: float = 0.005, d: float = 0.6, slack_coef: Optional[float] = None) -> FxtParams:
    """Validate the free parameters and compute alpha, the exponents and r_bar.

    ``slack_coef`` is the linear weight on the slack in the QP cost; it
    defaults to the ball radius c.
    """
    if not mu > 1:
        raise ValueError(f"mu must be > 1, got {mu}")
    if not 0 < k < 1:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    if not 0 < r_check < 1:
        raise ValueError(f"r_check must lie in (0, 1), got {r_check}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not d > c:
        raise ValueError(f"d must exceed c, got d={d}, c={c}")
    alpha = max(mu * k / ((1 - k) * T), mu * math.pi / (T * math.sqrt(1 - r_check ** 2)))
    s = ((d * d - c * c) / 2) ** (1 / mu)
    r_bar = s / (2 * k) + k / (2 * s)
    return FxtParams(mu=mu, k=k, r_check=r_check, T=T, c=c, d=d, alpha=alpha,
                     gamma1=1 + 1 / mu, gamma2=1 - 1 / mu, r_bar=r_bar,
                     slack_coef=c if slack_coef is None else float(slack_coef))


def signed_deficiency_pow(h: float, gamma: float) -> float:
    """min(0, h)^gamma as a signed power: 0 for h >= 0, else -|h|^gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 0.0 if h >= 0 else -((-h) ** gamma)


@dataclass(frozen=True)
class BarrierContext:
    z_end: np.ndarray
    interval_index: int = 0

    def __post_init__(self):
        z = np.asarray(self.z_end, dtype=float).reshape(-1)
        if not np.all(np.isfinite(z)):
            raise ValueError("barrier centre must be finite")
        object.__setattr__(self, "z_end", z)


@dataclass(frozen=True)
class LowLevelOutput:
    u_l: Optional[np.ndarray]
    delta: float
    h: float
    ratio: float
    status: QpStatus
    solution: Optional[QpSolution] = None     # feed back as a warm start


def barrier(x, ctx: BarrierContext, params: FxtParams) -> tuple[float, np.ndarray]:
    e = np.asarray(x, dtype=float) - ctx.z_end
    if e.shape != ctx.z_end.shape:
        raise ValueError("state and barrier centre dimensions differ")
    return 0.5 * params.c ** 2 - 0.5 * float(e @ e), -e


def predict_z_end(model: DiscreteLtiModel, z_plus, u_m) -> np.ndarray:
    """Reference state at the end of the interval under the held input."""
    return model.step(z_plus, u_m)


def assemble_lowlevel_qp(x, u_m, ctx: BarrierContext, params: FxtParams,
                         plant: ControlAffinePlant, input_set: Polytope) -> QpProblem:
    """QP in (u_l, delta): input bounds on u_l + u_m and the barrier row."""
    x = np.asarray(x, dtype=float)
    u_m = np.atleast_1d(np.asarray(u_m, dtype=float))
    n_u = plant.n_u
    if u_m.size != n_u or input_set.dim != n_u:
        raise ValueError("input dimension mismatch")
    h, grad = barrier(x, ctx, params)
    Lf = float(grad @ plant.f(x))
    Lg = grad @ plant.g(x)
    a = params.alpha
    fxt_terms = a * signed_deficiency_pow(h, params.gamma1) + a * signed_deficiency_pow(h, params.gamma2)

    P = np.eye(n_u + 1)
    q = np.zeros(n_u + 1)
    q[-1] = params.slack_coef
    m = input_set.A.shape[0]
    G = np.zeros((m + 1, n_u + 1))
    hv = np.empty(m + 1)
    G[:m, :n_u] = input_set.A
    hv[:m] = input_set.b - input_set.A @ u_m
    G[m, :n_u] = -Lg
    G[m, n_u] = -h
    hv[m] = Lf + float(Lg @ u_m) + fxt_terms
    return QpProblem(P, q, G, hv)


@numba.njit(cache=True)
def _fxt_tick(x, u_m, z_end, fx, gx, A_in, b_in, c, alpha, g1, g2, slack_coef,
              z_prev, use_warm, tol, ptol, max_iterations):
    # Same rows as assemble_lowlevel_qp, built and solved without leaving compiled code.
    e = x - z_end
    h = 0.5 * c * c - 0.5 * np.dot(e, e)
    Lf = -np.dot(e, fx)
    Lg = -(e @ gx)
    fxt_terms = 0.0
    if h < 0.0:
        fxt_terms = -alpha * (-h) ** g1 - alpha * (-h) ** g2
    n_u = u_m.size
    m = A_in.shape[0]
    P = np.eye(n_u + 1)
    q = np.zeros(n_u + 1)
    q[n_u] = slack_coef
    G = np.zeros((m + 1, n_u + 1))
    hv = np.empty(m + 1)
    G[:m, :n_u] = A_in
    hv[:m] = b_in - A_in @ u_m
    G[m, :n_u] = -Lg
    G[m, n_u] = -h
    hv[m] = Lf + np.dot(Lg, u_m) + fxt_terms
    ok, sol, z, res, it = _solve_ineq_core(P, q, G, hv, z_prev, use_warm, tol, ptol, max_iterations)
    return ok, sol, z, res, it, h


_NO_DUALS = np.zeros(0)


def low_level_policy(x, u_m, ctx: BarrierContext, params: FxtParams, plant: ControlAffinePlant,
                     input_set: Polytope, settings: SolverSettings | None = None) -> LowLevelOutput:
    """Solve the fixed-time barrier QP at state x.

    The QP is the one returned by assemble_lowlevel_qp.  The common path runs
    in compiled code; a failed solve is repeated through solve_qp so the
    status distinguishes infeasible from non-converged.
    """
    settings = settings or SolverSettings()
    x = np.asarray(x, dtype=float)
    u_m = np.atleast_1d(np.asarray(u_m, dtype=float))
    if u_m.size != plant.n_u or input_set.dim != plant.n_u or x.shape != ctx.z_end.shape:
        raise ValueError("state or input dimension mismatch")
    warm = settings.warm_start
    use_warm = warm is not None and warm.optimal
    ok, sol_x, z, res, it, h = _fxt_tick(
        x, u_m, ctx.z_end, plant.f(x), np.asarray(plant.g(x), dtype=float), input_set.A, input_set.b,
        params.c, params.alpha, params.gamma1, params.gamma2, params.slack_coef,
        warm.ineq_duals if use_warm else _NO_DUALS, use_warm,
        settings.tolerance, settings.primal_tolerance, settings.max_iterations)
    if ok:
        sol = QpSolution(sol_x, z, _NO_DUALS, QpStatus.OPTIMAL, res, it)
        delta = float(sol_x[-1])
        return LowLevelOutput(sol_x[:-1].copy(), delta, h, delta / (2 * params.alpha), sol.status, sol)
    sol = solve_qp(assemble_lowlevel_qp(x, u_m, ctx, params, plant, input_set), settings)
    if not sol.optimal:
        return LowLevelOutput(None, float("nan"), h, float("nan"), sol.status, sol)
    delta = float(sol.x[-1])
    return LowLevelOutput(sol.x[:-1].copy(), delta, h, delta / (2 * params.alpha), sol.status, sol)


def es_clf_policy(x, u_m, ctx: BarrierContext, lam: float, slack_weight: float,
                  plant: ControlAffinePlant, input_set: Polytope,
                  params: FxtParams | None = None,
                  settings: SolverSettings | None = None) -> LowLevelOutput:
    """Exponential CLF-QP baseline with V = ||x - z_end||^2 / 2.

    minimize |u_l|^2/2 + w delta^2/2  s.t.  L_f V + L_g V (u_m + u_l) <= -lam V + delta.
    ``params`` only supplies c and alpha for the logged h and ratio.
    """
    if not (lam > 0 and slack_weight > 0):
        raise ValueError("lam and slack_weight must be positive")
    x = np.asarray(x, dtype=float)
    u_m = np.atleast_1d(np.asarray(u_m, dtype=float))
    n_u = plant.n_u
    e = x - ctx.z_end
    V = 0.5 * float(e @ e)
    LfV = float(e @ plant.f(x))
    LgV = e @ plant.g(x)
    P = np.diag(np.concatenate([np.ones(n_u), [slack_weight]]))
    m = input_set.A.shape[0]
    G = np.zeros((m + 1, n_u + 1))
    hv = np.empty(m + 1)
    G[:m, :n_u] = input_set.A
    hv[:m] = input_set.b - input_set.A @ u_m
    G[m, :n_u] = LgV
    G[m, n_u] = -1.0
    hv[m] = -lam * V - LfV - float(LgV @ u_m)
    sol = solve_qp(QpProblem(P, np.zeros(n_u + 1), G, hv), settings)
    c = params.c if params is not None else 0.0
    h = 0.5 * c * c - V
    if not sol.optimal:
        return LowLevelOutput(None, float("nan"), h, float("nan"), sol.status, sol)
    delta = float(sol.x[-1])
    ratio = delta / (2 * params.alpha) if params is not None else float("nan")
    return LowLevelOutput(sol.x[:-1].copy(), delta, h, ratio, sol.status, sol)


@dataclass(frozen=True)
class DoaResult:
    whole_space: bool
    level: Optional[float] = None


def fxt_doa(params: FxtParams, r: float) -> DoaResult:
    """Fixed-time domain of attraction for slack ratio r = delta / (2 alpha).

    Whole space for r < 1; otherwise the sublevel {h >= level}.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r < 1:
        return DoaResult(True)
    return DoaResult(False, -params.k ** params.mu * (r - math.sqrt(r * r - 1)) ** params.mu)


def fxt_time(params: FxtParams, r: float) -> float:
    """Upper bound on the time to reach {h >= 0} for slack ratio r."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r < params.r_check:
        return params.mu * math.pi / (params.alpha * math.sqrt(1 - params.r_check ** 2))
    return params.mu * params.k / (params.alpha * (1 - params.k))
