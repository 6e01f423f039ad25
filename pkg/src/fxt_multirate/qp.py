"""Dense convex QP solver (primal-dual interior point) and phase-1 feasibility LP.

Problem form::

    minimize    1/2 x'Px + q'x
    subject to  G x <= h
                Aeq x = beq
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

logger = logging.getLogger(__name__)


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None
    Aeq: np.ndarray = None
    beq: np.ndarray = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise ValueError(f"P must be square, got {P.shape}")
        P = 0.5 * (P + P.T)
        q = np.asarray(self.q, dtype=float).reshape(-1)
        if q.size != n:
            raise ValueError(f"q has {q.size} entries, expected {n}")
        G, h = _rows(self.G, self.h, n, "G", "h")
        A, b = _rows(self.Aeq, self.beq, n, "Aeq", "beq")
        if __debug__ and n and _min_eig(P) < -1e-9:
            raise ValueError("P is not positive semidefinite")
        for name, val in (("P", P), ("q", q), ("G", G), ("h", h), ("Aeq", A), ("beq", b)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x)


def _min_eig(P) -> float:
    d = np.diag(P)
    if np.count_nonzero(P) == np.count_nonzero(d):
        return float(d.min())
    return float(np.linalg.eigvalsh(P)[0])


def _rows(M, v, n, mname, vname):
    if M is None or np.size(M) == 0:
        return np.zeros((0, n)), np.zeros(0)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    if M.shape[1] != n:
        raise ValueError(f"{mname} has {M.shape[1]} columns, expected {n}")
    if M.shape[0] != v.size:
        raise ValueError(f"{mname} has {M.shape[0]} rows but {vname} has {v.size}")
    return M, v


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    ineq_duals: np.ndarray
    eq_duals: np.ndarray
    status: QpStatus
    kkt_residual: float
    iterations: int
    # Farkas certificate (y_ineq >= 0, y_eq) with G'y_ineq + Aeq'y_eq = 0 and
    # h'y_ineq + beq'y_eq < 0; only set when status is Infeasible.
    certificate: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass
class SolverSettings:
    tolerance: float = 1e-8
    # Absolute bound on constraint violation, rows scaled to unit max-norm.
    primal_tolerance: float = 1e-10
    max_iterations: int = 10_000
    warm_start: Optional[QpSolution] = None

    def __post_init__(self):
        if not (self.tolerance > 0 and self.primal_tolerance > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: Optional[np.ndarray] = None
    indeterminate: bool = False
    violation: float = float("nan")
    certificate: Optional[tuple[np.ndarray, np.ndarray]] = None


def _row_scale(M):
    sc = np.abs(M).max(axis=1) if M.size else np.ones(M.shape[0])
    sc[sc == 0] = 1.0
    return sc


def _equilibrated(prob: QpProblem) -> QpProblem:
    """Same problem with every constraint row scaled to unit max-norm."""
    sg = _row_scale(prob.G)
    se = _row_scale(prob.Aeq)
    return QpProblem(prob.P, prob.q, prob.G / sg[:, None], prob.h / sg,
                     prob.Aeq / se[:, None], prob.beq / se)


def primal_violation(prob: QpProblem, x) -> float:
    """Largest constraint violation after scaling each row to unit max-norm."""
    x = np.asarray(x, dtype=float)
    sc = _equilibrated(prob)
    vi = np.maximum(sc.G @ x - sc.h, 0).max(initial=0.0)
    ve = np.abs(sc.Aeq @ x - sc.beq).max(initial=0.0)
    return float(max(vi, ve))


def kkt_residual(prob: QpProblem, x, z, y) -> float:
    """Scaled KKT residual: max of stationarity, primal violation and duality gap.

    Measured on the row-equilibrated problem (each constraint row scaled to
    unit max-norm, duals scaled inversely).  Each term is divided by 1 + the
    magnitude of the quantities it balances, so it is absolute on unit-scale
    data and relative on large data.
    """
    if not np.all(z >= 0):
        return float("inf")
    sg, se = _row_scale(prob.G), _row_scale(prob.Aeq)
    G, h = prob.G / sg[:, None], prob.h / sg
    A, b = prob.Aeq / se[:, None], prob.beq / se
    return float(_scaled_residual(prob.P, prob.q, G, h, A, b, x, np.maximum(h - G @ x, 0.0),
                                  z * sg, y * se, np.maximum(G @ x - h, 0.0))[3])


# Step-to-boundary fraction and dual blow-up threshold that triggers the
# infeasibility classification.
_STEP_FRACTION = 0.99
_DUAL_BLOWUP = 1e10
_STALL_ITERS = 30


@numba.njit(cache=True)
def _max_step(v, dv):
    a = 1.0
    for i in range(v.size):
        if dv[i] < 0.0:
            r = -v[i] / dv[i]
            if r < a:
                a = r
    return a


@numba.njit(cache=True)
def _solve_kkt(H, A, rhs_x, rhs_y):
    """Solve [[H, A'], [A, 0]] [dx; dy] = [rhs_x; rhs_y] densely."""
    n = H.shape[0]
    me = A.shape[0]
    if me == 0:
        return np.linalg.solve(H, rhs_x), np.zeros(0)
    K = np.zeros((n + me, n + me))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate((rhs_x, rhs_y))
    sol = np.linalg.solve(K, rhs)
    return sol[:n].copy(), sol[n:].copy()


@numba.njit(cache=True)
def _mv(M, v):
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc
    return out


@numba.njit(cache=True)
def _mtv(M, v):
    out = np.zeros(M.shape[1])
    for i in range(M.shape[0]):
        vi = v[i]
        if vi != 0.0:
            for j in range(M.shape[1]):
                out[j] += M[i, j] * vi
    return out


@numba.njit(cache=True)
def _abs_mv_max(M, v, transpose):
    """max_i (|M| |v|)_i, or of |M|'|v| when transpose is set."""
    if transpose:
        out = np.zeros(M.shape[1])
        for i in range(M.shape[0]):
            vi = abs(v[i])
            for j in range(M.shape[1]):
                out[j] += abs(M[i, j]) * vi
    else:
        out = np.zeros(M.shape[0])
        for i in range(M.shape[0]):
            acc = 0.0
            for j in range(M.shape[1]):
                acc += abs(M[i, j]) * abs(v[j])
            out[i] = acc
    return np.max(out) if out.size else 0.0


@numba.njit(cache=True)
def _gram(P, G, d):
    """P + G' diag(d) G."""
    n = P.shape[0]
    H = P.copy()
    for k in range(G.shape[0]):
        dk = d[k]
        for i in range(n):
            gi = G[k, i] * dk
            if gi != 0.0:
                for j in range(n):
                    H[i, j] += gi * G[k, j]
    return H


@numba.njit(cache=True)
def _cholesky(H):
    """Lower Cholesky factor; ok is False if a pivot is not safely positive."""
    n = H.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        acc = H[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if not acc > 1e-24 * (1.0 + abs(H[j, j])):
            return False, L
        L[j, j] = np.sqrt(acc)
        for i in range(j + 1, n):
            acc = H[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return True, L


@numba.njit(cache=True)
def _chol_solve(L, rhs):
    """Solve L L' x = rhs by forward and back substitution."""
    n = L.shape[0]
    w = rhs.copy()
    for i in range(n):
        acc = w[i]
        for k in range(i):
            acc -= L[i, k] * w[k]
        w[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = w[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * w[k]
        w[i] = acc / L[i, i]
    return w


@numba.njit(cache=True)
def _factor_kkt(H, A):
    """Cholesky factors of H and of the Schur complement A H^-1 A'.

    ok is False when either matrix is not numerically positive definite; the
    caller then falls back to the dense indefinite solve.
    """
    n = H.shape[0]
    me = A.shape[0]
    Ls = np.zeros((me, me))
    HiAt = np.zeros((n, me))
    ok, L = _cholesky(H)
    if not ok:
        return False, L, Ls, HiAt
    if me:
        for j in range(me):
            HiAt[:, j] = _chol_solve(L, A[j].copy())
        S = np.zeros((me, me))
        for i in range(me):
            for j in range(me):
                acc = 0.0
                for k in range(n):
                    acc += A[i, k] * HiAt[k, j]
                S[i, j] = acc
        ok, Ls = _cholesky(S)
        if not ok:
            return False, L, Ls, HiAt
    return True, L, Ls, HiAt


@numba.njit(cache=True)
def _factored_solve(L, Ls, HiAt, A, rhs_x, rhs_y):
    """Solve [[H, A'], [A, 0]] [dx; dy] = [rhs_x; rhs_y] from _factor_kkt output."""
    hx = _chol_solve(L, rhs_x)
    if A.shape[0] == 0:
        return hx, np.zeros(0)
    dy = _chol_solve(Ls, _mv(A, hx) - rhs_y)
    dx = hx - _mv(HiAt, dy)
    return dx, dy


@numba.njit(cache=True)
def _inf_norm(v):
    return np.max(np.abs(v)) if v.size else 0.0


@numba.njit(cache=True)
def _scaled_residual(P, q, G, h, A, b, x, s, z, y, r_i):
    """Residual vectors and the scaled residual used for termination.

    ``r_i`` is the inequality residual (G x + s - h inside the solver, the
    positive part of G x - h for a final check).
    """
    Px = _mv(P, x)
    Ax = _mv(A, x)
    r_d = Px + q + _mtv(G, z) + _mtv(A, y)
    r_e = Ax - b
    # Scale by the magnitude of the individual terms, not their (cancelling) sums.
    sd = 1.0 + max(max(_abs_mv_max(P, x, False), _inf_norm(q)),
                   max(_abs_mv_max(G, z, True), _abs_mv_max(A, y, True)))
    sp = 1.0 + max(max(_inf_norm(_mv(G, x)), _inf_norm(h)), max(_inf_norm(Ax), _inf_norm(b)))
    sg = 1.0 + abs(0.5 * np.sum(x * Px) + np.sum(q * x))
    res = max(_inf_norm(r_d) / sd, max(_inf_norm(r_e), _inf_norm(r_i)) / sp)
    res = max(res, np.sum(s * z) / sg)
    return r_d, r_e, r_i, res


@numba.njit(cache=True)
def _ipm_core(P, q, G, h, A, b, tol, ptol, max_iterations):
    """Infeasible-start Mehrotra predictor-corrector iterations.

    Returns (flag, x, s, z, y, iterations) with flag 0 = converged,
    1 = stopped early (stall, dual blow-up, singular or non-finite step),
    2 = iteration budget exhausted.
    """
    n = q.size
    mi = G.shape[0]
    me = A.shape[0]
    x = np.zeros(n)
    y = np.zeros(me)
    s = np.ones(mi)
    z = np.ones(mi)
    # Initial point: least-squares fit of Gx + s = h, shifted into the cone.
    try:
        x, y = _solve_kkt(_gram(P, G, np.ones(mi)), A, -q + _mtv(G, h), b)
    except Exception:
        return 1, x, s, z, y, 0
    s = h - _mv(G, x)
    z = -s.copy()
    a = -np.min(s)
    if a >= 0.0:
        s = s + 1.0 + a
    a = -np.min(z)
    if a >= 0.0:
        z = z + 1.0 + a

    best_res = np.inf
    stall = 0
    for it in range(max_iterations + 1):
        r_d, r_e, r_i, res = _scaled_residual(P, q, G, h, A, b, x, s, z, y, _mv(G, x) + s - h)
        if res <= tol and max(_inf_norm(r_e), _inf_norm(r_i)) <= ptol:
            return 0, x, s, z, y, it
        if it == max_iterations:
            return 2, x, s, z, y, it
        if res < 0.5 * best_res:
            best_res = res
            stall = 0
        else:
            stall += 1
        zmax = np.max(np.abs(z))
        ymax = np.max(np.abs(y)) if me else 0.0
        if stall > _STALL_ITERS or zmax > _DUAL_BLOWUP or ymax > _DUAL_BLOWUP:
            return 1, x, s, z, y, it

        mu = np.sum(s * z) / mi
        d = z / s
        H = _gram(P, G, d)
        # Predictor (affine) direction.  From G dx + ds = -r_i, z*ds + s*dz = -r_c.
        r_c = s * z
        fac_ok, L, Ls, HiAt = _factor_kkt(H, A)
        try:
            if fac_ok:
                dx, dy = _factored_solve(L, Ls, HiAt, A, -r_d - _mtv(G, (-r_c + z * r_i) / s), -r_e)
            else:
                dx, dy = _solve_kkt(H, A, -r_d - _mtv(G, (-r_c + z * r_i) / s), -r_e)
        except Exception:
            return 1, x, s, z, y, it
        ds = -r_i - _mv(G, dx)
        dz = (-r_c - z * ds) / s
        a_aff = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = np.sum((s + a_aff * ds) * (z + a_aff * dz)) / mi
        sigma = (mu_aff / mu) ** 3 if mu > 0.0 else 0.0
        # Corrector.
        r_c = s * z + ds * dz - sigma * mu
        try:
            if fac_ok:
                dx, dy = _factored_solve(L, Ls, HiAt, A, -r_d - _mtv(G, (-r_c + z * r_i) / s), -r_e)
            else:
                dx, dy = _solve_kkt(H, A, -r_d - _mtv(G, (-r_c + z * r_i) / s), -r_e)
        except Exception:
            return 1, x, s, z, y, it
        ds = -r_i - _mv(G, dx)
        dz = (-r_c - z * ds) / s
        step = min(1.0, _STEP_FRACTION * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + step * dx
        y = y + step * dy
        s = s + step * ds
        z = z + step * dz
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            return 1, x, s, z, y, it
    return 2, x, s, z, y, max_iterations


@numba.njit(cache=True)
def _row_scale_nb(M):
    sc = np.ones(M.shape[0])
    for i in range(M.shape[0]):
        m = 0.0
        for j in range(M.shape[1]):
            m = max(m, abs(M[i, j]))
        if m > 0.0:
            sc[i] = m
    return sc


@numba.njit(cache=True)
def _active_set_solve(P, q, G, h, A, b, act):
    """Solve with the rows in ``act`` held as equalities and the rest dropped.

    Returns (ok, x, s, z, y, res, viol); ok is False when the system is
    singular or a multiplier of an active row is negative.
    """
    me = A.shape[0]
    Aact = np.vstack((A, G[act]))
    bact = np.concatenate((b, h[act]))
    x = np.zeros(q.size)
    zp = np.zeros(G.shape[0])
    yp = np.zeros(me)
    try:
        x, lam = _solve_kkt(P, Aact, -q, bact)
    except Exception:
        return False, x, zp, zp, yp, np.inf, np.inf
    zp[act] = lam[me:]
    yp[:] = lam[:me]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))) or (zp.size and np.min(zp) < 0.0):
        return False, x, zp, zp, yp, np.inf, np.inf
    r = _mv(G, x) - h
    sp = np.maximum(-r, 0.0)
    _, _, _, res = _scaled_residual(P, q, G, h, A, b, x, sp, zp, yp, np.maximum(r, 0.0))
    viol = np.max(r) if r.size else 0.0
    if me:
        viol = max(viol, np.max(np.abs(_mv(A, x) - b)))
    return True, x, sp, zp, yp, res, viol


@numba.njit(cache=True)
def _polish_core(P, q, G, h, A, b, x, s, z, y):
    """Re-solve with the constraints the interior point left active as equalities."""
    ok, xp, sp, zp, yp, res, _ = _active_set_solve(P, q, G, h, A, b, np.flatnonzero(z > s))
    return ok, xp, sp, zp, yp, res


@numba.njit(cache=True)
def _warm_core(P, q, G, h, A, b, z_prev, tol, ptol):
    """Try the active set of a previous solution; certify before accepting."""
    sg = _row_scale_nb(G)
    se = _row_scale_nb(A)
    Gs = G / sg.reshape(-1, 1)
    hs = h / sg
    As = A / se.reshape(-1, 1)
    bs = b / se
    zmax = np.max(z_prev) if z_prev.size else 0.0
    act = np.flatnonzero(z_prev > 1e-9 * (1.0 + zmax))
    ok, x, _, z, y, res, viol = _active_set_solve(P, q, Gs, hs, As, bs, act)
    optimal = ok and res <= tol and viol <= ptol
    return optimal, x, z / sg, y / se, res


@numba.njit(cache=True)
def _solve_core(P, q, G, h, A, b, tol, ptol, max_iterations):
    """Equilibrate, run the interior point, polish, and certify.

    Returns (optimal, x, z, y, res, iterations) with duals for the original
    (unscaled) rows.  The certificate is checked on the equilibrated rows.
    """
    sg = _row_scale_nb(G)
    se = _row_scale_nb(A)
    Gs = G / sg.reshape(-1, 1)
    hs = h / sg
    As = A / se.reshape(-1, 1)
    bs = b / se
    flag, x, s, z, y, it = _ipm_core(P, q, Gs, hs, As, bs, tol, ptol, max_iterations)
    res = np.inf
    optimal = False
    if flag == 0:
        _, _, _, res = _scaled_residual(P, q, Gs, hs, As, bs, x, s, z, y, _mv(Gs, x) + s - hs)
        ok, xp, sp, zp, yp, res_p = _polish_core(P, q, Gs, hs, As, bs, x, s, z, y)
        if ok and res_p <= res:
            viol = 0.0
            if Gs.shape[0]:
                viol = max(viol, np.max(_mv(Gs, xp) - hs))
            if As.shape[0]:
                viol = max(viol, np.max(np.abs(_mv(As, xp) - bs)))
            if viol <= ptol:
                x, s, z, y, res = xp, sp, zp, yp, res_p
        viol = 0.0
        if Gs.shape[0]:
            viol = max(viol, np.max(_mv(Gs, x) - hs))
        if As.shape[0]:
            viol = max(viol, np.max(np.abs(_mv(As, x) - bs)))
        # Re-measure with the slack implied by x so the certificate ignores s.
        _, _, _, res = _scaled_residual(P, q, Gs, hs, As, bs, x, np.maximum(hs - _mv(Gs, x), 0.0), z, y,
                                        np.maximum(_mv(Gs, x) - hs, 0.0))
        optimal = res <= tol and viol <= ptol and (z.size == 0 or np.min(z) >= 0.0)
    return optimal, x, z / sg, y / se, res, it


@numba.njit(cache=True)
def _solve_ineq_core(P, q, G, h, z_prev, use_warm, tol, ptol, max_iterations):
    """Inequality-only QP: warm active-set attempt, then the cold path.

    Returns (optimal, x, z, res, iterations); iterations is 0 when the warm
    guess was certified.  Used by callers that assemble their QP in compiled
    code; failures should be passed to solve_qp for classification.
    """
    A = np.zeros((0, q.size))
    b = np.zeros(0)
    if use_warm and z_prev.size == G.shape[0]:
        ok, x, z, _, res = _warm_core(P, q, G, h, A, b, z_prev, tol, ptol)
        if ok:
            return True, x, z, res, 0
    ok, x, z, _, res, it = _solve_core(P, q, G, h, A, b, tol, ptol, max_iterations)
    return ok, x, z, res, it


def _ipm(prob: QpProblem, tol: float, ptol: float, max_iterations: int):
    flag, x, s, z, y, it = _ipm_core(prob.P, prob.q, prob.G, prob.h, prob.Aeq, prob.beq,
                                     float(tol), float(ptol), int(max_iterations))
    return flag == 0, x, s, z, y, it


def solve_qp(problem: QpProblem, settings: SolverSettings | None = None) -> QpSolution:
    """Solve a convex QP with Mehrotra predictor-corrector interior-point steps.

    Infeasibility is never inferred from a timeout: when the iterates stall or
    the duals blow up, a phase-1 LP decides and supplies a Farkas certificate.
    A warm start supplies a guess of the active set: the equality-constrained
    system for that set is solved and returned only if it passes the same
    optimality certificate; otherwise the solve starts cold.
    """
    settings = settings or SolverSettings()
    prob = problem
    tol, ptol = settings.tolerance, settings.primal_tolerance
    n, mi, me = prob.n, prob.G.shape[0], prob.Aeq.shape[0]

    warm = settings.warm_start
    if (warm is not None and warm.optimal and mi > 0 and warm.x.size == n
            and warm.ineq_duals.size == mi and warm.eq_duals.size == me):
        ok, x, z, y, res = _warm_core(prob.P, prob.q, prob.G, prob.h, prob.Aeq, prob.beq,
                                      warm.ineq_duals, float(tol), float(ptol))
        if ok:
            return QpSolution(x, z, y, QpStatus.OPTIMAL, float(res), 0)

    if mi == 0:
        try:
            x, y = _solve_kkt(prob.P, prob.Aeq, prob.q * -1.0, prob.beq)
        except np.linalg.LinAlgError:
            x, y = np.zeros(n), np.zeros(me)
        res = kkt_residual(prob, x, np.zeros(0), y)
        if res <= tol:
            return QpSolution(x, np.zeros(0), y, QpStatus.OPTIMAL, res, 1)
        return _classify_failure(prob, x, np.zeros(0), y, 1, tol)

    ok, x, z, y, res, it = _solve_core(prob.P, prob.q, prob.G, prob.h, prob.Aeq, prob.beq,
                                       float(tol), float(ptol), int(settings.max_iterations))
    if ok:
        return QpSolution(x, z, y, QpStatus.OPTIMAL, float(res), int(it))
    return _classify_failure(prob, x, z, y, it, tol)


def _classify_failure(prob: QpProblem, x, z, y, iterations: int, tol: float) -> QpSolution:
    feas = check_feasibility(prob.G, prob.h, prob.Aeq, prob.beq, tolerance=tol)
    res = kkt_residual(prob, x, z, y) if np.all(np.isfinite(x)) else float("inf")
    if not feas.indeterminate and not feas.feasible:
        logger.debug("QP certified infeasible (phase-1 violation %.3e)", feas.violation)
        return QpSolution(x, z, y, QpStatus.INFEASIBLE, res, iterations, certificate=feas.certificate)
    logger.debug("QP did not converge after %d iterations (residual %.3e)", iterations, res)
    return QpSolution(x, z, y, QpStatus.MAX_ITERATIONS, res, iterations)


_PHASE1_PROX = (1e-9, 1e-8, 1e-7, 1e-6)


def check_feasibility(G, h, Aeq=None, beq=None, tolerance: float = 1e-8,
                      max_iterations: int = 500) -> FeasibilityResult:
    """Phase-1 LP: minimize the total constraint violation.

        minimize 1't + 1'(p + m)  s.t.  G x - t <= h,  Aeq x - p + m = beq,  t, p, m >= 0

    Feasible iff the optimal violation is <= tolerance (scaled by the data
    magnitude).  When infeasible, the LP duals form a Farkas certificate.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    n = G.shape[1]
    if Aeq is None or np.size(Aeq) == 0:
        Aeq, beq = np.zeros((0, n)), np.zeros(0)
    Aeq = np.atleast_2d(np.asarray(Aeq, dtype=float))
    beq = np.asarray(beq, dtype=float).reshape(-1)
    mi, me = G.shape[0], Aeq.shape[0]
    nv = n + mi + 2 * me
    # Tiny proximal term on x keeps the Newton system nonsingular along
    # directions that no constraint touches.  It also leaves G'y = -rho x in
    # the certificate, so it starts small and grows only if the solve stalls.
    P = np.zeros((nv, nv))
    c = np.concatenate([np.zeros(n), np.ones(mi + 2 * me)])
    Gp = np.zeros((2 * mi + 2 * me, nv))
    hp = np.zeros(2 * mi + 2 * me)
    Gp[:mi, :n] = G
    Gp[:mi, n:n + mi] = -np.eye(mi)
    hp[:mi] = h
    Gp[mi:, n:] = -np.eye(mi + 2 * me)
    Ap = np.zeros((me, nv))
    Ap[:, :n] = Aeq
    Ap[:, n + mi:n + mi + me] = -np.eye(me)
    Ap[:, n + mi + me:] = np.eye(me)
    for rho in _PHASE1_PROX:
        P[:n, :n] = rho * np.eye(n)
        ok, xs, _, zs, ys, _ = _ipm(QpProblem(P, c, Gp, hp, Ap, beq), tolerance, tolerance, max_iterations)
        if ok:
            break
    if not ok:
        return FeasibilityResult(False, indeterminate=True)
    violation = float(np.sum(xs[n:]))
    scale = max(1.0, np.abs(h).max(initial=0.0), np.abs(beq).max(initial=0.0))
    if violation <= tolerance * scale:
        return FeasibilityResult(True, witness=xs[:n], violation=violation)
    return FeasibilityResult(False, violation=violation,
                             certificate=_polish_certificate(G, h, Aeq, beq, zs[:mi].copy(), ys.copy()))


def _polish_certificate(G, h, Aeq, beq, yi, ye):
    """Remove the stationarity residual left by the interior-point duals.

    Rows with a clearly positive multiplier keep theirs, the rest are zeroed,
    and the result is projected onto {G_S' y_S + Aeq' y_e = 0}.  The projected
    pair is kept only if it is still a Farkas certificate and fits better.
    """
    def fit(a, b):
        return np.abs(G.T @ a + Aeq.T @ b).max(initial=0.0)

    support = yi > 1e-6 * max(1.0, yi.max(initial=0.0))
    M = np.hstack([G[support].T, Aeq.T])
    if M.shape[1] == 0:
        return yi, ye
    y0 = np.concatenate([yi[support], ye])
    y = y0 - np.linalg.lstsq(M, M @ y0, rcond=None)[0]
    pi = np.zeros_like(yi)
    pi[support] = y[:support.sum()]
    pe = y[support.sum():]
    if pi.min(initial=0.0) < 0 or h @ pi + beq @ pe >= 0 or fit(pi, pe) >= fit(yi, ye):
        return yi, ye
    return pi, pe
