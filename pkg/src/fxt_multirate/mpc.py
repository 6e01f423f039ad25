"""High-level MPC planner over the discretized reference model.

Decision vector layout: w = [z_0, ..., z_N, v_0, ..., v_{N-1}].  The
Euclidean-ball constraints (per-step reference motion and the coupling of
z_0 to the measured state) are replaced by inscribed polytopes so the
planner stays a QP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    DiscreteLtiModel,
    EmptySetError,
    Polytope,
    ball_inner_box,
    cross_polytope,
    polytope_erode_ball,
)
from .qp import QpProblem, QpStatus, SolverSettings, solve_qp

BALL_APPROXIMATIONS = ("box", "cross")


class ConfigurationError(ValueError):
    pass


def inner_ball_polytope(r: float, n: int, kind: str = "box") -> Polytope:
    """Polytope inscribed in the Euclidean ball B(0, r)."""
    if kind == "box":
        return ball_inner_box(r, n).to_polytope()
    if kind == "cross":
        return cross_polytope(r, n)
    raise ValueError(f"unknown ball approximation {kind!r}; expected one of {BALL_APPROXIMATIONS}")


@dataclass(frozen=True)
class MpcConfig:
    N: int
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    XT: Polytope
    c: float
    d: float
    Um: Polytope
    model: DiscreteLtiModel
    XF: Optional[Polytope] = None       # None encodes the singleton {0}
    rate_ball: str = "box"
    coupling_ball: str = "box"
    XT_eroded: Polytope = field(init=False, repr=False)

    def __post_init__(self):
        n, m = self.model.n, self.model.n_u
        if self.N < 1:
            raise ConfigurationError("horizon N must be >= 1")
        if not 0 < self.c < self.d:
            raise ConfigurationError(f"need 0 < c < d, got c={self.c}, d={self.d}")
        for name, W, k in (("Q", self.Q, n), ("R", self.R, m), ("Qf", self.Qf, n)):
            W = np.atleast_2d(np.asarray(W, dtype=float))
            if W.shape != (k, k):
                raise ConfigurationError(f"{name} must be {k}x{k}, got {W.shape}")
            if np.linalg.eigvalsh(0.5 * (W + W.T))[0] < -1e-12:
                raise ConfigurationError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, W)
        if self.XT.dim != n or self.Um.dim != m:
            raise ConfigurationError("state/input set dimensions do not match the model")
        if self.XF is not None and self.XF.dim != n:
            raise ConfigurationError("terminal set dimension does not match the model")
        for kind in (self.rate_ball, self.coupling_ball):
            if kind not in BALL_APPROXIMATIONS:
                raise ConfigurationError(f"unknown ball approximation {kind!r}")
        try:
            eroded = polytope_erode_ball(self.XT, self.c)
        except EmptySetError as err:
            raise ConfigurationError("X_T eroded by the ball of radius c is empty") from err
        object.__setattr__(self, "XT_eroded", eroded)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def n_u(self) -> int:
        return self.model.n_u

    @property
    def n_vars(self) -> int:
        return (self.N + 1) * self.n + self.N * self.n_u


@dataclass(frozen=True)
class MpcSolution:
    z_seq: Optional[np.ndarray]     # (N+1, n)
    v_seq: Optional[np.ndarray]     # (N, n_u)
    feasible: bool
    objective: float
    status: QpStatus
    iterations: int = 0

    @property
    def indeterminate(self) -> bool:
        return self.status is QpStatus.MAX_ITERATIONS


def _zi(cfg: MpcConfig, k: int) -> slice:
    return slice(k * cfg.n, (k + 1) * cfg.n)


def _vi(cfg: MpcConfig, k: int) -> slice:
    off = (cfg.N + 1) * cfg.n
    return slice(off + k * cfg.n_u, off + (k + 1) * cfg.n_u)


def pack(z_seq, v_seq) -> np.ndarray:
    return np.concatenate([np.ravel(z_seq), np.ravel(v_seq)])


def unpack(w, cfg: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    nz = (cfg.N + 1) * cfg.n
    return w[:nz].reshape(cfg.N + 1, cfg.n).copy(), w[nz:].reshape(cfg.N, cfg.n_u).copy()


def build_ftocp(x_iT, cfg: MpcConfig) -> QpProblem:
    x_iT = np.asarray(x_iT, dtype=float).reshape(-1)
    if x_iT.size != cfg.n or not np.all(np.isfinite(x_iT)):
        raise ValueError("initial state must be a finite vector of the model dimension")
    n, m, N, nv = cfg.n, cfg.n_u, cfg.N, cfg.n_vars
    Abar, Bbar = cfg.model.Abar, cfg.model.Bbar

    P = np.zeros((nv, nv))
    for k in range(N):
        P[_zi(cfg, k), _zi(cfg, k)] = 2 * cfg.Q
        P[_vi(cfg, k), _vi(cfg, k)] = 2 * cfg.R
    P[_zi(cfg, N), _zi(cfg, N)] = 2 * cfg.Qf
    q = np.zeros(nv)

    eq_rows, eq_rhs = [], []
    for k in range(N):
        row = np.zeros((n, nv))
        row[:, _zi(cfg, k + 1)] = np.eye(n)
        row[:, _zi(cfg, k)] = -Abar
        row[:, _vi(cfg, k)] = -Bbar
        eq_rows.append(row)
        eq_rhs.append(np.zeros(n))

    G_rows, h_rows = [], []

    rate = inner_ball_polytope(cfg.d - cfg.c, n, cfg.rate_ball)
    for k in range(N):
        row = np.zeros((rate.A.shape[0], nv))
        row[:, _zi(cfg, k + 1)] = rate.A
        row[:, _zi(cfg, k)] = -rate.A
        G_rows.append(row)
        h_rows.append(rate.b)
    XE = cfg.XT_eroded
    for k in range(N):
        row = np.zeros((XE.A.shape[0], nv))
        row[:, _zi(cfg, k)] = XE.A
        G_rows.append(row)
        h_rows.append(XE.b)
    for k in range(N):
        row = np.zeros((cfg.Um.A.shape[0], nv))
        row[:, _vi(cfg, k)] = cfg.Um.A
        G_rows.append(row)
        h_rows.append(cfg.Um.b)
    coup = inner_ball_polytope(cfg.c, n, cfg.coupling_ball)
    row = np.zeros((coup.A.shape[0], nv))
    row[:, _zi(cfg, 0)] = coup.A
    G_rows.append(row)
    h_rows.append(coup.b + coup.A @ x_iT)

    if cfg.XF is None:
        row = np.zeros((n, nv))
        row[:, _zi(cfg, N)] = np.eye(n)
        eq_rows.append(row)
        eq_rhs.append(np.zeros(n))
    else:
        row = np.zeros((cfg.XF.A.shape[0], nv))
        row[:, _zi(cfg, N)] = cfg.XF.A
        G_rows.append(row)
        h_rows.append(cfg.XF.b)

    return QpProblem(P, q, np.vstack(G_rows), np.concatenate(h_rows),
                     np.vstack(eq_rows), np.concatenate(eq_rhs))


def ftocp_violation(z_seq, v_seq, x_iT, cfg: MpcConfig) -> float:
    """Largest violation of the planner constraints by a candidate (0 if feasible)."""
    prob = build_ftocp(x_iT, cfg)
    w = pack(z_seq, v_seq)
    viol = np.maximum(prob.G @ w - prob.h, 0).max(initial=0.0)
    return float(max(viol, np.abs(prob.Aeq @ w - prob.beq).max(initial=0.0)))


def solve_ftocp(x_iT, cfg: MpcConfig, settings: SolverSettings | None = None) -> MpcSolution:
    prob = build_ftocp(x_iT, cfg)
    sol = solve_qp(prob, settings)
    if not sol.optimal:
        return MpcSolution(None, None, False, float("nan"), sol.status, sol.iterations)
    z_seq, v_seq = unpack(sol.x, cfg)
    return MpcSolution(z_seq, v_seq, True, prob.objective(sol.x), sol.status, sol.iterations)


def reset_map(sol: MpcSolution) -> np.ndarray:
    """Reference-state jump at the planning instant: the optimized z_{i|i}."""
    if not sol.feasible:
        raise ValueError("reset map is undefined for an infeasible planner solution")
    return sol.z_seq[0].copy()


def high_level_input(sol: MpcSolution) -> np.ndarray:
    if not sol.feasible:
        raise ValueError("high-level input is undefined for an infeasible planner solution")
    return sol.v_seq[0].copy()


def shifted_candidate(sol: MpcSolution, model: DiscreteLtiModel) -> tuple[np.ndarray, np.ndarray]:
    """Shift the plan one step and append the autonomous step with zero input."""
    z = np.vstack([sol.z_seq[1:], model.Abar @ sol.z_seq[-1]])
    v = np.vstack([sol.v_seq[1:], np.zeros((1, sol.v_seq.shape[1]))])
    return z, v


@dataclass(frozen=True)
class Assumption3Result:
    invariant: bool
    rate_ok: bool
    max_step: float = 0.0


def check_assumption3(cfg: MpcConfig, tol: float = 1e-9) -> Assumption3Result:
    """Terminal-set invariance under z+ = Abar z, and the per-step motion bound."""
    Abar = cfg.model.Abar
    if cfg.XF is None:
        return Assumption3Result(True, 0.0 <= cfg.d - cfg.c, 0.0)
    try:
        verts = cfg.XF.vertices()
    except NotImplementedError as err:
        raise ConfigurationError(f"terminal set unsupported: {err}") from err
    invariant = all(cfg.XF.contains(Abar @ v, tol) for v in verts)
    steps = [float(np.linalg.norm(v - Abar @ v)) for v in verts]
    max_step = max(steps)
    return Assumption3Result(invariant, max_step <= cfg.d - cfg.c + tol, max_step)
