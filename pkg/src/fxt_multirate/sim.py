"""Multi-rate closed-loop engine and runtime verification monitors.

The planner runs once per interval of length T; the low-level QP runs at
``lowlevel_rate`` and its input is held over each tick while the plant is
integrated with RK4.  The reference model state is reset to the planner's
first state at every interval start and evolves under the held planner input.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .fxts import (
    BarrierContext,
    FxtParams,
    barrier,
    derive_params,
    es_clf_policy,
    low_level_policy,
    predict_z_end,
)
from .geometry import Box, DiscreteLtiModel, Polytope, zoh_discretize
from .mpc import ConfigurationError, MpcConfig, check_assumption3, solve_ftocp
from .plant import (
    ControlAffinePlant,
    DivergenceError,
    SegwayParams,
    double_integrator,
    rk4_step,
    segway,
    single_integrator,
)
from .qp import QpProblem, QpStatus, SolverSettings, solve_qp

logger = logging.getLogger(__name__)

PLANTS = ("segway", "integrator", "double_integrator")
BASELINES = ("fxt", "esclf")
SAFETY_TOL = 1e-6


@dataclass
class ScenarioConfig:
    """Everything needed to run one closed-loop scenario.

    Weight matrices accept a diagonal (length n) or a full matrix.  ``XF_lo``
    and ``XF_hi`` left as None encode the terminal set {0}.
    """

    x0: np.ndarray
    XT_lo: np.ndarray
    XT_hi: np.ndarray
    U_lo: np.ndarray
    U_hi: np.ndarray
    Um_lo: np.ndarray
    Um_hi: np.ndarray
    name: str = "scenario"
    plant: str = "segway"
    plant_params: dict = field(default_factory=dict)
    T: float = 0.2
    n_intervals: int = 25
    lowlevel_rate: float = 10_000.0
    integrator_substeps: int = 1
    mu: float = 2.0
    k: float = 0.5
    r_check: float = 0.5
    c: float = 0.005
    d: float = 0.6
    slack_coef: Optional[float] = None
    N: int = 10
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    Qf: Optional[np.ndarray] = None
    XF_lo: Optional[np.ndarray] = None
    XF_hi: Optional[np.ndarray] = None
    rate_ball: str = "box"
    coupling_ball: str = "box"
    baseline: str = "fxt"
    esclf_lambda: float = 1.0
    esclf_slack_weight: float = 1.0
    seed: int = 0
    safety_tol: float = SAFETY_TOL
    boundary_samples: int = 128
    check_boundary: bool = True

    def __post_init__(self):
        for name in ("x0", "XT_lo", "XT_hi", "U_lo", "U_hi", "Um_lo", "Um_hi", "XF_lo", "XF_hi"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_1d(np.asarray(v, dtype=float)))

    @property
    def ticks_per_interval(self) -> int:
        return int(round(self.lowlevel_rate * self.T))

    def validate(self) -> None:
        if self.plant not in PLANTS:
            raise ConfigurationError(f"plant must be one of {PLANTS}, got {self.plant!r}")
        if self.baseline not in BASELINES:
            raise ConfigurationError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        if self.n_intervals < 0:
            raise ConfigurationError("n_intervals must be nonnegative")
        K = self.lowlevel_rate * self.T
        if not (K >= 1 and abs(K - round(K)) < 1e-9):
            raise ConfigurationError(f"lowlevel_rate * T must be a positive integer, got {K}")
        if self.integrator_substeps < 1:
            raise ConfigurationError("integrator_substeps must be >= 1")
        if self.boundary_samples < 1:
            raise ConfigurationError("boundary_samples must be >= 1")
        if (self.XF_lo is None) != (self.XF_hi is None):
            raise ConfigurationError("XF_lo and XF_hi must be given together")
        if not np.all(np.isfinite(self.x0)):
            raise ConfigurationError("x0 must be finite")

    def build_plant(self) -> ControlAffinePlant:
        params = dict(self.plant_params)
        if self.plant == "segway":
            dissipation = bool(params.pop("dissipation", True))
            try:
                return segway(SegwayParams(**params), dissipation=dissipation)
            except TypeError as err:
                raise ConfigurationError(f"unknown segway parameter: {err}") from err
        dim = int(params.pop("dim", 1))
        if params:
            raise ConfigurationError(f"unknown {self.plant} parameters: {sorted(params)}")
        return single_integrator(dim) if self.plant == "integrator" else double_integrator(dim)

    def fxt_params(self) -> FxtParams:
        try:
            return derive_params(self.mu, self.k, self.r_check, self.T, self.c, self.d, self.slack_coef)
        except ValueError as err:
            raise ConfigurationError(str(err)) from err

    def input_set(self) -> Polytope:
        return Box(self.U_lo, self.U_hi).to_polytope()

    def xt_box(self) -> Box:
        return Box(self.XT_lo, self.XT_hi)

    def mpc_config(self, model: DiscreteLtiModel) -> MpcConfig:
        n, m = model.n, model.n_u
        XF = None if self.XF_lo is None else Box(self.XF_lo, self.XF_hi).to_polytope()
        return MpcConfig(
            N=self.N,
            Q=_weight(self.Q, n, "Q"),
            R=_weight(self.R, m, "R"),
            Qf=_weight(self.Qf, n, "Qf"),
            XT=self.xt_box().to_polytope(),
            c=self.c,
            d=self.d,
            Um=Box(self.Um_lo, self.Um_hi).to_polytope(),
            model=model,
            XF=XF,
            rate_ball=self.rate_ball,
            coupling_ball=self.coupling_ball,
        )


def _weight(W, n: int, name: str) -> np.ndarray:
    if W is None:
        return np.eye(n)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1 and W.size == n:
        return np.diag(W)
    if W.size == n * n:
        return W.reshape(n, n)
    raise ConfigurationError(f"{name} needs {n} diagonal entries or {n * n} matrix entries, got {W.size}")


@dataclass
class IntervalRecord:
    index: int
    t_start: float
    mpc_feasible: bool
    mpc_status: str
    z_minus: np.ndarray             # reference just before the reset (NaN at i = 0)
    z_plus: Optional[np.ndarray] = None
    z_end: Optional[np.ndarray] = None
    u_m: Optional[np.ndarray] = None
    h_end: float = float("nan")
    reached_C: bool = False
    first_entry_tick: Optional[int] = None
    post_entry_min_h: float = float("nan")
    max_ratio: float = float("nan")
    # Most negative delta/(2 alpha); delta < 0 is the direction that relaxes the barrier row.
    min_ratio: float = float("nan")
    start_distance: float = float("nan")
    lowlevel_failures: int = 0
    boundary_ok: Optional[bool] = None
    boundary_margin: float = float("nan")


@dataclass
class TrajectoryLog:
    """Per-tick rows plus one record per planning interval.

    Row j holds the state at t_j and the inputs applied over [t_j, t_{j+1});
    the final row holds the state at the end of the run with NaN inputs.
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray                   # running reference z(t)
    z_end: np.ndarray               # barrier centre of the interval the row belongs to
    u_m: np.ndarray
    u_l: np.ndarray
    u: np.ndarray
    h: np.ndarray
    delta: np.ndarray
    ratio: np.ndarray
    status: list
    mpc_feasible: np.ndarray
    intervals: list

    @property
    def n_rows(self) -> int:
        return self.t.size


@dataclass
class SafetyVerdict:
    safe: bool
    violations: list            # (t, quantity, margin)


@dataclass
class SimReport:
    scenario: str
    baseline: str
    periodic_safety: bool
    safety_violations: list
    recursive_feasibility: bool
    initial_feasible: bool
    halted: bool
    halt_reason: str
    halt_time: float
    intervals_completed: int
    reached_all: bool
    fixed_time_reach_ok: bool
    start_distance_violations: int
    max_ratio: float
    min_ratio: float
    r_bar: float
    ratio_bound_warnings: int
    assumption1_ok: bool
    assumption1_worst_margin: float
    input_bound_margin: float
    lowlevel_failures: int
    runtime: float

    @property
    def success(self) -> bool:
        return self.periodic_safety and self.recursive_feasibility

    def as_dict(self) -> dict:
        out = asdict(self)
        out["safety_violations"] = len(self.safety_violations)
        return out


def dist_to_box_rows(X: np.ndarray, B: Box) -> np.ndarray:
    """Row-wise dist_to_box for a matrix of states."""
    return np.linalg.norm(X - np.clip(X, B.lo, B.hi), axis=1)


def check_periodic_safety(log: TrajectoryLog, XT: Box, d: float, T: float,
                          tol: float = SAFETY_TOL) -> SafetyVerdict:
    """x(iT) in X_T at every interval boundary and dist(x(t), X_T) <= d at every tick."""
    violations = []
    if log.n_rows == 0:
        return SafetyVerdict(True, violations)
    n_bound = int(round(log.t[-1] / T)) if T > 0 else 0
    for i in range(n_bound + 1):
        j = int(np.argmin(np.abs(log.t - i * T)))
        x = log.x[j]
        margin = float(np.max(np.concatenate([x - XT.hi, XT.lo - x])))
        if margin > tol:
            violations.append((float(log.t[j]), "x(iT) outside X_T", margin))
    dist = dist_to_box_rows(log.x, XT)
    for j in np.flatnonzero(dist > d + tol):
        violations.append((float(log.t[j]), "x(t) outside X", float(dist[j] - d)))
    return SafetyVerdict(not violations, violations)


@dataclass(frozen=True)
class BoundaryCheckResult:
    ok: bool
    worst_margin: float


def check_assumption1(ctx: BarrierContext, u_m, fxt: FxtParams, plant: ControlAffinePlant,
                      input_set: Polytope, n_samples: int = 128, seed: int = 0,
                      tol: float = 1e-9) -> BoundaryCheckResult:
    """Sample the sphere |x - z_end| = c and maximize L_f h + L_g h (u_m + u_l) there.

    Each maximization is an LP over u_l with A_u (u_l + u_m) <= b_u.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    u_m = np.atleast_1d(np.asarray(u_m, dtype=float))
    rng = np.random.default_rng(seed)
    n, m = ctx.z_end.size, u_m.size
    dirs = rng.standard_normal((n_samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    G = input_set.A
    hv = input_set.b - G @ u_m
    worst = math.inf
    for e in dirs:
        x = ctx.z_end + fxt.c * e
        _, grad = barrier(x, ctx, fxt)
        Lf = float(grad @ plant.f(x))
        Lg = grad @ plant.g(x)
        sol = solve_qp(QpProblem(np.zeros((m, m)), -Lg, G, hv))
        if sol.status is QpStatus.MAX_ITERATIONS:
            raise RuntimeError("boundary LP did not terminate")
        if sol.status is QpStatus.INFEASIBLE:
            return BoundaryCheckResult(False, -math.inf)
        worst = min(worst, Lf + float(Lg @ (u_m + sol.x)))
    return BoundaryCheckResult(worst >= -tol, worst)


@dataclass(frozen=True)
class SlackRatioResult:
    ok: bool
    max_ratio: float
    r_bar: float


def check_slack_ratio_bound(ctx: BarrierContext, u_m, fxt: FxtParams, plant: ControlAffinePlant,
                      input_set: Polytope, n_samples: int = 128, seed: int = 0) -> SlackRatioResult:
    """Sampled slack-ratio bound: max of delta/(2 alpha) over the ball |x - z_end| <= d."""
    rng = np.random.default_rng(seed)
    n = ctx.z_end.size
    dirs = rng.standard_normal((n_samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = fxt.d * rng.random(n_samples) ** (1.0 / n)
    worst = -math.inf
    for e, r in zip(dirs, radii):
        out = low_level_policy(ctx.z_end + r * e, u_m, ctx, fxt, plant, input_set)
        if out.u_l is None:
            return SlackRatioResult(False, math.nan, fxt.r_bar)
        worst = max(worst, out.ratio)
    return SlackRatioResult(worst <= fxt.r_bar, worst, fxt.r_bar)


def doa_radius_gap(fxt: FxtParams, r: float) -> float:
    """k^mu (r - sqrt(r^2 - 1))^mu + c^2/2 - d^2/2; nonnegative when the bound holds."""
    return (fxt.k ** fxt.mu * (r - math.sqrt(max(r * r - 1.0, 0.0))) ** fxt.mu
            + 0.5 * fxt.c ** 2 - 0.5 * fxt.d ** 2)


def check_eq20_consistency(fxt: FxtParams, n_grid: int = 1000, tol: float = 1e-9) -> bool:
    """Check that every slack ratio in [1, r_bar] keeps the ball of radius d in the DoA.

    The DoA level for ratio r >= 1 is -k^mu (r - sqrt(r^2 - 1))^mu; the ball
    |x - z_end| <= d lies in it iff d^2/2 <= k^mu (...)^mu + c^2/2.
    """
    if fxt.r_bar < 1.0:
        return True
    grid = np.append(np.linspace(1.0, fxt.r_bar, n_grid), fxt.r_bar)
    return all(doa_radius_gap(fxt, float(r)) >= -tol for r in grid)


def _reference_tick_model(plant_A, plant_B, dt: float) -> DiscreteLtiModel:
    return zoh_discretize(plant_A, plant_B, dt)


def run_scenario(cfg: ScenarioConfig, baseline: Optional[str] = None) -> tuple[TrajectoryLog, SimReport]:
    """Simulate the closed loop for cfg.n_intervals planning intervals."""
    t_start = time.perf_counter()
    cfg.validate()
    baseline = baseline or cfg.baseline
    if baseline not in BASELINES:
        raise ConfigurationError(f"baseline must be one of {BASELINES}, got {baseline!r}")
    plant = cfg.build_plant()
    if cfg.x0.size != plant.n_x:
        raise ConfigurationError(f"x0 has {cfg.x0.size} entries, plant has {plant.n_x} states")
    fxt = cfg.fxt_params()
    U = cfg.input_set()
    XT = cfg.xt_box()
    A, B = plant.linearize()
    model = zoh_discretize(A, B, cfg.T)
    mcfg = cfg.mpc_config(model)
    K = cfg.ticks_per_interval
    dt = cfg.T / K
    tick_model = _reference_tick_model(A, B, dt)
    h_sub = dt / cfg.integrator_substeps

    rows_t, rows_x, rows_z, rows_ze = [], [], [], []
    rows_um, rows_ul, rows_u = [], [], []
    rows_h, rows_d, rows_r, rows_s, rows_f = [], [], [], [], []
    intervals: list[IntervalRecord] = []

    x = cfg.x0.copy()
    z = np.full(plant.n_x, np.nan)
    u_l_prev = np.zeros(plant.n_u)
    halted, halt_reason, halt_time = False, "", float("nan")
    initial_feasible = True
    h_last = float("nan")
    t_now = 0.0

    for i in range(cfg.n_intervals):
        t0 = i * cfg.T
        sol = solve_ftocp(x, mcfg)
        rec = IntervalRecord(index=i, t_start=t0, mpc_feasible=sol.feasible,
                             mpc_status=sol.status.value, z_minus=z.copy())
        intervals.append(rec)
        if not sol.feasible:
            halted, halt_time = True, t0
            if i == 0:
                initial_feasible = False
                halt_reason = f"planner infeasible at t=0 ({sol.status.value}): recursive feasibility hypothesis not met"
            else:
                halt_reason = f"planner infeasible at t={i}T ({sol.status.value})"
            logger.warning("%s: %s", cfg.name, halt_reason)
            break
        z = sol.z_seq[0].copy()
        u_m = sol.v_seq[0].copy()
        z_end = predict_z_end(model, z, u_m)
        ctx = BarrierContext(z_end, i + 1)
        rec.z_plus, rec.z_end, rec.u_m = z.copy(), z_end, u_m.copy()
        rec.start_distance = float(np.linalg.norm(x - z_end))
        if cfg.check_boundary:
            a1 = check_assumption1(ctx, u_m, fxt, plant, U, cfg.boundary_samples, seed=cfg.seed + i)
            rec.boundary_ok, rec.boundary_margin = a1.ok, a1.worst_margin

        h_int = np.empty(K)
        r_int = np.empty(K)
        diverged = False
        warm = None
        for j in range(K):
            settings = SolverSettings(warm_start=warm)
            if baseline == "fxt":
                out = low_level_policy(x, u_m, ctx, fxt, plant, U, settings)
            else:
                out = es_clf_policy(x, u_m, ctx, cfg.esclf_lambda, cfg.esclf_slack_weight, plant, U, fxt,
                                    settings)
            warm = out.solution
            if out.u_l is None:
                rec.lowlevel_failures += 1
                u_l = u_l_prev
            else:
                u_l = out.u_l
            u = u_l + u_m
            rows_t.append(t0 + j * dt)
            rows_x.append(x.copy())
            rows_z.append(z.copy())
            rows_ze.append(z_end)
            rows_um.append(u_m)
            rows_ul.append(u_l.copy())
            rows_u.append(u)
            rows_h.append(out.h)
            rows_d.append(out.delta)
            rows_r.append(out.ratio)
            rows_s.append(out.status.value)
            rows_f.append(True)
            h_int[j] = out.h
            r_int[j] = out.ratio
            u_l_prev = u_l
            try:
                for _ in range(cfg.integrator_substeps):
                    x = rk4_step(plant, x, u, h_sub)
            except DivergenceError as err:
                halted, halt_time = True, t0 + (j + 1) * dt
                t_now = halt_time
                halt_reason = f"plant diverged: {err}"
                diverged = True
                break
            z = tick_model.step(z, u_m)
            t_now = t0 + (j + 1) * dt
        if diverged:
            logger.warning("%s: %s", cfg.name, halt_reason)
            break
        h_last, _ = barrier(x, ctx, fxt)
        rec.h_end = float(h_last)
        rec.reached_C = rec.h_end >= -cfg.safety_tol
        inside = np.flatnonzero(h_int >= 0)
        if inside.size:
            rec.first_entry_tick = int(inside[0])
            rec.post_entry_min_h = float(min(h_int[inside[0]:].min(), h_last))
        rec.max_ratio = float(np.nanmax(r_int)) if np.any(np.isfinite(r_int)) else float("nan")
        rec.min_ratio = float(np.nanmin(r_int)) if np.any(np.isfinite(r_int)) else float("nan")
        if rec.max_ratio > fxt.r_bar:
            logger.warning("%s interval %d: slack ratio %.4g exceeds r_bar %.4g",
                           cfg.name, i, rec.max_ratio, fxt.r_bar)
        if not rec.reached_C:
            logger.info("%s interval %d: barrier %.3e at interval end", cfg.name, i, rec.h_end)

    # Final row: state at the end of the run.
    rows_t.append(t_now)
    rows_x.append(x.copy())
    rows_z.append(z.copy())
    rows_ze.append(intervals[-1].z_end if intervals and intervals[-1].z_end is not None
                   else np.full(plant.n_x, np.nan))
    nan_u = np.full(plant.n_u, np.nan)
    rows_um.append(nan_u)
    rows_ul.append(nan_u)
    rows_u.append(nan_u)
    rows_h.append(h_last)
    rows_d.append(float("nan"))
    rows_r.append(float("nan"))
    rows_s.append("")
    rows_f.append(not halted)

    log = TrajectoryLog(
        t=np.array(rows_t, dtype=float),
        x=np.array(rows_x, dtype=float).reshape(-1, plant.n_x),
        z=np.array(rows_z, dtype=float).reshape(-1, plant.n_x),
        z_end=np.array(rows_ze, dtype=float).reshape(-1, plant.n_x),
        u_m=np.array(rows_um, dtype=float).reshape(-1, plant.n_u),
        u_l=np.array(rows_ul, dtype=float).reshape(-1, plant.n_u),
        u=np.array(rows_u, dtype=float).reshape(-1, plant.n_u),
        h=np.array(rows_h, dtype=float),
        delta=np.array(rows_d, dtype=float),
        ratio=np.array(rows_r, dtype=float),
        status=rows_s,
        mpc_feasible=np.array(rows_f, dtype=bool),
        intervals=intervals,
    )
    report = _make_report(cfg, baseline, log, fxt, XT, U, halted, halt_reason, halt_time,
                          initial_feasible, time.perf_counter() - t_start)
    return log, report


def _make_report(cfg, baseline, log, fxt, XT, U, halted, halt_reason, halt_time,
                 initial_feasible, runtime) -> SimReport:
    done = [r for r in log.intervals if r.mpc_feasible and not math.isnan(r.h_end)]
    safety = check_periodic_safety(log, XT, cfg.d, cfg.T, cfg.safety_tol)
    violations = list(safety.violations)
    for r in done:
        if not r.reached_C:
            violations.append(((r.index + 1) * cfg.T, "barrier at interval end", -r.h_end))
    reached_all = all(r.reached_C for r in done)
    fixed_time_reach_ok = reached_all and all(
        r.first_entry_tick is not None and r.post_entry_min_h >= -cfg.safety_tol for r in done
    )
    far_starts = sum(1 for r in log.intervals if r.mpc_feasible and r.start_distance > cfg.d + 1e-9)
    ratios = [r.max_ratio for r in done if not math.isnan(r.max_ratio)]
    max_ratio = max(ratios) if ratios else float("nan")
    min_ratio = min((r.min_ratio for r in done if not math.isnan(r.min_ratio)), default=float("nan"))
    a1 = [r for r in log.intervals if r.boundary_ok is not None]
    finite_u = log.u[np.all(np.isfinite(log.u), axis=1)]
    input_margin = float(np.max(finite_u @ U.A.T - U.b)) if finite_u.size else -math.inf
    return SimReport(
        scenario=cfg.name,
        baseline=baseline,
        periodic_safety=not violations,
        safety_violations=violations,
        recursive_feasibility=all(r.mpc_feasible for r in log.intervals),
        initial_feasible=initial_feasible,
        halted=halted,
        halt_reason=halt_reason,
        halt_time=halt_time,
        intervals_completed=len(done),
        reached_all=reached_all,
        fixed_time_reach_ok=fixed_time_reach_ok,
        start_distance_violations=far_starts,
        max_ratio=max_ratio,
        min_ratio=min_ratio,
        r_bar=fxt.r_bar,
        ratio_bound_warnings=sum(1 for v in ratios if v > fxt.r_bar),
        assumption1_ok=all(r.boundary_ok for r in a1),
        assumption1_worst_margin=min((r.boundary_margin for r in a1), default=float("nan")),
        input_bound_margin=input_margin,
        lowlevel_failures=sum(r.lowlevel_failures for r in log.intervals),
        runtime=runtime,
    )


def check_assumptions(cfg: ScenarioConfig) -> dict:
    """Static checks at the t = 0 planning instant, without simulating."""
    cfg.validate()
    plant = cfg.build_plant()
    fxt = cfg.fxt_params()
    U = cfg.input_set()
    A, B = plant.linearize()
    model = zoh_discretize(A, B, cfg.T)
    mcfg = cfg.mpc_config(model)
    a3 = check_assumption3(mcfg)
    out = {
        "terminal_set_invariant": a3.invariant,
        "terminal_rate_ok": a3.rate_ok,
        "doa_bound_consistent": check_eq20_consistency(fxt),
        "r_bar": fxt.r_bar,
        "alpha": fxt.alpha,
    }
    sol = solve_ftocp(cfg.x0, mcfg)
    out["initial_feasible"] = sol.feasible
    if sol.feasible:
        z_end = predict_z_end(model, sol.z_seq[0], sol.v_seq[0])
        ctx = BarrierContext(z_end, 1)
        a1 = check_assumption1(ctx, sol.v_seq[0], fxt, plant, U, cfg.boundary_samples, cfg.seed)
        a2 = check_slack_ratio_bound(ctx, sol.v_seq[0], fxt, plant, U, cfg.boundary_samples, cfg.seed)
        out.update(assumption1_ok=a1.ok, assumption1_worst_margin=a1.worst_margin,
                   slack_ratio_ok=a2.ok, slack_ratio_max=a2.max_ratio)
    return out
