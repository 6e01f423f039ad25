"""Multi-rate control: an MPC planner at the slow rate and a fixed-time
barrier QP tracker at the fast rate, with a closed-loop simulator."""

from .config import ConfigError, load_config, parse_config, serialize_config
from .fxts import (
    BarrierContext,
    FxtParams,
    assemble_lowlevel_qp,
    derive_params,
    es_clf_policy,
    fxt_doa,
    fxt_time,
    low_level_policy,
    signed_deficiency_pow,
)
from .geometry import Ball, Box, DiscreteLtiModel, Polytope, dist_to_box, polytope_erode_ball, zoh_discretize
from .mpc import ConfigurationError, MpcConfig, build_ftocp, shifted_candidate, solve_ftocp
from .plant import Segway, SegwayParams, double_integrator, rk4_step, segway, single_integrator
from .qp import QpProblem, QpSolution, QpStatus, SolverSettings, check_feasibility, solve_qp
from .sim import ScenarioConfig, SimReport, TrajectoryLog, check_eq20_consistency, check_periodic_safety, run_scenario

__version__ = "0.1.0"
