"""Prescribed-time dual-mode extremum-seeking control: simulation library and CLI.

Drives an unknown nonlinear plant to the minimizer of a measured cost by a
user-specified time T.  A timescale compression tau = t*T/(T-t) turns
asymptotic convergence in tau into prescribed-time convergence in t; the
controller combines a chirped dither, high-pass/low-pass estimation filters
for the input-direction cost derivative, and dual-mode (proportional plus
integral) feedback with gains that grow as t approaches T.
"""

from .timescale import PrescribedTime, tau_of_t, t_of_tau, dtau_dt, v_of_t, gain_schedule
from .plant import (PlantModel, AssumptionReport, AssumptionViolation,
                    EvaluationError, SolverError, eval_rhs, eval_cost,
                    lie_lgh, lie_lfh, lie_lg2h, steady_state_map,
                    steady_state_cost, find_equilibrium_optimum,
                    check_assumptions, get_plant, BUILTIN_PLANTS,
                    general_nonlinear, fed_batch_bioreactor, scalar_quadratic)
from .controller import (EscParams, ControllerState, initial_state, dither,
                         hp_deriv, nu_bar, lp_deriv, uhat_deriv,
                         control_output, target_control, averaged_rhs)
from .sim import (IntegratorConfig, Trajectory, StiffnessError, step_rk4,
                  step_rk45, max_step, closed_loop_rhs, simulate_esc,
                  simulate_target, simulate_averaged)
from .analysis import (ConvergenceReport, convergence_report,
                       decay_envelope_check, compare_trajectories,
                       estimate_tracking)
from .cli import (ScenarioConfig, ConfigError, load_config, loads_config,
                  serialize_config, run, sweep)

__version__ = "0.1.0"
