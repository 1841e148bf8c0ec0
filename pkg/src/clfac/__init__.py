"""Certified sample-and-hold control with a learned critic in the loop.

A small library plus CLI around one case study: a control-affine system
driven at a fixed sampling period, a nonsmooth control Lyapunov function
with a calibrated decrease rate, a constant-bound pipeline that certifies
admissible sampling periods and relaxation windows, a grid-scan baseline
controller, and a constrained actor-critic step that keeps the certified
decrease while lowering accumulated cost.
"""
from .clf import (BoundsReport, ClfPair, RadiiSpec, admissible_windows,
                  annulus_grid, ball_grid, calibrate_kappa, clarke_clf,
                  compute_radii, direction_set, estimate_constants,
                  estimate_jbar, gldd, lipschitz_constants, sampling_bounds,
                  sublevel_annulus_grid)
from .actor_critic import (AcProblem, AcSolution, bellman_error_sq,
                           case_study_reward, constraint_margins, draw_thetas,
                           solve_ac, stage1_best)
from .config import ContourSpec, ExperimentConfig, config_from_dict, load_config
from .critic import (ActivationSpec, Envelope, WeightSet, case_study_activation,
                     case_study_weight_set, check_c4, critic_value,
                     critic_value_batch, envelope_functions)
from .dynamics import (SystemModel, euler_predict, integrate_interval,
                       integrate_with_cost, nonholonomic,
                       predictor_error_bound)
from .errors import (ClfacError, ConfigError, CostUndefined, DecayInfeasible,
                     EnvelopeOrderViolation, IntegrationDiverged, InvalidRadii,
                     NumericalFailure, RatioUndefined, SamplingTooCoarse,
                     WeightOutOfSet)
from .nominal import (DecayReport, NominalPolicy, certify_delta_bar,
                      control_grid, nominal_action, verify_decay)
from .simulator import (RunConfig, TrajectoryLog, contour_sweep, cost_ratio,
                        critic_decay_violations, margin_violations,
                        quasi_ih_cost, read_trajectory_csv, run_closed_loop,
                        saturation_fraction)
from .suite import Suite, build_suite

__version__ = "0.1.0"
