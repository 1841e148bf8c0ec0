"""Composition root: builds every derived object a run needs, in order.

The pipeline resolves an ordering subtlety: the outer radius comes from
the lower critic envelope alone, but the core radius needs the upper
envelope, whose slope is a Lipschitz constant estimated on the outer
ball.  So the outer radius is fixed first, the feature Lipschitz constant
is estimated on that ball, and only then are the remaining radii and
constants computed.  All stages are deterministic, so the preliminary
estimate and the one recorded in the final report agree exactly.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._accel import use_numba
from . import clf as clf_mod
from .actor_critic import AcProblem, case_study_reward
from .clf import (BoundsReport, RadiiSpec, admissible_windows, calibrate_kappa,
                  clarke_clf, compute_radii, estimate_jbar, estimate_constants,
                  lipschitz_constants, sampling_bounds, sublevel_annulus_grid)
from .config import ExperimentConfig
from .critic import (LOWER_COEFF, case_study_activation, case_study_weight_set,
                     envelope_functions)
from .dynamics import integrate_with_cost, nonholonomic
from .errors import DecayInfeasible
from .nominal import NominalPolicy, certify_delta_bar, control_grid


@dataclass
class Suite:
    exp: ExperimentConfig
    model: object
    clf: object
    activation: object
    weight_set: object
    q1: object
    q2: object
    radii: RadiiSpec
    bounds: BoundsReport
    control_grid: np.ndarray
    sublevel_points: np.ndarray
    j_bar: float
    kappa_worst_ratio: float
    certification: dict
    windows: tuple
    delta_eff: float
    warnings: list = field(default_factory=list)

    reward = staticmethod(case_study_reward)
    q1_lower_coeff = LOWER_COEFF

    def use_kernels(self) -> bool:
        return (use_numba() and self.model.name == "nonholonomic"
                and self.activation.name == "clarke4"
                and self.clf.tag == "clarke4")

    def _grid_for(self, resolution: int) -> np.ndarray:
        if resolution == self.exp.control_resolution:
            return self.control_grid
        return control_grid(self.model, resolution)

    def make_policy(self, run_cfg) -> NominalPolicy:
        return NominalPolicy(control_grid=self._grid_for(run_cfg.control_resolution),
                             clf=self.clf, delta=run_cfg.delta,
                             substeps=run_cfg.substeps,
                             r_star=self.radii.r_star)

    def make_problem(self, run_cfg) -> AcProblem:
        return AcProblem(model=self.model, clf=self.clf,
                         activation=self.activation,
                         weight_set=self.weight_set, radii=self.radii,
                         bounds=self.bounds, reward=case_study_reward,
                         eps1=run_cfg.eps1, eps2=run_cfg.eps2,
                         eps3=run_cfg.eps3, delta=run_cfg.delta,
                         control_grid=self._grid_for(run_cfg.control_resolution),
                         q1=self.q1, q2=self.q2,
                         k_draws=run_cfg.theta_draws,
                         refine_max_evals=run_cfg.refine_max_evals)

    def make_cost_integrator(self, substeps: int):
        if self.use_kernels():
            from . import kernels

            def integrator(reward, x, u, delta):
                if reward is not case_study_reward:
                    return integrate_with_cost(self.model, reward, x, u,
                                               delta, substeps)
                y1, y2, y3, c = kernels._rk4_cost(
                    float(x[0]), float(x[1]), float(x[2]),
                    float(u[0]), float(u[1]), delta, substeps)
                return np.array([y1, y2, y3]), c
        else:
            def integrator(reward, x, u, delta):
                return integrate_with_cost(self.model, reward, x, u, delta,
                                           substeps)
        return integrator

    def eps_membership(self) -> dict:
        """Where the configured relaxations sit relative to the certified windows."""
        out = {}
        for name, value, window in (("eps1", self.exp.eps1, self.windows[0]),
                                    ("eps2", self.exp.eps2, self.windows[1]),
                                    ("eps3", self.exp.eps3, self.windows[2])):
            lo, hi = window
            if value < lo:
                verdict = "below"
            elif value > hi:
                verdict = "above"
            else:
                verdict = "inside"
            out[name] = {"value": value, "window": [lo, hi],
                         "verdict": verdict}
        return out

    def bounds_document(self) -> dict:
        from dataclasses import asdict
        doc = {
            "bounds": asdict(self.bounds),
            "radii": asdict(self.radii),
            "j_bar": self.j_bar,
            "kappa_w": self.clf.kappa_w,
            "kappa_worst_ratio": self.kappa_worst_ratio,
            "delta_eff": self.delta_eff,
            "certification": {repr(d): rep.to_dict()
                              for d, rep in self.certification.items()},
            "membership": {
                "delta": {"value": self.exp.delta,
                          "certified_max": self.bounds.delta1_bar,
                          "verdict": ("inside" if
                                      self.exp.delta <= self.bounds.delta1_bar
                                      else "above")},
                **self.eps_membership(),
            },
            "warnings": list(self.warnings),
        }
        for key in ("eps1_window", "eps2_window", "eps3_window"):
            doc["bounds"][key] = list(doc["bounds"][key])
        return doc


def build_suite(exp: ExperimentConfig) -> Suite:
    """Run the bounds pipeline for one experiment configuration."""
    exp.validate()
    model = nonholonomic()
    activation = case_study_activation()
    weight_set = case_study_weight_set()
    j_bar = estimate_jbar(activation, weight_set, exp.R, exp.grid_density)
    base_clf = clarke_clf()
    q1_pre, _ = envelope_functions(weight_set, activation, 1.0)
    r_star_outer = q1_pre.inverse(j_bar + exp.eta_R)
    L_f, L_phi, L_V = lipschitz_constants(model, base_clf, activation,
                                          r_star_outer)
    q1, q2 = envelope_functions(weight_set, activation, L_phi)
    radii = compute_radii(q1, q2, exp.R, exp.r, exp.eta_R, j_bar,
                          eta_r=exp.eta_r)
    grid = control_grid(model, exp.control_resolution)
    points = sublevel_annulus_grid(base_clf, radii.r_star,
                                   j_bar + exp.eta_R)
    kappa, worst = calibrate_kappa(base_clf.v, model, points, grid,
                                   ladder=exp.kappa_ladder,
                                   tau0=exp.gldd_tau0,
                                   levels=exp.gldd_levels)
    if kappa is None:
        raise DecayInfeasible(
            f"no ladder coefficient admissible; best available ratio {worst:.3g}")
    pair = clarke_clf(kappa)
    bounds = estimate_constants(model, pair, activation, radii,
                                exp.grid_density)
    delta_bar, certification = certify_delta_bar(
        model, pair, grid, points, exp.delta_bar_candidates,
        substeps=exp.substeps, r_star=radii.r_star)
    bounds.delta_bar = delta_bar
    d0, d1 = sampling_bounds(bounds, weight_set.theta_bar, radii.v_star)
    bounds.delta0_bar = d0
    bounds.delta1_bar = d1
    warnings = []
    delta_eff = exp.delta
    if exp.delta > d1:
        delta_eff = d1
        warnings.append(
            f"sampling period {exp.delta:g} exceeds the certified bound "
            f"{d1:g}; windows reported at the certified bound")
    windows = admissible_windows(bounds, delta_eff)
    bounds.eps1_window, bounds.eps2_window, bounds.eps3_window = windows
    bounds.validate()
    suite = Suite(exp=exp, model=model, clf=pair, activation=activation,
                  weight_set=weight_set, q1=q1, q2=q2, radii=radii,
                  bounds=bounds, control_grid=grid, sublevel_points=points,
                  j_bar=j_bar, kappa_worst_ratio=worst,
                  certification=certification, windows=windows,
                  delta_eff=delta_eff, warnings=warnings)
    for name, info in suite.eps_membership().items():
        if info["verdict"] != "inside":
            warnings.append(
                f"{name}={info['value']:g} is {info['verdict']} the certified "
                f"window [{info['window'][0]:g}, {info['window'][1]:g}]")
    if suite.use_kernels():
        from . import kernels
        kernels.warmup()
    return suite
