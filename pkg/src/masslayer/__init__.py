"""Single transition layers in mass-conserving reaction-diffusion systems.

    u_t = eps^2 u_xx + f(u, v),   v_t = D v_xx - f(u, v)   on (0, 1), Neumann.

Modules: ``model`` (nonlinearities, roots, folds, Maxwell point),
``asymptotics`` (eps-independent layer data), ``stationary`` (Newton
solver), ``spectrum`` (linearised eigenvalues), ``dynamics`` (time
stepping), ``io`` and ``cli``.
"""

from .asymptotics import Direction, LayerAsymptotics, analyze, heteroclinic_profile, kappa_star
from .errors import MassLayerError
from .model import (Cubic, Custom, Hill, Tolerances, find_vstar, fold_points, make_model,
                    maxwell_integral_J, maxwell_slope_Jprime, roots_at, verify_assumptions)
from .spectrum import assemble_linearization, constrained_spectrum, scaling_study, spectrum_at
from .stationary import Grid, continuation_in_eps, newton_solve, solve_stationary

__version__ = "0.1.0"

__all__ = [
    "Cubic", "Custom", "Hill", "Tolerances", "Direction", "Grid", "LayerAsymptotics",
    "MassLayerError", "analyze", "assemble_linearization", "constrained_spectrum", "spectrum_at",
    "continuation_in_eps", "find_vstar", "fold_points", "heteroclinic_profile", "kappa_star",
    "make_model", "maxwell_integral_J", "maxwell_slope_Jprime", "newton_solve", "roots_at",
    "scaling_study", "solve_stationary", "verify_assumptions",
]
