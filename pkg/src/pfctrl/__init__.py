"""Stabilisation and estimation for linear plants with singular, time-varying gains."""

__version__ = "0.1.0"

from .controller import (AdaptiveController, ControllerConfig, PersistenceController,
                         select_lambdas, sigma_estimate)
from .errors import *  # noqa: F401,F403
from .gains import (Constant, PESpec, Sinusoid, TabulatedSpline, WindowedBump, bump_schedule,
                    check_pe, make_gain)
from .lti_model import (CanonicalData, PlantModel, canonical_from_coefficients,
                        canonical_transform, controllability_indices, verify_canonical_structure)
from .observer import observer_transform, simulate_observer
from .pfilter import PersistenceFilter, k_exponent
from .simulator import Trajectory, fit_decay_rate, integrate, lyapunov_trace
from .spacecraft import SpacecraftParams, run_paper_scenario

__all__ = [
    "AdaptiveController", "CanonicalData", "Constant", "ControllerConfig", "PESpec",
    "PersistenceController", "PersistenceFilter", "PlantModel", "Sinusoid", "SpacecraftParams",
    "TabulatedSpline", "Trajectory", "WindowedBump", "bump_schedule", "canonical_from_coefficients",
    "canonical_transform", "check_pe", "controllability_indices", "fit_decay_rate", "integrate",
    "k_exponent", "lyapunov_trace", "make_gain", "observer_transform", "run_paper_scenario",
    "select_lambdas", "sigma_estimate", "simulate_observer", "verify_canonical_structure",
]
