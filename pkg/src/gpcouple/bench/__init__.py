"""Concrete coupled problems: the analytical benchmark and application analogs."""
from .analog import Analog, AnalogConfig, analog_input_spec, build_synthetic_analog
from .benchmark import (DEFAULT_DOE_SEED, Y_STAR, build_benchmark_problem, eval_g, fit_surrogates, g1, g2)
from .modal import ModalBasis, deformation_variance_field, noisy_projection_variance, project_modal
from .velocity import INLET, OUTLET, ParabolaInputs, parabola_from_inputs, propagate_velocity_uncertainty
