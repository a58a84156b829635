import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpcouple.bench import (INLET, OUTLET, Analog, AnalogConfig, ModalBasis, ParabolaInputs, Y_STAR,
                            analog_input_spec, build_benchmark_problem, build_synthetic_analog,
                            deformation_variance_field, eval_g, g1, g2, noisy_projection_variance,
                            parabola_from_inputs, project_modal, propagate_velocity_uncertainty)
from gpcouple.bench.velocity import Gaussian, evaluate_parabola
from gpcouple.coupling import fixed_point
from gpcouple.errors import ConfigurationError, DomainError
from gpcouple.uq import ensemble_stats, run_method3_cycle


def _g1_terms(x):
    return 0.12 + 0.18 * x + 0.06 * math.sin(2 * math.pi * x) + 0.05 * math.exp(-60 * (x - 0.7) ** 2) \
        + 0.03 * x * (1 - x)


def _g2_terms(x):
    return 0.58 - 0.22 * x + 0.03 * math.tanh(8 * (x - 0.4)) + 0.015 * math.sin(4 * math.pi * x)


# -- benchmark codes --------------------------------------------------------


def test_code_values_at_half():
    assert g1(0.5) == pytest.approx(0.2220359, abs=1e-6)
    assert g2(0.5) == pytest.approx(0.4899211, abs=1e-6)


@pytest.mark.parametrize("x", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_codes_match_term_by_term(x):
    assert eval_g(1, x) == pytest.approx(_g1_terms(x), abs=1e-10)
    assert eval_g(2, x) == pytest.approx(_g2_terms(x), abs=1e-10)


def test_tanh_term_vanishes_at_040():
    assert g2(0.4) == pytest.approx(0.58 - 0.22 * 0.4 + 0.015 * math.sin(1.6 * math.pi), abs=1e-15)


def test_unknown_code():
    with pytest.raises(ConfigurationError):
        eval_g(3, 0.5)


def test_surrogate_fixed_points(small_setup, large_setup):
    u20, _ = fixed_point(small_setup.problem)
    u200, _ = fixed_point(large_setup.problem)
    assert abs(u20[0] - Y_STAR) <= 0.02
    assert abs(u200[0] - Y_STAR) <= 5e-4


def test_small_design_rejected():
    with pytest.raises(ConfigurationError):
        build_benchmark_problem(2)


# -- modal basis --------------------------------------------------------------


def test_basis_is_orthonormal():
    b = ModalBasis.build()
    assert b.M.shape == (10, 3)
    np.testing.assert_allclose(b.M.T @ b.M, np.eye(3), atol=1e-10)


def test_projection_trivial_cases():
    b = ModalBasis.build()
    np.testing.assert_allclose(project_modal(b.M @ [1.0, 0.0, 0.0], b), [1, 0, 0], atol=1e-12)
    np.testing.assert_array_equal(project_modal(np.zeros(10), b), np.zeros(3))


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_projection_is_left_inverse(c):
    b = ModalBasis.build()
    np.testing.assert_allclose(project_modal(b.M @ np.array(c), b), c, atol=1e-10)


def test_noise_variance_inherited():
    b = ModalBasis.build()
    v = noisy_projection_variance(b, [1.0, 0.5, 0.3], 100_000, np.random.default_rng(0))
    np.testing.assert_allclose(v, 0.09, rtol=0.03)


def test_shapes_match_basis_at_levels():
    b = ModalBasis.build()
    np.testing.assert_allclose(b.shapes(b.levels), b.M, atol=1e-12)


def test_variance_field_reductions():
    b = ModalBasis.build()
    z = np.linspace(0, 1, 21)
    f = deformation_variance_field(0.09 * np.eye(3), b, z)
    np.testing.assert_allclose(f.variance, 0.09 * np.sum(b.shapes(z) ** 2, axis=1), rtol=1e-12)
    assert np.all(deformation_variance_field(np.zeros((3, 3)), b, z).variance == 0)
    with pytest.raises(DomainError):
        deformation_variance_field(np.diag([1.0, -1.0, 1.0]), b, z)


def test_variance_field_matches_monte_carlo():
    rng = np.random.default_rng(3)
    b = ModalBasis.build()
    G = rng.standard_normal((3, 3))
    cov = G @ G.T
    z = np.linspace(0.05, 0.95, 19)
    f = deformation_variance_field(cov, b, z)
    C = rng.multivariate_normal(np.zeros(3), cov, 100_000)
    Y = C @ b.shapes(z).T
    assert np.max(np.abs(Y.var(axis=0, ddof=1) / f.variance - 1)) <= 0.03


# -- parabolic profiles --------------------------------------------------------


def test_flat_profile():
    assert parabola_from_inputs(5.0, 0.0, 0.0) == (0.0, 0.0, 5.0)
    assert parabola_from_inputs(5.0, 0.0, 0.3) == (0.0, 0.0, 5.0)


def test_deviation_at_extremum():
    a, b, c = parabola_from_inputs(5.0, 0.05, 0.0)
    assert a * 0.25 + b * 0.5 + c - 5.0 == pytest.approx(0.05, abs=1e-10)


def test_constraints_on_random_inputs():
    rng = np.random.default_rng(0)
    n = 1000
    L = rng.uniform(0.5, 2.0, n)
    v = rng.normal(5, 1, n)
    M = rng.normal(0, 0.1, n)
    off = rng.uniform(-0.4, 0.4, n) * L
    a, b, c = parabola_from_inputs(v, M, off, L)
    xv = L / 2 + off
    mean = a * L ** 2 / 3 + b * L / 2 + c
    assert np.max(np.abs(mean - v)) <= 1e-10
    assert np.max(np.abs(2 * a * xv + b)) <= 1e-10
    assert np.max(np.abs(a * xv ** 2 + b * xv + c - v - M)) <= 1e-10


def test_bad_length():
    with pytest.raises(ConfigurationError):
        parabola_from_inputs(5.0, 0.05, 0.0, L=0.0)


def test_zero_variance_inputs_give_zero_field():
    fixed = ParabolaInputs(Gaussian(5.0, 0.0), Gaussian(0.05, 0.0), Gaussian(0.1, 0.0))
    f = propagate_velocity_uncertainty(fixed, 10, np.linspace(0, 1, 11), np.random.default_rng(0))
    np.testing.assert_allclose(f.variance, 0.0, atol=1e-25)


@pytest.mark.parametrize("inputs", [INLET, OUTLET])
def test_velocity_monte_carlo_converges(inputs):
    x = np.linspace(0, 1, 101)
    a = propagate_velocity_uncertainty(inputs, 2000, x, np.random.default_rng(1))
    b = propagate_velocity_uncertainty(inputs, 20000, x, np.random.default_rng(2))
    assert np.all(np.abs(a.mean - b.mean) <= 4 * np.sqrt(a.se_mean ** 2 + b.se_mean ** 2))


def test_evaluate_parabola_broadcasts():
    coeffs = parabola_from_inputs(np.array([5.0, 6.0]), np.array([0.05, 0.0]), np.array([0.0, 0.0]))
    v = evaluate_parabola(coeffs, np.linspace(0, 1, 5))
    assert v.shape == (2, 5) and np.all(v[1] == 6.0)


# -- synthetic analog -------------------------------------------------------------


@pytest.fixture(scope="module")
def analog():
    return build_synthetic_analog(AnalogConfig(steps=2))


def test_input_spec_has_nine_factors():
    spec = analog_input_spec(AnalogConfig())
    assert spec.n_x == 9
    assert spec.names == ["C", "S", "W", "BC", "h_l", "MSI", "grid_clamping", "C_creep", "C_growth"]
    assert set(spec.constants) == {"inlet_temperature", "grid_axial_resistance", "fast_flux"}


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AnalogConfig(grids=2)
    with pytest.raises(ConfigurationError):
        AnalogConfig(n_train=5)
    with pytest.raises(ConfigurationError):
        AnalogConfig(kappa=(1.0, 2.0))
    assert AnalogConfig().non_paper


def test_exact_coupling_contracts(analog):
    th = analog.nominal_theta()
    assert analog.estimate_rho(th) < 1
    outs, rec = analog.solve_cycle(th, "exact")
    assert all(np.all(np.isfinite(o)) for o in outs)


def test_surrogate_cycle_tracks_exact(analog):
    th = analog.nominal_theta()
    exact = analog.final_deformation(th, "exact")
    gp = analog.final_deformation(th, "gp-mean")
    assert np.abs(gp - exact).max() <= 0.02 * np.abs(exact).max()


def test_untrained_surrogates_raise():
    a = build_synthetic_analog(AnalogConfig(), train=False)
    with pytest.raises(ConfigurationError):
        a.solvers("gp-mean")


def test_cycle_path_counts(analog):
    th = analog.nominal_theta()
    _, rec = analog.solve_cycle(th, "gp-mean")
    for c in range(2):
        assert rec.path_points(c).shape[0] == sum(rec.counts)


def test_cycle_uncertainty_shrinks_with_denser_training():
    sds = []
    for n in (300, 600):
        a = build_synthetic_analog(AnalogConfig(n_train=n, steps=2))
        th = a.nominal_theta()
        e = run_method3_cycle(a.cycle_factory(th), a.initial_state(th), 40, 1)
        sd = np.sqrt(ensemble_stats(e).var)
        assert np.all(np.isfinite(sd))
        sds.append(sd.mean())
    assert sds[1] <= sds[0]


def test_sobol_model_runs_at_sampled_inputs(analog):
    rng = np.random.default_rng(0)
    row = analog.spec.transform(rng.random((1, analog.spec.width)))[0]
    y = analog.sobol_model()(analog.spec.as_dict(row))
    assert y.shape == (3 * analog.cfg.assemblies,) and np.all(np.isfinite(y))
