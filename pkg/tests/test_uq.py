import numpy as np
import pytest

from gpcouple.bench.benchmark import Y_STAR, benchmark_problem
from gpcouple.coupling import CouplingProblem, SolverBox, SurrogateSolver, fixed_point
from gpcouple.errors import InsufficientDataError, NonConvergenceError
from gpcouple.gp import fit
from gpcouple.kernels import ScalarKernel
from gpcouple.uq import (McEnsemble, ensemble_stats, replication_seed, run_method2, run_method3,
                         run_method3_cycle)


def test_stats_of_one_two_three():
    s = ensemble_stats(np.array([1.0, 2.0, 3.0]))
    assert s.mean[0] == 2.0 and s.var[0] == 1.0


def test_constant_samples_have_zero_covariance():
    s = ensemble_stats(np.full((10, 2), 0.7))
    np.testing.assert_allclose(s.cov, np.zeros((2, 2)), atol=1e-30)


def test_quantiles_follow_linear_rule():
    s = ensemble_stats(np.arange(1.0, 101.0))
    assert s.q025[0] == pytest.approx(3.475, abs=1e-12)
    assert s.q975[0] == pytest.approx(97.525, abs=1e-12)


def test_covariance_is_symmetric_psd(rng):
    s = ensemble_stats(rng.standard_normal((50, 4)) @ rng.standard_normal((4, 4)))
    np.testing.assert_array_equal(s.cov, s.cov.T)
    assert np.linalg.eigvalsh(s.cov).min() >= -1e-10 * np.trace(s.cov)


def test_too_few_samples():
    with pytest.raises(InsufficientDataError):
        ensemble_stats(np.array([1.0]))


def _ensemble(converged):
    n = len(converged)
    return McEnsemble(np.arange(n, dtype=float).reshape(-1, 1), np.array(converged), np.ones(n), [0] * n, "M3")


def test_excluded_replications_are_counted():
    s = ensemble_stats(_ensemble([True] * 199 + [False]))
    assert s.n == 199 and s.excluded == 1


def test_too_many_exclusions_fail():
    with pytest.raises(NonConvergenceError):
        ensemble_stats(_ensemble([True] * 98 + [False] * 2))


def test_replication_seeds_are_distinct():
    seeds = {replication_seed(1, m, j) for m in ("M2", "M3") for j in range(100)}
    assert len(seeds) == 200
    assert replication_seed(1, "M3", 5) == replication_seed(1, "M3", 5)


@pytest.mark.parametrize("fixture", ["small_setup", "large_setup"])
def test_zero_offsets_reproduce_mean_path_bitwise(fixture, request):
    prob = request.getfixturevalue(fixture).problem
    u, _ = fixed_point(prob)
    e = run_method3(prob, 20, 3, zero_offsets=True)
    assert np.all(e.samples == prob.output(u))


def test_method3_is_deterministic(small_setup):
    a = run_method3(small_setup.problem, 30, 7)
    b = run_method3(small_setup.problem, 30, 7)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_method2_is_deterministic(small_setup):
    a = run_method2(small_setup.problem, 10, 7)
    b = run_method2(small_setup.problem, 10, 7)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_replication_depends_only_on_its_index(small_setup):
    a = run_method3(small_setup.problem, 30, 7)
    b = run_method3(small_setup.problem, 10, 7)
    np.testing.assert_array_equal(a.samples[:10], b.samples)


def test_parallel_matches_sequential(small_setup):
    a = run_method3(small_setup.problem, 8, 7, jobs=1)
    b = run_method3(small_setup.problem, 8, 7, jobs=2)
    np.testing.assert_array_equal(a.samples, b.samples)


def _zero_variance_problem():
    model = fit(ScalarKernel("Matern52", 0.25, 1.0), [[0.5]], [0.5], 0.0)
    s1 = SurrogateSolver([model], name="const-gp")
    s2 = SolverBox(lambda x, th: x, 1, 1)
    return CouplingProblem((s1, s2), 0.5)


def test_zero_variance_collapse():
    prob = _zero_variance_problem()
    for run in (run_method2, run_method3):
        e = run(prob, 5, 1)
        assert np.all(e.samples == 0.5)


def test_variance_shrinks_with_design_density(small_setup, large_setup):
    v20 = ensemble_stats(run_method3(small_setup.problem, 100, 1)).var[0]
    v200 = ensemble_stats(run_method3(large_setup.problem, 100, 1)).var[0]
    assert v200 * 1e3 <= v20


def test_methods_agree_on_dense_design(large_setup):
    m2 = ensemble_stats(run_method2(large_setup.problem, 50, 2)).mean[0]
    m3 = ensemble_stats(run_method3(large_setup.problem, 50, 2)).mean[0]
    assert abs(m2 - m3) <= 1e-4
    assert abs(m3 - Y_STAR) <= 5e-4


def test_offset_norms_are_recorded(small_setup):
    e = run_method3(small_setup.problem, 10, 1)
    assert e.offset_norms.shape == (10, 2)
    assert np.all(e.offset_norms > 0)


def test_single_step_cycle_equals_method3_in_law(small_setup):
    prob = small_setup.problem
    cyc = run_method3_cycle([prob], prob.u0, 400, 5)
    m3 = run_method3(prob, 400, 6)
    a, b = ensemble_stats(cyc), ensemble_stats(m3)
    assert abs(a.mean[0] - b.mean[0]) <= 4 * np.sqrt((a.var[0] + b.var[0]) / 400)
    assert 0.7 <= a.var[0] / b.var[0] <= 1.4


def test_cycle_zero_offsets_reproduce_mean_cycle(small_setup):
    prob = small_setup.problem
    e = run_method3_cycle([prob, prob], prob.u0, 5, 1, zero_offsets=True)
    assert np.all(e.samples == e.mean_path_output)


def test_ensemble_csv(tmp_path, small_setup):
    e = run_method3(small_setup.problem, 5, 1)
    e.to_csv(tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 6
