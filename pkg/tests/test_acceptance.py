"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a one-line PASS/FAIL summary with its measured values and
runtime; the lines are printed in the terminal summary (see conftest.py).
"""
import math
import time

import numpy as np
import pytest

from gpcouple.bench import (AnalogConfig, ModalBasis, Y_STAR, build_benchmark_problem, build_synthetic_analog,
                            g1, g2, noisy_projection_variance)
from gpcouple.bounds import (empirical_coverage, estimate_offset_sensitivity, estimate_post_map_constant,
                             linspace_ladder, variance_decay_slope)
from gpcouple.coupling import estimate_contraction, fixed_point
from gpcouple.kernels import ScalarKernel
from gpcouple.sensitivity import (additive_model, additive_spec, evaluate_plan, ishigami, ishigami_spec,
                                  saltelli_matrices, sobol_indices)
from gpcouple.stats import ks_two_sample, welch_t
from gpcouple.uq import ensemble_stats, run_method2, run_method3, run_method3_cycle

from .test_sensitivity import ishigami_oracle
from .test_stats import A5, B5, _ks_oracle, _welch_oracle

pytestmark = pytest.mark.acceptance

N = 500
GRID = np.linspace(0.0, 1.0, 1001)


@pytest.fixture(scope="module")
def ensembles(small_setup, large_setup):
    """M2 and M3 ensembles with master seed 1 and their runtimes."""
    out = {}
    for n, setup in ((20, small_setup), (200, large_setup)):
        for name, run in (("M3", run_method3), ("M2", run_method2)):
            t0 = time.perf_counter()
            e = run(setup.problem, N, 1)
            out[n, name] = (e, time.perf_counter() - t0)
    return out


def test_c01_benchmark_fixed_point(exact_problem, acceptance_log):
    t0 = time.perf_counter()
    u, path = fixed_point(exact_problem)
    dt = time.perf_counter() - t0
    err = abs(u[0] - Y_STAR)
    ok = path.converged and err <= 1e-6 and dt < 0.01
    acceptance_log(1, "benchmark fixed point", ok, f"y={u[0]:.9f} |y-y*|={err:.2e} M={path.M}", dt)
    assert ok


def test_c02_contraction(exact_problem, acceptance_log):
    t0 = time.perf_counter()
    rho = estimate_contraction(exact_problem, GRID, domain=[(0.0, 1.0)])
    dt = time.perf_counter() - t0
    ok = 0.25 <= rho <= 0.31 and dt < 0.1
    acceptance_log(2, "contraction estimate", ok, f"rho={rho:.4f} in [0.25, 0.31]", dt)
    assert ok


def test_c03_interpolation(small_setup, large_setup, acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    for setup in (small_setup, large_setup):
        X = setup.design.points
        for model, g in zip(setup.models, (g1, g2)):
            worst = max(worst, float(np.max(np.abs(model.mean(X)[:, 0] - g(X[:, 0])))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6
    acceptance_log(3, "GP interpolation n=20,200", ok, f"max residual={worst:.2e}", dt)
    assert ok


def _envelope(n, method, acceptance_log, crit, runtime_limit):
    e, dt = ENS[n, method]
    st = ensemble_stats(e)
    mean, var = float(st.mean[0]), float(st.var[0])
    ok = 0.34 <= mean <= 0.37 and 7e-5 <= var <= 6e-4 and dt < runtime_limit
    acceptance_log(crit, f"{method} n=20 envelopes", ok,
                   f"mean={mean:.6f} var={var:.3e} 95%=[{st.q025[0]:.6f}, {st.q975[0]:.6f}] "
                   f"excluded={st.excluded}", dt)
    return ok


ENS = {}


@pytest.fixture(scope="module", autouse=True)
def _share(ensembles):
    ENS.update(ensembles)


def test_c04_method3_small(acceptance_log):
    assert _envelope(20, "M3", acceptance_log, 4, 30.0)


def test_c05_method2_small(acceptance_log):
    assert _envelope(20, "M2", acceptance_log, 5, 300.0)


def test_c06_large_design(acceptance_log):
    parts, ok, total = [], True, 0.0
    for method in ("M3", "M2"):
        e, dt = ENS[200, method]
        st = ensemble_stats(e)
        total += dt
        mean, var = float(st.mean[0]), float(st.var[0])
        ok &= abs(mean - Y_STAR) <= 5e-4 and var <= 1e-8
        parts.append(f"{method} mean={mean:.7f} var={var:.2e}")
    acceptance_log(6, "n=200 both methods", ok, "; ".join(parts), total)
    assert ok


def test_c07_method_agreement(large_setup, acceptance_log):
    t0 = time.perf_counter()
    ps = []
    for seed in range(1, 11):
        if seed == 1:
            a, b = ENS[200, "M2"][0], ENS[200, "M3"][0]
        else:
            a, b = run_method2(large_setup.problem, N, seed), run_method3(large_setup.problem, N, seed)
        ps.append(welch_t(a.valid()[:, 0], b.valid()[:, 0]).p_value)
    dt = time.perf_counter() - t0
    passing = sum(p > 0.01 for p in ps)
    ok = passing >= 8
    acceptance_log(7, "Welch M2 vs M3 n=200", ok,
                   f"{passing}/10 seeds with p>0.01; p=" + ",".join(f"{p:.3f}" for p in ps), dt)
    assert ok


def test_c08_zero_offsets(small_setup, large_setup, acceptance_log):
    t0 = time.perf_counter()
    ok = True
    for setup in (small_setup, large_setup):
        u, _ = fixed_point(setup.problem)
        e = run_method3(setup.problem, 50, 1, zero_offsets=True)
        ok &= bool(np.all(e.samples == setup.problem.output(u)))
    dt = time.perf_counter() - t0
    acceptance_log(8, "zero-offset determinism", ok, "bitwise equal to mean path at n=20 and n=200", dt)
    assert ok


def test_c09_coverage(small_setup, acceptance_log):
    t0 = time.perf_counter()
    prob = small_setup.problem
    probes = np.linspace(0, 1, 5)
    L = estimate_offset_sensitivity(prob, probes)
    L_H = estimate_post_map_constant(prob, probes)
    rho = estimate_contraction(prob, GRID, domain=[(0.0, 1.0)])
    res = empirical_coverage(prob, N, 1, L_H, rho, L, slack=1e-8)
    dt = time.perf_counter() - t0
    ok = res.fraction == 1.0 and res.excluded == 0
    acceptance_log(9, "deviation-radius coverage", ok,
                   f"coverage={res.fraction:.3f} L_H={L_H:.3f} L=[{L[0]:.3f}, {L[1]:.3f}] rho={rho:.3f} "
                   f"max dev/radius={np.max(res.deviations / res.radii):.3f}", dt)
    assert ok


def test_c10_slope(acceptance_log):
    t0 = time.perf_counter()
    res = variance_decay_slope(ScalarKernel("Matern52", 0.25, 1.0), linspace_ladder([10, 20, 40, 80]))
    dt = time.perf_counter() - t0
    ok = 3.5 <= res.slope <= 6.0 and dt < 10.0
    acceptance_log(10, "variance-decay slope", ok, f"slope={res.slope:.3f} (theory {res.theory:.0f})", dt)
    assert ok


def test_c11_sobol(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    plan = saltelli_matrices(additive_spec(), 10_000, rng)
    add = sobol_indices(plan, evaluate_plan(plan, additive_model))
    add_err = float(np.max(np.abs(add.first[0] - [0.2, 0.8])))
    plan_i = saltelli_matrices(ishigami_spec(), 10_000, rng)
    ish = sobol_indices(plan_i, evaluate_plan(plan_i, ishigami))
    S, ST = ishigami_oracle()
    ish_err = float(max(np.max(np.abs(ish.first[0] - S)), np.max(np.abs(ish.total[0] - ST))))
    counts = plan.size == 10_000 * 4 and plan_i.size == 10_000 * 5
    nine = saltelli_matrices(build_synthetic_analog(train=False).spec, 1000, rng).size
    dt = time.perf_counter() - t0
    ok = add_err <= 0.05 and ish_err <= 0.05 and counts and nine == 11_000 and dt < 30.0
    acceptance_log(11, "Sobol correctness", ok,
                   f"additive err={add_err:.3f} Ishigami err={ish_err:.3f} rows(n_s=1000,n_x=9)={nine}", dt)
    assert ok


def test_c12_modal(acceptance_log):
    t0 = time.perf_counter()
    v = noisy_projection_variance(ModalBasis.build(), [1.0, 0.5, 0.3], 100_000, np.random.default_rng(7))
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(v / 0.09 - 1)))
    ok = err <= 0.03
    acceptance_log(12, "modal projection variance", ok, f"var={np.round(v, 5).tolist()} rel err={err:.4f}", dt)
    assert ok


def test_c13_statistical_tests(acceptance_log):
    t0 = time.perf_counter()
    t, df, p = _welch_oracle(A5, B5)
    w = welch_t(A5, B5)
    D, pk = _ks_oracle(A5, B5)
    k = ks_two_sample(A5, B5)
    hand = max(abs(w.statistic - t), abs(w.df - df), abs(w.p_value - p), abs(k.statistic - D), abs(k.p_value - pk))
    rng = np.random.default_rng(1)
    rej = np.mean([ks_two_sample(rng.standard_normal(500), rng.standard_normal(500)).p_value < 0.05
                   for _ in range(200)])
    dt = time.perf_counter() - t0
    ok = hand <= 1e-6 and 0.01 <= rej <= 0.12
    acceptance_log(13, "Welch and KS", ok, f"max |diff| vs oracle={hand:.1e} KS null rejection={rej:.3f}", dt)
    assert ok


def test_c14_synthetic_analog(acceptance_log):
    t0 = time.perf_counter()
    analog = build_synthetic_analog(AnalogConfig(steps=5))
    theta = analog.nominal_theta()
    rho = analog.estimate_rho(theta)
    exact = analog.final_deformation(theta, "exact")
    gp = analog.final_deformation(theta, "gp-mean")
    rel = float(np.abs(gp - exact).max() / np.abs(exact).max())
    e = run_method3_cycle(analog.cycle_factory(theta), analog.initial_state(theta), 200, 1)
    st = ensemble_stats(e)
    sd = np.sqrt(st.var)
    t_cycle = time.perf_counter() - t0
    plan = saltelli_matrices(analog.spec, 1000, np.random.default_rng(5))
    Y = evaluate_plan(plan, analog.sobol_model("gp-mean", 1))
    res = sobol_indices(plan, Y)
    dt = time.perf_counter() - t0
    ok = (rho < 1 and rel <= 0.02 and e.excluded <= 2 and np.all(np.isfinite(sd)) and e.info["steps"] == 5
          and plan.n_x == 9 and Y.shape[0] == 11_000 and res.evaluations == 11_000 and np.all(np.isfinite(Y))
          and dt < 600.0)
    acceptance_log(14, "synthetic analog cycle UQ + Sobol", ok,
                   f"rho={rho:.3f} gp-vs-exact={rel:.4f} excluded={e.excluded} max sd={sd.max():.4f} "
                   f"cycle {t_cycle:.0f}s, Sobol evaluations={res.evaluations} (non-paper placeholders)", dt)
    assert ok
