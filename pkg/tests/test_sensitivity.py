import numpy as np
import pytest

from gpcouple.errors import ConfigurationError
from gpcouple.sensitivity import (InputSpec, Normal, SaltelliPlan, Uniform, additive_model, additive_spec,
                                  aggregated_indices, evaluate_plan, ishigami, ishigami_spec, saltelli_matrices,
                                  shares_to_csv, sobol_indices)


def ishigami_oracle(a=7.0, b=0.1):
    """Closed-form first-order and total indices from the variance decomposition."""
    pi = np.pi
    V1 = 0.5 * (1 + b * pi ** 4 / 5) ** 2
    V2 = a ** 2 / 8
    V13 = b ** 2 * pi ** 8 * (1 / 18 - 1 / 50)
    V = V1 + V2 + V13
    return np.array([V1, V2, 0.0]) / V, np.array([V1 + V13, V2, V13]) / V


def _run(spec, model, n_s, seed=0, **kw):
    plan = saltelli_matrices(spec, n_s, np.random.default_rng(seed))
    return plan, sobol_indices(plan, evaluate_plan(plan, model), **kw)


def test_oracle_matches_brute_force_variance():
    rng = np.random.default_rng(0)
    x = rng.uniform(-np.pi, np.pi, (400_000, 3))
    y = np.sin(x[:, 0]) + 7 * np.sin(x[:, 1]) ** 2 + 0.1 * x[:, 2] ** 4 * np.sin(x[:, 0])
    V = 0.5 * (1 + 0.1 * np.pi ** 4 / 5) ** 2 + 49 / 8 + 0.01 * np.pi ** 8 * (1 / 18 - 1 / 50)
    assert np.var(y) == pytest.approx(V, rel=0.01)


def test_additive_model_oracle():
    plan, res = _run(additive_spec(), additive_model, 10_000)
    np.testing.assert_allclose(res.first[0], [0.2, 0.8], atol=0.05)
    assert abs(res.first[0].sum() - 1) <= 0.05
    assert np.all(res.total[0] - res.first[0] <= 0.05)


def test_single_active_input():
    _, res = _run(additive_spec(), lambda th: th["x1"], 10_000)
    np.testing.assert_allclose(res.first[0], [1.0, 0.0], atol=0.05)


def test_ishigami_against_closed_form():
    S, ST = ishigami_oracle()
    assert S[0] == pytest.approx(0.3139, abs=1e-4) and S[1] == pytest.approx(0.4424, abs=1e-4)
    _, res = _run(ishigami_spec(), ishigami, 10_000)
    np.testing.assert_allclose(res.first[0], S, atol=0.05)
    np.testing.assert_allclose(res.total[0], ST, atol=0.05)


def _nine_factor_spec():
    return InputSpec([("C", [Normal(0, 1)] * 4), ("S", [Normal(0, 1)] * 4), ("W", [Normal(0, 1)] * 4),
                      ("BC", [Normal(5, 0.05)] * 5)] + [(f"p{i}", Uniform(0, 1)) for i in range(5)])


def test_evaluation_counts():
    spec = _nine_factor_spec()
    assert spec.n_x == 9
    plan = saltelli_matrices(spec, 1000, np.random.default_rng(0))
    assert plan.size == 11_000
    one = InputSpec([("x", Uniform(0, 1))])
    assert saltelli_matrices(one, 50, np.random.default_rng(0)).size == 150


def test_vector_factor_swaps_jointly():
    spec = _nine_factor_spec()
    plan = saltelli_matrices(spec, 20, np.random.default_rng(1))
    sl = spec.slices()
    for i, name in enumerate(spec.names):
        ab = plan.AB(i)
        np.testing.assert_array_equal(ab[:, sl[name]], plan.B[:, sl[name]])
        rest = np.ones(spec.width, bool)
        rest[sl[name]] = False
        np.testing.assert_array_equal(ab[:, rest], plan.A[:, rest])


def test_invalid_distributions():
    with pytest.raises(ConfigurationError):
        Normal(0.0, 0.0)
    with pytest.raises(ConfigurationError):
        Uniform(1.0, 1.0)
    with pytest.raises(ConfigurationError):
        saltelli_matrices(additive_spec(), 1, np.random.default_rng(0))


def test_constants_are_passed_not_sampled():
    spec = InputSpec([("x", Uniform(0, 1))], constants={"flux": 1.0})
    plan = saltelli_matrices(spec, 5, np.random.default_rng(0))
    assert spec.width == 1 and spec.as_dict(plan.rows[0])["flux"] == 1.0


def test_degenerate_output_is_flagged():
    _, res = _run(additive_spec(), lambda th: 3.0, 100)
    assert res.degenerate[0] and np.all(np.isnan(res.first))


def test_determinism():
    _, a = _run(ishigami_spec(), ishigami, 500, seed=4)
    _, b = _run(ishigami_spec(), ishigami, 500, seed=4)
    np.testing.assert_array_equal(a.first, b.first)


def test_clipped_values_reported():
    _, res = _run(additive_spec(), lambda th: th["x1"], 200)
    assert np.all((res.first_clipped >= 0) & (res.first_clipped <= 1))
    d = res.to_dict()
    assert "first" in d and "first_clipped" in d


def test_bootstrap_error_shrinks_with_sample_size():
    _, small = _run(ishigami_spec(), ishigami, 1000, bootstrap=200, rng=np.random.default_rng(0))
    _, big = _run(ishigami_spec(), ishigami, 10_000, bootstrap=200, rng=np.random.default_rng(0))
    assert np.all(big.first_se < small.first_se)
    assert np.all(big.total_se < small.total_se)


def test_aggregated_shares(tmp_path):
    _, res = _run(additive_spec(), additive_model, 10_000)
    singles = aggregated_indices(res, {"x1": ["x1"], "x2": ["x2"]})
    assert singles["normalized"]["x1"] == pytest.approx(res.first_clipped[0, 0] / res.first_clipped[0].sum())
    assert singles["normalized"]["x1"] == pytest.approx(0.2, abs=0.05)
    assert aggregated_indices(res, {"all": ["x1", "x2"]})["normalized"]["all"] == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        aggregated_indices(res, {"a": ["x1"]})
    with pytest.raises(ConfigurationError):
        aggregated_indices(res, {"a": ["x1", "x2"], "b": ["x2"]})
    shares_to_csv(singles, tmp_path / "pie.csv")
    assert (tmp_path / "pie.csv").read_text().startswith("label,share")


def test_output_count_mismatch():
    plan = saltelli_matrices(additive_spec(), 10, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        sobol_indices(plan, np.zeros(39))


def test_spec_round_trip():
    spec = _nine_factor_spec()
    again = InputSpec.from_dict(spec.to_dict())
    assert again.names == spec.names and again.width == spec.width


def test_plan_csv(tmp_path):
    plan = saltelli_matrices(additive_spec(), 4, np.random.default_rng(0))
    plan.to_csv(tmp_path / "plan.csv")
    assert len((tmp_path / "plan.csv").read_text().splitlines()) == 1 + plan.size
