import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from privcast._validation import (
    DegenerateFitError,
    FitFailure,
    InfeasibleDiscretizationError,
    ParameterError,
)
from privcast.distmodel import (
    MODEL_PARAMS,
    DEFAULT_M2,
    DEFAULT_S,
    DiscreteDistribution,
    DistanceModelRegressor,
    FitDataset,
    ModelConstants,
    NormalParams,
    ShortestPathNormal,
    build_fit_dataset,
    compare_distributions,
    discretize,
    estimate_mu,
    estimate_sigma,
    evaluate_model,
    fit_model_constants,
    fit_normal,
    model_bias_report,
)
from privcast.graph import generate_k_growing, pooled_histogram


def test_fit_normal_two_equal_masses():
    p = fit_normal([0, 4, 4])
    assert p.mu == pytest.approx(1.5) and p.sigma == pytest.approx(0.5)


def test_fit_normal_ignores_self_pairs():
    assert fit_normal([100, 4, 4]) == fit_normal([0, 4, 4])


@pytest.mark.parametrize("counts", [[0, 0, 7], [5, 9], [3]])
def test_fit_normal_degenerate(counts):
    with pytest.raises(DegenerateFitError):
        fit_normal(counts)


def test_fit_normal_on_n2000_k6(g2000):
    p = fit_normal(pooled_histogram(g2000))
    assert 3.0 <= p.mu <= 3.6
    assert abs(estimate_mu(2000, 6) - p.mu) <= 0.25


def test_discretize_closed_form_head():
    d = discretize(NormalParams(3.33, 0.65), 2000, 6)
    assert d.mass[0] == 1 / 2000 == 0.0005
    assert d.mass[1] == 6 * (2 * 2000 - 6 - 1) / 2000 ** 2
    assert d.mass[1] == pytest.approx(0.0059895, abs=1e-15)
    assert abs(d.mass.sum() - 1) <= 1e-9
    assert int(np.argmax(d.mass)) == 3


def test_discretize_tail_rule():
    from scipy import stats

    p, eps = NormalParams(3.33, 0.65), 1e-6
    d = discretize(p, 2000, 6, eps)
    dist = stats.norm(p.mu, p.sigma)
    assert dist.sf(d.t_max) <= eps < dist.sf(d.t_max - 1)


def test_discretize_rejects_tiny_networks():
    # 1/2 + 1*(4-1-1)/4 = 1 leaves nothing for the tail
    with pytest.raises(InfeasibleDiscretizationError):
        discretize(NormalParams(1.0, 0.5), 2, 1)


def test_discretize_underflow_is_infeasible():
    with pytest.raises(InfeasibleDiscretizationError):
        discretize(NormalParams(-1e4, 0.01), 100, 2)


@pytest.mark.parametrize("eps", [0.0, -1e-3, 0.2])
def test_discretize_epsilon_domain(eps):
    with pytest.raises(ParameterError):
        discretize(NormalParams(3.0, 0.6), 100, 2, eps)


@given(st.floats(1.5, 8.0), st.floats(0.2, 1.5), st.integers(10, 10 ** 6), st.integers(1, 5))
def test_discretize_is_a_distribution(mu, sigma, n, k):
    d = discretize(NormalParams(mu, sigma), n, k)
    assert abs(d.mass.sum() - 1) <= 1e-9
    assert np.all(d.mass >= 0)
    assert d.mass[0] == 1 / n
    assert d.mass[1] == k * (2 * n - k - 1) / n ** 2


@given(st.floats(1.5, 8.0), st.floats(0.2, 1.5), st.floats(1e-9, 1e-1), st.floats(1e-4, 1.0))
def test_t_max_grows_as_epsilon_shrinks(mu, sigma, eps, shrink):
    p = NormalParams(mu, sigma)
    assert discretize(p, 1000, 3, eps * shrink).t_max >= discretize(p, 1000, 3, eps).t_max


def test_padded_distribution():
    d = discretize(NormalParams(3.33, 0.65), 2000, 6)
    long = d.padded(20)
    assert len(long) == 20 and long.mass[: len(d)].tolist() == d.mass.tolist()
    assert d.padded(2) is d
    with pytest.raises(ParameterError):
        DiscreteDistribution(np.array([0.5, 0.4]), 10, 1, 1e-6)


def test_default_estimates():
    mu = 0.595 * math.log(4270) / math.exp(1.884) + 0.341 * math.log(3252) \
        + 0.241 / math.exp(1.884) - 0.224
    assert estimate_mu(2000, 6) == pytest.approx(mu, abs=1e-3)
    assert estimate_mu(2000, 6) == pytest.approx(3.33, abs=0.01)
    sigma = 0.0345 * math.log(1850) + 1.222 / math.exp(1.806) + 0.189
    assert estimate_sigma(2000, 6) == pytest.approx(sigma, abs=1e-3)
    assert estimate_sigma(2000, 6) == pytest.approx(0.649, abs=0.005)


def test_model_identity_cases():
    m3 = ModelConstants("M3", {"alpha": 1, "beta": 1, "gamma": 0, "epsilon": 0})
    for n in (10, 2000, 10 ** 6):
        assert estimate_mu(n, 4, m3) == pytest.approx(math.log(n), rel=1e-15)
    flat = ModelConstants("S", {"a": 0, "b": 1, "c": 0, "d": 1, "e": 0.5})
    assert estimate_sigma(123, 7, flat) == 0.5


def test_sigma_estimates_in_band_for_k6_and_up():
    for n in (500, 5000, 50_000, 10 ** 6):
        for k in range(6, 11):
            assert 0.2 <= estimate_sigma(n, k) <= 0.9


@pytest.mark.xfail(strict=True, reason="default sigma constants exceed 0.9 for k<6 at large n (1.07..1.33 at k=2)")
def test_sigma_estimates_in_band_down_to_k2():
    for n in (500, 5000, 50_000, 10 ** 6):
        for k in range(2, 11):
            assert 0.2 <= estimate_sigma(n, k) <= 0.9


def test_mu_estimate_monotone():
    n = np.logspace(2, 6, 40)
    for k in range(1, 21):
        assert np.all(np.diff(evaluate_model(DEFAULT_M2, n, k)) > 0)
    k = np.arange(1, 21)
    for n in (100, 1e4, 1e6):
        assert np.all(np.diff(evaluate_model(DEFAULT_M2, n, k)) < 0)


def test_model_arity_and_json():
    assert {m: len(v) for m, v in MODEL_PARAMS.items()} == {"M1": 5, "M2": 7, "M3": 4,
                                                            "M4": 12, "S": 5}
    assert ModelConstants.from_json(DEFAULT_M2.to_json()) == DEFAULT_M2
    with pytest.raises(ParameterError):
        ModelConstants("M3", {"alpha": 1})
    with pytest.raises(ParameterError):
        ModelConstants("M9", {})


def test_m4_large_n_stays_finite():
    c = ModelConstants.from_vector("M4", [0.5, 2, 0.3, 0.01, 0.2, 0.3, 1, 1, 1, 1, 0.3, 1.5])
    assert np.all(np.isfinite(evaluate_model(c, [10, 1e3, 1e6], [2, 4, 6])))


def _grid_data(model, n_values=(300, 700, 1500, 4000, 9000, 30000), ks=range(1, 9)):
    n, k = np.array([(a, b) for a in n_values for b in ks], dtype=float).T
    y = evaluate_model(model, n, k)
    return FitDataset(n, k, y, np.full_like(y, 0.5))


def test_recover_m1_from_noise_free_data():
    true = ModelConstants("M1", {"alpha": 0.7, "beta": 1.8, "gamma": 1.1, "delta": 0.35,
                                 "epsilon": 0.4})
    data = _grid_data(true)
    got = fit_model_constants(data, "M1")
    rel = lambda a, b: abs(a - b) / abs(b)
    # beta and epsilon only enter through alpha*ln(beta) + epsilon
    for name in ("alpha", "gamma", "delta"):
        assert rel(got.constants[name], true.constants[name]) < 1e-4
    offset = lambda c: c["alpha"] * math.log(c["beta"]) + c["epsilon"]
    assert rel(offset(got.constants), offset(true.constants)) < 1e-4
    pred = evaluate_model(got, data.n, data.k)
    assert np.max(np.abs(pred - data.mu_hat) / data.mu_hat) < 1e-6


def test_recover_m2_predictions_from_noise_free_data():
    data = _grid_data(DEFAULT_M2)
    start = ModelConstants.from_vector("M2", DEFAULT_M2.vector * 1.2)
    got = fit_model_constants(data, "M2", init=start)
    pred = evaluate_model(got, data.n, data.k)
    assert np.max(np.abs(pred - data.mu_hat)) < 1e-6


def test_fit_underdetermined():
    data = FitDataset([2000], [6], [3.3], [0.65])
    with pytest.raises(FitFailure):
        fit_model_constants(data, "M2")
    with pytest.raises(FitFailure):
        fit_model_constants(_grid_data(DEFAULT_M2, (500,), (2,)), "M2")


def test_fit_non_convergence_carries_best_so_far():
    data = _grid_data(DEFAULT_M2)
    reg = DistanceModelRegressor("M1", max_nfev=1)
    with pytest.raises(FitFailure) as info:
        reg.fit(data.X, data.mu_hat)
    assert info.value.constants is not None and info.value.residual is not None


def test_regressor_follows_estimator_api():
    reg = DistanceModelRegressor(model="S", max_nfev=500)
    assert reg.get_params()["model"] == "S"
    twin = clone(reg)
    assert twin.get_params() == reg.get_params()
    data = _grid_data(DEFAULT_S)
    twin.fit(data.X, data.mu_hat)
    assert np.allclose(twin.predict(data.X), data.mu_hat, atol=1e-6)
    assert twin.score(data.X, data.mu_hat) > 0.999999


def test_bias_report():
    data = _grid_data(DEFAULT_M2)
    rep = model_bias_report(data, DEFAULT_M2)
    assert np.all(rep.residuals == 0)
    one = FitDataset([2000], [6], [3.0], [0.6])
    rep = model_bias_report(one, DEFAULT_M2)
    q = rep.quartiles
    assert q[0] == q[1] == q[2] == pytest.approx(estimate_mu(2000, 6) - 3.0)
    assert rep.to_csv().splitlines()[0] == "n,k,observed,predicted,residual"
    with pytest.raises(ParameterError):
        model_bias_report(FitDataset([], [], [], []), DEFAULT_M2)


def test_dataset_csv_round_trip():
    data = build_fit_dataset([(200, 2), (300, 3)], seeds=[0, 1])
    assert len(data) == 4
    back = FitDataset.from_csv(data.to_csv())
    assert np.array_equal(back.mu_hat, data.mu_hat)
    assert data.to_csv().splitlines()[0] == "n,k,mu_hat,sigma_hat"
    assert "np." not in data.to_csv()


def test_bias_on_fresh_graphs_with_default_constants():
    data = build_fit_dataset([(n, k) for n in (500, 1000, 2000) for k in (2, 4, 6)],
                             seeds=[101, 102])
    assert model_bias_report(data, DEFAULT_M2).median_abs <= 0.2


def test_m2_fit_over_fifty_graphs():
    grid = [(n, k) for n in (500, 1000, 2000, 5000, 10000) for k in range(2, 11)]
    grid += [(20000, k) for k in (2, 4, 6, 8, 10)]
    rows = []
    for i, (n, k) in enumerate(grid):
        p = fit_normal(pooled_histogram(generate_k_growing(n, k, 1000 + i), 200, seed=i))
        rows.append((n, k, p.mu, p.sigma))
    data = FitDataset(*np.array(rows).T)
    c = fit_model_constants(data, "M2")
    assert len(c.constants) == 7
    assert c.stats["residual_std"] <= 0.15


def test_shortest_path_normal_estimator(g2000):
    est = ShortestPathNormal(epsilon=1e-6)
    assert est.get_params() == {"epsilon": 1e-6}
    est.fit(pooled_histogram(g2000))
    d = est.discretize(2000, 6)
    assert int(np.argmax(d.mass)) == 3


@pytest.fixture(scope="module")
def k_scores():
    out = {}
    for k in (2, 4, 6):
        out[k] = compare_distributions(pooled_histogram(generate_k_growing(2000, k, 5)))
    return out


def test_normal_beats_poisson_and_geometric(k_scores):
    for k, scores in k_scores.items():
        assert set(scores) == {"normal", "weibull", "poisson", "geometric", "binomial"}
        for other in ("poisson", "geometric"):
            assert scores["normal"] < scores[other] / 10, (k, scores)


def test_normal_beats_binomial_beyond_k2(k_scores):
    for k in (4, 6):
        assert k_scores[k]["normal"] < k_scores[k]["binomial"]


@pytest.mark.xfail(strict=True, reason="left-skewed pmf: Weibull wins for k<=6, binomial edges out at k=2")
def test_normal_scores_best_overall(k_scores):
    for scores in k_scores.values():
        assert scores["normal"] == min(scores.values())
