import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.bench.phantoms import make_phantom  # noqa: E402
from src.core.denoisers import SoftThresholdDenoiser  # noqa: E402
from src.core.diagnostics import (  # noqa: E402
    SUMMARY_HEADER,
    SummaryRow,
    budget_comparison,
    ensemble,
    fit_rate,
    format_number,
    format_summary,
)
from src.core.errors import EnsembleError, RateFitError  # noqa: E402
from src.core.fidelity import (  # noqa: E402
    FidelityTerm,
    GaussianCSModel,
    SweepSampler,
    simulate_measurements,
)
from src.core.signal import IterateTrace, Signal, SolverConfig, TraceRecord  # noqa: E402
from src.core.solvers import (  # noqa: E402
    Algorithm,
    find_fixed_point,
    lipschitz_constant,
    max_component_lipschitz,
    run,
)
from tests.problems import LASSO_LAMBDA, lasso_instance  # noqa: E402


def _trace(residuals):
    trace = IterateTrace()
    for t, residual in enumerate(residuals, start=1):
        trace.append(TraceRecord(t, float(residual), float("nan"), float(t), 0))
    return trace


@pytest.fixture(scope="module")
def lasso():
    f, truth = lasso_instance()
    gamma = 1.0 / lipschitz_constant(f.model)
    d = SoftThresholdDenoiser(gamma * LASSO_LAMBDA)
    x_star = find_fixed_point(f, d, gamma, Signal.zeros((f.n,)), tol=1e-12, max_iters=200000)
    return f, truth, gamma, d, x_star


def test_fit_rate_recovers_inverse_t():
    t = np.arange(1, 201, dtype=float)
    fit = fit_rate(_trace(np.sqrt(1.0 / t)), 1, 200)
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit.intercept == pytest.approx(0.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.t_range == (1, 200)
    assert fit.truncated_at is None


def test_fit_rate_of_constant_is_flat():
    fit = fit_rate(_trace(np.full(50, 0.3)), 5, 50)
    assert fit.slope == pytest.approx(0.0, abs=1e-9)


def test_fit_rate_uses_running_minimum():
    """A residual that bounces back up does not raise the fitted curve."""
    t = np.arange(1, 101, dtype=float)
    residuals = 1.0 / t
    residuals[49] = 10.0
    fit = fit_rate(_trace(residuals), 1, 100)
    assert fit.slope == pytest.approx(-2.0, abs=0.05)


def test_fit_rate_truncates_at_zero_residual():
    t = np.arange(1, 101, dtype=float)
    residuals = 1.0 / t
    residuals[59:] = 0.0
    fit = fit_rate(_trace(residuals), 10, 100)
    assert fit.truncated_at == 60
    assert fit.t_range == (10, 59)
    assert fit.slope == pytest.approx(-2.0, abs=1e-9)


def test_fit_rate_errors():
    with pytest.raises(RateFitError):
        fit_rate(_trace([1.0, 0.0, 0.0, 0.0]), 1, 4)
    with pytest.raises(RateFitError):
        fit_rate(_trace([1.0, 0.5, 0.25]), 1, 10)
    with pytest.raises(RateFitError):
        fit_rate(_trace([1.0, 0.5, 0.25]), 3, 2)


def test_fit_rate_on_ista(lasso):
    f, _, gamma, d, _ = lasso
    _, trace = run(Algorithm.ISTA, f, d, SolverConfig(gamma=gamma, max_iters=1000), clock=None)
    assert fit_rate(trace, 10, 1000).slope <= -0.9


def test_ensemble_of_batch_solver_has_zero_spread(lasso):
    f, truth, gamma, d, x_star = lasso
    config = SolverConfig(gamma=gamma, max_iters=50)
    summary = ensemble(Algorithm.ISTA, f, d, config, [9, 3, 5], x_star, truth=truth)
    assert summary.seeds == (3, 5, 9)
    assert summary.std_final_sq_dist == 0.0
    assert summary.algorithm == "ista"


def test_ensemble_with_full_sweep_matches_ista(lasso):
    f, truth, gamma, d, x_star = lasso
    config = SolverConfig(gamma=gamma, minibatch_b=f.k, max_iters=40)
    ista = ensemble(Algorithm.ISTA, f, d, config, [1, 2], x_star, truth=truth)
    sgd = ensemble(
        Algorithm.SGD,
        f,
        d,
        config,
        [1, 2],
        x_star,
        truth=truth,
        sampler_factory=lambda k, b, seed: SweepSampler(k),
    )
    assert sgd.mean_final_sq_dist == ista.mean_final_sq_dist
    assert sgd.std_final_sq_dist == ista.std_final_sq_dist == 0.0
    assert sgd.mean_final_snr == ista.mean_final_snr


def test_ensemble_seed_validation(lasso):
    f, _, gamma, d, x_star = lasso
    config = SolverConfig(gamma=gamma, max_iters=1)
    with pytest.raises(ValueError):
        ensemble(Algorithm.ISTA, f, d, config, [1], x_star)
    with pytest.raises(ValueError):
        ensemble(Algorithm.ISTA, f, d, config, [1, 1], x_star)


def test_ensemble_names_failing_seed(lasso):
    f, _, gamma, _, x_star = lasso
    config = SolverConfig(gamma=1000.0 * gamma, max_iters=2000)
    with pytest.raises(EnsembleError) as info:
        with np.errstate(over="ignore", invalid="ignore"):
            ensemble(Algorithm.ISTA, f, SoftThresholdDenoiser(0.0), config, [4, 8], x_star)
    assert info.value.seed == 4


def test_ensemble_of_sgd_ignores_seed_order(lasso):
    f, truth, _, d, x_star = lasso
    gamma = 1.0 / max_component_lipschitz(f.model)
    config = SolverConfig(gamma=gamma, sigma=d.sigma, minibatch_b=3, max_iters=200)
    first = ensemble(Algorithm.SGD, f, d, config, [5, 1, 3], x_star, truth=truth)
    second = ensemble(Algorithm.SGD, f, d, config, [3, 5, 1], x_star, truth=truth)
    assert first == second
    assert first.seeds == (1, 3, 5)
    assert first.std_final_sq_dist > 0.0


def test_ensemble_with_zero_fixed_point_reports_nan_snr(lasso):
    """A strong threshold pins x* at zero; distances are still summarized."""
    f, _, gamma, _, _ = lasso
    d = SoftThresholdDenoiser(gamma * 100.0)
    x_star = find_fixed_point(f, d, gamma, Signal.zeros((f.n,)), tol=1e-12, max_iters=1000)
    assert not np.any(x_star.values)
    config = SolverConfig(gamma=gamma, max_iters=20)
    summary = ensemble(Algorithm.ISTA, f, d, config, [1, 2], x_star)
    assert summary.mean_final_sq_dist == 0.0
    assert summary.std_final_sq_dist == 0.0
    assert np.isnan(summary.mean_final_snr)


def test_budget_comparison_does_not_overshoot_with_uneven_minibatch(lasso):
    f, truth, _, d, _ = lasso
    assert f.k % 3 != 0
    gamma = 1.0 / max_component_lipschitz(f.model)
    config = SolverConfig(gamma=gamma, minibatch_b=3, max_iters=5000, seed=2)
    for budget in (1.0, 2.5, 10.0):
        (row,) = budget_comparison([Algorithm.SGD], f, d, config, budget, truth)
        assert row.iterations == (budget * f.k) // 3
        assert row.budget_consumed <= budget
        assert row.budget_consumed + 3 / f.k > budget


def test_larger_minibatch_gets_closer_to_fixed_point():
    """Mean final squared distance to x* does not grow with the minibatch size."""
    seed = 11
    model = GaussianCSModel.from_seed(128, 256, 50, seed, noise_sigma=0.01)
    truth = make_phantom("sparse_spikes", (256,), seed, sparsity=0.05)
    f = FidelityTerm(model, simulate_measurements(model, truth, seed))
    gamma = 1.0 / max_component_lipschitz(model)
    d = SoftThresholdDenoiser(gamma * 0.02)
    x_star = find_fixed_point(f, d, gamma, Signal.zeros((256,)), tol=1e-9, max_iters=500000)

    seeds = list(range(100, 120))
    means = []
    for b in (1, 2, 4, 8):
        config = SolverConfig(gamma=gamma, minibatch_b=b, max_iters=3000)
        summary = ensemble(Algorithm.SGD, f, d, config, seeds, x_star)
        means.append(summary.mean_final_sq_dist)
    for smaller, larger in zip(means, means[1:]):
        assert larger <= 1.05 * smaller


def test_budget_comparison_single_algorithm_matches_run(lasso):
    f, truth, gamma, d, _ = lasso
    config = SolverConfig(gamma=gamma, max_iters=100)
    rows = budget_comparison([Algorithm.FISTA], f, d, config, 10, truth)
    _, trace = run(Algorithm.FISTA, f, d, config, truth=truth, budget_limit=10, clock=None)
    assert len(rows) == 1
    assert rows[0].algorithm == "fista"
    assert rows[0].iterations == len(trace) == 10
    assert rows[0].final_snr_db == trace.final.snr_db
    assert rows[0].budget_consumed == 10.0
    with pytest.raises(ValueError):
        budget_comparison([Algorithm.ISTA], f, d, config, 0, truth)


def test_format_number():
    assert format_number(10.0) == "10"
    assert format_number(2.5) == "2.5"


def test_format_summary():
    rows = [
        SummaryRow("ista", 5, 10.0, 12.5, 0.25, 10),
        SummaryRow("sgd", 5, 30.0, 20.0, 0.125, 300),
    ]
    lines = format_summary(rows).splitlines()
    assert lines[0] == SUMMARY_HEADER
    assert lines[1] == "ista,5,10,12.5,0.25,10"
    assert lines[2] == "sgd,5,30,20,0.125,300"


if __name__ == "__main__":
    pytest.main()
