"""
Experiment runs: build one problem per seed, run every (algorithm, budget)
pair on it, and write one trace CSV per triple plus a summary.csv.

Problems are built once per seed and shared read-only by the triples of that
seed; the triples themselves are independent and run on a thread pool.
Output files are written only after the config validated and every triple
succeeded, and summary rows are always ordered by seed, then algorithm, then
budget, so the outputs do not depend on ``jobs``.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.denoisers import Denoiser, make_denoiser
from ..core.diagnostics import SummaryRow, format_number, write_summary
from ..core.errors import ConfigError, ExperimentError, PnPError
from ..core.fidelity import (
    BlurModel,
    FidelityTerm,
    ForwardModel,
    GaussianCSModel,
    gaussian_kernel,
    simulate_measurements,
)
from ..core.signal import IterateTrace, Signal, SolverConfig
from ..core.signal_io import write_trace
from ..core.solvers import Algorithm, default_step_size, find_fixed_point, run
from ..utils.file_utils import ensure_directory
from ..utils.rng import SEED_LIMIT
from .config import ExperimentConfig, ProblemSpec, validate_config
from .phantoms import make_phantom

logger = logging.getLogger(__name__)

SEED_OFFSET_ENV = "PNP_SEED_OFFSET"

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a solver run needs for one seed, plus the fix(P) oracle x_star."""

    seed: int
    truth: Signal
    fidelity: FidelityTerm
    denoiser: Denoiser
    solver_config: SolverConfig
    x_star: Signal


def seed_offset_from_env() -> int:
    """
    Reads the seed offset from PNP_SEED_OFFSET.

    Returns:
        The integer offset, 0 when the variable is unset or blank.

    Raises:
        ConfigError: If the variable is set but is not an integer.
    """
    raw = os.environ.get(SEED_OFFSET_ENV, "").strip()
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_OFFSET_ENV} must be an integer, got '{raw}'")


def effective_seeds(config: ExperimentConfig, offset: int) -> Tuple[int, ...]:
    """Configured seeds shifted by offset; each must stay in [0, 2**64)."""
    seeds = tuple(s + offset for s in config.experiment.seeds)
    for seed in seeds:
        if not 0 <= seed < SEED_LIMIT:
            raise ConfigError(f"seed {seed} (offset {offset}) is outside [0, 2**64)")
    return seeds


def build_model(problem: ProblemSpec, seed: int) -> ForwardModel:
    """Forward model for the problem section; the Gaussian matrix is seeded by seed."""
    if problem.model == "gaussian_cs":
        return GaussianCSModel.from_seed(
            problem.m, problem.n, problem.k, seed, noise_sigma=problem.noise_sigma
        )
    if problem.model == "blur":
        height, width = problem.shape
        kernel = gaussian_kernel(problem.kernel_size, problem.kernel_sigma)
        return BlurModel(kernel, (height, width), problem.k, noise_sigma=problem.noise_sigma)
    raise ConfigError(f"unknown model '{problem.model}'")


def build_problem(config: ExperimentConfig, seed: int) -> Problem:
    """Truth, model, noisy measurements, resolved gamma/sigma/rho and x_star for a seed.

    Args:
        config: The experiment config.
        seed: Effective seed; it drives the phantom, matrix, noise and sampler.

    Returns:
        The problem, shared read-only by every triple of that seed.

    Raises:
        FixedPointNotReachedError: If x_star is not found within
            experiment.fixed_point_max_iters.
    """
    spec = config.problem
    truth = make_phantom(
        spec.phantom, spec.shape, seed, sparsity=spec.sparsity, blocks=spec.blocks
    )
    model = build_model(spec, seed)
    fidelity = FidelityTerm(model, simulate_measurements(model, truth, seed))

    solver = config.solver
    gamma = solver.gamma
    if gamma is None:
        gamma = default_step_size(model, solver.step_rule, solver.minibatch_b)
    denoiser_spec = config.denoiser
    if denoiser_spec.sigma is not None:
        sigma = denoiser_spec.sigma
    elif denoiser_spec.lam is not None:
        sigma = gamma * denoiser_spec.lam
    else:
        sigma = 0.0
    denoiser = make_denoiser(denoiser_spec.variant, sigma, denoiser_spec.transform)
    rho = solver.admm_rho if solver.admm_rho is not None else 1.0 / gamma
    solver_config = SolverConfig(
        gamma=gamma,
        sigma=sigma,
        minibatch_b=solver.minibatch_b,
        max_iters=solver.max_iters,
        seed=seed,
        admm_rho=rho,
    )
    logger.debug("seed %d: %s, gamma=%.6g, rho=%.6g", seed, denoiser.describe(), gamma, rho)

    x_star = find_fixed_point(
        fidelity,
        denoiser,
        gamma,
        Signal.zeros(model.signal_shape),
        tol=config.experiment.fixed_point_tol,
        max_iters=config.experiment.fixed_point_max_iters,
    )
    return Problem(seed, truth, fidelity, denoiser, solver_config, x_star)


def trace_filename(algorithm: str, budget: float, seed: int) -> str:
    """Trace file name of a triple, e.g. ``sgd_b10_s3.csv``."""
    return f"{algorithm}_b{format_number(budget)}_s{seed}.csv"


def run_triple(
    problem: Problem, algorithm: Algorithm, budget: float, record_timing: bool = False
) -> Tuple[SummaryRow, IterateTrace]:
    """One budget-limited solver run; the returned row feeds summary.csv."""
    x_final, trace = run(
        algorithm,
        problem.fidelity,
        problem.denoiser,
        problem.solver_config,
        truth=problem.truth,
        budget_limit=budget,
        clock=time.perf_counter_ns if record_timing else None,
    )
    final = trace.final
    row = SummaryRow(
        algorithm=algorithm.value,
        b=problem.solver_config.minibatch_b,
        budget=budget,
        final_snr_db=final.snr_db if final is not None else float("nan"),
        final_sq_dist=float(np.sum((x_final.values - problem.x_star.values) ** 2)),
        iters=len(trace),
    )
    return row, trace


def run_experiment(
    config: ExperimentConfig,
    outdir: Optional[str] = None,
    jobs: int = 1,
    seed_offset: Optional[int] = None,
) -> int:
    """Run every (algorithm, budget, seed) triple of a config and write the CSVs.

    Args:
        config: The experiment config.
        outdir: Output directory, overriding experiment.output_dir.
        jobs: Number of worker threads, at least 1.
        seed_offset: Shift applied to every seed; read from PNP_SEED_OFFSET
            when None.

    Returns:
        0 on success, 2 on a config error (nothing written) and 1 when a
        problem or run failed (the failing seed or triple is logged).
    """
    try:
        validate_config(config)
        if jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        if seed_offset is None:
            seed_offset = seed_offset_from_env()
        seeds = sorted(effective_seeds(config, seed_offset))
    except ConfigError as e:
        logger.error("invalid config: %s", e)
        return EXIT_CONFIG_ERROR

    outdir = outdir or config.output_dir
    algorithms = [Algorithm.parse(name) for name in config.experiment.algorithms]
    budgets = config.experiment.budgets
    record_timing = config.experiment.record_timing

    with ThreadPoolExecutor(max_workers=jobs) as executor:
        problem_futures = {seed: executor.submit(build_problem, config, seed) for seed in seeds}
        problems: Dict[int, Problem] = {}
        for seed, future in problem_futures.items():
            try:
                problems[seed] = future.result()
            except (PnPError, ValueError) as e:
                logger.error("building the problem for seed %d failed: %s", seed, e)
                return EXIT_RUNTIME_ERROR

        triples = [
            (seed, algorithm, budget)
            for seed in seeds
            for algorithm in algorithms
            for budget in budgets
        ]
        futures = [
            executor.submit(run_triple, problems[seed], algorithm, budget, record_timing)
            for seed, algorithm, budget in triples
        ]
        results: List[Tuple[SummaryRow, IterateTrace]] = []
        for (seed, algorithm, budget), future in zip(triples, futures):
            try:
                results.append(future.result())
            except (PnPError, ValueError) as e:
                logger.error("%s", ExperimentError(algorithm.value, budget, seed, e))
                return EXIT_RUNTIME_ERROR

    try:
        ensure_directory(outdir)
        for (seed, algorithm, budget), (row, trace) in zip(triples, results):
            path = os.path.join(outdir, trace_filename(algorithm.value, budget, seed))
            write_trace(path, trace)
            logger.info(
                "%s budget=%s seed=%d: %d iterations, final SNR %.3f dB",
                algorithm.value,
                format_number(budget),
                seed,
                row.iters,
                row.final_snr_db,
            )
        write_summary(os.path.join(outdir, "summary.csv"), [row for row, _ in results])
    except OSError as e:
        logger.error("writing results to %s failed: %s", outdir, e)
        return EXIT_RUNTIME_ERROR

    logger.info("wrote %d traces and summary.csv to %s", len(results), outdir)
    return EXIT_OK
