"""
Convergence analysis over solver traces.

- ``fit_rate`` fits log(min_{j<=t} residual_j^2) against log t; a slope near -1
  is the O(1/t) fixed-point rate.
- ``ensemble`` estimates expectations over seeds (PnP-SGD is random).
- ``budget_comparison`` runs several algorithms under one measurement budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .denoisers import Denoiser
from .errors import EnsembleError, PnPError, RateFitError
from .fidelity import FidelityTerm, SamplerFactory
from .signal import IterateTrace, Signal, SolverConfig, snr_db
from .signal_io import format_float
from .solvers import Algorithm, run
from ..utils.file_utils import atomic_write_text

logger = logging.getLogger(__name__)

SUMMARY_HEADER = "algorithm,b,budget,final_snr_db,final_sq_dist,iters"


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log t, log min-so-far squared residual)."""

    slope: float
    intercept: float
    t_range: Tuple[int, int]
    r_squared: float
    truncated_at: Optional[int] = None

    def __post_init__(self):
        t_min, t_max = self.t_range
        if t_min < 1 or t_max <= t_min:
            raise ValueError(f"invalid t range {self.t_range}")


def fit_rate(trace: IterateTrace, t_min: int, t_max: int) -> RateFit:
    """Fit the decay rate of the running-minimum squared residual over [t_min, t_max].

    If a residual in the range is exactly zero, the fit stops just before it
    and ``truncated_at`` records the iteration.
    """
    if t_min < 1 or t_max <= t_min:
        raise RateFitError(f"invalid t range [{t_min}, {t_max}]")
    iterations = trace.iterations()
    if iterations.size == 0 or iterations[0] > t_min or iterations[-1] < t_max:
        raise RateFitError(f"trace does not cover iterations [{t_min}, {t_max}]")

    running_min = np.minimum.accumulate(trace.residuals() ** 2)
    selected = (iterations >= t_min) & (iterations <= t_max)
    t = iterations[selected].astype(np.float64)
    values = running_min[selected]

    truncated_at = None
    zeros = np.flatnonzero(values == 0.0)
    if zeros.size:
        truncated_at = int(t[zeros[0]])
        t, values = t[: zeros[0]], values[: zeros[0]]
        logger.info("rate fit truncated at iteration %d (zero residual)", truncated_at)
    if t.size < 3:
        raise RateFitError(f"need at least 3 points to fit a rate, have {t.size}")

    log_t, log_v = np.log(t), np.log(values)
    slope, intercept = np.polyfit(log_t, log_v, 1)
    fitted = slope * log_t + intercept
    total = float(np.sum((log_v - log_v.mean()) ** 2))
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum((log_v - fitted) ** 2)) / total
    r_squared = min(max(r_squared, 0.0), 1.0)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        t_range=(int(t[0]), int(t[-1])),
        r_squared=r_squared,
        truncated_at=truncated_at,
    )


@dataclass(frozen=True)
class EnsembleSummary:
    algorithm: str
    b: int
    seeds: Tuple[int, ...]
    mean_final_sq_dist: float
    std_final_sq_dist: float
    mean_final_snr: float


def _mean_std(values: np.ndarray) -> Tuple[float, float]:
    if np.ptp(values) == 0.0:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values))


def ensemble(
    algorithm: Algorithm,
    f: FidelityTerm,
    d: Denoiser,
    config: SolverConfig,
    seeds: Sequence[int],
    x_star: Signal,
    truth: Optional[Signal] = None,
    x0: Optional[Signal] = None,
    sampler_factory: Optional[SamplerFactory] = None,
) -> EnsembleSummary:
    """Run once per seed and summarize the final distance to x_star and final SNR.

    SNR is measured against ``truth`` when given, otherwise against x_star.
    An all-zero reference has no SNR, and mean_final_snr is then NaN.
    Results are folded in seed order, so the summary does not depend on the
    order of ``seeds``.
    """
    seeds = tuple(sorted(int(s) for s in seeds))
    if len(seeds) < 2:
        raise ValueError("an ensemble needs at least two seeds")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"ensemble seeds must be distinct, got {seeds}")
    reference = truth if truth is not None else x_star
    has_snr = bool(np.any(reference.values))
    if not has_snr:
        logger.warning("ensemble reference signal is all zero; final SNR is reported as NaN")

    distances, snrs = [], []
    for seed in seeds:
        try:
            x_final, _ = run(
                algorithm,
                f,
                d,
                replace(config, seed=seed),
                x0=x0,
                sampler_factory=sampler_factory,
                clock=None,
            )
            if has_snr:
                snrs.append(snr_db(reference, x_final))
        except PnPError as e:
            raise EnsembleError(seed, e) from e
        distances.append(float(np.sum((x_final.values - x_star.values) ** 2)))

    mean_dist, std_dist = _mean_std(np.array(distances))
    mean_snr = _mean_std(np.array(snrs))[0] if snrs else float("nan")
    return EnsembleSummary(
        algorithm=Algorithm(algorithm).value,
        b=config.minibatch_b,
        seeds=seeds,
        mean_final_sq_dist=mean_dist,
        std_final_sq_dist=std_dist,
        mean_final_snr=mean_snr,
    )


@dataclass(frozen=True)
class ComparisonRow:
    algorithm: str
    final_snr_db: float
    iterations: int
    budget_consumed: float


def budget_comparison(
    algorithms: Sequence[Algorithm],
    f: FidelityTerm,
    d: Denoiser,
    config: SolverConfig,
    budget: float,
    truth: Signal,
    x0: Optional[Signal] = None,
    sampler_factory: Optional[SamplerFactory] = None,
) -> List[ComparisonRow]:
    """Final SNR and iteration count of each algorithm under the same budget."""
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    rows = []
    for algorithm in algorithms:
        algorithm = Algorithm(algorithm)
        x_final, trace = run(
            algorithm,
            f,
            d,
            config,
            x0=x0,
            truth=truth,
            budget_limit=budget,
            sampler_factory=sampler_factory,
            clock=None,
        )
        final = trace.final
        rows.append(
            ComparisonRow(
                algorithm=algorithm.value,
                final_snr_db=snr_db(truth, x_final),
                iterations=len(trace),
                budget_consumed=final.budget_consumed if final is not None else 0.0,
            )
        )
    return rows


@dataclass(frozen=True)
class SummaryRow:
    """One line of summary.csv: the outcome of an (algorithm, budget, seed) run."""

    algorithm: str
    b: int
    budget: float
    final_snr_db: float
    final_sq_dist: float
    iters: int


def format_number(value: float) -> str:
    """Compact form for budgets in file names and tables (10.0 -> '10')."""
    if float(value).is_integer() and math.isfinite(value):
        return str(int(value))
    return repr(float(value))


def format_summary(rows: Sequence[SummaryRow]) -> str:
    """Render summary rows as CSV text.

    Args:
        rows: Rows in the order they should appear.

    Returns:
        CSV text with SUMMARY_HEADER, newline terminated.
    """
    lines = [SUMMARY_HEADER]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row.algorithm,
                    str(row.b),
                    format_number(row.budget),
                    format_float(row.final_snr_db),
                    format_float(row.final_sq_dist),
                    str(row.iters),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_summary(path: str, rows: Sequence[SummaryRow]) -> None:
    """Write format_summary(rows) to path atomically."""
    atomic_write_text(path, format_summary(rows))
