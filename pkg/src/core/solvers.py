"""
Plug-and-play solvers.

All gradient-based solvers are built on the denoiser-gradient operator

    P(x) = denoise_sigma(x - gamma * grad D(x))

PnP-ISTA is fixed-point iteration on P, PnP-FISTA adds the q_k momentum
recurrence, PnP-SGD replaces grad D by a minibatch estimate (no momentum), and
PnP-ADMM alternates an exact quadratic x-solve, a denoising step and a dual
update.

Budget accounting counts component-gradient evaluations: a batch iteration
touches all k components (one budget unit), an SGD iteration touches b of
them (b/k units). Counts are kept as integers so budget limits are exact.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Tuple

import numpy as np

from .denoisers import Denoiser
from .errors import FixedPointNotReachedError, NonFiniteIterateError, ShapeMismatchError
from .fidelity import (
    FidelityTerm,
    ForwardModel,
    MinibatchSampler,
    Sampler,
    SamplerFactory,
    power_iteration,
)
from .signal import IterateTrace, Signal, SolverConfig, TraceRecord, snr_db

logger = logging.getLogger(__name__)

STEP_RULES = ("lipschitz", "minibatch")


class Algorithm(str, Enum):
    ISTA = "ista"
    FISTA = "fista"
    SGD = "sgd"
    ADMM = "admm"

    @classmethod
    def parse(cls, name: str) -> Algorithm:
        """Case-insensitive lookup by name, raising ValueError for unknown names."""
        try:
            return cls(name.lower())
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm '{name}', expected one of {choices}")


def lipschitz_constant(model: ForwardModel, iters: int = 50, tol: float = 1e-9) -> float:
    """L = largest eigenvalue of A^T A, the Lipschitz constant of grad D."""
    return power_iteration(model.gram, model.n, iters=iters, tol=tol)


def max_component_lipschitz(model: ForwardModel) -> float:
    """max_i Lip(grad D_i) = k * max_i ||A_i||^2."""
    return model.k * max(model.component_lipschitz(i) for i in range(model.k))


def default_step_size(model: ForwardModel, rule: str = "lipschitz", b: int = 1) -> float:
    """Step size gamma for a step rule.

    ``lipschitz``: 1/L. ``minibatch``: 1/L_b with L_b = L + (L_max - L)/b, the
    expected smoothness of the b-sample with-replacement gradient estimate; it
    keeps PnP-SGD stable and is shared by every algorithm in a comparison.

    Args:
        model: Forward model that L and L_max are computed from.
        rule: One of STEP_RULES.
        b: Minibatch size for the ``minibatch`` rule.

    Returns:
        gamma = 1 / L or 1 / L_b.
    """
    lipschitz = lipschitz_constant(model)
    if rule == "lipschitz":
        constant = lipschitz
    elif rule == "minibatch":
        if b < 1:
            raise ValueError(f"b must be >= 1, got {b}")
        constant = lipschitz + (max_component_lipschitz(model) - lipschitz) / b
    else:
        raise ValueError(f"unknown step rule '{rule}', expected one of {STEP_RULES}")
    logger.info("step rule %s: L=%.6g, gamma=%.6g", rule, lipschitz, 1.0 / constant)
    return 1.0 / constant


@dataclass(frozen=True, eq=False)
class SolverState:
    """Iterates and bookkeeping of a running solver.

    ``x_curr`` is the reported iterate; for PnP-ADMM it is the denoiser output v.
    """

    x_curr: Signal
    x_prev: Signal
    s_curr: Signal
    q_curr: float = 1.0
    q_prev: float = 1.0
    iter: int = 0
    components_used: int = 0
    budget_consumed: float = 0.0
    sampler: Optional[Sampler] = None
    admm_x: Optional[Signal] = None
    admm_v: Optional[Signal] = None
    admm_u: Optional[Signal] = None


def initial_state(
    algorithm: Algorithm,
    f: FidelityTerm,
    config: SolverConfig,
    x0: Optional[Signal] = None,
    sampler: Optional[Sampler] = None,
) -> SolverState:
    """x0 = 0 (unless given), s0 = x0, q0 = 1; ADMM starts from v0 = x0, u0 = 0."""
    if x0 is None:
        x0 = Signal.zeros(f.model.signal_shape)
    f.model.check_signal(x0)
    if algorithm is Algorithm.SGD and sampler is None:
        sampler = MinibatchSampler(f.k, config.minibatch_b, config.seed)
    state = SolverState(x_curr=x0, x_prev=x0, s_curr=x0, sampler=sampler)
    if algorithm is Algorithm.ADMM:
        state = replace(state, admm_x=x0, admm_v=x0, admm_u=x0.with_values(np.zeros(x0.size)))
    return state


def _checked(values: np.ndarray, like: Signal, iteration: int, algorithm: str) -> Signal:
    if not np.all(np.isfinite(values)):
        raise NonFiniteIterateError(iteration, algorithm)
    return like.with_values(values)


def _apply_P(
    f: FidelityTerm, d: Denoiser, gamma: float, values: np.ndarray, shape: Tuple[int, ...]
) -> np.ndarray:
    return d.apply_array(values - gamma * f.gradient(values), shape)


def operator_P(f: FidelityTerm, d: Denoiser, gamma: float, x: Signal) -> Signal:
    """P(x) = denoise_sigma(x - gamma * grad D(x))."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    f.model.check_signal(x)
    d.check_shape(x.shape)
    return x.with_values(_apply_P(f, d, gamma, x.values, x.shape))


def fixed_point_residual(f: FidelityTerm, d: Denoiser, gamma: float, x: Signal) -> float:
    """||x - P(x)|| with the full-gradient P."""
    return float(np.linalg.norm(x.values - _apply_P(f, d, gamma, x.values, x.shape)))


def _advance(state: SolverState, f: FidelityTerm, components: int, **changes) -> SolverState:
    used = state.components_used + components
    return replace(
        state, iter=state.iter + 1, components_used=used, budget_consumed=used / f.k, **changes
    )


def step_pnp_ista(
    state: SolverState, f: FidelityTerm, d: Denoiser, config: SolverConfig
) -> SolverState:
    """One PnP-ISTA step, x^k = P(s^{k-1}) with s^k = x^k.

    Args:
        state: Current solver state.
        f: The fidelity term.
        d: The denoiser.
        config: Step size and related parameters.

    Returns:
        The next state; k components are charged to the budget.

    Raises:
        NonFiniteIterateError: If the new iterate has NaN or Inf entries.
    """
    s = state.s_curr
    x_new = _checked(
        _apply_P(f, d, config.gamma, s.values, s.shape), s, state.iter + 1, "ista"
    )
    return _advance(state, f, f.k, x_prev=state.x_curr, x_curr=x_new, s_curr=x_new)


def next_q(q: float) -> float:
    """q_k = (1 + sqrt(1 + 4 q_{k-1}^2)) / 2."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * q * q))


def step_pnp_fista(
    state: SolverState, f: FidelityTerm, d: Denoiser, config: SolverConfig
) -> SolverState:
    """One PnP-FISTA step: x^k = P(s^{k-1}), then extrapolate s^k with next_q momentum."""
    s = state.s_curr
    iteration = state.iter + 1
    x_new = _checked(_apply_P(f, d, config.gamma, s.values, s.shape), s, iteration, "fista")
    q_new = next_q(state.q_curr)
    momentum = (state.q_curr - 1.0) / q_new
    s_values = x_new.values + momentum * (x_new.values - state.x_curr.values)
    s_new = _checked(s_values, s, iteration, "fista")
    return _advance(
        state,
        f,
        f.k,
        x_prev=state.x_curr,
        x_curr=x_new,
        s_curr=s_new,
        q_prev=state.q_curr,
        q_curr=q_new,
    )


def step_pnp_sgd(
    state: SolverState, f: FidelityTerm, d: Denoiser, config: SolverConfig
) -> SolverState:
    """One PnP-SGD step, denoise(x - gamma * minibatch gradient).

    The state's sampler is advanced by one draw, and len(indices) components
    are charged to the budget.
    """
    if state.sampler is None:
        raise ValueError("PnP-SGD needs a sampler in the solver state")
    if state.sampler.k != f.k:
        raise ShapeMismatchError(f"sampler is for k={state.sampler.k}, fidelity term has k={f.k}")
    x = state.x_curr
    indices = state.sampler.draw()
    step = x.values - config.gamma * f.sampled_gradient(x.values, indices)
    x_new = _checked(d.apply_array(step, x.shape), x, state.iter + 1, "sgd")
    return _advance(state, f, len(indices), x_prev=x, x_curr=x_new, s_curr=x_new)


def step_pnp_admm(
    state: SolverState, f: FidelityTerm, d: Denoiser, config: SolverConfig
) -> SolverState:
    """One PnP-ADMM sweep of the x, v and u updates with penalty config.admm_rho.

    The reported iterate x_curr is v, the denoiser output.
    """
    if state.admm_v is None or state.admm_u is None:
        raise ValueError("PnP-ADMM needs v and u in the solver state")
    rho = config.admm_rho
    iteration = state.iter + 1
    v, u = state.admm_v.values, state.admm_u.values
    shape = state.admm_v.shape

    x = f.model.solve_shifted(f.adjoint_y + rho * (v - u), rho)
    v_new = d.apply_array(x + u, shape)
    u_new = u + x - v_new

    like = state.admm_v
    x_sig = _checked(x, like, iteration, "admm")
    v_sig = _checked(v_new, like, iteration, "admm")
    u_sig = _checked(u_new, like, iteration, "admm")
    return _advance(
        state,
        f,
        f.k,
        x_prev=state.x_curr,
        x_curr=v_sig,
        s_curr=v_sig,
        admm_x=x_sig,
        admm_v=v_sig,
        admm_u=u_sig,
    )


STEPPERS = {
    Algorithm.ISTA: step_pnp_ista,
    Algorithm.FISTA: step_pnp_fista,
    Algorithm.SGD: step_pnp_sgd,
    Algorithm.ADMM: step_pnp_admm,
}


def find_fixed_point(
    f: FidelityTerm,
    d: Denoiser,
    gamma: float,
    x0: Signal,
    tol: float,
    max_iters: int,
) -> Signal:
    """Iterate P from x0 until ||x - P(x)|| <= tol and return that x.

    Args:
        f: The fidelity term.
        d: The denoiser.
        gamma: Step size inside P.
        x0: Starting point; returned unchanged if it already meets tol.
        tol: Residual tolerance, positive.
        max_iters: Number of applications of P allowed before giving up.

    Returns:
        The first iterate whose residual is within tol.

    Raises:
        FixedPointNotReachedError: If max_iters applications are not enough.
        NonFiniteIterateError: If the iteration diverges.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    f.model.check_signal(x0)
    d.check_shape(x0.shape)
    values = x0.values
    residual = float("inf")
    for iteration in range(max_iters + 1):
        image = _apply_P(f, d, gamma, values, x0.shape)
        residual = float(np.linalg.norm(values - image))
        if residual <= tol:
            logger.debug("fixed point reached after %d iterations", iteration)
            return x0.with_values(values)
        if not np.isfinite(residual):
            raise NonFiniteIterateError(iteration + 1, "fixed-point")
        values = image
    raise FixedPointNotReachedError(residual, max_iters, tol)


def budget_steps(budget_limit: float, k: int, per_step: int) -> int:
    """Number of whole steps that fit in a measurement budget.

    Args:
        budget_limit: Budget in full-gradient passes, positive and finite.
        k: Number of fidelity components.
        per_step: Component gradients evaluated by one step (k for batch
            solvers, b for PnP-SGD).

    Returns:
        floor(budget_limit * k / per_step), computed on the decimal value of
        the budget so that e.g. 0.3 is exactly 3/10 and not its binary float.
    """
    if not budget_limit > 0 or not math.isfinite(budget_limit):
        raise ValueError(f"budget_limit must be positive and finite, got {budget_limit}")
    if k < 1 or per_step < 1:
        raise ValueError(f"k and per_step must be >= 1, got k={k}, per_step={per_step}")
    return math.floor(Fraction(repr(float(budget_limit))) * k / per_step)


def run(
    algorithm: Algorithm,
    f: FidelityTerm,
    d: Denoiser,
    config: SolverConfig,
    x0: Optional[Signal] = None,
    truth: Optional[Signal] = None,
    budget_limit: Optional[float] = None,
    sampler_factory: Optional[SamplerFactory] = None,
    clock: Optional[Callable[[], int]] = time.perf_counter_ns,
) -> Tuple[Signal, IterateTrace]:
    """Run a solver until max_iters or until the next step would exceed the budget.

    Every record carries the full-gradient residual ||x^k - P(x^k)||, the SNR
    against ``truth`` (NaN without one), the budget consumed so far and the
    cumulative stepper wall time (0 when ``clock`` is None).

    Args:
        algorithm: Which solver to run.
        f: The fidelity term.
        d: The denoiser.
        config: Step size, penalty, minibatch size, max_iters and seed.
        x0: Starting point, zeros by default.
        truth: Ground truth for the SNR column, optional.
        budget_limit: Measurement budget in full-gradient passes, optional.
        sampler_factory: Builds the PnP-SGD sampler from (k, b, seed); the
            default is the seeded with-replacement MinibatchSampler.
        clock: Nanosecond clock for wall_ns, or None for deterministic zeros.

    Returns:
        (x_final, trace), with one trace record per completed step.
    """
    algorithm = Algorithm(algorithm)
    sampler = None
    if algorithm is Algorithm.SGD and sampler_factory is not None:
        sampler = sampler_factory(f.k, config.minibatch_b, config.seed)
    state = initial_state(algorithm, f, config, x0, sampler)
    if truth is not None:
        f.model.check_signal(truth)
    stepper = STEPPERS[algorithm]

    steps = config.max_iters
    if budget_limit is not None:
        per_step = state.sampler.b if state.sampler is not None else f.k
        steps = min(steps, budget_steps(budget_limit, f.k, per_step))

    logger.debug(
        "%s: %s, gamma=%g, rho=%g, b=%d, %d steps",
        algorithm.value,
        d.describe(),
        config.gamma,
        config.admm_rho,
        config.minibatch_b,
        steps,
    )

    trace = IterateTrace()
    elapsed = 0
    for _ in range(steps):
        started = clock() if clock is not None else 0
        state = stepper(state, f, d, config)
        if clock is not None:
            elapsed += clock() - started
        x = state.x_curr
        trace.append(
            TraceRecord(
                iter_index=state.iter,
                fixed_point_residual=fixed_point_residual(f, d, config.gamma, x),
                snr_db=snr_db(truth, x) if truth is not None else float("nan"),
                budget_consumed=state.budget_consumed,
                wall_ns=elapsed,
            )
        )
    return state.x_curr, trace
