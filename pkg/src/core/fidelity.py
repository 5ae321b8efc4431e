"""
Forward models and component-decomposed data-fidelity terms.

The data term is an average of k components, D(x) = (1/k) sum_i D_i(x), with
D_i(x) = (k/2) ||y_i - A_i x||^2, so that D(x) = (1/2) ||y - A x||^2. Each
component only touches its own block of measurements y_i.

Two forward models are provided:

- ``GaussianCSModel``: a dense m x n Gaussian matrix whose rows are split into
  k contiguous blocks.
- ``BlurModel``: circular 2D convolution with an odd-sized kernel; component i
  owns the i-th band of rows of the blurred image. The operator is applied
  with FFTs and never stored.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Optional, Protocol, Tuple

import numpy as np
from scipy import fft, linalg

from .errors import ShapeMismatchError, SolverError
from .signal import MeasurementSet, Signal
from .transforms import check_transform, forward_transform
from ..utils.rng import make_rng

logger = logging.getLogger(__name__)


def power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    iters: int = 50,
    tol: float = 1e-9,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a symmetric PSD operator given as a callable.

    Args:
        apply: The operator, mapping a length-n vector to a length-n vector.
        n: Dimension.
        iters: Maximum number of iterations.
        tol: Relative change in the estimate at which to stop.
        seed: Seed of the "power" stream for the start vector.

    Returns:
        The Rayleigh quotient estimate, 0.0 for the zero operator.
    """
    vector = make_rng(seed, "power").standard_normal(n)
    vector /= np.linalg.norm(vector)
    eigenvalue = 0.0
    for _ in range(iters):
        image = apply(vector)
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return 0.0
        previous, eigenvalue = eigenvalue, float(vector @ image)
        vector = image / norm
        if abs(eigenvalue - previous) <= tol * max(abs(eigenvalue), 1.0):
            break
    return eigenvalue


def _partition(length: int, k: int) -> np.ndarray:
    """Offsets of k contiguous, nearly equal parts of range(length)."""
    if not 1 <= k <= length:
        raise ValueError(f"cannot split {length} items into {k} non-empty parts")
    sizes = np.full(k, length // k)
    sizes[: length % k] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


class ForwardModel(ABC):
    """A linear forward operator A whose rows are split into k components."""

    noise_sigma: float

    @property
    @abstractmethod
    def n(self) -> int:
        """Signal length."""

    @property
    @abstractmethod
    def signal_shape(self) -> Tuple[int, ...]:
        """Shape of signals this model expects."""

    @property
    @abstractmethod
    def block_sizes(self) -> Tuple[int, ...]:
        """Measurement count of every component."""

    @property
    @abstractmethod
    def model_id(self) -> str:
        """Identifier stamped on measurement sets produced by this model."""

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        """Full measurement vector A x, blocks concatenated in order."""

    @abstractmethod
    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """A^T r for a full measurement-space vector r."""

    @abstractmethod
    def weighted_gradient(
        self, x: np.ndarray, y: np.ndarray, weights: np.ndarray
    ) -> np.ndarray:
        """sum_i weights[i] * A_i^T (A_i x - y_i); components with weight 0 are skipped."""

    @abstractmethod
    def solve_shifted(self, rhs: np.ndarray, rho: float) -> np.ndarray:
        """Solve (A^T A + rho I) x = rhs exactly."""

    @property
    def k(self) -> int:
        return len(self.block_sizes)

    @property
    def m(self) -> int:
        return sum(self.block_sizes)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.block_sizes)])

    def split(self, y: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Split a full measurement vector into component blocks."""
        return tuple(
            y[self.offsets[i] : self.offsets[i + 1]] for i in range(self.k)
        )

    def forward_block(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[self.offsets[i] : self.offsets[i + 1]]

    def adjoint_block(self, i: int, r: np.ndarray) -> np.ndarray:
        full = np.zeros(self.m)
        full[self.offsets[i] : self.offsets[i + 1]] = r
        return self.adjoint(full)

    def gram(self, x: np.ndarray) -> np.ndarray:
        """A^T A x."""
        return self.adjoint(self.forward(x))

    def component_lipschitz(self, i: int) -> float:
        """||A_i||^2, the Lipschitz constant of A_i^T A_i."""
        return power_iteration(
            lambda v: self.adjoint_block(i, self.forward_block(i, v)), self.n
        )

    def as_dense(self) -> np.ndarray:
        """The operator as an explicit m x n matrix (small problems only)."""
        columns = [self.forward(e) for e in np.eye(self.n)]
        return np.column_stack(columns)

    def check_signal(self, x: Signal) -> None:
        if x.size != self.n:
            raise ShapeMismatchError(
                f"model expects signals of length {self.n}, got {x.size}"
            )
        if x.is_grid and x.shape != self.signal_shape:
            raise ShapeMismatchError(
                f"model expects shape {self.signal_shape}, got {x.shape}"
            )


class GaussianCSModel(ForwardModel):
    """Dense compressed-sensing matrix partitioned row-wise into k blocks."""

    def __init__(
        self,
        matrix: np.ndarray,
        k: int,
        noise_sigma: float = 0.0,
        model_id: Optional[str] = None,
    ):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ShapeMismatchError("the sensing matrix must be 2-D")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("the sensing matrix contains NaN or Inf values")
        if noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.noise_sigma = float(noise_sigma)
        self._offsets = _partition(matrix.shape[0], k)
        if model_id is None:
            digest = hashlib.sha1(matrix.tobytes()).hexdigest()[:16]
            model_id = f"gaussian_cs:m={matrix.shape[0]},n={matrix.shape[1]},k={k},sha1={digest}"
        self._model_id = model_id
        self._factor_lock = threading.Lock()
        self._factors: Dict[float, Tuple[bool, tuple]] = {}

    @classmethod
    def from_seed(
        cls, m: int, n: int, k: int, seed: int, noise_sigma: float = 0.0
    ) -> GaussianCSModel:
        """Regenerate the i.i.d. N(0, 1/m) matrix belonging to a seed."""
        rng = make_rng(seed, "matrix")
        matrix = rng.standard_normal((m, n)) / np.sqrt(m)
        model_id = f"gaussian_cs:m={m},n={n},k={k},seed={seed}"
        return cls(matrix, k, noise_sigma, model_id=model_id)

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def signal_shape(self) -> Tuple[int, ...]:
        return (self.n,)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(int(s) for s in np.diff(self._offsets))

    @property
    def model_id(self) -> str:
        return self._model_id

    def block(self, i: int) -> np.ndarray:
        return self.matrix[self._offsets[i] : self._offsets[i + 1]]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self.matrix.T @ r

    def forward_block(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.block(i) @ x

    def adjoint_block(self, i: int, r: np.ndarray) -> np.ndarray:
        return self.block(i).T @ r

    def weighted_gradient(
        self, x: np.ndarray, y: np.ndarray, weights: np.ndarray
    ) -> np.ndarray:
        if np.all(weights == weights[0]):
            return weights[0] * (self.matrix.T @ (self.matrix @ x - y))
        gradient = np.zeros(self.n)
        for i in np.flatnonzero(weights):
            rows = slice(self._offsets[i], self._offsets[i + 1])
            block = self.matrix[rows]
            gradient += weights[i] * (block.T @ (block @ x - y[rows]))
        return gradient

    def component_lipschitz(self, i: int) -> float:
        return float(np.linalg.norm(self.block(i), 2) ** 2)

    def as_dense(self) -> np.ndarray:
        return self.matrix.copy()

    def _factor(self, rho: float) -> Tuple[bool, tuple]:
        with self._factor_lock:
            cached = self._factors.get(rho)
            if cached is not None:
                return cached
            m, n = self.matrix.shape
            # Factor the smaller Gram system; Woodbury covers the wide case.
            wide = m < n
            if wide:
                system = self.matrix @ self.matrix.T + rho * np.eye(m)
            else:
                system = self.matrix.T @ self.matrix + rho * np.eye(n)
            try:
                factor = linalg.cho_factor(system)
            except linalg.LinAlgError as e:
                raise SolverError(f"normal equations are singular for rho={rho}") from e
            self._factors[rho] = (wide, factor)
            return wide, factor

    def solve_shifted(self, rhs: np.ndarray, rho: float) -> np.ndarray:
        if not rho > 0:
            raise SolverError(f"rho must be positive, got {rho}")
        wide, factor = self._factor(rho)
        if wide:
            correction = self.matrix.T @ linalg.cho_solve(factor, self.matrix @ rhs)
            return (rhs - correction) / rho
        return linalg.cho_solve(factor, rhs)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized size x size Gaussian blur kernel (size odd)."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        kernel = np.zeros((size, size))
        kernel[size // 2, size // 2] = 1.0
        return kernel
    offsets = np.arange(size) - size // 2
    profile = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(profile, profile)
    return kernel / kernel.sum()


class BlurModel(ForwardModel):
    """Circular convolution of an h x w image, components are row bands."""

    def __init__(
        self,
        kernel: np.ndarray,
        shape: Tuple[int, int],
        k: int,
        noise_sigma: float = 0.0,
    ):
        kernel = np.array(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError(f"kernel dimensions must be odd, got {kernel.shape}")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel contains NaN or Inf values")
        height, width = (int(s) for s in shape)
        if kernel.shape[0] > height or kernel.shape[1] > width:
            raise ShapeMismatchError(
                f"kernel {kernel.shape} is larger than the image {shape}"
            )
        if noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
        kernel.setflags(write=False)
        self.kernel = kernel
        self.shape = (height, width)
        self.noise_sigma = float(noise_sigma)
        self._row_offsets = _partition(height, k)

        # Kernel centre moved to (0, 0) so the FFT product is a centred convolution.
        padded = np.zeros(self.shape)
        padded[: kernel.shape[0], : kernel.shape[1]] = kernel
        padded = np.roll(
            padded, (-(kernel.shape[0] // 2), -(kernel.shape[1] // 2)), axis=(0, 1)
        )
        self.transfer = fft.fft2(padded)
        self.transfer.setflags(write=False)

        digest = hashlib.sha1(kernel.tobytes()).hexdigest()[:16]
        self._model_id = f"blur:h={height},w={width},k={k},kernel={digest}"

    @property
    def n(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def signal_shape(self) -> Tuple[int, ...]:
        return self.shape

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(int(rows) * self.shape[1] for rows in np.diff(self._row_offsets))

    @property
    def model_id(self) -> str:
        return self._model_id

    def band(self, i: int) -> slice:
        return slice(self._row_offsets[i], self._row_offsets[i + 1])

    def _convolve(self, image: np.ndarray, transfer: np.ndarray) -> np.ndarray:
        return fft.ifft2(fft.fft2(image) * transfer).real

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._convolve(x.reshape(self.shape), self.transfer).reshape(-1)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self._convolve(r.reshape(self.shape), np.conj(self.transfer)).reshape(-1)

    def forward_block(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.forward(x).reshape(self.shape)[self.band(i)].reshape(-1)

    def adjoint_block(self, i: int, r: np.ndarray) -> np.ndarray:
        image = np.zeros(self.shape)
        image[self.band(i)] = r.reshape(-1, self.shape[1])
        return self.adjoint(image.reshape(-1))

    def weighted_gradient(
        self, x: np.ndarray, y: np.ndarray, weights: np.ndarray
    ) -> np.ndarray:
        residual = (self.forward(x) - y).reshape(self.shape)
        row_weights = np.repeat(weights, np.diff(self._row_offsets))
        return self.adjoint((residual * row_weights[:, None]).reshape(-1))

    def solve_shifted(self, rhs: np.ndarray, rho: float) -> np.ndarray:
        if not rho > 0:
            raise SolverError(f"rho must be positive, got {rho}")
        denominator = np.abs(self.transfer) ** 2 + rho
        return fft.ifft2(fft.fft2(rhs.reshape(self.shape)) / denominator).real.reshape(-1)

    def gram(self, x: np.ndarray) -> np.ndarray:
        spectrum = np.abs(self.transfer) ** 2
        return self._convolve(x.reshape(self.shape), spectrum).reshape(-1)


@dataclass(frozen=True, eq=False)
class FidelityTerm:
    """D(x) = (1/k) sum_i (k/2) ||y_i - A_i x||^2 for a model and its measurements."""

    model: ForwardModel
    measurements: MeasurementSet

    def __post_init__(self):
        if self.measurements.model_id != self.model.model_id:
            raise ShapeMismatchError(
                f"measurements come from '{self.measurements.model_id}', "
                f"not '{self.model.model_id}'"
            )
        if self.measurements.block_sizes != self.model.block_sizes:
            raise ShapeMismatchError("measurement blocks do not match the model partition")

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def n(self) -> int:
        return self.model.n

    @cached_property
    def y(self) -> np.ndarray:
        return self.measurements.stacked()

    @cached_property
    def adjoint_y(self) -> np.ndarray:
        """A^T y, the constant part of the ADMM x-update."""
        return self.model.adjoint(self.y)

    def component_value(self, i: int, x: np.ndarray) -> float:
        if not 0 <= i < self.k:
            raise IndexError(f"component index {i} out of range for k={self.k}")
        residual = self.measurements.blocks[i] - self.model.forward_block(i, x)
        return 0.5 * self.k * float(residual @ residual)

    def value(self, x: np.ndarray) -> float:
        residual = self.y - self.model.forward(x)
        return 0.5 * float(residual @ residual)

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        if not 0 <= i < self.k:
            raise IndexError(f"component index {i} out of range for k={self.k}")
        weights = np.zeros(self.k)
        weights[i] = self.k
        return self.model.weighted_gradient(x, self.y, weights)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.model.weighted_gradient(x, self.y, np.ones(self.k))

    def sampled_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """(1/b) sum_j grad D_{i_j}(x) for drawn indices (with repeats)."""
        counts = np.bincount(indices, minlength=self.k)
        weights = counts * (self.k / len(indices))
        return self.model.weighted_gradient(x, self.y, weights)


class Sampler(Protocol):
    k: int
    b: int

    def draw(self) -> np.ndarray: ...


class MinibatchSampler:
    """Draws b component indices i.i.d. uniform on {0, ..., k-1} (with replacement).

    Single-owner mutable state: every draw advances the PCG64 stream.
    """

    def __init__(self, k: int, b: int, seed: int):
        if k < 1 or b < 1:
            raise ValueError(f"k and b must be >= 1, got k={k}, b={b}")
        if b > k:
            logger.warning(
                "minibatch size b=%d exceeds component count k=%d; "
                "sampling with replacement anyway",
                b,
                k,
            )
        self.k = k
        self.b = b
        self.seed = seed
        self.rng = make_rng(seed, "sampler")

    def draw(self) -> np.ndarray:
        return self.rng.integers(0, self.k, size=self.b)


class SweepSampler:
    """Deterministic sampler that returns every component exactly once per draw.

    With b = k this turns the minibatch estimator into the full gradient, which
    is how the degenerate-minibatch identities are checked.
    """

    def __init__(self, k: int, b: Optional[int] = None, seed: int = 0):
        if b is not None and b != k:
            raise ValueError(f"a sweep sampler draws all k={k} components, not b={b}")
        self.k = k
        self.b = k
        self.seed = seed

    def draw(self) -> np.ndarray:
        return np.arange(self.k)


SamplerFactory = Callable[[int, int, int], Sampler]


def eval_component(f: FidelityTerm, i: int, x: Signal) -> float:
    """D_i(x) = (k/2) ||y_i - A_i x||^2 for a 0-based component index i."""
    f.model.check_signal(x)
    return f.component_value(i, x.values)


def data_value(f: FidelityTerm, x: Signal) -> float:
    """D(x) = (1/2) ||y - A x||^2."""
    f.model.check_signal(x)
    return f.value(x.values)


def component_gradient(f: FidelityTerm, i: int, x: Signal) -> Signal:
    """grad D_i(x) = k A_i^T (A_i x - y_i).

    Args:
        f: The fidelity term.
        i: Component index, 0 <= i < k.
        x: Point of evaluation, shaped like the model's signals.

    Returns:
        The gradient as a signal of x's shape.
    """
    f.model.check_signal(x)
    return x.with_values(f.component_gradient(i, x.values))


def full_gradient(f: FidelityTerm, x: Signal) -> Signal:
    """(1/k) sum_i grad D_i(x) = A^T (A x - y)."""
    f.model.check_signal(x)
    return x.with_values(f.gradient(x.values))


def minibatch_gradient(
    f: FidelityTerm, s: Sampler, x: Signal
) -> Tuple[Signal, np.ndarray]:
    """Unbiased minibatch estimate of the full gradient.

    Args:
        f: The fidelity term.
        s: Sampler over the k components; each call advances its stream.
        x: Point of evaluation.

    Returns:
        (estimate, indices): the average of the b drawn component gradients
        and the indices that were drawn (repeats possible).

    Raises:
        ShapeMismatchError: If the sampler was built for another k.
    """
    f.model.check_signal(x)
    if s.k != f.k:
        raise ShapeMismatchError(f"sampler is for k={s.k}, fidelity term has k={f.k}")
    indices = s.draw()
    return x.with_values(f.sampled_gradient(x.values, indices)), indices


def simulate_measurements(
    model: ForwardModel, x_true: Signal, seed: int
) -> MeasurementSet:
    """Noisy measurements y = A x_true + w, split into the model's k blocks.

    Args:
        model: Forward model; its noise_sigma sets the stddev of w.
        x_true: Ground truth signal.
        seed: Seed of the "noise" stream, so w is reproducible.

    Returns:
        The measurement set, tagged with the model id.
    """
    model.check_signal(x_true)
    y = model.forward(x_true.values)
    if model.noise_sigma > 0:
        y = y + model.noise_sigma * make_rng(seed, "noise").standard_normal(y.size)
    return MeasurementSet(model.split(y), model.model_id)


class Regularizer(ABC):
    """An explicit regularizer R for evaluating C(x) = D(x) + R(x)."""

    @abstractmethod
    def value(self, x: Signal) -> float:
        """R(x)."""


@dataclass(frozen=True)
class L1Regularizer(Regularizer):
    """R(x) = weight * ||T x||_1 for an orthonormal transform T."""

    weight: float
    transform: str = "identity"

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        check_transform(self.transform)

    def value(self, x: Signal) -> float:
        coefficients = forward_transform(self.transform, x.values, x.shape)
        return self.weight * float(np.sum(np.abs(coefficients)))


@dataclass(frozen=True)
class NonnegativeIndicator(Regularizer):
    """R(x) = 0 if every entry is >= 0, +inf otherwise."""

    def value(self, x: Signal) -> float:
        return 0.0 if np.all(x.values >= 0) else float("inf")


def objective(f: FidelityTerm, x: Signal, reg: Optional[Regularizer] = None) -> float:
    """C(x) = D(x) + R(x), or D(x) alone when no regularizer is given."""
    value = data_value(f, x)
    if reg is not None:
        value += reg.value(x)
    return value
