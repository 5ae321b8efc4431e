"""
Pluggable denoisers denoise_sigma(x).

The catalog covers both regimes a plug-and-play solver is used in:

- ``SoftThresholdDenoiser`` and ``NonnegativeProjection`` are proximal
  operators (of sigma * ||T x||_1 and of the nonnegative-orthant indicator),
  so PnP iterations with them are classical proximal algorithms.
- ``GaussianSmoothDenoiser`` is a plain linear smoother that is not the prox
  of any simple regularizer, but whose circular kernel has a spectrum in
  (0, 1], so it is averaged.
- ``IdentityDenoiser`` reduces PnP to gradient descent on the data term.

All boundary handling is circular. Every denoiser is immutable and its
``apply_array`` is pure, so one instance can be shared between threads.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np
from scipy import fft

from .errors import ShapeMismatchError
from .signal import Signal
from .transforms import check_transform, forward_transform, inverse_transform
from ..utils.rng import make_rng

logger = logging.getLogger(__name__)

DENOISER_VARIANTS = ("identity", "soft_threshold", "gaussian_smooth", "nonnegative")


def soft_threshold(values: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise sign(v) * max(|v| - tau, 0)."""
    return np.sign(values) * np.maximum(np.abs(values) - tau, 0.0)


def prox_l1(y: Signal, tau: float) -> Signal:
    """argmin_x 1/2 ||x - y||^2 + tau ||x||_1, i.e. elementwise soft-thresholding."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    return y.with_values(soft_threshold(y.values, tau))


class Denoiser(ABC):
    """A Signal -> Signal operator of controllable strength sigma."""

    name = "denoiser"
    is_linear = False
    needs_grid = False

    def __init__(self, sigma: float = 0.0):
        if not sigma >= 0:
            raise ValueError(f"denoiser strength must be nonnegative, got {sigma}")
        self.sigma = float(sigma)

    @abstractmethod
    def apply_array(self, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Denoise flat values of a signal with the given shape."""

    def describe(self) -> str:
        """How sigma maps onto this denoiser's own parameter."""
        return f"{self.name}(sigma={self.sigma:g})"

    def check_shape(self, shape: Tuple[int, ...]) -> None:
        if self.needs_grid and len(shape) != 2:
            raise ShapeMismatchError(f"{self.name} needs a grid signal, got shape {shape}")

    def __call__(self, x: Signal) -> Signal:
        self.check_shape(x.shape)
        return x.with_values(self.apply_array(x.values, x.shape))

    def spectrum(self, shape: Tuple[int, int]) -> np.ndarray:
        """DFT eigenvalues of a linear, circulant denoiser on a grid."""
        raise NotImplementedError(f"{self.name} is not a linear circulant operator")

    def __repr__(self) -> str:
        return self.describe()


class IdentityDenoiser(Denoiser):
    name = "identity"
    is_linear = True

    def apply_array(self, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        return values

    def spectrum(self, shape: Tuple[int, int]) -> np.ndarray:
        return np.ones(shape, dtype=np.complex128)


class SoftThresholdDenoiser(Denoiser):
    """T^-1 soft(T x, sigma) for an orthonormal transform T (identity or 2D DCT-II)."""

    name = "soft_threshold"

    def __init__(self, sigma: float = 0.0, transform: str = "identity"):
        super().__init__(sigma)
        self.transform = check_transform(transform)
        self.needs_grid = transform == "dct"

    def describe(self) -> str:
        return f"soft_threshold(transform={self.transform}, tau=sigma={self.sigma:g})"

    def apply_array(self, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        if self.sigma == 0.0:
            return values
        coefficients = forward_transform(self.transform, values, shape)
        return inverse_transform(
            self.transform, soft_threshold(coefficients, self.sigma), shape
        )


def periodic_gaussian(length: int, sigma: float) -> np.ndarray:
    """A Gaussian of stddev sigma wrapped onto a circle of `length` samples.

    The wrapped (periodized) Gaussian has a strictly positive DFT, so the
    resulting smoother's eigenvalues lie in (0, 1].
    """
    profile = np.zeros(length)
    if sigma == 0.0:
        profile[0] = 1.0
        return profile
    images = int(np.ceil(8.0 * sigma / length)) + 1
    positions = np.arange(length)[None, :] + length * np.arange(-images, images + 1)[:, None]
    profile = np.exp(-(positions**2) / (2.0 * sigma**2)).sum(axis=0)
    return profile / profile.sum()


class GaussianSmoothDenoiser(Denoiser):
    """Circular Gaussian smoothing with kernel stddev sigma (in pixels)."""

    name = "gaussian_smooth"
    is_linear = True
    needs_grid = True

    def describe(self) -> str:
        return f"gaussian_smooth(kernel_std={self.sigma:g}px)"

    def kernel(self, shape: Tuple[int, int]) -> np.ndarray:
        """The normalized circular kernel, centred at pixel (0, 0)."""
        return np.outer(
            periodic_gaussian(shape[0], self.sigma), periodic_gaussian(shape[1], self.sigma)
        )

    def spectrum(self, shape: Tuple[int, int]) -> np.ndarray:
        return fft.fft2(self.kernel(shape))

    def apply_array(self, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        if self.sigma == 0.0:
            return values
        image = values.reshape(shape)
        return fft.ifft2(fft.fft2(image) * self.spectrum(shape)).real.reshape(-1)


class NonnegativeProjection(Denoiser):
    """Projection onto x >= 0, the prox of the nonnegative-orthant indicator.

    The strength is ignored: the indicator is invariant to scaling.
    """

    name = "nonnegative"

    def describe(self) -> str:
        return "nonnegative(projection, sigma unused)"

    def apply_array(self, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        return np.maximum(values, 0.0)


def make_denoiser(variant: str, sigma: float, transform: str = "identity") -> Denoiser:
    """Build a denoiser from its catalog name.

    Args:
        variant: One of DENOISER_VARIANTS.
        sigma: Denoising strength, nonnegative.
        transform: Sparsifying transform, used by soft_threshold only.

    Returns:
        The denoiser instance.
    """
    if variant == "identity":
        return IdentityDenoiser(sigma)
    if variant == "soft_threshold":
        return SoftThresholdDenoiser(sigma, transform)
    if variant == "gaussian_smooth":
        return GaussianSmoothDenoiser(sigma)
    if variant == "nonnegative":
        return NonnegativeProjection(sigma)
    raise ValueError(f"unknown denoiser '{variant}', expected one of {DENOISER_VARIANTS}")


def apply(d: Denoiser, x: Signal) -> Signal:
    """denoise_sigma(x)."""
    return d(x)


def nonexpansiveness_probe(
    d: Denoiser, trials: int, seed: int, shape: Tuple[int, ...] = (16, 16)
) -> float:
    """Largest ||d(x) - d(z)|| / ||x - z|| over random pairs.

    Pairs mix magnitudes from well below to well above sigma, and separations
    from nearly equal to unrelated, so thresholding denoisers are sampled in
    both their linear and their clipping regimes.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    d.check_shape(shape)
    rng = make_rng(seed, "probe")
    n = int(np.prod(shape))
    reference = max(d.sigma, 1.0)
    worst = 0.0
    for _ in range(trials):
        scale = reference * 10.0 ** rng.uniform(-2.0, 1.0)
        x = scale * rng.standard_normal(n)
        z = x + scale * 10.0 ** rng.uniform(-3.0, 0.5) * rng.standard_normal(n)
        gap = np.linalg.norm(x - z)
        if gap == 0.0:
            continue
        ratio = np.linalg.norm(d.apply_array(x, shape) - d.apply_array(z, shape)) / gap
        worst = max(worst, float(ratio))
    logger.debug("%s: max Lipschitz ratio %.12f over %d pairs", d.describe(), worst, trials)
    return worst
