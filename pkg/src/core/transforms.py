"""
Orthonormal transforms used by sparsity denoisers and regularizers.

Both transforms preserve the Euclidean norm, so soft-thresholding in the
transform domain is the exact prox of a weighted l1 norm of the coefficients.
"""

from typing import Tuple

import numpy as np
from scipy import fft

from .errors import ShapeMismatchError

TRANSFORMS = ("identity", "dct")


def check_transform(name: str) -> str:
    """Return name if it is one of TRANSFORMS, else raise ValueError."""
    if name not in TRANSFORMS:
        raise ValueError(f"unknown transform '{name}', expected one of {TRANSFORMS}")
    return name


def _as_grid(values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if len(shape) != 2:
        raise ShapeMismatchError("the 2D DCT needs a grid signal")
    return values.reshape(shape)


def forward_transform(name: str, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Coefficients T x, flattened row-major."""
    if name == "identity":
        return values
    return fft.dctn(_as_grid(values, shape), type=2, norm="ortho").reshape(-1)


def inverse_transform(name: str, coefficients: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Signal values T^-1 c, flattened row-major."""
    if name == "identity":
        return coefficients
    return fft.idctn(_as_grid(coefficients, shape), type=2, norm="ortho").reshape(-1)
