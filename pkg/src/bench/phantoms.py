"""
Synthetic ground-truth signals.

- ``sparse_spikes``: exactly ceil(sparsity * n) entries equal to +1 or -1 at
  seeded positions, zeros elsewhere.
- ``piecewise_blocks``: piecewise constant with seeded levels in [0, 1]; a flat
  signal gets ``blocks`` runs, a grid gets a blocks x blocks tiling.
- ``checker_image``: a checkerboard of 0.25 / 0.75 cells (grid only).
"""

import math
from typing import Optional, Tuple

import numpy as np

from ..core.errors import InvalidSignalError
from ..core.signal import Signal
from ..utils.rng import make_rng

PHANTOM_KINDS = ("sparse_spikes", "piecewise_blocks", "checker_image")

CHECKER_LOW = 0.25
CHECKER_HIGH = 0.75


def parse_shape(text: str) -> Tuple[int, ...]:
    """Parse '256' into (256,) and '32x32' into (32, 32)."""
    parts = text.lower().replace(" ", "").split("x")
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"invalid shape '{text}', expected N or HxW")
    if len(shape) not in (1, 2) or any(s < 1 for s in shape):
        raise ValueError(f"invalid shape '{text}', expected N or HxW")
    return shape


def format_shape(shape: Tuple[int, ...]) -> str:
    """Shape in the command-line form, e.g. ``64x64``."""
    return "x".join(str(s) for s in shape)


def spike_count(sparsity: float, n: int) -> int:
    # Rounded first so products like 0.1 * 30 = 3.0000000000000004 stay at 3.
    return math.ceil(round(sparsity * n, 9))


def _sparse_spikes(shape, n, rng, sparsity: float) -> Signal:
    if not 0.0 < sparsity <= 1.0:
        raise InvalidSignalError(f"sparsity must be in (0, 1], got {sparsity}")
    count = spike_count(sparsity, n)
    values = np.zeros(n)
    positions = rng.choice(n, size=count, replace=False)
    values[positions] = rng.choice([-1.0, 1.0], size=count)
    return Signal(values, shape)


def _piecewise_blocks(shape, n, rng, blocks: int) -> Signal:
    if blocks < 1:
        raise InvalidSignalError(f"blocks must be >= 1, got {blocks}")
    if len(shape) == 1:
        if blocks > n:
            raise InvalidSignalError(f"cannot make {blocks} blocks from {n} samples")
        cuts = np.sort(rng.choice(np.arange(1, n), size=blocks - 1, replace=False))
        levels = rng.uniform(0.0, 1.0, size=blocks)
        run_lengths = np.diff(np.concatenate([[0], cuts, [n]]))
        return Signal(np.repeat(levels, run_lengths), shape)
    height, width = shape
    if blocks > min(height, width):
        raise InvalidSignalError(f"cannot tile a {height}x{width} grid into {blocks}x{blocks}")
    levels = rng.uniform(0.0, 1.0, size=(blocks, blocks))
    rows = np.arange(height) * blocks // height
    cols = np.arange(width) * blocks // width
    return Signal.grid(levels[rows[:, None], cols[None, :]])


def _checker_image(shape, cell: Optional[int]) -> Signal:
    if len(shape) != 2:
        raise InvalidSignalError("checker_image needs a grid shape")
    height, width = shape
    if cell is None:
        cell = max(1, min(height, width) // 4)
    if cell < 1:
        raise InvalidSignalError(f"cell size must be >= 1, got {cell}")
    parity = (np.arange(height)[:, None] // cell + np.arange(width)[None, :] // cell) % 2
    return Signal.grid(np.where(parity == 0, CHECKER_LOW, CHECKER_HIGH))


def make_phantom(
    kind: str,
    shape: Tuple[int, ...],
    seed: int,
    sparsity: float = 0.05,
    blocks: int = 8,
    cell: Optional[int] = None,
) -> Signal:
    """Deterministic synthetic ground truth for a kind, shape and seed."""
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (1, 2) or any(s < 1 for s in shape):
        raise InvalidSignalError(f"invalid phantom shape {shape}")
    n = math.prod(shape)
    rng = make_rng(seed, "phantom")
    if kind == "sparse_spikes":
        return _sparse_spikes(shape, n, rng, sparsity)
    if kind == "piecewise_blocks":
        return _piecewise_blocks(shape, n, rng, blocks)
    if kind == "checker_image":
        return _checker_image(shape, cell)
    raise InvalidSignalError(f"unknown phantom '{kind}', expected one of {PHANTOM_KINDS}")
