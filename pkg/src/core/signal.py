"""
Core value types shared by every PnPKit module.

Signals, measurement sets, solver configuration and iterate traces are
immutable values. Arrays held by them are private read-only copies, so a
Signal can be handed to another thread without defensive copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import InvalidSignalError, ShapeMismatchError
from ..utils.rng import check_seed

# Reported when the reconstruction error is exactly zero.
SNR_CAP_DB = 300.0


def _frozen_array(values, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(array)):
        raise InvalidSignalError(f"{name} contains NaN or Inf values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Signal:
    """A real-valued n-vector, optionally interpreted as an h x w grid.

    ``shape`` is either ``(n,)`` for a flat signal or ``(h, w)`` for a grid.
    ``values`` always holds the n entries in row-major order.
    """

    values: np.ndarray
    shape: Tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2) or any(s < 1 for s in shape):
            raise InvalidSignalError(f"invalid signal shape {self.shape}")
        values = _frozen_array(self.values, "signal")
        if math.prod(shape) != values.size:
            raise InvalidSignalError(
                f"shape {shape} does not match {values.size} values"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def flat(cls, values) -> Signal:
        """Build a flat signal from any 1-D sequence."""
        array = np.asarray(values, dtype=np.float64).reshape(-1)
        return cls(array, (array.size,))

    @classmethod
    def grid(cls, image) -> Signal:
        """Build a grid signal from a 2-D array."""
        array = np.asarray(image, dtype=np.float64)
        if array.ndim != 2:
            raise InvalidSignalError(f"grid signal needs a 2-D array, got {array.ndim}-D")
        return cls(array.reshape(-1), array.shape)

    @classmethod
    def zeros(cls, shape: Tuple[int, ...]) -> Signal:
        return cls(np.zeros(math.prod(shape)), shape)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_grid(self) -> bool:
        return len(self.shape) == 2

    def as_array(self) -> np.ndarray:
        """Values reshaped to the signal's shape (read-only view)."""
        return self.values.reshape(self.shape)

    def with_values(self, values) -> Signal:
        """A new signal with the same shape and different values."""
        return Signal(values, self.shape)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def _check_same_length(a: Signal, b: Signal) -> None:
    if a.size != b.size:
        raise ShapeMismatchError(f"signal lengths differ: {a.size} vs {b.size}")


def l2_distance(a: Signal, b: Signal) -> float:
    """Euclidean norm of a - b."""
    _check_same_length(a, b)
    return float(np.linalg.norm(a.values - b.values))


def snr_db(truth: Signal, estimate: Signal) -> float:
    """Reconstruction SNR 20*log10(||truth|| / ||truth - estimate||) in dB.

    Capped at SNR_CAP_DB when the estimate equals the truth exactly.
    """
    _check_same_length(truth, estimate)
    signal_norm = np.linalg.norm(truth.values)
    if signal_norm == 0.0:
        raise InvalidSignalError("SNR is undefined for an all-zero truth signal")
    error_norm = np.linalg.norm(truth.values - estimate.values)
    if error_norm == 0.0:
        return SNR_CAP_DB
    return float(min(20.0 * np.log10(signal_norm / error_norm), SNR_CAP_DB))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Measurements y split into k ordered component blocks.

    ``model_id`` names the forward model that produced the blocks; a fidelity
    term refuses measurements produced by a different model.
    """

    blocks: Tuple[np.ndarray, ...]
    model_id: str

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise InvalidSignalError("a measurement set needs at least one block")
        blocks = []
        for index, block in enumerate(self.blocks):
            array = _frozen_array(block, f"measurement block {index}")
            if array.size == 0:
                raise InvalidSignalError(f"measurement block {index} is empty")
            blocks.append(array)
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(block.size for block in self.blocks)

    @property
    def m(self) -> int:
        return sum(self.block_sizes)

    def stacked(self) -> np.ndarray:
        """All blocks concatenated into the full y vector."""
        return np.concatenate(self.blocks)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of a single solver run."""

    gamma: float
    sigma: float = 0.0
    minibatch_b: int = 1
    max_iters: int = 1000
    seed: int = 0
    admm_rho: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.minibatch_b < 1:
            raise ValueError(f"minibatch_b must be >= 1, got {self.minibatch_b}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.admm_rho > 0:
            raise ValueError(f"admm_rho must be positive, got {self.admm_rho}")
        check_seed(self.seed)


@dataclass(frozen=True)
class TraceRecord:
    iter_index: int
    fixed_point_residual: float
    snr_db: float
    budget_consumed: float
    wall_ns: int


@dataclass
class IterateTrace:
    """Per-iteration records of a solver run, appended in order."""

    records: List[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            if record.iter_index <= last.iter_index:
                raise ValueError("iter_index must be strictly increasing")
            if record.budget_consumed < last.budget_consumed:
                raise ValueError("budget_consumed must be non-decreasing")
        if record.fixed_point_residual < 0 or record.wall_ns < 0:
            raise ValueError("residual and wall_ns must be nonnegative")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def residuals(self) -> np.ndarray:
        return np.array([r.fixed_point_residual for r in self.records])

    def snrs(self) -> np.ndarray:
        return np.array([r.snr_db for r in self.records])

    def iterations(self) -> np.ndarray:
        return np.array([r.iter_index for r in self.records], dtype=np.int64)

    @property
    def final(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None
