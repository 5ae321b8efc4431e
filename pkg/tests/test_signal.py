import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.errors import InvalidSignalError, ShapeMismatchError  # noqa: E402
from src.core.signal import (  # noqa: E402
    SNR_CAP_DB,
    IterateTrace,
    MeasurementSet,
    Signal,
    SolverConfig,
    TraceRecord,
    l2_distance,
    snr_db,
)


def test_signal_copies_and_freezes_values():
    """A Signal keeps a private read-only copy of its values."""
    source = np.array([1.0, 2.0, 3.0])
    signal = Signal.flat(source)
    source[0] = 99.0
    assert signal.values[0] == 1.0
    with pytest.raises(ValueError):
        signal.values[0] = 5.0


def test_signal_rejects_non_finite_values():
    with pytest.raises(InvalidSignalError):
        Signal.flat([1.0, np.nan])
    with pytest.raises(InvalidSignalError):
        Signal.flat([np.inf])


def test_signal_shape_must_match_length():
    with pytest.raises(InvalidSignalError):
        Signal(np.zeros(6), (2, 2))
    with pytest.raises(InvalidSignalError):
        Signal(np.zeros(4), (2, 2, 1))


def test_grid_signal_is_row_major():
    image = np.arange(6.0).reshape(2, 3)
    signal = Signal.grid(image)
    assert signal.shape == (2, 3)
    assert signal.is_grid
    np.testing.assert_array_equal(signal.values, [0, 1, 2, 3, 4, 5])
    np.testing.assert_array_equal(signal.as_array(), image)


def test_snr_examples():
    assert snr_db(Signal.flat([1, 0]), Signal.flat([0, 0])) == pytest.approx(0.0, abs=1e-12)
    assert snr_db(Signal.flat([3, 4]), Signal.flat([3, 4])) == SNR_CAP_DB
    assert snr_db(Signal.flat([1, 0, 0]), Signal.flat([0.9, 0, 0])) == pytest.approx(20.0)


def test_snr_errors():
    with pytest.raises(ShapeMismatchError):
        snr_db(Signal.flat([1, 2]), Signal.flat([1, 2, 3]))
    with pytest.raises(InvalidSignalError):
        snr_db(Signal.flat([0, 0]), Signal.flat([1, 0]))


def test_snr_is_scale_invariant():
    rng = np.random.default_rng(21)
    for _ in range(50):
        truth = rng.standard_normal(16)
        estimate = truth + 0.1 * rng.standard_normal(16)
        scale = 10.0 ** rng.uniform(-3.0, 3.0) * rng.choice([-1.0, 1.0])
        expected = snr_db(Signal.flat(truth), Signal.flat(estimate))
        scaled = snr_db(Signal.flat(scale * truth), Signal.flat(scale * estimate))
        assert scaled == pytest.approx(expected, abs=1e-9)


def test_l2_distance_triangle_inequality():
    rng = np.random.default_rng(22)
    for _ in range(200):
        a, b, c = (Signal.flat(rng.standard_normal(9) * rng.uniform(0.01, 10)) for _ in range(3))
        assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-12
        assert l2_distance(a, b) == l2_distance(b, a)


def test_l2_distance_examples():
    assert l2_distance(Signal.flat([0, 0]), Signal.flat([0, 0])) == 0.0
    assert l2_distance(Signal.flat([3, 0]), Signal.flat([0, 4])) == pytest.approx(5.0)
    assert l2_distance(Signal.flat([1, 1, 1, 1]), Signal.zeros((4,))) == pytest.approx(2.0)
    with pytest.raises(ShapeMismatchError):
        l2_distance(Signal.flat([1]), Signal.flat([1, 2]))


def test_measurement_set_blocks():
    measurements = MeasurementSet((np.array([1.0, 2.0]), np.array([3.0])), "model")
    assert measurements.k == 2
    assert measurements.block_sizes == (2, 1)
    assert measurements.m == 3
    np.testing.assert_array_equal(measurements.stacked(), [1, 2, 3])
    with pytest.raises(InvalidSignalError):
        MeasurementSet((np.array([1.0]), np.array([])), "model")
    with pytest.raises(InvalidSignalError):
        MeasurementSet((), "model")


def test_solver_config_validation():
    SolverConfig(gamma=0.5, max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=0.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0, minibatch_b=0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0, sigma=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0, admm_rho=0.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0, seed=-1)


def test_trace_append_order():
    """iter_index must increase strictly and budget may not go down."""
    trace = IterateTrace()
    trace.append(TraceRecord(1, 0.5, 1.0, 0.1, 0))
    trace.append(TraceRecord(2, 0.4, 2.0, 0.2, 0))
    with pytest.raises(ValueError):
        trace.append(TraceRecord(2, 0.3, 3.0, 0.3, 0))
    with pytest.raises(ValueError):
        trace.append(TraceRecord(3, 0.3, 3.0, 0.1, 0))
    assert len(trace) == 2
    assert trace.final.iter_index == 2
    np.testing.assert_array_equal(trace.iterations(), [1, 2])
    np.testing.assert_array_equal(trace.residuals(), [0.5, 0.4])


if __name__ == "__main__":
    pytest.main()
