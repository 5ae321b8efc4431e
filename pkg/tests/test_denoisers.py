import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.denoisers import (  # noqa: E402
    DENOISER_VARIANTS,
    GaussianSmoothDenoiser,
    IdentityDenoiser,
    NonnegativeProjection,
    SoftThresholdDenoiser,
    apply,
    make_denoiser,
    nonexpansiveness_probe,
    periodic_gaussian,
    prox_l1,
)
from src.core.errors import ShapeMismatchError  # noqa: E402
from src.core.signal import Signal  # noqa: E402
from src.core.transforms import forward_transform, inverse_transform  # noqa: E402


def test_prox_l1_examples():
    np.testing.assert_array_equal(prox_l1(Signal.flat([0, 0]), 1.0).values, [0, 0])
    np.testing.assert_allclose(prox_l1(Signal.flat([3, -2, 0.5]), 1.0).values, [2, -1, 0])


def test_prox_l1_matches_grid_search():
    grid = np.arange(-3.0, 3.0, 1e-4)
    scan = grid[np.argmin(0.5 * (grid - 1.7) ** 2 + 0.3 * np.abs(grid))]
    result = prox_l1(Signal.flat([1.7]), 0.3).values[0]
    assert result == pytest.approx(1.4)
    assert abs(result - scan) <= 1e-4


def test_prox_l1_beats_random_perturbations():
    """prox_l1(y) minimizes 1/2 ||x - y||^2 + tau ||x||_1 against nearby points."""
    rng = np.random.default_rng(31)
    y = rng.standard_normal(10) * 2.0
    tau = 0.7

    def cost(x):
        return 0.5 * float(np.sum((x - y) ** 2)) + tau * float(np.sum(np.abs(x)))

    best = prox_l1(Signal.flat(y), tau).values
    for _ in range(1000):
        perturbed = best + rng.standard_normal(10) * 10.0 ** rng.uniform(-6.0, 0.0)
        assert cost(best) <= cost(perturbed) + 1e-15


@pytest.mark.parametrize("transform, shape", [("identity", (40,)), ("dct", (8, 6))])
def test_soft_threshold_commutes_with_sign_flip(transform, shape):
    rng = np.random.default_rng(32)
    d = SoftThresholdDenoiser(0.4, transform)
    for _ in range(20):
        values = rng.standard_normal(int(np.prod(shape)))
        x = Signal(values, shape)
        np.testing.assert_allclose(d(x.with_values(-values)).values, -d(x).values, atol=1e-14)


def test_apply_examples():
    rng = np.random.default_rng(0)
    x = Signal.flat(rng.standard_normal(7))
    np.testing.assert_array_equal(apply(IdentityDenoiser(), x).values, x.values)
    np.testing.assert_allclose(
        apply(SoftThresholdDenoiser(1.0), Signal.flat([3, -2])).values, [2, -1]
    )
    image = Signal.grid(rng.standard_normal((8, 8)))
    smoothed = apply(GaussianSmoothDenoiser(1e-6), image)
    np.testing.assert_allclose(smoothed.values, image.values, atol=1e-8)


def test_nonnegative_projection():
    result = apply(NonnegativeProjection(0.3), Signal.flat([-1.0, 0.0, 2.5]))
    np.testing.assert_array_equal(result.values, [0.0, 0.0, 2.5])


def test_dct_is_orthonormal():
    rng = np.random.default_rng(1)
    values = rng.standard_normal(12 * 9)
    coefficients = forward_transform("dct", values, (12, 9))
    assert np.linalg.norm(coefficients) == pytest.approx(np.linalg.norm(values), abs=1e-10)
    np.testing.assert_allclose(inverse_transform("dct", coefficients, (12, 9)), values, atol=1e-12)


def test_dct_soft_threshold_zero_strength_is_identity():
    rng = np.random.default_rng(2)
    image = Signal.grid(rng.standard_normal((6, 6)))
    result = SoftThresholdDenoiser(0.0, "dct")(image)
    np.testing.assert_array_equal(result.values, image.values)


def test_grid_denoisers_reject_flat_signals():
    with pytest.raises(ShapeMismatchError):
        GaussianSmoothDenoiser(1.0)(Signal.flat([1.0, 2.0]))
    with pytest.raises(ShapeMismatchError):
        SoftThresholdDenoiser(0.1, "dct")(Signal.flat([1.0, 2.0]))


def test_gaussian_kernel_is_a_probability_mask():
    for length, sigma in ((16, 1.5), (5, 4.0), (9, 0.0)):
        profile = periodic_gaussian(length, sigma)
        assert np.all(profile >= 0)
        assert profile.sum() == pytest.approx(1.0)
    kernel = GaussianSmoothDenoiser(2.0).kernel((16, 12))
    assert np.all(kernel >= 0)
    assert kernel.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("sigma", [0.5, 1.5, 6.0])
@pytest.mark.parametrize("shape", [(16, 16), (7, 10)])
def test_gaussian_spectrum_is_in_unit_interval(sigma, shape):
    spectrum = GaussianSmoothDenoiser(sigma).spectrum(shape)
    assert np.max(np.abs(spectrum)) <= 1.0 + 1e-12
    assert np.min(spectrum.real) >= -1e-12
    assert np.max(np.abs(spectrum.imag)) <= 1e-12


def test_identity_spectrum():
    assert np.all(IdentityDenoiser().spectrum((4, 4)) == 1.0)


def test_nonexpansiveness_of_identity_is_exactly_one():
    assert nonexpansiveness_probe(IdentityDenoiser(), 100, seed=0) == 1.0


@pytest.mark.parametrize(
    "denoiser",
    [
        IdentityDenoiser(),
        SoftThresholdDenoiser(0.5),
        SoftThresholdDenoiser(2.0, "dct"),
        GaussianSmoothDenoiser(1.5),
        NonnegativeProjection(),
    ],
    ids=repr,
)
def test_shipped_denoisers_are_nonexpansive(denoiser):
    assert nonexpansiveness_probe(denoiser, 1000, seed=7) <= 1.0 + 1e-10


def test_nonexpansiveness_detects_expansive_operator():
    class Doubling(IdentityDenoiser):
        def apply_array(self, values, shape):
            return 2.0 * values

    assert nonexpansiveness_probe(Doubling(), 10, seed=0) == pytest.approx(2.0)


def test_make_denoiser_catalog():
    for variant in DENOISER_VARIANTS:
        assert make_denoiser(variant, 0.5).name == variant
    with pytest.raises(ValueError):
        make_denoiser("bm3d", 0.5)
    with pytest.raises(ValueError):
        make_denoiser("soft_threshold", 0.5, transform="wavelet")
    with pytest.raises(ValueError):
        SoftThresholdDenoiser(-1.0)


if __name__ == "__main__":
    pytest.main()
