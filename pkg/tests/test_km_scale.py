"""Tests for Kramers-Moyal coefficients in scale and the Hurst exponent they give."""
import numpy as np
import pandas as pd
import pytest

from src.analysis.core_series import IncrementSeries
from src.analysis.errors import (
    InsufficientDataError,
    InvalidArgumentError,
    InvalidConfigError,
    OneSidedSupportError,
)
from src.analysis.km_scale import (
    IncrementEnsemble,
    build_ensemble,
    epanechnikov,
    estimate_km,
    exact_field,
    hurst_from_drift,
    km_grid,
    multifractal_b,
    self_similar_slopes,
    silverman_bandwidth,
    xi_from_km,
)
from src.analysis.mfdfa import profile

GRID = np.linspace(-2.0, 2.0, 41)


class TestEnsemble:
    """Increments paired across lags."""

    def test_lengths_per_lag(self, make_series):
        ens = build_ensemble(make_series(np.arange(100.0) ** 1.1), [1, 2, 4])
        assert ens.lags == (1, 2, 4)
        assert [len(ens.increments[lag]) for lag in ens.lags] == [99, 98, 96]
        small, large = ens.pair(1, 4)
        assert small.size == large.size == 96

    def test_requires_unit_lag(self, make_series):
        with pytest.raises(InvalidConfigError):
            build_ensemble(make_series(np.arange(100.0)), [2, 4])

    def test_largest_lag_below_quarter_length(self, make_series):
        with pytest.raises(InvalidConfigError):
            build_ensemble(make_series(np.arange(100.0)), [1, 25])


class TestKernel:
    """Kernel, bandwidth and grid helpers."""

    def test_epanechnikov_support(self):
        np.testing.assert_allclose(epanechnikov(np.array([-1.5, -1.0, 0.0, 0.5, 1.0])), [0.0, 0.0, 0.75, 0.5625, 0.0])

    def test_silverman_rule(self):
        sample = np.random.default_rng(1).standard_normal(3125)
        np.testing.assert_allclose(silverman_bandwidth(sample), 1.06 * np.std(sample) / 5.0)

    def test_grid_is_mirrored(self):
        sample = np.random.default_rng(2).standard_normal(1000)
        grid = km_grid(sample, 101)
        assert grid.size == 101
        assert grid[50] == 0.0
        np.testing.assert_array_equal(grid, -grid[::-1])
        np.testing.assert_allclose(grid[-1], 4.0 * np.std(sample))


class TestExactFields:
    """Noise-free fields with known answers."""

    def test_single_direction_drift(self):
        """D_1 = -0.7 dx / tau reads as H = 0.7."""
        fit = hurst_from_drift(exact_field(GRID, drift_slope=-0.7))
        np.testing.assert_allclose(fit.H, 0.7, atol=1e-12)
        assert fit.reverse_slope is None

    @pytest.mark.parametrize("H", [0.3, 0.5, 0.7, 0.9])
    def test_two_direction_drift(self, H):
        """Self-similar forward and reverse slopes give back their H."""
        forward, reverse = self_similar_slopes(H)
        fit = hurst_from_drift(exact_field(GRID, drift_slope=forward, reverse_slope=reverse))
        np.testing.assert_allclose(fit.H, H, atol=1e-10)

    def test_brownian_slopes(self):
        """Forward drift vanishes and reverse drift is -0.5 per step for H = 0.5."""
        forward, reverse = self_similar_slopes(0.5)
        np.testing.assert_allclose([forward, reverse], [0.0, -0.5], atol=1e-12)

    def test_quadratic_diffusion(self):
        fit = multifractal_b(exact_field(GRID, b=0.04))
        np.testing.assert_allclose(fit.b, 0.04, atol=1e-12)

    def test_constant_diffusion_has_no_curvature(self):
        fit = multifractal_b(exact_field(GRID, diffusion_level=0.3))
        assert abs(fit.b) < 1e-12
        np.testing.assert_allclose(fit.offset, 0.3, atol=1e-12)

    def test_negative_curvature_is_clamped(self):
        grid = np.linspace(-1.0, 1.0, 21)
        field = exact_field(grid, b=-0.01, diffusion_level=0.5)
        fit = multifractal_b(field)
        assert fit.b == 0.0
        assert fit.raw_b < 0

    def test_one_sided_support(self):
        with pytest.raises(OneSidedSupportError):
            hurst_from_drift(exact_field(np.linspace(0.1, 1.0, 11), drift_slope=-0.5))

    def test_too_few_bins(self):
        with pytest.raises(InsufficientDataError):
            hurst_from_drift(exact_field(np.array([-1.0, 0.0, 1.0]), drift_slope=-0.5))


class TestXi:
    """Structure-function exponents from H and b."""

    def test_examples(self):
        np.testing.assert_allclose(xi_from_km(0.5, 0.0, [2]), [1.0])
        np.testing.assert_allclose(xi_from_km(0.7, 0.05, [4]), [2.2])

    def test_negative_b_rejected(self):
        with pytest.raises(InvalidArgumentError):
            xi_from_km(0.5, -0.01, [1, 2])


class TestEstimateKm:
    """Kernel estimates on synthetic paths."""

    def test_brownian_path(self, synthetic):
        """Reverse drift slope near -0.5, forward near 0, H near 0.5."""
        x = synthetic("brownian", 2 ** 16, seed=21)
        field = estimate_km(build_ensemble(x, [1, 2]))
        fit = hurst_from_drift(field)
        assert abs(fit.reverse_slope + 0.5) < 0.05
        assert abs(fit.drift_slope) < 0.05
        assert abs(fit.H - 0.5) < 0.1
        assert np.all(field.diffusion[field.usable] >= 0.0)

    @pytest.mark.parametrize("H", [0.3, 0.7])
    def test_fbm_path(self, synthetic, H):
        x = synthetic("fbm_path", 2 ** 16, seed=8, H=H)
        fit = hurst_from_drift(estimate_km(build_ensemble(x, [1, 2])))
        assert abs(fit.H - H) < 0.1

    @pytest.mark.parametrize("H", [0.2, 0.3, 0.5, 0.7, 0.8])
    def test_integrated_fgn_over_many_seeds(self, synthetic, H):
        """Every one of 20 profiles of length 2^17 gives H within 0.1."""
        for seed in range(20):
            path = profile(synthetic("fgn", 2 ** 17, seed=seed, H=H))
            fit = hurst_from_drift(estimate_km(build_ensemble(path, [1, 2])))
            assert abs(fit.H - H) < 0.1, f"seed {seed}: H_KM = {fit.H:.3f}"

    def test_brownian_diffusion_is_flat(self, synthetic):
        """Independent steps have a constant D_2, so b is zero within 0.01."""
        for seed in (3, 17):
            field = estimate_km(build_ensemble(synthetic("brownian", 2 ** 17, seed=seed), [1, 2]))
            fit = multifractal_b(field)
            assert fit.b < 0.01
            assert abs(fit.raw_b) < 0.01

    def test_affine_transform_leaves_h_unchanged(self, synthetic):
        """Scaling and shifting the path moves the grid, not the estimate."""
        x = synthetic("fbm_path", 2 ** 14, seed=5, H=0.6)
        base = hurst_from_drift(estimate_km(build_ensemble(x, [1, 2]))).H
        moved = x.with_values(3.7 * x.values + 120.0)
        assert abs(hurst_from_drift(estimate_km(build_ensemble(moved, [1, 2]))).H - base) < 1e-9

    def test_shift_leaves_field_identical(self, synthetic):
        """On a dyadic grid of values a shift changes no increment at all."""
        x = synthetic("brownian", 2 ** 13, seed=6)
        x = x.with_values(np.round(x.values * 8.0) / 8.0)
        first = estimate_km(build_ensemble(x, [1, 2]))
        second = estimate_km(build_ensemble(x.with_values(x.values + 1024.0), [1, 2]))
        np.testing.assert_array_equal(first.drift, second.drift)
        np.testing.assert_array_equal(first.counts, second.counts)

    def test_drift_is_antisymmetric_for_symmetric_data(self):
        """Sign-symmetric increments give D_1(-dx) = -D_1(dx) within the standard error."""
        rng = np.random.default_rng(13)
        a = rng.standard_normal(2 ** 13)
        b = a + rng.standard_normal(2 ** 13)
        interval = pd.Timedelta("1h")
        ens = IncrementEnsemble(
            lags=(1, 2),
            increments={
                1: IncrementSeries(np.concatenate([a, -a]), 1, "sym", interval),
                2: IncrementSeries(np.concatenate([b, -b]), 2, "sym", interval),
            },
            sample_interval=interval,
        )
        field = estimate_km(ens)
        both = field.usable & field.usable[::-1]
        gap = np.abs(field.drift[both] + field.drift[::-1][both])
        assert np.all(gap <= 3.0 * field.drift_stderr[both])

    def test_km_rows_columns(self, synthetic):
        field = estimate_km(build_ensemble(synthetic("brownian", 4096, seed=1), [1, 2]))
        rows = list(field.to_rows())
        assert len(rows) == 101
        assert list(rows[0]) == ["dx", "D1", "D2", "count", "reverse_drift"]

    @pytest.mark.parametrize(
        "kwargs",
        [dict(order=3), dict(grid_size=100), dict(grid_size=9), dict(bandwidth=0.0), dict(bandwidth="wide")],
    )
    def test_invalid_settings(self, synthetic, kwargs):
        ens = build_ensemble(synthetic("brownian", 1024, seed=1), [1, 2])
        with pytest.raises(InvalidConfigError):
            estimate_km(ens, **kwargs)

    def test_no_usable_bins(self, synthetic):
        ens = build_ensemble(synthetic("brownian", 1024, seed=1), [1, 2])
        with pytest.raises(InsufficientDataError):
            estimate_km(ens, min_occupancy=1e9)

    def test_drift_only_field_has_no_diffusion(self, synthetic):
        field = estimate_km(build_ensemble(synthetic("brownian", 4096, seed=2), [1, 2]), order=1)
        assert field.diffusion is None
        with pytest.raises(InvalidConfigError):
            multifractal_b(field)
