"""Tests for MFDFA: profile, detrending, fluctuation functions and Hurst distributions."""
import numpy as np
import pandas as pd
import pytest

from src.analysis.errors import (
    DegenerateVarianceError,
    InsufficientRangeError,
    InvalidArgumentError,
    InvalidConfigError,
)
from src.analysis.mfdfa import (
    FluctuationSurface,
    MfdfaConfig,
    ScaleBand,
    band_snippet_sizes,
    default_bands,
    default_snippet_sizes,
    fit_scaling,
    fluctuation_function,
    generalized_hurst,
    hurst_distribution,
    mfdfa,
    multifractal_spectrum,
    profile,
    segment_variances,
    small_scale_factor,
)


def _snippet_starts(n, tau):
    starts = list(range(0, n - tau + 1, tau))[: n // tau]
    if n % tau:
        starts += [n - (n // tau) * tau + i * tau for i in range(n // tau)]
    return starts


def _least_squares_variances(p, tau, m):
    """One lstsq per snippet on the same rescaled-time design."""
    design = np.vander(np.linspace(-1.0, 1.0, tau), m + 1)
    result = []
    for start in _snippet_starts(p.size, tau):
        segment = p[start : start + tau]
        coefficients, *_ = np.linalg.lstsq(design, segment, rcond=None)
        result.append(np.mean((segment - design @ coefficients) ** 2))
    return np.array(result)


def _brute_force_variances(p, tau, m):
    """Per-snippet polyfit, forward then backward."""
    t = np.arange(tau, dtype=float)
    result = []
    for start in _snippet_starts(p.size, tau):
        segment = p[start : start + tau]
        trend = np.polyval(np.polyfit(t, segment, m), t)
        result.append(np.mean((segment - trend) ** 2))
    return np.array(result)


class TestProfile:
    """Integration of the mean-subtracted series."""

    def test_alternating_series(self, make_series):
        np.testing.assert_allclose(profile(make_series([1.0, -1.0, 1.0, -1.0])).values, [1.0, 0.0, 1.0, 0.0])

    def test_constant_series_is_flat(self, make_series):
        np.testing.assert_allclose(profile(make_series([3.0, 3.0, 3.0, 3.0])).values, 0.0, atol=1e-12)

    def test_needs_four_samples(self, make_series):
        with pytest.raises(InvalidArgumentError):
            profile(make_series([1.0, 2.0, 3.0]))


class TestSegmentVariances:
    """Polynomial detrending of the profile snippets."""

    def test_linear_profile_detrends_exactly(self):
        """DFA1 leaves nothing of a straight line."""
        p = 3.0 + 2.0 * np.arange(4096.0)
        for tau in default_snippet_sizes(4096, 1):
            assert np.max(segment_variances(p, tau, m=1)) <= 1e-9

    def test_quadratic_profile_detrends_exactly(self):
        """DFA2 leaves nothing of a parabola."""
        t = np.arange(4096.0)
        p = 1.0 - t + 0.25 * t ** 2
        for tau in default_snippet_sizes(4096, 2):
            assert np.max(segment_variances(p, tau, m=2)) <= 1e-9

    @pytest.mark.parametrize("tau, m", [(8, 1), (7, 1), (7, 2), (5, 3)])
    def test_matches_per_snippet_polyfit(self, tau, m):
        """Vectorised detrending agrees with a plain per-snippet fit."""
        p = np.cumsum(np.random.default_rng(42).standard_normal(64))
        np.testing.assert_allclose(segment_variances(p, tau, m), _brute_force_variances(p, tau, m), rtol=1e-10)

    @pytest.mark.parametrize("tau, m", [(8, 1), (7, 1), (7, 2), (9, 3)])
    def test_matches_snippet_by_snippet_least_squares(self, tau, m):
        """Batching every snippet into one solve changes nothing beyond rounding."""
        p = np.cumsum(np.random.default_rng(42).standard_normal(64))
        np.testing.assert_allclose(
            segment_variances(p, tau, m), _least_squares_variances(p, tau, m), rtol=1e-12, atol=1e-14
        )

    def test_bidirectional_doubles_snippets(self):
        p = np.cumsum(np.random.default_rng(0).standard_normal(100))
        assert segment_variances(p, 7, bidirectional=True).size == 28
        assert segment_variances(p, 7, bidirectional=False).size == 14
        # 100 is a multiple of 10: no tail, no second pass
        assert segment_variances(p, 10, bidirectional=True).size == 10

    def test_snippet_too_small_for_order(self):
        with pytest.raises(InvalidConfigError):
            segment_variances(np.arange(50.0), 3, m=2)


class TestFluctuationFunction:
    """Averaging snippet variances under q-th powers."""

    def test_q2_is_root_mean_variance(self):
        surface = fluctuation_function({4: [1.0, 4.0]}, [2.0])
        np.testing.assert_allclose(surface.row(2.0), [np.sqrt(2.5)])

    def test_q0_is_geometric_mean(self):
        surface = fluctuation_function({4: [1.0, 4.0]}, [0.0])
        np.testing.assert_allclose(surface.row(0.0), [np.sqrt(2.0)])

    def test_zero_variance_with_negative_q(self):
        """A perfectly detrended snippet has no meaning under q <= 0."""
        with pytest.raises(DegenerateVarianceError):
            fluctuation_function({4: [0.0, 1.0]}, [-2.0])

    def test_zero_variance_is_fine_for_positive_q(self):
        surface = fluctuation_function({4: [0.0, 2.0]}, [2.0])
        np.testing.assert_allclose(surface.row(2.0), [1.0])


class TestSmallScaleCorrection:
    """White-noise correction factor K_m(tau)."""

    @pytest.mark.parametrize("tau", [3, 4, 8, 16, 100])
    def test_dfa1_closed_form(self, tau):
        """DFA1 white-noise F^2(tau) = (tau^2 - 4) / (15 tau)."""
        reference = (1024 ** 2 - 4) / 1024 ** 2
        expected = ((tau ** 2 - 4) / tau ** 2) / reference
        np.testing.assert_allclose(small_scale_factor(tau, 1), expected, rtol=1e-9)

    def test_factor_approaches_one(self):
        assert small_scale_factor(2048, 2) == 1.0
        assert abs(small_scale_factor(500, 2) - 1.0) < 1e-2

    def test_corrected_white_noise_is_flat(self, synthetic):
        """With the correction, white noise reads H = 0.5 down to tau = 4."""
        x = synthetic("white_noise", 2 ** 15, seed=11)
        config = MfdfaConfig(snippet_sizes=tuple(range(4, 17)), q_orders=(2.0,))
        slope = fit_scaling(mfdfa(x, config), 2.0, (4, 16)).slope
        assert abs(slope - 0.5) < 0.05


class TestMfdfa:
    """The full fluctuation surface."""

    @pytest.mark.parametrize("H", [0.2, 0.3, 0.5, 0.7, 0.8])
    def test_recovers_fgn_hurst(self, synthetic, H):
        """Over 20 seeds of length 2^16 the mean |h(2) - H| stays below 0.05."""
        n = 2 ** 16
        sizes = tuple(size for size in default_snippet_sizes(n, 1) if 8 <= size <= 256)
        config = MfdfaConfig(snippet_sizes=sizes, q_orders=(2.0,))
        errors = [
            abs(fit_scaling(mfdfa(synthetic("fgn", n, seed=seed, H=H), config), 2.0, (8, 256)).slope - H)
            for seed in range(20)
        ]
        assert np.mean(errors) < 0.05

    def test_fgn_is_monofractal(self, synthetic):
        """h(q) of fGn is flat in q, negative orders included."""
        x = synthetic("fgn", 2 ** 17, seed=2024, H=0.7)
        surface = mfdfa(x, MfdfaConfig.for_length(len(x), q_orders=(-4.0, -2.0, 0.0, 2.0, 4.0)))
        h = {q: fit.slope for q, fit in generalized_hurst(surface, (16, 1024)).items()}
        for q in (-4.0, -2.0, 0.0, 4.0):
            assert abs(h[q] - h[2.0]) < 0.05

    def test_affine_change_of_units_keeps_exponents(self, synthetic):
        """Rescaling and shifting prices moves log F_q by a constant, so every h(q) stays put."""
        x = synthetic("fgn", 2 ** 13, seed=8, H=0.35)
        config = MfdfaConfig.for_length(len(x))
        base = generalized_hurst(mfdfa(x, config), (8, 512))
        moved = generalized_hurst(mfdfa(x.with_values(37.5 * x.values - 120.0), config), (8, 512))
        for q, fit in base.items():
            assert abs(moved[q].slope - fit.slope) < 1e-9

    def test_spectrum_is_narrow_for_monofractal(self, synthetic):
        x = synthetic("fgn", 2 ** 15, seed=9, H=0.6)
        surface = mfdfa(x, MfdfaConfig.for_length(len(x), q_orders=(0.0, 2.0, 4.0)))
        spectrum = multifractal_spectrum(surface, (16, 1024))
        assert spectrum.width < 0.2
        np.testing.assert_allclose(spectrum.mass_exponents, spectrum.q * spectrum.h - 1.0)

    def test_largest_snippet_limited_to_quarter_length(self, synthetic):
        x = synthetic("white_noise", 256)
        with pytest.raises(InvalidConfigError):
            mfdfa(x, MfdfaConfig(snippet_sizes=(4, 8, 128)))

    def test_uncorrected_surface_is_flagged(self, synthetic):
        x = synthetic("white_noise", 1024)
        surface = mfdfa(x, MfdfaConfig.for_length(1024, small_scale_correction=False))
        assert not surface.corrected
        assert mfdfa(x, MfdfaConfig.for_length(1024)).corrected


class TestMfdfaConfig:
    """Validation of snippet sizes and q orders."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(snippet_sizes=()),
            dict(snippet_sizes=(8, 8, 16)),
            dict(snippet_sizes=(3, 8), detrend_order=2),
            dict(snippet_sizes=(8, 16), q_orders=()),
            dict(snippet_sizes=(8, 16), q_orders=(2.0, 2.0)),
            dict(snippet_sizes=(8, 16), q_orders=(-2.0, 2, 2.0)),
        ],
    )
    def test_rejected(self, kwargs):
        with pytest.raises(InvalidConfigError):
            MfdfaConfig(**kwargs)

    def test_orders_are_stored_as_floats(self):
        assert MfdfaConfig(snippet_sizes=(8, 16), q_orders=(0, 2)).q_orders == (0.0, 2.0)


class TestScaleBands:
    """Hourly and daily bands per sampling interval."""

    def test_hourly_data(self):
        hourly, daily = default_bands("1h")
        assert (hourly.tau_min, hourly.tau_max, hourly.detrend_order) == (3, 12, 1)
        assert (daily.tau_min, daily.tau_max, daily.detrend_order) == (12, 48, 2)

    def test_quarter_hourly_data(self):
        hourly, daily = default_bands(pd.Timedelta(minutes=15))
        assert (hourly.tau_min, hourly.tau_max) == (4, 48)
        assert (daily.tau_min, daily.tau_max) == (48, 192)

    def test_band_covers_every_size(self):
        assert band_snippet_sizes(ScaleBand("hourly", 3, 6)) == [3, 4, 5, 6]

    @pytest.mark.parametrize("kwargs", [dict(tau_min=12, tau_max=12), dict(tau_min=3, tau_max=12, detrend_order=2)])
    def test_invalid_bands(self, kwargs):
        with pytest.raises(InvalidConfigError):
            ScaleBand("bad", **kwargs)


class TestHurstDistribution:
    """Box-whisker statistics over all sub-windows of a band."""

    @staticmethod
    def _power_law_surface(exponent=0.6):
        sizes = np.arange(3, 13)
        return FluctuationSurface(
            snippet_sizes=sizes,
            q_orders=np.array([2.0]),
            values=np.array([2.0 * sizes ** exponent]),
            detrend_order=1,
        )

    def test_exact_power_law_has_no_spread(self):
        dist = hurst_distribution(self._power_law_surface(), ScaleBand("hourly", 3, 12))
        np.testing.assert_allclose([dist.q1, dist.median, dist.q3, dist.mean], 0.6, atol=1e-10)
        assert dist.std < 1e-10

    def test_counts_every_contiguous_window(self):
        """10 grid points and windows of at least 3 give 8 + 7 + ... + 1 = 36 fits."""
        dist = hurst_distribution(self._power_law_surface(), (3, 12))
        assert len(dist.estimates) == 36
        assert dist.windows[0] == (3, 5)
        assert dist.windows[-1] == (10, 12)

    def test_box_is_ordered(self, synthetic):
        x = synthetic("fgn", 4096, seed=4, H=0.7)
        surface = mfdfa(x, MfdfaConfig(snippet_sizes=tuple(range(3, 13))))
        dist = hurst_distribution(surface, ScaleBand("hourly", 3, 12))
        assert dist.whisker_low <= dist.q1 <= dist.median <= dist.q3 <= dist.whisker_high
        assert set(dist.to_dict()) >= {"n_windows", "mean", "std", "q1", "q3", "outliers"}

    def test_band_too_narrow(self):
        with pytest.raises(InsufficientRangeError):
            hurst_distribution(self._power_law_surface(), (3, 5))
