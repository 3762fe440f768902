"""Telegraph-noise synthesis: spectra, statistics, partition, determinism."""

import math

import numpy as np
import pytest
from scipy import signal

from fluxsim.model import CHANNELS, SystemParams
from fluxsim.noise import (
    NoiseParams,
    build_ensemble,
    channel_value,
    interval_cap,
    sample_realization,
)

UNIT_SLOPES = SystemParams(slopes=(1.0,) * 6)


def sample_on_grid(realization, t_grid, channel):
    idx = np.searchsorted(realization.boundaries, t_grid, side="right") - 1
    idx = np.clip(idx, 0, realization.n_intervals - 1)
    return realization.values[idx, channel]


class TestSpectrum:
    def test_ensemble_average_power_spectrum_is_one_over_f(self):
        # Independent oracle for the fluctuator-amplitude normalization: the
        # averaged periodogram of synthesized trajectories must reproduce
        # S(f) = amplitude / f in the interior of the rate band, both in
        # slope and in absolute level.
        amplitude = 1e-12
        noise = NoiseParams(amplitude=amplitude, band=(1e-5, 1.0))
        ensemble = build_ensemble(noise, UNIT_SLOPES, master_seed=2024)
        duration, dt = 3000.0, 1.0
        t_grid = np.arange(0.0, duration, dt)
        spectra = []
        for iteration in range(30):
            realization = sample_realization(ensemble, duration, iteration)
            x = sample_on_grid(realization, t_grid, channel=0)
            freqs, pxx = signal.periodogram(x, fs=1.0 / dt)
            spectra.append(pxx)
        mean_spectrum = np.mean(spectra, axis=0)

        fit_band = (freqs >= 1e-3) & (freqs <= 5e-2)
        f_fit = freqs[fit_band]
        log_f = np.log10(f_fit)
        log_s = np.log10(mean_spectrum[fit_band])
        # Bin in log-frequency to even out periodogram scatter.
        bins = np.linspace(log_f.min(), log_f.max() + 1e-9, 9)
        which = np.digitize(log_f, bins)
        bf, bs, bm = [], [], []
        for b in range(1, len(bins)):
            mask = which == b
            if mask.any():
                bf.append(log_f[mask].mean())
                bs.append(log_s[mask].mean())
                bm.append(mean_spectrum[fit_band][mask].mean())
        slope, intercept = np.polyfit(bf, bs, 1)
        assert -1.3 < slope < -0.7, f"spectral slope {slope:.3f}"

        level = np.mean(mean_spectrum[fit_band] * f_fit)
        assert 0.65 * amplitude < level < 1.35 * amplitude, f"S(f)*f = {level:.3e}"

        # Exact oracle: the ensemble-averaged spectrum is a known sum of
        # Lorentzians over the drawn switching rates.
        gammas = ensemble.rates[0]
        v2 = ensemble.v_flux**2
        for f_center, measured in zip(10.0 ** np.array(bf), bm):
            exact = np.sum(2.0 * gammas * v2 / (gammas**2 + (np.pi * f_center) ** 2))
            assert 0.8 * exact < measured < 1.2 * exact, (f_center, measured, exact)

    def test_single_fluctuator_autocorrelation(self):
        # One telegraph process: C(tau) = v^2 * exp(-2 gamma tau).
        noise = NoiseParams(amplitude=1e-12, band=(0.099, 0.101))
        ensemble = build_ensemble(noise, UNIT_SLOPES, master_seed=5)
        assert ensemble.n_fluctuators == 1
        gamma = ensemble.rates[0, 0]
        v = ensemble.v_flux
        duration, dt = 400.0, 0.5
        t_grid = np.arange(0.0, duration, dt)
        lags_ns = np.array([0.0, 2.0, 5.0, 10.0])
        lag_steps = (lags_ns / dt).astype(int)
        acc = np.zeros(len(lag_steps))
        n_real = 400
        for iteration in range(n_real):
            x = sample_on_grid(
                sample_realization(ensemble, duration, iteration), t_grid, 0
            )
            for j, lag in enumerate(lag_steps):
                if lag == 0:
                    acc[j] += np.mean(x * x)
                else:
                    acc[j] += np.mean(x[:-lag] * x[lag:])
        acc /= n_real
        expected = v**2 * np.exp(-2.0 * gamma * lags_ns)
        np.testing.assert_allclose(acc, expected, rtol=0.12)

    def test_flip_counts_are_poisson(self):
        noise = NoiseParams(amplitude=1e-12, band=(0.099, 0.101))
        ensemble = build_ensemble(noise, UNIT_SLOPES, master_seed=5)
        gamma = ensemble.rates[0, 0]
        duration = 200.0
        counts = []
        for iteration in range(300):
            realization = sample_realization(ensemble, duration, iteration)
            x = realization.values[:, 0]
            counts.append(int(np.sum(np.abs(np.diff(np.sign(x))) > 0)))
        mean_count = np.mean(counts)
        expected = gamma * duration
        # Poisson mean over 300 realizations: SE = sqrt(expected / 300).
        assert abs(mean_count - expected) < 5 * math.sqrt(expected / 300)


class TestEnsemble:
    def test_rates_within_band_log_uniform(self):
        noise = NoiseParams(amplitude=1e-12, band=(1e-4, 1.0), fluctuators_per_decade=30)
        ensemble = build_ensemble(noise, UNIT_SLOPES, master_seed=11)
        assert ensemble.rates.shape == (6, 120)
        assert np.all(ensemble.rates >= 1e-4) and np.all(ensemble.rates <= 1.0)
        # Roughly equal occupation per decade for every channel.
        for channel in range(6):
            log_rates = np.log10(ensemble.rates[channel])
            counts, _ = np.histogram(log_rates, bins=np.arange(-4.0, 0.5, 1.0))
            assert np.all(counts >= 15) and np.all(counts <= 45)

    def test_amplitude_normalization(self):
        noise = NoiseParams(amplitude=4e-12, band=(1e-5, 1.0))
        ensemble = build_ensemble(noise, UNIT_SLOPES, master_seed=1)
        n = ensemble.n_fluctuators
        assert n == 15
        expected_v = math.sqrt(4e-12 * math.log(1e5) / n)
        assert ensemble.v_flux == pytest.approx(expected_v)

    def test_values_are_integer_multiples_of_fluctuator_step(self):
        params = SystemParams()
        noise = NoiseParams()
        ensemble = build_ensemble(noise, params, master_seed=3)
        realization = sample_realization(ensemble, 60.0, iteration=0)
        for channel in range(6):
            step = params.slopes[channel] * ensemble.v_flux
            ratio = realization.values[:, channel] / step
            np.testing.assert_allclose(ratio, np.round(ratio), atol=1e-9)
            assert np.all(np.abs(ratio) <= ensemble.n_fluctuators)
            # Parity: sum of n terms each +-1 has the parity of n.
            assert np.all((np.round(ratio) - ensemble.n_fluctuators) % 2 == 0)

    def test_amplitude_scales_values_exactly(self):
        base = build_ensemble(NoiseParams(amplitude=1e-12), UNIT_SLOPES, 7)
        scaled = build_ensemble(NoiseParams(amplitude=1e-10), UNIT_SLOPES, 7)
        r1 = sample_realization(base, 50.0, 2)
        r2 = sample_realization(scaled, 50.0, 2)
        np.testing.assert_allclose(r1.boundaries, r2.boundaries)
        np.testing.assert_allclose(10.0 * r1.values, r2.values, rtol=1e-12)


class TestPartition:
    def test_partition_structure(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=42)
        duration = 65.0
        realization = sample_realization(ensemble, duration, iteration=0)
        b = realization.boundaries
        assert b[0] == 0.0 and b[-1] == pytest.approx(duration)
        assert np.all(np.diff(b) > 0)
        assert realization.values.shape == (len(b) - 1, 6)
        cap = interval_cap(SystemParams(), duration)
        assert np.max(np.diff(b)) <= cap * (1 + 1e-9)

    def test_partition_count_in_the_hundreds_for_gate_durations(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=42)
        counts = [
            sample_realization(ensemble, 65.0, iteration).n_intervals
            for iteration in range(5)
        ]
        assert all(150 <= n <= 1500 for n in counts), counts
        assert max(counts) / min(counts) < 2.0

    def test_finite_t1_caps_intervals(self):
        system = SystemParams(t1=(10.0, math.inf, math.inf))
        ensemble = build_ensemble(NoiseParams(), system, master_seed=1)
        realization = sample_realization(ensemble, 65.0, 0)
        assert np.max(realization.durations) <= 10.0 / 200.0 * (1 + 1e-9)

    def test_zero_amplitude_gives_silent_channels(self):
        ensemble = build_ensemble(NoiseParams(amplitude=0.0), SystemParams(), 1)
        realization = sample_realization(ensemble, 30.0, 0)
        assert np.all(realization.values == 0.0)
        assert realization.n_intervals >= 100  # duration cap still applies


class TestDeterminism:
    def test_same_seed_same_realization(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=9)
        r1 = sample_realization(ensemble, 40.0, iteration=3)
        r2 = sample_realization(ensemble, 40.0, iteration=3)
        np.testing.assert_array_equal(r1.boundaries, r2.boundaries)
        np.testing.assert_array_equal(r1.values, r2.values)

    def test_iterations_differ(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=9)
        r1 = sample_realization(ensemble, 40.0, iteration=0)
        r2 = sample_realization(ensemble, 40.0, iteration=1)
        assert r1.values.shape != r2.values.shape or not np.allclose(
            r1.values, r2.values
        )

    def test_master_seed_changes_rates(self):
        e1 = build_ensemble(NoiseParams(), SystemParams(), master_seed=1)
        e2 = build_ensemble(NoiseParams(), SystemParams(), master_seed=2)
        assert not np.allclose(e1.rates, e2.rates)


class TestChannelValue:
    def test_lookup_matches_interval_values(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=13)
        realization = sample_realization(ensemble, 20.0, 0)
        mids = 0.5 * (realization.boundaries[:-1] + realization.boundaries[1:])
        for k in range(0, realization.n_intervals, 37):
            for channel in range(6):
                assert channel_value(realization, channel, mids[k]) == (
                    realization.values[k, channel]
                )

    def test_channel_by_name_and_endpoint(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=13)
        realization = sample_realization(ensemble, 20.0, 0)
        assert channel_value(realization, "eps1", 20.0) == realization.values[-1, 0]
        assert CHANNELS.index("deltaC") == 5

    def test_out_of_range_raises(self):
        ensemble = build_ensemble(NoiseParams(), SystemParams(), master_seed=13)
        realization = sample_realization(ensemble, 20.0, 0)
        with pytest.raises(ValueError):
            channel_value(realization, 0, -0.1)
        with pytest.raises(ValueError):
            channel_value(realization, 0, 20.1)


class TestValidation:
    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            NoiseParams(amplitude=-1.0)
        with pytest.raises(ValueError):
            NoiseParams(band=(1.0, 0.1))
        with pytest.raises(ValueError):
            NoiseParams(fluctuators_per_decade=2)
        with pytest.raises(ValueError):
            sample_realization(
                build_ensemble(NoiseParams(), SystemParams(), 1), -5.0, 0
            )
