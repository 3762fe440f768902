"""1/f flux noise synthesized from random-telegraph fluctuator ensembles.

Each of the six control channels (energy bias and tunnel splitting of the two
data qubits and the coupler) carries an independent set of two-state
fluctuators.  Fluctuator i switches between +v and -v as a Poisson process
with rate gamma_i; rates are drawn log-uniformly from the configured band
with a fixed number per decade.  A sum of such fluctuators has one-sided
power spectral density

    S(f) = sum_i 2 gamma_i v^2 / (gamma_i^2 + (pi f)^2)
         ~ amplitude / f        for gamma_min << f << gamma_max,

when v^2 = amplitude * ln(gamma_max/gamma_min) / n_fluctuators.  ``amplitude``
is the flux PSD at unit frequency (flux-quantum squared); the default 1e-12
corresponds to 1 micro-flux-quantum per sqrt(Hz) at 1 Hz.

Within one realization every channel is piecewise constant; the merged
switching times of all channels define the global interval partition used by
the propagator, additionally subdivided so no interval exceeds
min(T1_min/200, duration/100).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import CHANNELS, N_CHANNELS, SystemParams

# Distinguishes the rate-drawing streams from per-iteration streams (which use
# three-component keys).
_RATES_STREAM_TAG = 0


@dataclass(frozen=True)
class NoiseParams:
    """Fluctuator-ensemble configuration.

    amplitude : flux PSD at unit frequency, flux-quantum^2 (0 disables noise).
    band : fluctuator switching-rate band (GHz).
    fluctuators_per_decade : rate density (log-uniform draws per decade).
    """

    amplitude: float = 1e-12
    band: tuple[float, float] = (1e-5, 1.0)
    fluctuators_per_decade: int = 3

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be non-negative")
        if not 0 < self.band[0] < self.band[1]:
            raise ValueError("band must satisfy 0 < gamma_min < gamma_max")
        if self.fluctuators_per_decade < 3:
            raise ValueError("at least 3 fluctuators per decade are required")


@dataclass(frozen=True)
class Ensemble:
    """Fluctuator rates and amplitudes for all channels (device-fixed)."""

    noise: NoiseParams
    system: SystemParams
    master_seed: int
    rates: np.ndarray  # (N_CHANNELS, n_fluctuators), GHz
    v_flux: float  # per-fluctuator flux amplitude, flux quanta

    @property
    def n_fluctuators(self) -> int:
        return self.rates.shape[1]


@dataclass(frozen=True)
class Realization:
    """One piecewise-constant noise trajectory on a merged partition.

    boundaries : (n_intervals + 1,) interval edges in ns, starting at 0.
    values : (n_intervals, N_CHANNELS) channel energy offsets in GHz.
    """

    boundaries: np.ndarray
    values: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.values.shape[0]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.boundaries)


def build_ensemble(
    noise: NoiseParams, system: SystemParams, master_seed: int
) -> Ensemble:
    """Draw the fluctuator rates for every channel.

    Rates depend only on the master seed (they model fixed device defects);
    telegraph trajectories are redrawn per iteration by `sample_realization`.
    """
    gamma_min, gamma_max = noise.band
    decades = math.log10(gamma_max / gamma_min)
    n = max(1, math.ceil(noise.fluctuators_per_decade * decades))
    rates = np.empty((N_CHANNELS, n))
    for channel in range(N_CHANNELS):
        seq = np.random.SeedSequence((master_seed, _RATES_STREAM_TAG, 0, channel))
        rng = np.random.default_rng(seq)
        rates[channel] = gamma_min * (gamma_max / gamma_min) ** rng.random(n)
    log_ratio = math.log(gamma_max / gamma_min)
    v_flux = math.sqrt(noise.amplitude * log_ratio / n)
    return Ensemble(noise, system, master_seed, rates, v_flux)


def interval_cap(system: SystemParams, duration: float) -> float:
    """Maximum allowed interval length for a schedule of given duration."""
    t1_min = min(system.t1)
    cap = duration / 100.0
    if math.isfinite(t1_min):
        cap = min(cap, t1_min / 200.0)
    return cap


def sample_realization(
    ensemble: Ensemble, duration: float, iteration: int
) -> Realization:
    """Draw one telegraph trajectory per fluctuator and merge the partition.

    The stream for channel c is keyed (master_seed, iteration, c), so a given
    (seed, iteration) pair reproduces the same realization regardless of how
    many iterations ran before it.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    flips_per_channel: list[list[np.ndarray]] = []
    signs_per_channel: list[np.ndarray] = []
    all_times = [np.array([0.0, duration])]
    for channel in range(N_CHANNELS):
        seq = np.random.SeedSequence((ensemble.master_seed, iteration + 1, channel))
        rng = np.random.default_rng(seq)
        channel_flips = []
        initial = rng.integers(0, 2, size=ensemble.n_fluctuators) * 2 - 1
        for rate in ensemble.rates[channel]:
            count = rng.poisson(rate * duration)
            times = np.sort(rng.uniform(0.0, duration, size=count))
            channel_flips.append(times)
            if count:
                all_times.append(times)
        flips_per_channel.append(channel_flips)
        signs_per_channel.append(initial.astype(float))

    boundaries = np.unique(np.concatenate(all_times))
    boundaries = _subdivide(boundaries, interval_cap(ensemble.system, duration))
    midpoints = 0.5 * (boundaries[:-1] + boundaries[1:])

    values = np.zeros((len(midpoints), N_CHANNELS))
    if ensemble.noise.amplitude > 0:
        for channel in range(N_CHANNELS):
            total = np.zeros(len(midpoints))
            for i, flips in enumerate(flips_per_channel[channel]):
                parity = np.searchsorted(flips, midpoints) % 2
                total += signs_per_channel[channel][i] * (1.0 - 2.0 * parity)
            slope = ensemble.system.slopes[channel]
            values[:, channel] = slope * ensemble.v_flux * total
    return Realization(boundaries=boundaries, values=values)


def _subdivide(boundaries: np.ndarray, cap: float) -> np.ndarray:
    """Insert uniform points so no interval exceeds ``cap``."""
    pieces = [boundaries[:1]]
    for left, right in zip(boundaries[:-1], boundaries[1:]):
        n_sub = max(1, math.ceil((right - left) / cap))
        pieces.append(np.linspace(left, right, n_sub + 1)[1:])
    return np.concatenate(pieces)


def channel_value(realization: Realization, channel: int | str, t: float) -> float:
    """Channel energy offset (GHz) at time ``t``.

    Boundaries belong to the interval they open; ``t`` equal to the final
    boundary reads the last interval.
    """
    if isinstance(channel, str):
        channel = CHANNELS.index(channel)
    boundaries = realization.boundaries
    if not boundaries[0] <= t <= boundaries[-1]:
        raise ValueError("time outside the realization window")
    index = min(
        int(np.searchsorted(boundaries, t, side="right")) - 1,
        realization.n_intervals - 1,
    )
    return float(realization.values[index, channel])
