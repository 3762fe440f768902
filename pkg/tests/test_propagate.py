"""Propagator accuracy and invariants, validated against an independent RK4
integrator and closed-form two-level results."""

import math

import numpy as np
import pytest

from fluxsim import hilbert
from fluxsim.model import SystemParams
from fluxsim.noise import NoiseParams, build_ensemble, sample_realization
from fluxsim.propagate import (
    PropagationSettings,
    SchedulePlan,
    adiabaticity_profile,
    evolve_interval,
    interval_propagator,
    rk4_reference,
)
from fluxsim.schedule import (
    ControlSchedule,
    MicrowavePulse,
    Segment,
    Waveform,
    tabulate,
)

DECOUPLED = SystemParams(j_res=1e-12, j_c=1e-12, f_r=(0.0, 0.0))


def constant_schedule(duration, eps=(0, 0, 17.0), delta=(5.0, 6.0, 0.2)):
    values = (eps[0], delta[0], eps[1], delta[1], eps[2], delta[2])
    return ControlSchedule(tuple(Waveform.constant(v, duration) for v in values))


def pulse_schedule(duration, pulse, **kwargs):
    sched = constant_schedule(duration, **kwargs)
    return ControlSchedule(sched.waveforms, (pulse,))


class TestStaticEvolution:
    def test_isolated_qubit_rabi_flip(self):
        # H = delta/2 sigma_x on qubit 1: P(flip) = sin^2(pi delta t), full
        # flip at t = 1/(2 delta) = 0.1 ns for delta = 5 GHz.
        sched = constant_schedule(0.1, eps=(0, 0, 0), delta=(5.0, 0, 0))
        plan = SchedulePlan(DECOUPLED, sched)
        u = interval_propagator(plan, 0.0, 0.1)
        psi = u @ hilbert.basis_state(0, 0, 0, 0, 0)
        p_flip = abs(psi[hilbert.basis_index(1, 0, 0, 0, 0)]) ** 2
        assert abs(p_flip - 1.0) < 1e-9

    def test_rabi_oscillation_profile(self):
        delta = 5.0
        for t in (0.02, 0.04, 0.07):
            sched = constant_schedule(t, eps=(0, 0, 0), delta=(delta, 0, 0))
            plan = SchedulePlan(DECOUPLED, sched)
            u = interval_propagator(plan, 0.0, t)
            psi = u @ hilbert.basis_state(0, 0, 0, 0, 0)
            p_flip = abs(psi[hilbert.basis_index(1, 0, 0, 0, 0)]) ** 2
            assert abs(p_flip - math.sin(math.pi * delta * t) ** 2) < 1e-9

    def test_zero_hamiltonian_is_identity(self):
        sched = constant_schedule(1.0, eps=(0, 0, 0), delta=(0, 0, 0))
        plan = SchedulePlan(DECOUPLED, sched)
        u = interval_propagator(plan, 0.0, 1.0)
        np.testing.assert_allclose(u, np.eye(32), atol=1e-9)

    def test_dressed_eigenstate_is_stationary(self):
        params = SystemParams()
        sched = constant_schedule(10.0, delta=(14.0, 14.0, 0.2))
        plan = SchedulePlan(params, sched)
        h0 = plan.coupling + plan.pieces[0].h_const
        _, vectors = hilbert.eigh(h0)
        psi0 = vectors[:, -1]  # lowest-energy dressed state
        psi = evolve_interval(psi0, plan, None, 0.0, 10.0)
        assert abs(abs(psi0.conj() @ psi) - 1.0) < 1e-10


class TestDrivenEvolution:
    def setup_method(self):
        self.params = SystemParams()
        self.pulse = MicrowavePulse(
            qubit=0, t0=0.1, duration=1.7, amp=0.6325, freq=5.0, phase=0.3
        )
        self.sched = pulse_schedule(1.9, self.pulse)
        self.plan = SchedulePlan(self.params, self.sched)
        self.psi0 = hilbert.basis_state(0, 0, 0, 0, 0)

    def test_matches_independent_rk4(self):
        ref = rk4_reference(self.plan, self.psi0, 0.0, 1.9, 40000)
        u = interval_propagator(
            self.plan, 0.0, 1.9, settings=PropagationSettings(rtol=1e-8)
        )
        assert np.linalg.norm(u @ self.psi0 - ref) < 1e-7

    def test_tolerance_mapping_margins(self):
        ref = rk4_reference(self.plan, self.psi0, 0.0, 1.9, 40000)
        for rtol, bound in ((1e-5, 1e-4), (1e-7, 1e-6)):
            u = interval_propagator(
                self.plan, 0.0, 1.9, settings=PropagationSettings(rtol=rtol)
            )
            assert np.linalg.norm(u @ self.psi0 - ref) < bound

    def test_halving_tolerance_converged(self):
        settings = PropagationSettings()  # default rtol 1e-10
        halved = PropagationSettings(rtol=settings.rtol / 2)
        u1 = interval_propagator(self.plan, 0.0, 1.9, settings=settings)
        u2 = interval_propagator(self.plan, 0.0, 1.9, settings=halved)
        assert np.linalg.norm((u1 - u2) @ self.psi0) < 1e-9

    def test_unitarity(self):
        u = interval_propagator(
            self.plan, 0.0, 1.9, settings=PropagationSettings(rtol=1e-6)
        )
        np.testing.assert_allclose(u.conj().T @ u, np.eye(32), atol=1e-12)

    def test_semigroup_splitting_consistency(self):
        # Composing propagators over arbitrary sub-windows must reproduce the
        # whole-window propagator (catches window-cut and ordering bugs).
        settings = PropagationSettings(rtol=1e-8)
        whole = interval_propagator(self.plan, 0.0, 1.9, settings=settings)
        cuts = [0.0, 0.37, 0.8421, 1.1, 1.65, 1.9]
        parts = np.eye(32, dtype=complex)
        for a, b in zip(cuts[:-1], cuts[1:]):
            parts = interval_propagator(self.plan, a, b, settings=settings) @ parts
        assert np.linalg.norm(parts - whole) < 1e-9

    def test_time_reversal(self):
        # H(t) is a real symmetric matrix, so evolution under -H equals the
        # complex conjugate of the forward evolution; running the time-mirrored
        # schedule therefore inverts the original propagator up to conjugation.
        duration = 1.9
        mirrored_pulse = MicrowavePulse(
            qubit=0,
            t0=duration - self.pulse.t1,
            duration=self.pulse.duration,
            amp=self.pulse.amp,
            freq=self.pulse.freq,
            phase=-(self.pulse.phase + 2 * math.pi * self.pulse.freq * duration),
        )
        mirrored = ControlSchedule(self.sched.waveforms, (mirrored_pulse,))
        settings = PropagationSettings(rtol=1e-9)
        u = interval_propagator(self.plan, 0.0, duration, settings=settings)
        u_mirror = interval_propagator(
            SchedulePlan(self.params, mirrored), 0.0, duration, settings=settings
        )
        round_trip = np.conj(u_mirror) @ u
        phase = round_trip[0, 0] / abs(round_trip[0, 0])
        np.testing.assert_allclose(round_trip / phase, np.eye(32), atol=1e-8)


class TestLandauZener:
    # Linear sweeps of qubit 1 through its resonator crossing, with the rate
    # chosen so the non-adiabatic branching probability
    # exp(-4 pi^2 j^2 / rate) is close to 1/2.
    RATE = 4 * math.pi**2 * 0.1**2 / math.log(2.0)

    @staticmethod
    def _sweep(delta_hi, delta_lo, duration):
        params = SystemParams(j_res=0.1, j_c=1e-10)
        delta_ramp = Waveform(
            (Segment(0.0, duration, "linear", delta_hi, delta_lo),)
        )
        waves = (
            Waveform.constant(0.0, duration),
            delta_ramp,
            Waveform.constant(0.0, duration),
            Waveform.constant(14.0, duration),
            Waveform.constant(17.0, duration),
            Waveform.constant(0.2, duration),
        )
        plan = SchedulePlan(params, ControlSchedule(waves))
        h0 = plan.coupling + plan.pieces[0].h_const
        _, vectors = np.linalg.eigh(h0)
        # Start in the eigenstate dominated by the bare excited qubit |q1=1>.
        weights = np.abs(vectors[hilbert.basis_index(1, 0, 0, 0, 0), :])
        psi0 = vectors[:, int(np.argmax(weights))].astype(complex)
        return plan, psi0

    @staticmethod
    def _transfer_probability(psi):
        p_res = hilbert.partial_trace(np.outer(psi, psi.conj()), keep=(3,))
        return float(p_res[1, 1].real)

    def test_crossing_matches_independent_integrator(self):
        duration = 12.0 / self.RATE * 0.5  # sweep 12 -> 6 GHz
        plan, psi0 = self._sweep(12.0, 6.0, duration)
        psi_cf4 = interval_propagator(
            plan, 0.0, duration, settings=PropagationSettings(rtol=1e-9)
        ) @ psi0
        psi_rk4 = rk4_reference(plan, psi0, 0.0, duration, 80000)
        assert np.linalg.norm(psi_cf4 - psi_rk4) < 1e-8
        assert abs(
            self._transfer_probability(psi_cf4)
            - self._transfer_probability(psi_rk4)
        ) < 1e-8

    def test_transfer_probability_matches_asymptotic_formula(self):
        # A wide sweep window tames (but does not remove) the oscillatory
        # finite-window corrections to the infinite-sweep formula, so this is
        # a sanity anchor; the precision check is the integrator comparison.
        duration = 12.0 / self.RATE
        plan, psi0 = self._sweep(15.0, 3.0, duration)
        psi_cf4 = interval_propagator(
            plan, 0.0, duration, settings=PropagationSettings(rtol=1e-9)
        ) @ psi0
        p_adiabatic = 1.0 - math.exp(-4 * math.pi**2 * 0.1**2 / self.RATE)
        assert abs(self._transfer_probability(psi_cf4) - p_adiabatic) < 0.04


class TestNoiseOffsets:
    def test_matches_rk4_with_offsets(self):
        params = SystemParams()
        pulse = MicrowavePulse(0, 0.05, 0.6, 0.6325, 5.0, 0.0)
        sched = pulse_schedule(0.7, pulse)
        plan = SchedulePlan(params, sched)
        noise_values = np.array([3e-3, -2e-4, -1e-3, 1e-4, 5e-3, -3e-4])
        psi0 = hilbert.basis_state(0, 0, 0, 0, 0)
        u = interval_propagator(
            plan, 0.0, 0.7, noise_values, PropagationSettings(rtol=1e-8)
        )
        ref = rk4_reference(plan, psi0, 0.0, 0.7, 20000, noise_values)
        assert np.linalg.norm(u @ psi0 - ref) < 1e-7

    def test_evolve_interval_uses_realization_row(self):
        params = SystemParams()
        sched = constant_schedule(10.0)
        plan = SchedulePlan(params, sched)
        ensemble = build_ensemble(NoiseParams(), params, master_seed=4)
        realization = sample_realization(ensemble, 10.0, 0)
        k = realization.n_intervals // 2
        a, b = realization.boundaries[k], realization.boundaries[k + 1]
        psi0 = hilbert.basis_state(0, 0, 0, 0, 0)
        via_lookup = evolve_interval(psi0, plan, realization, a, b)
        direct = interval_propagator(plan, a, b, realization.values[k]) @ psi0
        np.testing.assert_allclose(via_lookup, direct, atol=1e-12)

    def test_window_spanning_intervals_rejected(self):
        params = SystemParams()
        sched = constant_schedule(10.0)
        plan = SchedulePlan(params, sched)
        ensemble = build_ensemble(NoiseParams(), params, master_seed=4)
        realization = sample_realization(ensemble, 10.0, 0)
        psi0 = hilbert.basis_state(0, 0, 0, 0, 0)
        with pytest.raises(ValueError):
            evolve_interval(
                psi0, plan, realization, 0.0, realization.boundaries[2]
            )


class TestAdiabaticityProfile:
    def test_static_schedule_is_zero(self):
        sched = constant_schedule(5.0)
        _, profile = adiabaticity_profile(sched, SystemParams(), qubit=0)
        assert np.all(profile == 0.0)

    def test_linear_ramp_peaks_at_minimum_gap(self):
        params = SystemParams()
        duration = 20.0
        delta_ramp = Waveform((Segment(0.0, duration, "linear", 12.0, 6.0),))
        waves = (
            Waveform.constant(0.0, duration),
            delta_ramp,
            Waveform.constant(0.0, duration),
            Waveform.constant(14.0, duration),
            Waveform.constant(17.0, duration),
            Waveform.constant(0.2, duration),
        )
        sched = ControlSchedule(waves)
        t_grid, profile = adiabaticity_profile(sched, params, qubit=0)

        # Locate the minimum gap independently on the same 4-dim block.
        sx_q = np.kron(np.eye(2), hilbert.SIGMA_X.real)
        num_r = np.kron(hilbert.NUMBER.real, np.eye(2))
        x_r = np.kron(hilbert.SIGMA_X.real, np.eye(2))
        sz_q = np.kron(np.eye(2), hilbert.SIGMA_Z.real)
        gaps = []
        for t in t_grid:
            delta = 12.0 + (6.0 - 12.0) * t / duration
            h4 = 0.5 * delta * sx_q + params.f_r[0] * num_r + params.j_res * (
                x_r @ sz_q
            )
            lam = np.linalg.eigvalsh(h4)
            gaps.append(lam[2] - lam[1])
        t_min_gap = t_grid[int(np.argmin(gaps))]
        t_peak = t_grid[int(np.argmax(profile))]
        dt = t_grid[1] - t_grid[0]
        assert abs(t_peak - t_min_gap) <= 2 * dt

    def test_invalid_qubit_rejected(self):
        with pytest.raises(ValueError):
            adiabaticity_profile(constant_schedule(1.0), SystemParams(), qubit=2)


class TestSettingsValidation:
    def test_rejects_bad_settings(self):
        with pytest.raises(ValueError):
            PropagationSettings(rtol=0.0)
        with pytest.raises(ValueError):
            PropagationSettings(max_step=-1.0)

    def test_max_step_caps_both_classes(self):
        s = PropagationSettings(rtol=1e-5, max_step=1e-3)
        assert s.drive_step() <= 1e-3
        assert s.ramp_step() <= 1e-3
