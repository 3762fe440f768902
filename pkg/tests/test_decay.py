"""Amplitude-damping channel and trajectory-expansion tests.

The analytic amplitude-damping semigroup (exact exponentials for population
and coherence) and exact probability bookkeeping serve as oracles.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fluxsim import hilbert
from fluxsim.decay import (
    DampingStep,
    TrajectoryRecord,
    apply_damping,
    combine_trajectories,
    damped_columns,
    damping_gamma,
    decompose_columns,
    expansion_step,
    instantaneous_eigenbasis,
    interval_damping_steps,
    kraus_pair,
    make_damping_step,
    sample_correction,
)

SQ2 = 1.0 / math.sqrt(2.0)


def qubit1_density(rho2):
    """Embed a 2x2 density matrix on data qubit 1, everything else |0><0|."""
    rest = np.zeros((16, 16))
    rest[0, 0] = 1.0
    return np.kron(rest, rho2)


class TestDampingGamma:
    def test_examples(self):
        assert damping_gamma(0.0, 37.0) == 0.0
        assert abs(damping_gamma(37.0, 37.0) - (1 - math.exp(-1))) < 1e-15
        assert abs(damping_gamma(37.0, 37.0) - 0.6321205588285577) < 1e-15

    def test_small_interval_taylor(self):
        t1 = 1e4
        g = damping_gamma(1e-3, t1)
        x = 1e-3 / t1
        assert abs(g - x) < x * x  # within second order

    def test_infinite_t1_is_exact_zero(self):
        assert damping_gamma(5.0, math.inf) == 0.0

    def test_arrays(self):
        g = damping_gamma([0.0, 1.0], [10.0, 10.0])
        np.testing.assert_allclose(g, [0.0, 1 - math.exp(-0.1)], atol=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            damping_gamma(-1.0, 10.0)
        with pytest.raises(ValueError):
            damping_gamma(1.0, 0.0)


class TestInstantaneousEigenbasis:
    def test_pure_sigma_z(self):
        # eps > 0: excited = |0> (sz=+1), ground = |1>; columns (g, e).
        m = instantaneous_eigenbasis(3.0, 0.0)
        np.testing.assert_allclose(np.abs(m), [[0, 1], [1, 0]], atol=1e-12)

    def test_pure_sigma_x(self):
        m = instantaneous_eigenbasis(0.0, 4.0)
        np.testing.assert_allclose(m[:, 0], [SQ2, -SQ2], atol=1e-12)
        np.testing.assert_allclose(m[:, 1], [SQ2, SQ2], atol=1e-12)

    def test_three_four_five(self):
        m = instantaneous_eigenbasis(3.0, 4.0)
        h = 0.5 * (3.0 * hilbert.SIGMA_Z + 4.0 * hilbert.SIGMA_X)
        d = m.conj().T @ h @ m
        np.testing.assert_allclose(d, np.diag([-2.5, 2.5]), atol=1e-12)

    def test_degenerate_point_rejected(self):
        with pytest.raises(ValueError):
            instantaneous_eigenbasis(0.0, 0.0)

    @given(
        eps=st.floats(-20, 20),
        delta=st.floats(0.1, 20),
    )
    @settings(max_examples=25, deadline=None)
    def test_unitary(self, eps, delta):
        m = instantaneous_eigenbasis(eps, delta)
        np.testing.assert_allclose(m.conj().T @ m, np.eye(2), atol=1e-12)


class TestKrausPair:
    @given(
        eps=st.floats(-10, 10),
        delta=st.floats(0.1, 10),
        gamma=st.floats(0, 1),
    )
    @settings(max_examples=25, deadline=None)
    def test_completeness(self, eps, delta, gamma):
        k0, k1 = kraus_pair(gamma, instantaneous_eigenbasis(eps, delta))
        np.testing.assert_allclose(
            k0.conj().T @ k0 + k1.conj().T @ k1, np.eye(2), atol=1e-14
        )

    def test_jump_moves_excited_to_ground(self):
        basis = instantaneous_eigenbasis(3.0, 4.0)
        _, k1 = kraus_pair(0.36, basis)
        ground, excited = basis[:, 0], basis[:, 1]
        out = k1 @ excited
        np.testing.assert_allclose(out, 0.6 * ground, atol=1e-12)
        np.testing.assert_allclose(k1 @ ground, 0.0, atol=1e-15)


class TestApplyDamping:
    def make_step(self, gamma, qubit=0):
        return DampingStep(qubit, gamma, instantaneous_eigenbasis(3.0, 4.0))

    def test_zero_gamma_identity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        steps = [self.make_step(0.0, q) for q in range(3)]
        np.testing.assert_allclose(apply_damping(rho, steps), rho, atol=1e-14)

    def test_full_decay_reaches_ground(self):
        basis = instantaneous_eigenbasis(3.0, 4.0)
        excited = np.outer(basis[:, 1], basis[:, 1].conj())
        ground = np.outer(basis[:, 0], basis[:, 0].conj())
        out = apply_damping(qubit1_density(excited), [self.make_step(1.0)])
        np.testing.assert_allclose(out, qubit1_density(ground), atol=1e-12)

    def test_semigroup_population_and_coherence(self):
        # Repeated small steps must reproduce the analytic channel exactly:
        # the per-step survival factors telescope into exp(-t/T1).
        t1, dtau, n = 80.0, 0.37, 60
        basis = instantaneous_eigenbasis(3.0, 4.0)
        rho_eig = np.array([[0.3, 0.35], [0.35, 0.7]])
        rho = qubit1_density(basis @ rho_eig @ basis.conj().T)
        step = DampingStep(0, damping_gamma(dtau, t1), basis)
        for _ in range(n):
            rho = apply_damping(rho, [step])
        excited = hilbert.embed(np.outer(basis[:, 1], basis[:, 1].conj()), 0)
        lower = hilbert.embed(np.outer(basis[:, 1], basis[:, 0].conj()), 0)
        t = n * dtau
        pop = np.trace(excited @ rho).real
        coherence = abs(np.trace(lower @ rho))
        assert abs(pop - 0.7 * math.exp(-t / t1)) < 1e-12
        assert abs(coherence - 0.35 * math.exp(-t / (2 * t1))) < 1e-12

    def test_trace_and_positivity(self):
        rng = np.random.default_rng(5)
        steps = [
            DampingStep(q, g, instantaneous_eigenbasis(e, d))
            for q, g, e, d in [(0, 0.2, 3, 4), (1, 0.07, 0, 6), (2, 0.5, 17, 0.2)]
        ]
        for _ in range(5):
            a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
            rho = a @ a.conj().T
            rho /= np.trace(rho).real
            out = apply_damping(rho, steps)
            assert abs(np.trace(out).real - 1.0) < 1e-12
            assert np.linalg.eigvalsh(out).min() > -1e-12

    def test_channel_order_irrelevant(self):
        # The per-qubit channels act on different tensor factors.
        rng = np.random.default_rng(6)
        a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        steps = [
            DampingStep(q, g, instantaneous_eigenbasis(e, d))
            for q, g, e, d in [(0, 0.3, 1, 5), (1, 0.1, 0, 6), (2, 0.6, 17, 0.2)]
        ]
        np.testing.assert_allclose(
            apply_damping(rho, steps),
            apply_damping(rho, steps[::-1]),
            atol=1e-13,
        )

    def test_commutes_with_own_eigenbasis_evolution(self):
        # Damping in the instantaneous eigenbasis commutes with evolution
        # generated by that same isolated-qubit Hamiltonian.
        gamma = 1e-3
        basis = instantaneous_eigenbasis(3.0, 4.0)
        step = DampingStep(0, gamma, basis)
        h = hilbert.embed(0.5 * (3.0 * hilbert.SIGMA_Z + 4.0 * hilbert.SIGMA_X), 0)
        lam, v = np.linalg.eigh(h)
        u = (v * np.exp(-2j * np.pi * 0.37 * lam)) @ v.conj().T
        rng = np.random.default_rng(7)
        a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        damp_then_rotate = u @ apply_damping(rho, [step]) @ u.conj().T
        rotate_then_damp = apply_damping(u @ rho @ u.conj().T, [step])
        diff = np.linalg.norm(damp_then_rotate - rotate_then_damp)
        assert diff <= 10 * gamma**2


class TestDampedColumns:
    def test_columns_reconstruct_dense_channel(self):
        rng = np.random.default_rng(11)
        psi = rng.normal(size=32) + 1j * rng.normal(size=32)
        psi /= np.linalg.norm(psi)
        steps = [
            DampingStep(q, g, instantaneous_eigenbasis(e, d))
            for q, g, e, d in [(0, 0.11, 3, 4), (1, 0.02, 0, 6), (2, 0.4, 17, 0.2)]
        ]
        cols = damped_columns(psi, steps)
        assert cols.shape == (32, 8)
        rho_fast = cols @ cols.conj().T
        rho_dense = apply_damping(np.outer(psi, psi.conj()), steps)
        np.testing.assert_allclose(rho_fast, rho_dense, atol=1e-13)

    def test_decompose_matches_dense_eigh(self):
        rng = np.random.default_rng(12)
        psi = rng.normal(size=32) + 1j * rng.normal(size=32)
        psi /= np.linalg.norm(psi)
        steps = [
            DampingStep(q, g, instantaneous_eigenbasis(e, d))
            for q, g, e, d in [(0, 0.11, 3, 4), (2, 0.4, 17, 0.2)]
        ]
        cols = damped_columns(psi, steps)
        lams, vectors = decompose_columns(cols)
        rho = apply_damping(np.outer(psi, psi.conj()), steps)
        lams_dense, vectors_dense = hilbert.eigh(rho)
        np.testing.assert_allclose(lams, lams_dense[: lams.size], atol=1e-12)
        for k in range(lams.size):
            if lams[k] > 1e-10:
                np.testing.assert_allclose(
                    vectors[:, k], vectors_dense[:, k], atol=1e-8
                )
        np.testing.assert_allclose(
            (vectors * lams) @ vectors.conj().T, rho, atol=1e-12
        )

    def test_batched(self):
        rng = np.random.default_rng(13)
        batch = rng.normal(size=(5, 32)) + 1j * rng.normal(size=(5, 32))
        batch /= np.linalg.norm(batch, axis=1, keepdims=True)
        steps = [DampingStep(0, 0.3, instantaneous_eigenbasis(0.0, 5.0))]
        cols = damped_columns(batch, steps)
        assert cols.shape == (5, 32, 2)
        lams, vectors = decompose_columns(cols)
        assert lams.shape == (5, 2)
        for b in range(5):
            single_l, single_v = decompose_columns(cols[b])
            np.testing.assert_allclose(lams[b], single_l, atol=1e-14)
            np.testing.assert_allclose(vectors[b], single_v, atol=1e-12)


class TestExpansion:
    def test_pure_state_recovered(self):
        rng = np.random.default_rng(2)
        psi = rng.normal(size=32) + 1j * rng.normal(size=32)
        psi /= np.linalg.norm(psi)
        record = TrajectoryRecord()
        out = expansion_step(np.outer(psi, psi.conj()), record)
        assert abs(abs(out.conj() @ psi) - 1.0) < 1e-10
        assert abs(record.eigenvalues[0][0] - 1.0) < 1e-10

    def test_leading_picks_dominant_branch(self):
        e1, e2 = np.zeros(32), np.zeros(32)
        e1[0], e2[7] = 1.0, 1.0
        rho = 0.99 * np.outer(e1, e1) + 0.01 * np.outer(e2, e2)
        out = expansion_step(rho, None, branch=1)
        assert abs(abs(out @ e1) - 1.0) < 1e-12
        out2 = expansion_step(rho, None, branch=2)
        assert abs(abs(out2 @ e2) - 1.0) < 1e-12

    def test_damped_superposition_second_branch_weight(self):
        # Exact 2x2 result: det rho' = gamma(1-gamma)/4 for an equal
        # superposition, so the sub-dominant eigenvalue is O(gamma).
        gamma = 1e-3
        basis = instantaneous_eigenbasis(0.0, 5.0)
        psi = qubit1_density(
            np.outer(basis[:, 0] + basis[:, 1], (basis[:, 0] + basis[:, 1]).conj())
            / 2.0
        )
        rho = apply_damping(psi, [DampingStep(0, gamma, basis)])
        record = TrajectoryRecord()
        expansion_step(rho, record)
        det = gamma * (1 - gamma) / 4.0
        lam2_exact = 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * det))
        assert abs(record.eigenvalues[0][1] - lam2_exact) < 1e-12
        assert 0.2 * gamma < record.eigenvalues[0][1] < 0.3 * gamma

    def test_branch_beyond_rank_rejected(self):
        e1 = np.zeros(32)
        e1[0] = 1.0
        with pytest.raises(ValueError):
            expansion_step(np.outer(e1, e1), None, branch=2)


class TestTrajectoryRecord:
    def test_descending_enforced(self):
        record = TrajectoryRecord()
        with pytest.raises(ValueError):
            record.append(np.array([0.1, 0.9]))

    def test_leading_probability(self):
        record = TrajectoryRecord()
        record.append(np.array([0.9, 0.1]))
        record.append(np.array([0.8, 0.2]))
        assert abs(record.leading_probability() - 0.72) < 1e-15

    def test_correction_probabilities(self):
        record = TrajectoryRecord()
        record.append(np.array([0.9, 0.1]))
        record.append(np.array([0.8, 0.15, 0.05]))
        table = record.correction_probabilities()
        assert table == [
            (2, 1, pytest.approx(0.1)),
            (2, 2, pytest.approx(0.9 * 0.15)),
            (3, 2, pytest.approx(0.9 * 0.05)),
        ]


class TestSampleCorrection:
    def test_single_option(self):
        record = TrajectoryRecord()
        record.append(np.array([0.99, 0.01]))
        assert sample_correction(record, np.random.default_rng(0)) == (2, 1)

    def test_no_decay_returns_none(self):
        record = TrajectoryRecord()
        record.append(np.array([1.0, 0.0]))
        assert sample_correction(record, np.random.default_rng(0)) is None

    def test_distribution_matches_weights(self):
        c = 1e-3
        record = TrajectoryRecord()
        for _ in range(20):
            record.append(np.array([1 - c, c]))
        rng = np.random.default_rng(42)
        draws = [sample_correction(record, rng) for _ in range(10000)]
        counts = np.bincount([n - 1 for _, n in draws], minlength=20)
        expected = np.array([(1 - c) ** (n - 1) * c for n in range(1, 21)])
        expected = expected / expected.sum() * 10000
        assert stats.chisquare(counts, expected).pvalue > 0.01

    def test_probability_bookkeeping(self):
        # Rank-2 records: P0 + sum P(m,n) telescopes to exactly 1.
        c = 1e-3
        record = TrajectoryRecord()
        for _ in range(20):
            record.append(np.array([1 - c, c]))
        total = record.leading_probability() + sum(
            w for _, _, w in record.correction_probabilities()
        )
        assert abs(total - 1.0) < 1e-12

        # Higher-rank records: the deficit is the neglected weight of two
        # or more sub-dominant choices, O((N c)^2).
        c = 0.01
        record = TrajectoryRecord()
        for _ in range(20):
            record.append(np.array([1 - c, 0.6 * c, 0.4 * c]))
        total = record.leading_probability() + sum(
            w for _, _, w in record.correction_probabilities()
        )
        assert 0.0 < 1.0 - total < (20 * c) ** 2


class TestCombineTrajectories:
    def test_endpoints(self):
        a, b = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        np.testing.assert_allclose(combine_trajectories(a, b, 1.0), a)
        np.testing.assert_allclose(combine_trajectories(a, b, 0.0), b)
        with pytest.raises(ValueError):
            combine_trajectories(a, b, 1.5)

    def test_expansion_reproduces_exact_channel(self):
        # Single qubit, no noise or controls: the leading + sampled
        # correction decomposition must average to the analytic
        # amplitude-damping channel.
        t1, dtau, n_steps = 100.0, 0.5, 40
        basis = instantaneous_eigenbasis(0.0, 5.0)
        gamma = damping_gamma(dtau, t1)
        step = DampingStep(0, gamma, basis)
        psi0 = np.zeros(32, dtype=complex)
        psi0[:2] = (basis[:, 0] + basis[:, 1]) / math.sqrt(2.0)

        def run(branch_step=None, branch_m=1):
            psi = psi0.copy()
            record = TrajectoryRecord()
            for i in range(1, n_steps + 1):
                cols = damped_columns(psi, [step])
                lams, vectors = decompose_columns(cols)
                record.append(lams)
                branch = branch_m if i == branch_step else 1
                psi = vectors[:, branch - 1]
            return psi, record

        rng = np.random.default_rng(123)
        n_iter = 200
        pops, cohs = [], []
        excited = hilbert.embed(np.outer(basis[:, 1], basis[:, 1].conj()), 0)
        lower = hilbert.embed(np.outer(basis[:, 1], basis[:, 0].conj()), 0)
        for _ in range(n_iter):
            psi_lead, record = run()
            p0 = record.leading_probability()
            drawn = sample_correction(record, rng)
            rho_lead = np.outer(psi_lead, psi_lead.conj())
            if drawn is None:
                rho = rho_lead
            else:
                m, n = drawn
                psi_corr, _ = run(branch_step=n, branch_m=m)
                rho = combine_trajectories(
                    rho_lead, np.outer(psi_corr, psi_corr.conj()), p0
                )
            pops.append(np.trace(excited @ rho).real)
            cohs.append(abs(np.trace(lower @ rho)))

        t = n_steps * dtau
        pop_exact = 0.5 * math.exp(-t / t1)
        coh_exact = 0.5 * math.exp(-t / (2 * t1))
        pop_se = np.std(pops) / math.sqrt(n_iter)
        coh_se = np.std(cohs) / math.sqrt(n_iter)
        assert abs(np.mean(pops) - pop_exact) < 3 * pop_se + 2e-3
        assert abs(np.mean(cohs) - coh_exact) < 3 * coh_se + 2e-3


class TestIntervalSteps:
    def test_skips_infinite_t1_and_uses_offsets(self):
        from fluxsim.model import SystemParams
        from fluxsim.noise import NoiseParams, build_ensemble, sample_realization
        from fluxsim.schedule import ControlSchedule, Waveform

        params = SystemParams()
        duration = 10.0
        waves = tuple(
            Waveform.constant(v, duration) for v in (0.0, 5.0, 0.0, 6.0, 17.0, 0.2)
        )
        sched = ControlSchedule(waves)
        ensemble = build_ensemble(NoiseParams(), params, master_seed=9)
        realization = sample_realization(ensemble, duration, 0)
        t1 = (50.0, math.inf, 200.0)
        steps = interval_damping_steps(sched, t1, realization, 3)
        assert [s.qubit for s in steps] == [0, 2]
        dtau = realization.durations[3]
        assert abs(steps[0].gamma - damping_gamma(dtau, 50.0)) < 1e-15
        # The eigenbasis must reflect the noise-offset biases, not the bare
        # scheduled values.
        offs = realization.values[3]
        expected = instantaneous_eigenbasis(0.0 + offs[0], 5.0 + offs[1])
        np.testing.assert_allclose(steps[0].basis, expected, atol=1e-12)
