"""Waveform, pulse, and schedule contracts.

The centered time-moments feed the propagator's commutator-free integrator,
so they are checked against adaptive quadrature at machine precision.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fluxsim.schedule import (
    ControlSchedule,
    Event,
    MicrowavePulse,
    Segment,
    Waveform,
    tabulate,
)


def quad_moments(fn, a, b, points=None):
    mid = 0.5 * (a + b)
    kinks = None
    if points is not None:
        kinks = [p for p in points if a < p < b]
    m0, _ = quad(fn, a, b, epsabs=1e-14, epsrel=1e-13, limit=400, points=kinks)
    m1, _ = quad(lambda t: (t - mid) * fn(t), a, b, epsabs=1e-14, epsrel=1e-13,
                 limit=400, points=kinks)
    return m0, m1


class TestSegment:
    def test_constant_value_and_moments(self):
        seg = Segment(1.0, 3.0, "constant", 0.7, 0.7)
        assert seg.value(2.2) == 0.7
        m0, m1c = seg.centered_moments(1.2, 2.8)
        assert abs(m0 - 0.7 * 1.6) < 1e-15
        assert abs(m1c) < 1e-15

    def test_linear_moments_match_quadrature(self):
        seg = Segment(0.5, 4.0, "linear", -2.0, 6.0)
        for a, b in ((0.5, 4.0), (1.3, 2.9), (3.0, 3.001)):
            m0, m1c = seg.centered_moments(a, b)
            q0, q1 = quad_moments(seg.value, a, b)
            assert abs(m0 - q0) < 1e-12
            assert abs(m1c - q1) < 1e-12

    def test_tabulated_interpolates_and_integrates(self):
        times = np.linspace(2.0, 5.0, 17)
        values = np.sin(times) + 0.3 * times
        seg = Segment(2.0, 5.0, "tabulated", values[0], values[-1],
                      times=times, values=values)
        # value() is the piecewise-linear interpolant
        for t in (2.0, 2.37, 3.9999, 5.0):
            assert abs(seg.value(t) - np.interp(t, times, values)) < 1e-14
        for a, b in ((2.0, 5.0), (2.11, 4.73), (3.0, 3.05)):
            m0, m1c = seg.centered_moments(a, b)
            q0, q1 = quad_moments(lambda t: np.interp(t, times, values), a, b,
                                  points=times)
            assert abs(m0 - q0) < 1e-11
            assert abs(m1c - q1) < 1e-11

    def test_validation(self):
        with pytest.raises(ValueError):
            Segment(1.0, 1.0, "constant", 0.0, 0.0)  # zero length
        with pytest.raises(ValueError):
            Segment(0.0, 1.0, "constant", 0.0, 1.0)  # constant with v0 != v1
        with pytest.raises(ValueError):
            Segment(0.0, 1.0, "tabulated", 0.0, 1.0)  # missing samples
        with pytest.raises(ValueError):
            Segment(0.0, 1.0, "nope", 0.0, 1.0)


class TestWaveform:
    def test_contiguity_enforced(self):
        segs = (
            Segment(0.0, 1.0, "constant", 2.0, 2.0),
            Segment(1.5, 2.0, "constant", 3.0, 3.0),
        )
        with pytest.raises(ValueError):
            Waveform(segs)

    def test_lookup_boundaries_open_next_segment(self):
        wf = Waveform((
            Segment(0.0, 1.0, "linear", 0.0, 4.0),
            Segment(1.0, 2.0, "constant", 4.0, 4.0),
        ))
        assert wf.segment_at(0.0).kind == "linear"
        assert wf.segment_at(1.0).kind == "constant"
        assert wf.value(0.5) == 2.0
        assert wf.value(2.0) == 4.0
        with pytest.raises(ValueError):
            wf.segment_at(2.5)

    def test_constant_factory(self):
        wf = Waveform.constant(17.0, 65.0)
        assert wf.duration == 65.0
        assert wf.value(42.0) == 17.0


class TestMicrowavePulse:
    def test_envelope_trapezoid(self):
        p = MicrowavePulse(0, 1.0, 2.0, 0.5, 5.0, 0.0, edge=0.25)
        assert p.envelope(1.0) == 0.0
        assert abs(p.envelope(1.125) - 0.25) < 1e-15
        assert p.envelope(2.0) == 0.5
        assert abs(p.envelope(2.875) - 0.25) < 1e-15
        assert p.envelope(3.0) == 0.0
        assert p.envelope(0.5) == 0.0 and p.envelope(3.5) == 0.0

    def test_value_is_modulated_envelope(self):
        p = MicrowavePulse(1, 0.0, 1.0, 0.8, 6.0, 0.7, edge=0.1)
        for t in (0.05, 0.3, 0.97):
            expected = p.envelope(t) * math.cos(2 * math.pi * 6.0 * t + 0.7)
            assert abs(p.value(t) - expected) < 1e-14

    def test_moments_match_quadrature(self):
        p = MicrowavePulse(0, 0.3, 1.9, 0.6325, 5.0, 1.1, edge=0.12)
        windows = [
            (0.3, 0.42),            # rising edge exactly
            (0.35, 0.40),           # inside rising edge
            (0.5, 0.9),             # flat top
            (2.1, 2.2),             # falling edge
            (0.3, 2.2),             # would span sub-edges if not split
        ]
        for a, b in windows:
            for p_sub, q_sub in _split(p, a, b):
                m0, m1c = p.centered_moments(p_sub, q_sub)
                q0, q1 = quad_moments(p.value, p_sub, q_sub)
                assert abs(m0 - q0) < 1e-12, (p_sub, q_sub)
                assert abs(m1c - q1) < 1e-12, (p_sub, q_sub)

    def test_validation(self):
        with pytest.raises(ValueError):
            MicrowavePulse(2, 0.0, 1.0, 0.5, 5.0, 0.0)  # bad qubit
        with pytest.raises(ValueError):
            MicrowavePulse(0, 0.0, 1.0, 0.5, 5.0, 0.0, edge=0.6)  # edges overlap
        with pytest.raises(ValueError):
            MicrowavePulse(0, 0.0, -1.0, 0.5, 5.0, 0.0)


def _split(pulse, a, b):
    cuts = sorted({a, b, *(e for e in pulse.sub_edges() if a < e < b)})
    return zip(cuts[:-1], cuts[1:])


class TestControlSchedule:
    def _waves(self, duration):
        return tuple(Waveform.constant(v, duration)
                     for v in (0.0, 5.0, 0.0, 6.0, 17.0, 0.2))

    def test_duration_mismatch_rejected(self):
        waves = self._waves(10.0)[:5] + (Waveform.constant(0.2, 9.0),)
        with pytest.raises(ValueError):
            ControlSchedule(waves)

    def test_pulse_must_fit(self):
        with pytest.raises(ValueError):
            ControlSchedule(self._waves(1.0),
                            (MicrowavePulse(0, 0.5, 1.0, 0.5, 5.0, 0.0),))

    def test_channel_and_drive_values(self):
        p = MicrowavePulse(0, 1.0, 2.0, 0.5, 5.0, 0.0, edge=0.5)
        sched = ControlSchedule(self._waves(10.0), (p,))
        np.testing.assert_allclose(sched.channel_values(3.3),
                                   [0.0, 5.0, 0.0, 6.0, 17.0, 0.2])
        d = sched.drive_values(2.0)  # envelope peak; cos(2*pi*5*2) = 1
        assert abs(d[0] - 0.5) < 1e-12
        assert d[1] == 0.0

    def test_breakpoints_cover_pulse_and_segment_edges(self):
        p = MicrowavePulse(0, 1.0, 2.0, 0.5, 5.0, 0.0, edge=0.5)
        wf = Waveform((
            Segment(0.0, 4.0, "constant", 0.0, 0.0),
            Segment(4.0, 10.0, "linear", 0.0, 1.0),
        ))
        waves = (wf,) + self._waves(10.0)[1:]
        sched = ControlSchedule(waves, (p,))
        bp = sched.breakpoints()
        for edge in (0.0, 1.0, 1.5, 2.5, 3.0, 4.0, 10.0):
            assert np.min(np.abs(bp - edge)) < 1e-12
        assert np.all(np.diff(bp) > 0)

    def test_active_pulses(self):
        p1 = MicrowavePulse(0, 1.0, 2.0, 0.5, 5.0, 0.0)
        p2 = MicrowavePulse(1, 4.0, 1.0, 0.5, 6.0, 0.0)
        sched = ControlSchedule(self._waves(10.0), (p1, p2))
        assert sched.active_pulses(1.2, 2.8) == (p1,)
        assert sched.active_pulses(4.0, 5.0) == (p2,)
        assert sched.active_pulses(8.0, 9.0) == ()

    def test_events_recorded(self):
        ev = Event("echo", 2.0, 3.0, qubit=0)
        sched = ControlSchedule(self._waves(10.0), (), (ev,))
        assert sched.events[0].kind == "echo"


class TestTabulate:
    def test_tabulate_samples_function(self):
        seg = tabulate(lambda t: t**2, 1.0, 3.0, dt=0.01)
        assert seg.kind == "tabulated"
        assert seg.t0 == 1.0 and seg.t1 == 3.0
        assert abs(seg.value(2.0) - 4.0) < 1e-4  # piecewise-linear error ~dt^2
        assert abs(seg.value(1.0) - 1.0) < 1e-14
