import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, trapezoid

from crtune.device import Channel
from crtune.pulses import (
    Kind,
    PulseError,
    PulseSchedule,
    Segment,
    build_cr_schedule,
    build_echoed_cr_schedule,
    delay,
    drag,
    echoed_gate_time,
    envelope_area,
    envelope_value,
    flat_top,
    half_width_for_gate_time,
    with_amplitudes,
)

FLAT_TOP_AREA_60 = 42.30270526142843  # ns, unit amplitude, sigma 5, rise 15


def test_flat_top_boundaries():
    e = flat_top(7.0, 60)
    assert envelope_value(e, 30.0) == 7.0
    assert envelope_value(e, 0.0) == 0.0
    assert envelope_value(e, 60.0) == 0.0
    assert envelope_value(e, 15.0) == pytest.approx(7.0, abs=1e-14)


def test_flat_top_area_quadrature():
    e = flat_top(1.0, 60)
    numeric = quad(lambda t: envelope_value(e, t), 0, 60, points=[15, 45], epsabs=1e-12)[0]
    assert numeric == pytest.approx(FLAT_TOP_AREA_60, abs=1e-9)
    assert envelope_area(e) == pytest.approx(FLAT_TOP_AREA_60, abs=1e-12)


def test_drag_area_and_quadrature():
    e = drag(10.0, 20.0, 5.0, beta=0.5)
    vals = envelope_value(e, np.linspace(0, 20, 20001))
    assert trapezoid(vals.real, dx=1e-3) == pytest.approx(envelope_area(e), rel=1e-6)
    assert abs(trapezoid(vals.imag, dx=1e-3)) < 1e-9  # derivative integrates to zero
    assert envelope_value(e, 10.0).imag == pytest.approx(0.0)


def test_envelope_errors():
    with pytest.raises(PulseError):
        envelope_value(flat_top(1, 60), 61)
    with pytest.raises(PulseError):
        flat_top(1, 20)
    with pytest.raises(PulseError):
        flat_top(-1, 60)


@given(st.floats(30.0, 500.0), st.floats(2.0, 8.0))
def test_flat_top_continuity(width, sigma):
    e = flat_top(1.0, max(width, 6 * sigma), sigma)
    # without jumps the largest step shrinks linearly with the grid spacing
    steps = [np.max(np.abs(np.diff(envelope_value(e, np.linspace(0, e.duration, n))))) for n in (4001, 8001)]
    assert steps[1] < 0.55 * steps[0]


def test_cr_schedule_examples():
    plain = build_cr_schedule(20, 0.3, width=100)
    assert plain.total_duration == 100
    assert plain.channels() == {Channel.CONTROL}
    both = build_cr_schedule(20, 0.3, 2.0, -1.0, width=100)
    assert both.channels() == {Channel.CONTROL, Channel.TARGET}
    with pytest.raises(PulseError):
        build_cr_schedule(20, 0, width=20)


def test_sampled_schedule_integrates_to_area():
    s = build_cr_schedule(20.0, 0.0, 3.0, 0.0, width=100)
    t, lines = s.sample(0.1)
    for ch, amp in ((Channel.CONTROL, 20.0), (Channel.TARGET, 3.0)):
        assert trapezoid(lines[ch].real, t) == pytest.approx(envelope_area(flat_top(amp, 100)), rel=1e-5)


def test_echo_durations():
    assert echoed_gate_time(60, final_pi=True) == 200
    assert echoed_gate_time(60) == 160
    assert half_width_for_gate_time(160) == 60
    s = build_echoed_cr_schedule(30, 0.2, 3, 1.0, 60, final_pi=True)
    assert s.total_duration == 200
    assert build_echoed_cr_schedule(30, 0.2, 3, 1.0, 60).total_duration == 160


def test_echo_second_half_is_phase_flipped():
    s = build_echoed_cr_schedule(30, 0.2, 3, 1.0, 60)
    flat = [seg for seg in s.segments if seg.envelope.kind is Kind.FLAT_TOP]
    for ch in Channel:
        a, b = [seg for seg in flat if seg.channel is ch]
        assert math.remainder(b.phase - a.phase - math.pi, 2 * math.pi) == pytest.approx(0, abs=1e-12)


def test_echo_invariant_under_2pi():
    a = build_echoed_cr_schedule(30, 0.2, 3, 1.0, 60)
    b = build_echoed_cr_schedule(30, 0.2 + 2 * math.pi, 3, 1.0 + 2 * math.pi, 60)
    _, la = a.sample(0.5)
    _, lb = b.sample(0.5)
    for ch in Channel:
        assert np.allclose(la[ch], lb[ch], atol=1e-12)


def test_overlap_rejected():
    with pytest.raises(PulseError, match="overlapping"):
        PulseSchedule((Segment(0, Channel.CONTROL, flat_top(1, 60)), Segment(50, Channel.CONTROL, delay(10))))


def test_json_roundtrip():
    s = build_echoed_cr_schedule(30, 0.2, 3, 1.0, 60)
    d = s.to_dict()
    assert d["schema_version"] == 1
    assert PulseSchedule.from_dict(d) == s
    with pytest.raises(PulseError):
        PulseSchedule.from_dict({**d, "schema_version": 99})


def test_with_amplitudes():
    s = with_amplitudes(build_cr_schedule(20, 0, 3, 0, width=80), 45.0)
    amps = {seg.channel: seg.envelope.amplitude for seg in s.segments}
    assert amps == {Channel.CONTROL: 45.0, Channel.TARGET: 3.0}
