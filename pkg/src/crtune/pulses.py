"""Pulse envelopes and CR / echoed-CR schedule builders."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import erf

from .device import Channel, wrap_phase

DEFAULT_SIGMA = 5.0  # ns
DEFAULT_RISE = 15.0  # ns, 3 sigma
DEFAULT_BUFFER = 10.0  # ns
SCHEMA_VERSION = 1


class PulseError(ValueError):
    pass


class Kind(str, Enum):
    FLAT_TOP = "flat_top_gaussian"
    DRAG = "gaussian_drag"
    DELAY = "delay"


@dataclass(frozen=True)
class Envelope:
    kind: Kind
    duration: float
    amplitude: float = 0.0
    sigma: float = DEFAULT_SIGMA
    rise: float = DEFAULT_RISE
    drag_beta: float = 0.0
    drag_anharm: float = -330.0  # MHz, sets the DRAG quadrature scale

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.duration < 0:
            raise PulseError("duration must be non-negative")
        if self.amplitude < 0:
            raise PulseError("amplitude must be non-negative")
        if self.kind is Kind.FLAT_TOP and self.duration < 2 * self.rise - 1e-9:
            raise PulseError(f"flat-top duration {self.duration} ns shorter than 2*rise = {2 * self.rise} ns")
        if self.kind is Kind.DELAY and self.amplitude != 0:
            raise PulseError("a delay has zero amplitude")


def flat_top(amplitude: float, duration: float, sigma: float = DEFAULT_SIGMA, rise: float | None = None) -> Envelope:
    return Envelope(Kind.FLAT_TOP, duration, amplitude, sigma, 3 * sigma if rise is None else rise)


def drag(amplitude: float, duration: float = 20.0, sigma: float = DEFAULT_SIGMA, beta: float = 0.0,
         anharm: float = -330.0) -> Envelope:
    return Envelope(Kind.DRAG, duration, amplitude, sigma, duration / 2, beta, anharm)


def delay(duration: float) -> Envelope:
    return Envelope(Kind.DELAY, duration)


def _rise_profile(tau, sigma: float, rise: float):
    """Floor-subtracted Gaussian edge: 0 at tau=0, 1 at tau=rise."""
    floor = math.exp(-(rise**2) / (2 * sigma**2))
    g = np.exp(-((tau - rise) ** 2) / (2 * sigma**2))
    return (g - floor) / (1 - floor)


def envelope_value(e: Envelope, t):
    """Envelope at time ``t`` (ns, relative to pulse start), in MHz.

    Flat-top pulses are real. DRAG pulses are complex: the in-phase part is a
    floor-subtracted Gaussian and the quadrature is
    ``-beta * d/dt(in-phase) / (2 pi anharm)``, so ``beta = 1`` is the
    leakage-cancelling first-order DRAG choice.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-9) or np.any(t_arr > e.duration + 1e-9):
        raise PulseError(f"t outside [0, {e.duration}]")
    t_arr = np.clip(t_arr, 0.0, e.duration)
    if e.kind is Kind.DELAY:
        out = np.zeros_like(t_arr)
    elif e.kind is Kind.FLAT_TOP:
        edge = np.minimum(t_arr, e.duration - t_arr)
        out = e.amplitude * np.where(edge >= e.rise, 1.0, _rise_profile(np.minimum(edge, e.rise), e.sigma, e.rise))
    else:
        half = e.duration / 2
        floor = math.exp(-(half**2) / (2 * e.sigma**2))
        g = np.exp(-((t_arr - half) ** 2) / (2 * e.sigma**2))
        x = e.amplitude * (g - floor) / (1 - floor)
        dx = -e.amplitude * (t_arr - half) / e.sigma**2 * g / (1 - floor)
        out = x - 1j * e.drag_beta * dx / (2 * math.pi * e.drag_anharm * 1e-3)
    return out if np.ndim(t) else out[()]


def rise_area(sigma: float = DEFAULT_SIGMA, rise: float = DEFAULT_RISE) -> float:
    """Time integral (ns) of one unit-amplitude Gaussian edge."""
    floor = math.exp(-(rise**2) / (2 * sigma**2))
    gauss = sigma * math.sqrt(math.pi / 2) * erf(rise / (sigma * math.sqrt(2)))
    return (gauss - floor * rise) / (1 - floor)


def envelope_area(e: Envelope) -> float:
    """Analytic time integral of the in-phase envelope, MHz*ns."""
    if e.kind is Kind.DELAY:
        return 0.0
    if e.kind is Kind.FLAT_TOP:
        return e.amplitude * (e.duration - 2 * e.rise + 2 * rise_area(e.sigma, e.rise))
    half = e.duration / 2
    return e.amplitude * 2 * rise_area(e.sigma, half)


def effective_width(e: Envelope) -> float:
    """Duration of a square pulse with the same area and peak, ns."""
    return envelope_area(e) / e.amplitude if e.amplitude else 0.0


# -- schedules ------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """One pulse on a line. ``carrier`` names the qubit whose frequency it drives."""

    start: float
    channel: Channel
    envelope: Envelope
    phase: float = 0.0
    carrier: Channel = Channel.TARGET

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel(self.channel))
        object.__setattr__(self, "carrier", Channel(self.carrier))
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    @property
    def end(self) -> float:
        return self.start + self.envelope.duration


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: (s.start, s.channel.value)))
        object.__setattr__(self, "segments", segs)
        for ch in Channel:
            on = [s for s in segs if s.channel is ch]
            for a, b in zip(on, on[1:]):
                if b.start < a.end - 1e-9:
                    raise PulseError(f"overlapping segments on the {ch.value} line at t={b.start} ns")

    @property
    def total_duration(self) -> float:
        return max((s.end for s in self.segments), default=0.0)

    def channels(self) -> set:
        return {s.channel for s in self.segments if s.envelope.kind is not Kind.DELAY}

    def active(self, t: float):
        """Segments playing at time ``t`` (half-open intervals)."""
        return [s for s in self.segments if s.start <= t < s.end and s.envelope.kind is not Kind.DELAY]

    def breakpoints(self) -> list:
        pts = {0.0, self.total_duration}
        for s in self.segments:
            pts.update((s.start, s.end))
        return sorted(pts)

    def sample(self, dt: float) -> tuple[np.ndarray, dict]:
        """Complex baseband samples per line (amplitude times exp(i phase)) at ``k*dt``."""
        n = int(round(self.total_duration / dt)) + 1
        t = np.arange(n) * dt
        out = {ch: np.zeros(n, dtype=complex) for ch in Channel}
        for s in self.segments:
            if s.envelope.kind is Kind.DELAY:
                continue
            mask = (t >= s.start - 1e-12) & (t <= s.end + 1e-12)
            local = np.clip(t[mask] - s.start, 0, s.envelope.duration)
            out[s.channel][mask] += envelope_value(s.envelope, local) * np.exp(1j * s.phase)
        return t, out

    def to_dict(self) -> dict:
        segs = []
        for s in self.segments:
            env = asdict(s.envelope)
            env["kind"] = s.envelope.kind.value
            segs.append({"start": s.start, "channel": s.channel.value, "carrier": s.carrier.value,
                         "phase": s.phase, "envelope": env})
        return {"schema_version": SCHEMA_VERSION, "total_duration": self.total_duration, "segments": segs}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> PulseSchedule:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise PulseError(f"unsupported schedule schema_version {d.get('schema_version')}")
        return cls(tuple(
            Segment(s["start"], s["channel"], Envelope(**s["envelope"]), s["phase"], s["carrier"])
            for s in d["segments"]
        ))


def build_cr_schedule(cr_amp: float, cr_phase: float, can_amp: float = 0.0, can_phase: float = 0.0,
                      width: float = 100.0, sigma: float = DEFAULT_SIGMA, rise: float | None = None,
                      start: float = 0.0) -> PulseSchedule:
    """Simultaneous CR tone (control line) and cancellation tone (target line).

    Both play at the target frequency with equal flat-top envelopes.
    """
    rise = 3 * sigma if rise is None else rise
    if width < 2 * rise:
        raise PulseError(f"CR width {width} ns shorter than 2*rise = {2 * rise} ns")
    segs = [Segment(start, Channel.CONTROL, flat_top(cr_amp, width, sigma, rise), cr_phase, Channel.TARGET)]
    if can_amp > 0:
        segs.append(Segment(start, Channel.TARGET, flat_top(can_amp, width, sigma, rise), can_phase, Channel.TARGET))
    return PulseSchedule(tuple(segs))


def default_pi_pulse(amplitude: float = 46.7, beta: float = 0.5) -> Envelope:
    return drag(amplitude, 20.0, DEFAULT_SIGMA, beta)


def build_echoed_cr_schedule(cr_amp: float, cr_phase: float, can_amp: float, can_phase: float, width: float,
                             pi_pulse: Envelope | None = None, buffer: float = DEFAULT_BUFFER,
                             final_pi: bool = False, sigma: float = DEFAULT_SIGMA,
                             rise: float | None = None) -> PulseSchedule:
    """Echoed CR: CR(+) | buffer | pi_c | buffer | CR(-) [| buffer | pi_c | buffer].

    The second half is the first with pi added to both tone phases. With
    ``final_pi=False`` the gate lasts ``2*width + pi + 2*buffer`` and equals
    ``(X x I) ZX90`` when ideal; ``final_pi=True`` appends the restoring
    control pulse for ``2*width + 2*pi + 4*buffer``.
    """
    pi_pulse = default_pi_pulse() if pi_pulse is None else pi_pulse
    first = build_cr_schedule(cr_amp, cr_phase, can_amp, can_phase, width, sigma, rise)
    t = width
    segs = list(first.segments)

    def echo(t0):
        segs.append(Segment(t0, Channel.CONTROL, delay(buffer)))
        segs.append(Segment(t0 + buffer, Channel.CONTROL, pi_pulse, 0.0, Channel.CONTROL))
        segs.append(Segment(t0 + buffer + pi_pulse.duration, Channel.CONTROL, delay(buffer)))
        return t0 + 2 * buffer + pi_pulse.duration

    t = echo(t)
    second = build_cr_schedule(cr_amp, cr_phase + math.pi, can_amp, can_phase + math.pi, width, sigma, rise, start=t)
    segs.extend(second.segments)
    t += width
    if final_pi:
        echo(t)
    return PulseSchedule(tuple(segs))


def echoed_gate_time(width: float, pi_duration: float = 20.0, buffer: float = DEFAULT_BUFFER,
                     final_pi: bool = False) -> float:
    n = 2 if final_pi else 1
    return 2 * width + n * (pi_duration + 2 * buffer)


def half_width_for_gate_time(gate_time: float, pi_duration: float = 20.0, buffer: float = DEFAULT_BUFFER,
                             final_pi: bool = False) -> float:
    n = 2 if final_pi else 1
    return (gate_time - n * (pi_duration + 2 * buffer)) / 2


def with_amplitudes(schedule: PulseSchedule, cr_amp: float) -> PulseSchedule:
    """Copy with every control-line flat-top rescaled to ``cr_amp``."""
    segs = []
    for s in schedule.segments:
        if s.channel is Channel.CONTROL and s.envelope.kind is Kind.FLAT_TOP:
            s = replace(s, envelope=replace(s.envelope, amplitude=cr_amp))
        segs.append(s)
    return PulseSchedule(tuple(segs))
