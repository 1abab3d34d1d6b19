"""Time evolution under piecewise-smooth drive schedules.

All propagation happens in a frame rotating at ``frame_freq`` (GHz) for both
transmons; the default is the dressed target frequency, which is also the CR
carrier. :func:`to_qubit_frame` moves a propagator into the dressed
computational basis with each qubit in its own rotating frame, which is the
frame gates are scored in.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .device import (
    Channel,
    CoherenceParams,
    DeviceError,
    DeviceParams,
    DriveConfig,
    assign_to_bare,
    basis_index,
    build_drive_hamiltonian,
    build_static_hamiltonian,
    dressed_frequencies,
    drive_bandwidth,
    ladder_ops,
    number_ops,
)
from .pulses import Kind, PulseSchedule, envelope_value
from .quantum import GHZ, MHZ, dag, qubit_projector, unvec, vec

DEFAULT_DT = 0.1  # ns
RICHARDSON_FAIL = 1e-3

HamiltonianFn = Callable[[float], np.ndarray]


class ConvergenceError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _frequencies(p: DeviceParams) -> tuple[float, float]:
    return dressed_frequencies(p)


def default_frame(p: DeviceParams) -> float:
    return _frequencies(p)[1]


def carrier_frequency(p: DeviceParams, carrier: Channel) -> float:
    fc, ft = _frequencies(p)
    return fc if carrier is Channel.CONTROL else ft


def drives_at(p: DeviceParams, sched: PulseSchedule, t: float) -> list[DriveConfig]:
    out = []
    for s in sched.active(t):
        z = complex(envelope_value(s.envelope, t - s.start))
        out.append(DriveConfig(s.channel, carrier_frequency(p, s.carrier), abs(z), s.phase + np.angle(z)))
    return out


def schedule_hamiltonian(p: DeviceParams, sched: PulseSchedule, frame_freq: float | None = None) -> HamiltonianFn:
    """``t -> H(t)`` in rad/ns for a device driven by ``sched``."""
    frame = default_frame(p) if frame_freq is None else frame_freq
    h0 = build_static_hamiltonian(p, frame)

    def h(t: float) -> np.ndarray:
        drives = drives_at(p, sched, t)
        return h0 + build_drive_hamiltonian(p, drives, frame, t) if drives else h0

    return h


def _time_grid(breakpoints, dt: float):
    """Midpoints and widths of steps no longer than ``dt`` that never straddle a breakpoint."""
    mids, widths = [], []
    for a, b in zip(breakpoints, breakpoints[1:]):
        if b - a <= 1e-12:
            continue
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        h = (b - a) / n
        mids.append(a + h * (np.arange(n) + 0.5))
        widths.append(np.full(n, h))
    if not mids:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(mids), np.concatenate(widths)


def batched_hamiltonians(p: DeviceParams, sched: PulseSchedule, times: np.ndarray,
                         frame_freq: float | None = None) -> np.ndarray:
    """``H(t)`` for an array of times, shape (n, d, d); same model as :func:`schedule_hamiltonian`."""
    frame = default_frame(p) if frame_freq is None else frame_freq
    times = np.asarray(times, dtype=float)
    h0 = build_static_hamiltonian(p, frame)
    ac, at = ladder_ops(p.levels)
    zc = np.zeros(times.size, dtype=complex)
    zt = np.zeros(times.size, dtype=complex)
    for s in sched.segments:
        if s.envelope.kind is Kind.DELAY:
            continue
        mask = (times >= s.start) & (times < s.end)
        if not mask.any():
            continue
        t = times[mask]
        carrier = carrier_frequency(p, s.carrier)
        if abs(carrier - frame) > drive_bandwidth(p, frame):
            raise DeviceError(f"carrier {carrier} GHz outside the model bandwidth")
        z = MHZ / 2 * envelope_value(s.envelope, t - s.start) * np.exp(1j * (s.phase - GHZ * (carrier - frame) * t))
        if s.channel is Channel.CONTROL:
            zc[mask] += z
            zt[mask] += p.crosstalk * z
        else:
            zt[mask] += z
    out = np.broadcast_to(h0, (times.size,) + h0.shape).copy()
    for z, a in ((zc, ac), (zt, at)):
        if np.any(z):
            out += z[:, None, None] * dag(a)[None] + z.conj()[:, None, None] * a[None]
    return out


def _step_unitaries(hs: np.ndarray, widths: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hs)
    return (v * np.exp(-1j * w * widths[:, None])[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))


def _steps(p, sched, hfn, bps, dt, frame_freq, static):
    """Yield (step end time, width, Hamiltonian stack) chunks in time order."""
    for a, b in zip(bps, bps[1:]):
        if b - a <= 1e-12:
            continue
        if (a, b) in static:
            mids, widths = np.array([0.5 * (a + b)]), np.array([b - a])
        else:
            mids, widths = _time_grid([a, b], dt)
        if hfn is None:
            hs = batched_hamiltonians(p, sched, mids, frame_freq)
        else:
            hs = np.array([hfn(t) for t in mids])
        yield mids + widths / 2, widths, hs


def _product(p, sched, hfn, bps, dt, frame_freq, static, dim) -> np.ndarray:
    u = np.eye(dim, dtype=complex)
    for _, widths, hs in _steps(p, sched, hfn, bps, dt, frame_freq, static):
        for step in _step_unitaries(hs, widths):
            u = step @ u
    return u


def _static_intervals(sched: PulseSchedule, breakpoints) -> set:
    out = set()
    for a, b in zip(breakpoints, breakpoints[1:]):
        if not sched.active(0.5 * (a + b)):
            out.add((a, b))
    return out


def _setup(p, sched, duration, hamiltonian):
    total = sched.total_duration if duration is None else max(duration, sched.total_duration)
    bps = sorted(set(sched.breakpoints()) | {0.0, total})
    bps = [b for b in bps if b <= total + 1e-12]
    static = _static_intervals(sched, bps) if hamiltonian is None else set()
    dim = p.dim if hamiltonian is None else hamiltonian(0.0).shape[0]
    return bps, static, dim


def evolve_unitary(p: DeviceParams, sched: PulseSchedule, dt: float = DEFAULT_DT, *,
                   frame_freq: float | None = None, duration: float | None = None,
                   hamiltonian: HamiltonianFn | None = None, check: bool = True,
                   tolerance: float = RICHARDSON_FAIL) -> np.ndarray:
    """Time-ordered product of midpoint-sampled ``exp(-i H dt)`` steps.

    Undriven intervals are propagated in one exact step. With ``check`` the
    product is recomputed at ``dt/2`` and a :class:`ConvergenceError` is raised
    when the two differ by more than ``tolerance`` in max norm. A custom
    ``hamiltonian`` callable replaces the device model (test hook); it is
    treated as time dependent everywhere.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    bps, static, dim = _setup(p, sched, duration, hamiltonian)
    u = _product(p, sched, hamiltonian, bps, dt, frame_freq, static, dim)
    if check:
        u_fine = _product(p, sched, hamiltonian, bps, dt / 2, frame_freq, static, dim)
        err = np.max(np.abs(u_fine - u))
        if err > tolerance:
            raise ConvergenceError(f"halving dt={dt} ns changed the propagator by {err:.2e}; use a smaller dt")
    return u


def unitary_trajectory(p: DeviceParams, sched: PulseSchedule, dt: float = DEFAULT_DT, *,
                       frame_freq: float | None = None, duration: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Step end times and the cumulative propagators at each of them (idle gaps still one step)."""
    bps, static, dim = _setup(p, sched, duration, None)
    times, units = [0.0], [np.eye(dim, dtype=complex)]
    u = units[0]
    for ends, widths, hs in _steps(p, sched, None, bps, dt, frame_freq, static):
        for t, step in zip(ends, _step_unitaries(hs, widths)):
            u = step @ u
            times.append(float(t))
            units.append(u)
    return np.array(times), np.array(units)


# -- frames -------------------------------------------------------------------------


@lru_cache(maxsize=64)
def dressed_basis(p: DeviceParams) -> np.ndarray:
    """Unitary whose column k is the dressed eigenstate connected to bare state k.

    Column phases make the diagonal real and positive (the closest-to-identity
    choice).
    """
    _, v = np.linalg.eigh(build_static_hamiltonian(p))
    label = assign_to_bare(v)
    s = np.zeros_like(v)
    s[:, label] = v
    d = np.diag(s).copy()
    s = s * (np.abs(d) / d)[None, :]
    return s


def qubit_frame_phases(p: DeviceParams, duration: float, frame_freq: float | None = None) -> np.ndarray:
    """Diagonal phases undoing free dressed-qubit precession relative to the simulation frame."""
    frame = default_frame(p) if frame_freq is None else frame_freq
    fc, ft = _frequencies(p)
    n = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    omega = GHZ * ((fc - frame) * n[:, 0] + (ft - frame) * n[:, 1])
    return np.exp(1j * omega * duration)


def to_qubit_frame(p: DeviceParams, u: np.ndarray, duration: float, frame_freq: float | None = None) -> np.ndarray:
    """4x4 block of ``u`` in the dressed computational basis and per-qubit frames.

    The result is non-unitary when population leaks out of the qubit block.
    """
    s = dressed_basis(p)
    proj = qubit_projector(p.levels)
    block = dag(proj) @ dag(s) @ u @ s @ proj
    return qubit_frame_phases(p, duration, frame_freq)[:, None] * block


def to_qubit_superop(p: DeviceParams, superop: np.ndarray, duration: float,
                     frame_freq: float | None = None) -> np.ndarray:
    """Restrict a full-space superoperator to the dressed qubit block in per-qubit frames (16 x 16)."""
    w = dressed_basis(p) @ qubit_projector(p.levels)
    v = qubit_frame_phases(p, duration, frame_freq)[:, None] * dag(w)
    return np.kron(v.conj(), v) @ superop @ np.kron(w.conj(), w)


def prepare_dressed(p: DeviceParams, n_control: int, n_target: int) -> np.ndarray:
    return dressed_basis(p)[:, basis_index(p.levels, n_control, n_target)].copy()


# -- open system ----------------------------------------------------------------------


def collapse_operators(p: DeviceParams, coh: CoherenceParams) -> list[np.ndarray]:
    ops = []
    for a, n, q in zip(ladder_ops(p.levels), number_ops(p.levels), ("control", "target")):
        g1, gphi = coh.rates(q)
        if g1 > 0:
            ops.append(math.sqrt(g1) * a)
        if gphi > 0:
            ops.append(math.sqrt(2 * gphi) * n)
    return ops


def liouvillian(h: np.ndarray, c_ops) -> np.ndarray:
    """Generator on column-stacked density matrices."""
    d = h.shape[0]
    ident = np.eye(d)
    out = -1j * (np.kron(ident, h) - np.kron(h.T, ident))
    for c in c_ops:
        cdc = dag(c) @ c
        out += np.kron(c.conj(), c) - 0.5 * np.kron(ident, cdc) - 0.5 * np.kron(cdc.T, ident)
    return out


def _lindblad_steps(p, coh, sched, dt, frame_freq, duration, hamiltonian):
    bps, static, _ = _setup(p, sched, duration, hamiltonian)
    c_ops = collapse_operators(p, coh)
    for ends, widths, hs in _steps(p, sched, hamiltonian, bps, dt, frame_freq, static):
        for t, w, h in zip(ends, widths, hs):
            yield t, scipy.linalg.expm(liouvillian(h, c_ops) * w)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, d, d)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def evolve_lindblad(p: DeviceParams, coh: CoherenceParams, sched: PulseSchedule, rho0: np.ndarray,
                    dt: float = DEFAULT_DT, *, frame_freq: float | None = None, duration: float | None = None,
                    hamiltonian: HamiltonianFn | None = None) -> Trajectory:
    """Lindblad evolution with amplitude damping and pure dephasing per transmon.

    Uses the same midpoint stepping as :func:`evolve_unitary` applied to the
    Liouvillian, so each step is an exact CPTP map.
    """
    rho = np.asarray(rho0, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    times, states = [0.0], [rho]
    v = vec(rho)
    for t, step in _lindblad_steps(p, coh, sched, dt, frame_freq, duration, hamiltonian):
        v = step @ v
        times.append(t)
        states.append(unvec(v))
    return Trajectory(np.array(times), np.array(states))


def lindblad_superoperator(p: DeviceParams, coh: CoherenceParams, sched: PulseSchedule, dt: float = DEFAULT_DT, *,
                           frame_freq: float | None = None, duration: float | None = None,
                           hamiltonian: HamiltonianFn | None = None) -> np.ndarray:
    """Full propagator superoperator of the open-system evolution."""
    s = None
    for _, step in _lindblad_steps(p, coh, sched, dt, frame_freq, duration, hamiltonian):
        s = step if s is None else step @ s
    if s is None:
        d = p.dim if hamiltonian is None else hamiltonian(0.0).shape[0]
        s = np.eye(d * d, dtype=complex)
    return s
