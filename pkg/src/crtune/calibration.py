"""Calibration of the echoed ZX90 gate from simulated Hamiltonian tomography.

Steps: a CR phase sweep locates phi0 (ZX maximal, ZY = 0) and phi1 (IY = 0,
IX > 0); a cancellation-amplitude sweep nulls IX and IY; the CR amplitude is
then set so that each echo half accrues a 45 degree conditional rotation
over the envelope area.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .device import Channel, CoherenceParams, DeviceParams, wrap_phase
from .effective import cr_drive, effective_cr_coefficients
from .propagation import (
    DEFAULT_DT,
    dressed_basis,
    evolve_unitary,
    lindblad_superoperator,
    prepare_dressed,
    to_qubit_frame,
    to_qubit_superop,
    unitary_trajectory,
)
from .pulses import (
    DEFAULT_SIGMA,
    Envelope,
    PulseSchedule,
    Segment,
    build_echoed_cr_schedule,
    drag,
    envelope_area,
    flat_top,
    half_width_for_gate_time,
)
from .quantum import (
    I2,
    MHZ,
    X,
    average_gate_fidelity,
    bloch_vector_of_target,
    channel_fidelity,
    dag,
    kron,
    matrix_exp,
    pauli2,
    qubit_projector,
    unitary_superop,
)
from .tomography import (
    CRCoefficients,
    CRParams,
    TomographyError,
    measure_cr_hamiltonian,
)

SCHEMA_VERSION = 1
N_PHASES = 16
N_CANCEL_AMPS = 9
NOISE_FLOOR = 0.02  # MHz
MAX_FAIL_FRACTION = 0.25
PHASE_MISMATCH = 0.05
MAX_CR_AMP = 150.0  # MHz


class CalibrationError(RuntimeError):
    pass


def zx90() -> np.ndarray:
    return matrix_exp(pauli2("ZX"), -1j * math.pi / 4)


def echoed_target(final_pi: bool = False) -> np.ndarray:
    """Ideal echoed gate: ZX90, preceded in time by nothing and followed by the echo's X on the control."""
    return zx90() if final_pi else kron(X, I2) @ zx90()


# -- sweeps ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    parameter: str
    value: float
    coefficients: CRCoefficients | None
    residuals: tuple = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.coefficients is not None

    def row(self) -> dict:
        out = {self.parameter: self.value}
        c = self.coefficients.as_dict() if self.ok else {k: float("nan") for k in CRCoefficients.LABELS}
        out.update(c)
        return out


def _measure(p, cr: CRParams, name: str, value: float, durations, shots, seed, dt) -> SweepRecord:
    try:
        res = measure_cr_hamiltonian(p, cr, durations, shots, seed, dt)
    except TomographyError as exc:
        return SweepRecord(name, value, None, (), str(exc))
    return SweepRecord(name, value, res.coefficients, tuple(g.residual for g in res.generators))


def _run(points, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda f: f(), points))
    return [f() for f in points]


def _check_failures(records):
    failed = sum(not r.ok for r in records)
    if failed > MAX_FAIL_FRACTION * len(records):
        reasons = sorted({r.error for r in records if not r.ok})
        raise CalibrationError(f"{failed}/{len(records)} sweep points failed: {reasons}")


def phase_sweep(p: DeviceParams, cr_amp: float, phases=None, *, durations=None, shots="exact", seed: int = 0,
                dt: float = DEFAULT_DT, workers: int = 1) -> list[SweepRecord]:
    """Tomography over CR drive phases (no cancellation tone)."""
    phases = np.linspace(0, 2 * np.pi, N_PHASES, endpoint=False) if phases is None else np.asarray(phases, float)
    if phases.size < 8:
        raise CalibrationError("phase sweep needs at least 8 points")
    if np.ptp(phases) < 2 * np.pi * (1 - 1.5 / phases.size):
        raise CalibrationError("phase sweep must cover a full 2*pi period")
    points = [
        (lambda ph=ph, k=k: _measure(p, CRParams(cr_amp, ph), "phase", float(ph), durations, shots, seed + k, dt))
        for k, ph in enumerate(phases)
    ]
    records = _run(points, workers)
    _check_failures(records)
    return records


def _phasor_fit(phases: np.ndarray, values: np.ndarray) -> tuple[complex, float]:
    """Least-squares ``c`` in ``values ~ c * exp(i phi)``, and the fit R^2."""
    basis = np.exp(1j * phases)
    c = complex(np.vdot(basis, values) / phases.size) if _uniform(phases) else complex(
        np.linalg.lstsq(basis[:, None], values, rcond=None)[0][0])
    resid = values - c * basis
    total = np.sum(np.abs(values - values.mean()) ** 2)
    r2 = 1 - np.sum(np.abs(resid) ** 2) / total if total > 0 else 1.0
    return c, float(r2)


def _uniform(phases: np.ndarray) -> bool:
    d = np.diff(np.sort(np.mod(phases, 2 * np.pi)))
    return phases.size > 2 and np.allclose(d, 2 * np.pi / phases.size)


def _good(records):
    recs = [r for r in records if r.ok]
    return np.array([r.value for r in recs]), recs


def sinusoid_fit(records, x: str, y: str) -> tuple[float, float, float]:
    """Joint fit ``x = A cos(phi - phi_ref)``, ``y = A sin(phi - phi_ref)``; returns (A, phi_ref, R^2)."""
    phases, recs = _good(records)
    z = np.array([getattr(r.coefficients, x) + 1j * getattr(r.coefficients, y) for r in recs])
    c, r2 = _phasor_fit(phases, z)
    return abs(c), wrap_phase(-np.angle(c)), r2


def find_phi0(records, floor: float = NOISE_FLOOR) -> float:
    """CR phase where ZX is maximal (positive) and ZY vanishes."""
    amp, phi0, _ = sinusoid_fit(records, "ZX", "ZY")
    if amp < floor:
        raise CalibrationError(f"no conditional drive detected (|ZX + iZY| = {amp:.3g} MHz)")
    return phi0


@dataclass(frozen=True)
class Phi1Result:
    phi1: float
    amplitude: float  # single-qubit rate magnitude at any CR phase, MHz
    flagged: bool  # below the noise floor: no cancellation needed


def find_phi1(records, floor: float = NOISE_FLOOR) -> Phi1Result:
    """CR phase where IY crosses zero with IX > 0."""
    amp, phi1, _ = sinusoid_fit(records, "IX", "IY")
    if amp < floor:
        return Phi1Result(0.0, 0.0, True)
    return Phi1Result(phi1, amp, False)


# -- cancellation amplitude ------------------------------------------------------------


@dataclass(frozen=True)
class CancelSweep:
    records: list
    a_ix: float
    a_iy: float
    optimum: float
    phase_error: bool

    def to_dict(self) -> dict:
        return {"a_IX": self.a_ix, "a_IY": self.a_iy, "optimum": self.optimum, "phase_error_flag": self.phase_error}


def _zero_crossing(a: np.ndarray, y: np.ndarray, floor: float) -> float | None:
    slope, icpt = np.polyfit(a, y, 1)
    if abs(slope) * np.ptp(a) < floor:
        return None  # component stays flat: no information about the optimum
    return float(-icpt / slope)


def cancellation_amplitude_sweep(p: DeviceParams, cr_amp: float, cr_phase: float, cancel_phase: float, amps, *,
                                 durations=None, shots="exact", seed: int = 0, dt: float = DEFAULT_DT,
                                 workers: int = 1, floor: float = NOISE_FLOOR) -> CancelSweep:
    """Tomography over cancellation amplitudes at fixed tone phase.

    The tone plays in antiphase to ``cancel_phase`` (the direction of the
    single-qubit rates it has to null).
    """
    amps = np.asarray(amps, dtype=float)
    if cr_amp <= 0:
        raise CalibrationError("degenerate sweep: CR amplitude is zero")
    if amps.size < 3:
        raise CalibrationError("cancellation sweep needs at least 3 amplitudes")
    tone = cancel_phase + math.pi
    points = [
        (lambda a=a, k=k: _measure(p, CRParams(cr_amp, cr_phase, a, tone), "cancel_amp", float(a), durations,
                                   shots, seed + k, dt))
        for k, a in enumerate(amps)
    ]
    records = _run(points, workers)
    _check_failures(records)
    a, recs = _good(records)
    ix = np.array([r.coefficients.IX for r in recs])
    iy = np.array([r.coefficients.IY for r in recs])
    a_ix, a_iy = _zero_crossing(a, ix, floor), _zero_crossing(a, iy, floor)
    if a_ix is None and a_iy is None:
        raise CalibrationError("degenerate sweep: IX and IY do not depend on the cancellation amplitude")
    a_ix = a_iy if a_ix is None else a_ix
    a_iy = a_ix if a_iy is None else a_iy
    optimum = a_ix
    if not amps.min() <= optimum <= amps.max():
        lo, hi = 0.5 * abs(optimum), 1.5 * abs(optimum)
        raise CalibrationError(f"sweep does not bracket the optimum {optimum:.3g} MHz; try [{lo:.3g}, {hi:.3g}] MHz")
    mismatch = abs(a_ix - a_iy) > PHASE_MISMATCH * abs(optimum)
    if mismatch:
        warnings.warn(f"IX and IY vanish at different amplitudes ({a_ix:.3g} vs {a_iy:.3g} MHz): "
                      "the cancellation phase is incorrect", stacklevel=2)
    return CancelSweep(records, a_ix, a_iy, optimum, mismatch)


# -- single-qubit echo pulse -------------------------------------------------------------


def tune_pi_pulse(p: DeviceParams, duration: float = 20.0, sigma: float = DEFAULT_SIGMA,
                  dt: float = DEFAULT_DT) -> Envelope:
    """DRAG pi pulse on the control, amplitude and beta optimised for the echo."""
    unit = envelope_area(drag(1.0, duration, sigma))
    target = kron(X, I2)

    def infidelity(x):
        env = drag(abs(x[0]), duration, sigma, x[1], p.anharm_control)
        sched = PulseSchedule((Segment(0.0, Channel.CONTROL, env, 0.0, Channel.CONTROL),))
        u = to_qubit_frame(p, evolve_unitary(p, sched, dt, check=False), duration)
        return 1 - average_gate_fidelity(target, u)

    start = np.array([500.0 / unit, 0.5])
    res = minimize(infidelity, start, method="Nelder-Mead",
                   options={"xatol": 1e-4, "fatol": 1e-9, "initial_simplex": [start, start + [1.0, 0], start + [0, 0.3]]})
    return drag(abs(res.x[0]), duration, sigma, res.x[1], p.anharm_control)


# -- full protocol ---------------------------------------------------------------------


@dataclass
class CalibrationResult:
    phi0: float
    phi1: float
    cancel_phase: float
    cancel_amp: float
    cr_amp: float
    half_width: float
    zx_achieved: float
    residual_coefficients: dict
    gate_fidelity_estimate: float
    gate_time: float
    cancellation: bool = True
    leakage: float = 0.0
    pi_pulse: Envelope | None = None
    sweeps: dict = field(default_factory=dict, repr=False)

    def schedule(self) -> PulseSchedule:
        return echoed_schedule(self)

    def to_dict(self) -> dict:
        f = float
        return {
            "schema_version": SCHEMA_VERSION,
            "phi0_rad": f(self.phi0),
            "phi1_rad": f(self.phi1),
            "cancel_phase_rad": f(self.cancel_phase),
            "cancel_amp_mhz": f(self.cancel_amp),
            "cr_amp_mhz": f(self.cr_amp),
            "half_width_ns": f(self.half_width),
            "gate_time_ns": f(self.gate_time),
            "zx_achieved_mhz": f(self.zx_achieved),
            "residual_coefficients_mhz": {k: f(v) for k, v in self.residual_coefficients.items()},
            "gate_fidelity_estimate": f(self.gate_fidelity_estimate),
            "leakage": f(self.leakage),
            "cancellation": self.cancellation,
            "pi_pulse": None if self.pi_pulse is None else {
                "amplitude_mhz": f(self.pi_pulse.amplitude), "duration_ns": f(self.pi_pulse.duration),
                "drag_beta": f(self.pi_pulse.drag_beta), "sigma_ns": f(self.pi_pulse.sigma),
                "drag_anharm_mhz": f(self.pi_pulse.drag_anharm)},
        }


def calibration_from_dict(d: dict) -> CalibrationResult:
    """Inverse of :meth:`CalibrationResult.to_dict` (sweep records are not restored)."""
    if d.get("schema_version") != SCHEMA_VERSION:
        raise CalibrationError(f"unsupported calibration schema_version {d.get('schema_version')}")
    pi = d.get("pi_pulse")
    pulse = None if pi is None else drag(pi["amplitude_mhz"], pi["duration_ns"], pi["sigma_ns"], pi["drag_beta"],
                                       pi["drag_anharm_mhz"])
    return CalibrationResult(
        d["phi0_rad"], d["phi1_rad"], d["cancel_phase_rad"], d["cancel_amp_mhz"], d["cr_amp_mhz"],
        d["half_width_ns"], d["zx_achieved_mhz"], d["residual_coefficients_mhz"], d["gate_fidelity_estimate"],
        d["gate_time_ns"], d["cancellation"], d.get("leakage", 0.0), pulse)


def echoed_schedule(cal: CalibrationResult) -> PulseSchedule:
    can = cal.cancel_amp if cal.cancellation else 0.0
    return build_echoed_cr_schedule(cal.cr_amp, cal.phi0, can, cal.cancel_phase + math.pi, cal.half_width,
                                    pi_pulse=cal.pi_pulse)


def echoed_gate_unitary(p: DeviceParams, cal: CalibrationResult, dt: float = DEFAULT_DT) -> np.ndarray:
    """Qubit-frame 4x4 block of the calibrated echoed gate (non-unitary if it leaks)."""
    sched = echoed_schedule(cal)
    u = evolve_unitary(p, sched, dt, check=False)
    return to_qubit_frame(p, u, sched.total_duration)


def gate_channel(p: DeviceParams, cal: CalibrationResult, coherence: CoherenceParams | None = None,
                 dt: float = DEFAULT_DT) -> np.ndarray:
    """16x16 superoperator of the calibrated gate on the qubit block (trace decreasing if it leaks)."""
    if coherence is None:
        return unitary_superop(echoed_gate_unitary(p, cal, dt))
    sched = echoed_schedule(cal)
    full = lindblad_superoperator(p, coherence, sched, dt)
    return to_qubit_superop(p, full, sched.total_duration)


def coherence_limit(coherence: CoherenceParams, gate_time: float = 160.0, levels: int = 2,
                    dt: float = 1.0) -> float:
    """Average fidelity of a ZX90 generated by a constant ideal Hamiltonian under T1/T2 decay."""
    p = DeviceParams(levels=levels)
    proj = qubit_projector(levels)
    h = proj @ (math.pi / 4 / gate_time * pauli2("ZX")) @ dag(proj)
    full = lindblad_superoperator(p, coherence, PulseSchedule(()), dt, duration=gate_time,
                                  hamiltonian=lambda t: h)
    chan = np.kron(proj.T, dag(proj)) @ full @ np.kron(proj.conj(), proj)
    return channel_fidelity(zx90(), chan)


def echo_trajectory(p: DeviceParams, cal: CalibrationResult, dt: float = DEFAULT_DT,
                    every: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target Bloch vectors through the echoed gate for the control starting in |0> and |1>.

    Returns times (ns), Bloch vectors of shape (2, n_times, 3) sampled about
    every ``every`` ns, and the matching (2, n_times) leakage weights.
    """
    times, units = unitary_trajectory(p, echoed_schedule(cal), dt)
    keep = np.unique(np.searchsorted(times, np.arange(0.0, times[-1] + 1e-9, every)).clip(0, times.size - 1))
    s = dressed_basis(p)
    out = np.empty((2, keep.size, 3))
    leak = np.empty((2, keep.size))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # leakage is returned instead
        for c in (0, 1):
            psi0 = prepare_dressed(p, c, 0)
            for j, k in enumerate(keep):
                psi = dag(s) @ (units[k] @ psi0)
                b = bloch_vector_of_target(psi / np.linalg.norm(psi), p.levels)
                out[c, j], leak[c, j] = b.vector, b.leakage
    return times[keep], out, leak


def target_rate(half_width: float, sigma: float = DEFAULT_SIGMA, rise: float | None = None) -> float:
    """ZX rate (MHz) giving a 45 degree conditional rotation over one flat-top's area."""
    area = envelope_area(flat_top(1.0, half_width, sigma, rise))
    return 1.0 / (8 * area * 1e-3)


def theory_amplitude(p: DeviceParams, rate: float, max_amp: float = MAX_CR_AMP) -> float:
    """CR amplitude whose effective conditional rate |ZX + iZY| equals ``rate``."""
    def excess(a):
        c = effective_cr_coefficients(p, cr_drive(a, 0.0, p))
        return math.hypot(c["ZX"], c["ZY"]) - rate

    grid = np.linspace(0.0, max_amp, 31)[1:]
    values = []
    for a in grid:
        try:
            values.append(excess(a))
        except np.linalg.LinAlgError:
            break
        if values[-1] >= 0:
            lo = grid[len(values) - 2] if len(values) > 1 else 1e-6
            return float(brentq(excess, lo, a, xtol=1e-9))
    best = rate + max(values) if values else 0.0
    raise CalibrationError(f"unreachable rotation: need ZX = {rate:.3g} MHz, max achievable is {best:.3g} MHz "
                           f"up to {grid[len(values) - 1] if values else 0:.3g} MHz drive")


def calibrate_zx90(p: DeviceParams, gate_time: float = 160.0, *, cancellation: bool = True, durations=None,
                   shots="exact", seed: int = 0, dt: float = DEFAULT_DT, n_phases: int = N_PHASES,
                   n_amps: int = N_CANCEL_AMPS, max_amp: float = MAX_CR_AMP, pi_pulse: Envelope | None = None,
                   refine: int = 2, workers: int = 1) -> CalibrationResult:
    """Run the full calibration protocol and score the resulting echoed gate.

    The conditional rate is first predicted from the effective Hamiltonian,
    then corrected from tomography. ``cancellation=False`` skips the target
    tone (the uncancelled reference gate).
    """
    w = half_width_for_gate_time(gate_time, 20.0 if pi_pulse is None else pi_pulse.duration)
    if w < 2 * 3 * DEFAULT_SIGMA:
        raise CalibrationError(f"gate time {gate_time} ns leaves no room for two CR pulses")
    rate = target_rate(w)
    cr_amp = theory_amplitude(p, rate, max_amp)
    phases = np.linspace(0, 2 * np.pi, n_phases, endpoint=False)
    sweep = phase_sweep(p, cr_amp, phases, durations=durations, shots=shots, seed=seed, dt=dt, workers=workers)
    phi0 = find_phi0(sweep)
    ph1 = find_phi1(sweep)
    cancel_phase = phi0 - ph1.phi1
    sweeps = {"phase": sweep}

    cancel_amp = 0.0
    if cancellation and not ph1.flagged:
        guess = ph1.amplitude
        amps = np.linspace(0.5 * guess, 1.5 * guess, n_amps)
        cs = cancellation_amplitude_sweep(p, cr_amp, phi0, cancel_phase, amps, durations=durations, shots=shots,
                                          seed=seed + 1000, dt=dt, workers=workers)
        cancel_amp = cs.optimum
        sweeps["cancel"] = cs

    k = 0
    while True:
        rec = _measure(p, CRParams(cr_amp, phi0, cancel_amp, cancel_phase + math.pi), "cr_amp", cr_amp, durations,
                       shots, seed + 2000 + k, dt)
        if not rec.ok:
            raise CalibrationError(f"tomography failed at the working point: {rec.error}")
        zx = rec.coefficients.ZX
        if k >= refine or abs(zx - rate) < 1e-4 * rate:
            break
        scale = rate / zx
        cr_amp *= scale
        cancel_amp *= scale
        if cr_amp > max_amp:
            raise CalibrationError(f"unreachable rotation: needs {cr_amp:.3g} MHz > max {max_amp} MHz")
        k += 1

    if pi_pulse is None:
        pi_pulse = tune_pi_pulse(p, dt=dt)
    cal = CalibrationResult(phi0, ph1.phi1, cancel_phase, cancel_amp, cr_amp, w, zx, rec.coefficients.as_dict(),
                            float("nan"), gate_time, cancellation, 0.0, pi_pulse, sweeps)
    u = echoed_gate_unitary(p, cal, dt)
    cal.gate_fidelity_estimate = float(average_gate_fidelity(echoed_target(), u))
    cal.leakage = float(1 - np.linalg.norm(u) ** 2 / 4)
    return cal


# -- echo toy ------------------------------------------------------------------------------

# terms whose sign follows the CR drive phase
_DRIVEN = {"IX", "IY", "ZX", "ZY"}


def toy_echo_unitary(rates: dict, half_time: float) -> np.ndarray:
    """Echo of a static two-qubit CR Hamiltonian with instantaneous control pi pulses.

    ``rates`` are Pauli rates in MHz. The second half flips the sign of the
    drive-odd terms (IX, IY, ZX, ZY), as the pi phase shift does. Returns
    ``X_c U(-) X_c U(+)``, which for a pure ZX drive is ZX90 when
    ``ZX * half_time = 1/8`` (ns * MHz / 1000).
    """

    def h(sign):
        return sum((MHZ * r / 2 * pauli2(k) * (sign if k in _DRIVEN else 1) for k, r in rates.items()),
                   np.zeros((4, 4), dtype=complex))

    xc = kron(X, I2)
    plus = matrix_exp(h(1), -1j * half_time)
    minus = matrix_exp(h(-1), -1j * half_time)
    return xc @ minus @ xc @ plus
