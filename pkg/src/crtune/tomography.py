"""Conditional-Rabi Hamiltonian tomography.

A CR tone (plus optional cancellation tone) is applied for a variable pulse
width with the control prepared in |0> or |1>; the target Bloch vector is
recorded after each width. Each control state's trajectory is fit with a
rotation generator and the two generators are combined into the IX..ZZ
rates.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .device import DeviceParams
from .propagation import (
    DEFAULT_DT,
    _product,
    _setup,
    batched_hamiltonians,
    dressed_basis,
    prepare_dressed,
)
from .pulses import DEFAULT_RISE, DEFAULT_SIGMA, PulseSchedule, build_cr_schedule
from .quantum import MHZ, PauliCoefficients, bloch_vector_of_target, dag, expm_hermitian

AXES = ("x", "y", "z")
MIN_POINTS = 12
N_STARTS = 8
EXACT_RMS = 1e-12
SCHEMA_VERSION = 1


class TomographyError(ValueError):
    pass


class InsufficientSampling(TomographyError):
    pass


class FitFailure(TomographyError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class CRParams:
    """CR tone and cancellation tone settings (amplitudes MHz, phases rad)."""

    cr_amp: float
    cr_phase: float = 0.0
    can_amp: float = 0.0
    can_phase: float = 0.0
    sigma: float = DEFAULT_SIGMA
    rise: float = DEFAULT_RISE

    def schedule(self, width: float) -> PulseSchedule:
        return build_cr_schedule(self.cr_amp, self.cr_phase, self.can_amp, self.can_phase, width,
                                 self.sigma, self.rise)


@dataclass
class TomographyDataset:
    durations: np.ndarray
    traces: dict  # (control, axis) -> array
    shots: int | str = "exact"

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float)
        for key in [(c, a) for c in (0, 1) for a in AXES]:
            if key not in self.traces:
                raise TomographyError(f"missing trace {key}")
            self.traces[key] = np.asarray(self.traces[key], dtype=float)
            if self.traces[key].shape != self.durations.shape:
                raise TomographyError(f"trace {key} does not match the duration grid")

    def bloch(self, control: int) -> np.ndarray:
        """(n, 3) array of target Bloch vectors for one control state."""
        return np.stack([self.traces[(control, a)] for a in AXES], axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["duration_ns", "c0_x", "c0_y", "c0_z", "c1_x", "c1_y", "c1_z"])
        for k, t in enumerate(self.durations):
            w.writerow([repr(float(t))] + [repr(float(self.traces[(c, a)][k])) for c in (0, 1) for a in AXES])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, shots="exact") -> TomographyDataset:
        rows = list(csv.DictReader(io.StringIO(text)))
        durations = [float(r["duration_ns"]) for r in rows]
        traces = {(c, a): [float(r[f"c{c}_{a}"]) for r in rows] for c in (0, 1) for a in AXES}
        return cls(durations, traces, shots)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "shots": self.shots,
            "durations_ns": self.durations.tolist(),
            "traces": {f"c{c}_{a}": self.traces[(c, a)].tolist() for c in (0, 1) for a in AXES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> TomographyDataset:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise TomographyError(f"unsupported dataset schema_version {d.get('schema_version')}")
        traces = {(c, a): d["traces"][f"c{c}_{a}"] for c in (0, 1) for a in AXES}
        return cls(d["durations_ns"], traces, d["shots"])


def default_durations(rise: float = DEFAULT_RISE, n: int = 64, stop: float = 1000.0) -> np.ndarray:
    """Pulse widths from the shortest flat-top (2*rise) to ``stop`` ns."""
    return np.linspace(2 * rise, stop, n)


@dataclass(frozen=True)
class TraceSpec:
    control: int
    target: int
    control_state: int
    axis: str


def plan_tomography(n_qubits: int) -> list[TraceSpec]:
    """Six conditional Rabi traces for each of the n(n-1)/2 qubit pairs."""
    out = []
    for i in range(n_qubits):
        for j in range(i + 1, n_qubits):
            out.extend(TraceSpec(i, j, s, a) for s in (0, 1) for a in AXES)
    return out


# -- simulation -------------------------------------------------------------------


def _sample(values: np.ndarray, shots, rng: np.random.Generator) -> np.ndarray:
    if shots == "exact":
        return values
    prob = np.clip((1 + values) / 2, 0, 1)
    return 2 * rng.binomial(int(shots), prob) / int(shots) - 1


def _cr_edges(p: DeviceParams, cr: CRParams, dt: float, frame_freq):
    """Propagators of the rising and falling edges and the flat-top Hamiltonian."""
    span = 2 * cr.rise + 10.0
    sched = cr.schedule(span)
    _, static, dim = _setup(p, sched, None, None)
    u_rise = _product(p, sched, None, [0.0, cr.rise], dt, frame_freq, static, dim)
    u_fall = _product(p, sched, None, [span - cr.rise, span], dt, frame_freq, static, dim)
    h_flat = batched_hamiltonians(p, sched, np.array([span / 2]), frame_freq)[0]
    return u_rise, u_fall, h_flat


def simulate_rabi_dataset(p: DeviceParams, cr: CRParams, durations=None, shots="exact", seed: int | None = 0,
                          dt: float = DEFAULT_DT, frame_freq: float | None = None) -> TomographyDataset:
    """Conditional Rabi traces from the pulse-level device model.

    ``durations`` are total pulse widths (ns, each >= 2*rise). The control is
    prepared in the dressed |0> or |1>, the target in |0>, and the target
    Bloch vector is read out in the dressed basis.
    """
    durations = default_durations(cr.rise) if durations is None else np.asarray(durations, dtype=float)
    if durations.size == 0 or np.any(np.diff(durations) <= 0):
        raise TomographyError("durations must be non-empty and increasing")
    if durations[0] < 2 * cr.rise - 1e-9:
        raise TomographyError(f"pulse widths must be >= 2*rise = {2 * cr.rise} ns")
    u_rise, u_fall, h_flat = _cr_edges(p, cr, dt, frame_freq)
    w, v = np.linalg.eigh(h_flat)
    s = dressed_basis(p)
    rng = np.random.default_rng(seed)
    traces = {}
    for c in (0, 1):
        psi0 = u_rise @ prepare_dressed(p, c, 0)
        coeff = dag(v) @ psi0
        flat = durations - 2 * cr.rise
        states = (v @ (coeff[:, None] * np.exp(-1j * w[:, None] * flat[None, :])))
        states = dag(s) @ (u_fall @ states)
        bloch = np.array([bloch_vector_of_target(states[:, k] / np.linalg.norm(states[:, k]), p.levels).vector
                          for k in range(durations.size)])
        for i, a in enumerate(AXES):
            traces[(c, a)] = _sample(bloch[:, i], shots, rng)
    return TomographyDataset(durations, traces, shots)


def synthetic_rabi_dataset(h4: np.ndarray, durations, shots="exact", seed: int | None = 0) -> TomographyDataset:
    """Conditional Rabi traces of a static two-qubit Hamiltonian (rad/ns), bypassing the device."""
    durations = np.asarray(durations, dtype=float)
    rng = np.random.default_rng(seed)
    traces = {}
    for c in (0, 1):
        psi0 = np.zeros(4, dtype=complex)
        psi0[2 * c] = 1.0
        bloch = np.array([bloch_vector_of_target(expm_hermitian(h4, t) @ psi0).vector for t in durations])
        for i, a in enumerate(AXES):
            traces[(c, a)] = _sample(bloch[:, i], shots, rng)
    return TomographyDataset(durations, traces, shots)


# -- fitting ------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochGenerator:
    """Rotation generator of the target Bloch vector, rates in MHz.

    ``r(t) = exp(A t) r0`` with ``A = [[0, delta, omega_y], [-delta, 0, -omega_x],
    [-omega_y, omega_x, 0]]`` (times 2*pi). ``delta`` is the drive detuning,
    so the Z rate of the equivalent Hamiltonian is ``-delta``.
    """

    omega_x: float
    omega_y: float
    delta: float
    r0: tuple = (0.0, 0.0, 1.0)
    residual: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.delta])

    def matrix(self) -> np.ndarray:
        """Generator in rad/ns."""
        ox, oy, d = self.vector * MHZ
        return np.array([[0, d, oy], [-d, 0, -ox], [-oy, ox, 0]])

    def trajectory(self, t) -> np.ndarray:
        return bloch_model(self.vector, np.asarray(self.r0, dtype=float), t)


def bloch_model(params, r0: np.ndarray, t) -> np.ndarray:
    """Closed-form ``exp(A t) r0`` for ``params = (omega_x, omega_y, delta)`` in MHz; shape (n, 3)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    axis = np.array([params[0], params[1], -params[2]], dtype=float)
    rate = np.linalg.norm(axis)
    if rate == 0:
        return np.tile(r0, (t.size, 1))
    k = axis / rate
    kxr = np.array([k[1] * r0[2] - k[2] * r0[1], k[2] * r0[0] - k[0] * r0[2], k[0] * r0[1] - k[1] * r0[0]])
    theta = (rate * MHZ * t)[:, None]
    cos = np.cos(theta)
    return r0[None, :] * cos + kxr[None, :] * np.sin(theta) + (k * (k @ r0))[None, :] * (1 - cos)


def dominant_frequency(t: np.ndarray, traces: np.ndarray) -> tuple[float, float]:
    """Strongest oscillation frequency (MHz) across traces and the Nyquist limit.

    Least-squares periodogram on a grid, so non-uniform sampling is allowed.
    """
    span = t[-1] - t[0]
    nyquist = 1e3 / (2 * np.median(np.diff(t)))
    freqs = np.arange(1, int(16 * nyquist * span / 1e3) + 1) * (1e3 / (8 * span))
    freqs = freqs[freqs <= nyquist]
    centered = traces - traces.mean(axis=0)
    phase = 2 * np.pi * np.outer(freqs * 1e-3, t)
    power = (np.abs(np.cos(phase) @ centered) ** 2 + np.abs(np.sin(phase) @ centered) ** 2).sum(axis=1)
    return float(freqs[np.argmax(power)]), float(nyquist)


def _initial_guesses(t, r, r0, rng) -> list[np.ndarray]:
    f, nyquist = dominant_frequency(t, r)
    if f > 0.8 * nyquist:
        warnings.warn(f"dominant frequency {f:.3g} MHz is near Nyquist ({nyquist:.3g} MHz); possible aliasing",
                      stacklevel=3)
    # time average of a precessing vector is its projection on the axis
    mean = r.mean(axis=0)
    r0n = r0 / max(np.linalg.norm(r0), 1e-12)
    along = mean @ r0n
    if along > 0.05:
        k = mean / np.sqrt(along) / max(np.linalg.norm(mean / np.sqrt(along)), 1e-12)
    else:
        k = np.cross(r0n, [1.0, 0.0, 0.0]) if abs(r0n[0]) < 0.9 else np.cross(r0n, [0.0, 1.0, 0.0])
        k /= np.linalg.norm(k)
    base = []
    for sign in (1, -1):
        for ang in np.linspace(0, 2 * np.pi, 4, endpoint=False):
            # rotate the in-plane part of the axis guess around r0
            perp = k - (k @ r0n) * r0n
            kk = (k @ r0n) * r0n + np.cos(ang) * perp + np.sin(ang) * np.cross(r0n, perp)
            base.append(sign * f * kk)
    guesses = []
    for b in base[:N_STARTS]:
        guesses.append(b)
    guesses.append(rng.normal(size=3) * f / np.sqrt(3))
    guesses.append(np.zeros(3) + 1e-3)
    # axis components -> (omega_x, omega_y, delta)
    return [np.array([g[0], g[1], -g[2]]) for g in guesses]


def fit_bloch_generator(durations, x, y, z, *, fit_r0: bool = False, r0=(0.0, 0.0, 1.0),
                        seed: int = 0, min_periods: float = 1.0) -> BlochGenerator:
    """Least-squares fit of ``r(t) = exp(A t) r0`` to one control state's traces.

    Multi-start from the dominant periodogram frequency with axis guesses from
    the time-averaged Bloch vector. ``fit_r0`` also frees the initial vector,
    which absorbs pulse edges and preparation errors. A window shorter than
    ``min_periods`` of the fitted rotation raises :class:`InsufficientSampling`.
    """
    t = np.asarray(durations, dtype=float)
    r = np.stack([np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)], axis=1)
    if t.size < MIN_POINTS:
        raise InsufficientSampling(f"insufficient sampling: {t.size} points, need >= {MIN_POINTS}")
    r0 = np.asarray(r0, dtype=float)
    if np.max(np.ptp(r, axis=0)) < 1e-9:
        start = r.mean(axis=0) if fit_r0 else r0
        resid = float(np.sqrt(np.mean(np.sum((r - start) ** 2, axis=1))))
        return BlochGenerator(0.0, 0.0, 0.0, tuple(start), resid)

    def residuals(theta):
        start = theta[3:] if fit_r0 else r0
        return (bloch_model(theta[:3], start, t) - r).ravel()

    rng = np.random.default_rng(seed)
    nyquist = 1e3 / (2 * np.min(np.diff(t)))
    best, best_alias = None, None
    for g in _initial_guesses(t, r, r[0] if fit_r0 else r0, rng):
        x0 = np.concatenate([g, r[0]]) if fit_r0 else g
        sol = least_squares(residuals, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        if not np.all(np.isfinite(sol.x)):
            continue
        # a rate f and 1/dt - f about the reversed axis give identical samples
        if np.linalg.norm(sol.x[:3]) > nyquist:
            if best_alias is None or sol.cost < best_alias.cost:
                best_alias = sol
        elif best is None or sol.cost < best.cost:
            best = sol
            if np.sqrt(2 * sol.cost / t.size) < EXACT_RMS:
                break  # exact fit: no other start can do better
    best = best if best is not None else best_alias
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitFailure("Bloch generator fit did not converge", float("inf"))
    params = best.x[:3]
    start = best.x[3:] if fit_r0 else r0
    resid = float(np.sqrt(2 * best.cost / t.size))
    _check_periods(np.linalg.norm(params), t, min_periods)
    return BlochGenerator(float(params[0]), float(params[1]), float(params[2]), tuple(float(v) for v in start), resid)


def _check_periods(rate: float, t: np.ndarray, min_periods: float) -> None:
    periods = rate * 1e-3 * (t[-1] - t[0])
    if periods < min_periods:
        raise InsufficientSampling(
            f"insufficient sampling: window covers {periods:.2f} oscillation periods, need >= {min_periods:g}")


@dataclass(frozen=True)
class CRCoefficients:
    """CR Hamiltonian rates in MHz. ``ZI`` is not observable by target tomography (NaN there)."""

    IX: float
    IY: float
    IZ: float
    ZX: float
    ZY: float
    ZZ: float
    ZI: float = float("nan")

    LABELS = ("IX", "IY", "IZ", "ZX", "ZY", "ZZ", "ZI")

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.LABELS}

    def scaled(self, s: float) -> CRCoefficients:
        return CRCoefficients(*(s * getattr(self, k) for k in self.LABELS))

    @classmethod
    def from_pauli(cls, c: PauliCoefficients) -> CRCoefficients:
        return cls(*(c[k] for k in cls.LABELS))


def extract_cr_coefficients(gen0: BlochGenerator, gen1: BlochGenerator) -> CRCoefficients:
    """Single-qubit part = mean, conditional part = half-difference of the two generators."""
    v0, v1 = gen0.vector, gen1.vector
    i_part = (v0 + v1) / 2
    z_part = (v0 - v1) / 2
    # delta is a detuning: its Hamiltonian Z rate has the opposite sign
    return CRCoefficients(i_part[0], i_part[1], -i_part[2], z_part[0], z_part[1], -z_part[2])


@dataclass(frozen=True)
class TomographyResult:
    coefficients: CRCoefficients
    generators: tuple
    dataset: TomographyDataset

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "coefficients_mhz": self.coefficients.as_dict(),
            "generators": [
                {"control": c, "omega_x": g.omega_x, "omega_y": g.omega_y, "delta": g.delta,
                 "r0": list(g.r0), "residual": g.residual}
                for c, g in enumerate(self.generators)
            ],
        }


def fit_dataset(ds: TomographyDataset, fit_r0: bool = True) -> TomographyResult:
    """Fit both control states; the window must cover a period of the faster rotation."""
    gens = tuple(fit_bloch_generator(ds.durations, *ds.bloch(c).T, fit_r0=fit_r0, min_periods=0.0) for c in (0, 1))
    if max(np.linalg.norm(g.vector) for g in gens) > 0:
        _check_periods(max(np.linalg.norm(g.vector) for g in gens), ds.durations, 1.0)
    return TomographyResult(extract_cr_coefficients(*gens), gens, ds)


def measure_cr_hamiltonian(p: DeviceParams, cr: CRParams, durations=None, shots="exact", seed: int | None = 0,
                           dt: float = DEFAULT_DT) -> TomographyResult:
    """Simulate the six conditional Rabi traces and fit them.

    Pulse widths include both edges, so the initial vector is a free fit
    parameter.
    """
    ds = simulate_rabi_dataset(p, cr, durations, shots, seed, dt)
    return fit_dataset(ds, fit_r0=True)


# -- entanglement witness ----------------------------------------------------------


def r_vector_trace(ds: TomographyDataset) -> np.ndarray:
    """Half the norm of the summed conditional target Bloch vectors."""
    total = ds.bloch(0) + ds.bloch(1)
    return 0.5 * np.linalg.norm(total, axis=1)


def estimate_entangling_time(durations, rtrace, threshold: float = 0.1) -> float:
    """First minimum of ||R|| that dips below ``threshold``, refined on the V-shaped dip."""
    t = np.asarray(durations, dtype=float)
    rv = np.asarray(rtrace, dtype=float)
    below = np.flatnonzero(rv < threshold)
    if below.size == 0:
        raise TomographyError("no entangling point in scanned window")
    k = below[0]
    while k + 1 < rv.size and rv[k + 1] < rv[k]:
        k += 1
    if k == 0 or k == rv.size - 1:
        return float(t[k])
    left = (rv[k - 1] - rv[k]) / (t[k] - t[k - 1])
    right = (rv[k + 1] - rv[k]) / (t[k + 1] - t[k])
    slope = max(left, right)
    if slope <= 0:
        return float(t[k])
    # symmetric V through the lowest sample and its lower neighbour
    if rv[k - 1] < rv[k + 1]:
        a, b, ra, rb = t[k - 1], t[k], rv[k - 1], rv[k]
    else:
        a, b, ra, rb = t[k], t[k + 1], rv[k], rv[k + 1]
    return float(np.clip((a + b) / 2 + (ra - rb) / (2 * slope), a, b))
