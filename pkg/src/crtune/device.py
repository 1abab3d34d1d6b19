"""Two-transmon model: Duffing oscillators with exchange coupling and RWA drives."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .quantum import GHZ, MHZ, dag


class DeviceError(ValueError):
    pass


class Channel(str, Enum):
    CONTROL = "control"
    TARGET = "target"


def wrap_phase(phi: float) -> float:
    """Wrap to (-pi, pi]."""
    out = math.remainder(phi, 2 * math.pi)
    return math.pi if out == -math.pi else out


@dataclass(frozen=True)
class DeviceParams:
    """Device description. Frequencies in GHz, anharmonicities and J in MHz.

    ``crosstalk`` is the complex amplitude ratio of the spurious drive that a
    control-line tone produces on the target transmon.
    """

    f_control: float = 5.114
    f_target: float = 4.914
    anharm_control: float = -330.0
    anharm_target: float = -330.0
    J: float = 3.8
    levels: int = 3
    crosstalk: complex = 0j

    def __post_init__(self):
        if not 2 <= self.levels <= 5:
            raise DeviceError(f"levels must be in [2, 5], got {self.levels}")
        if not self.J > 0:
            raise DeviceError(f"J must be positive, got {self.J}")
        if self.f_control == self.f_target:
            raise DeviceError("control and target frequencies must differ")
        object.__setattr__(self, "crosstalk", complex(self.crosstalk))

    @property
    def dim(self) -> int:
        return self.levels**2

    def with_(self, **changes) -> DeviceParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class DriveConfig:
    """A drive tone at one instant: peak Rabi rate (MHz) and carrier phase."""

    channel: Channel
    carrier_freq: float  # GHz
    amplitude: float  # MHz
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise DeviceError(f"drive amplitude must be >= 0, got {self.amplitude}")
        object.__setattr__(self, "channel", Channel(self.channel))
        object.__setattr__(self, "phase", wrap_phase(self.phase))


@dataclass(frozen=True)
class CoherenceParams:
    """T1/T2 times in microseconds; ``math.inf`` disables a channel."""

    T1_control: float = 38.0
    T1_target: float = 41.0
    T2_control: float = 50.0
    T2_target: float = 61.0

    def __post_init__(self):
        for q in ("control", "target"):
            t1, t2 = getattr(self, f"T1_{q}"), getattr(self, f"T2_{q}")
            if t1 <= 0 or t2 <= 0:
                raise DeviceError(f"coherence times must be positive ({q})")
            if t2 > 2 * t1 * (1 + 1e-12):
                raise DeviceError(f"T2 > 2*T1 on the {q} qubit ({t2} > 2*{t1})")

    def rates(self, qubit: str) -> tuple[float, float]:
        """(amplitude damping, pure dephasing) rates in 1/ns."""
        t1 = getattr(self, f"T1_{qubit}") * 1e3
        t2 = getattr(self, f"T2_{qubit}") * 1e3
        gamma1 = 0.0 if math.isinf(t1) else 1.0 / t1
        gamma_phi = (0.0 if math.isinf(t2) else 1.0 / t2) - gamma1 / 2
        return gamma1, max(gamma_phi, 0.0)


REFERENCE_DEVICE = DeviceParams()
REFERENCE_COHERENCE = CoherenceParams()


# -- operators ------------------------------------------------------------------


def _lowering(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1).astype(complex)


def ladder_ops(levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowering operators (control, target) on the product space."""
    a = _lowering(levels)
    ident = np.eye(levels)
    return np.kron(a, ident), np.kron(ident, a)


def number_ops(levels: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.diag(np.arange(levels, dtype=float)).astype(complex)
    ident = np.eye(levels)
    return np.kron(n, ident), np.kron(ident, n)


def basis_index(levels: int, n_control: int, n_target: int) -> int:
    return n_control * levels + n_target


def build_static_hamiltonian(p: DeviceParams, frame_freq: float | None = None) -> np.ndarray:
    """Static Hamiltonian in rad/ns.

    With ``frame_freq`` (GHz) both transmons are moved into a frame rotating
    at that frequency; the exchange term is frame invariant.
    """
    ac, at = ladder_ops(p.levels)
    nc, nt = number_ops(p.levels)
    shift = 0.0 if frame_freq is None else frame_freq
    h = GHZ * (p.f_control - shift) * nc + GHZ * (p.f_target - shift) * nt
    h = h + MHZ * p.anharm_control / 2 * nc @ (nc - np.eye(p.dim))
    h = h + MHZ * p.anharm_target / 2 * nt @ (nt - np.eye(p.dim))
    h = h + MHZ * p.J * (dag(ac) @ at + ac @ dag(at))
    return h


def dressed_energies(p: DeviceParams, frame_freq: float | None = None) -> np.ndarray:
    """Eigenenergies (rad/ns) labelled by their maximum-overlap bare state."""
    h = build_static_hamiltonian(p, frame_freq)
    w, v = np.linalg.eigh(h)
    order = assign_to_bare(v)
    out = np.empty(p.dim)
    out[order] = w
    return out


def assign_to_bare(vectors: np.ndarray) -> np.ndarray:
    """Greedy maximum-overlap assignment of eigenvector columns to bare states.

    Returns ``label`` with ``label[j]`` the bare index assigned to column j.
    Ties are broken by index order.
    """
    overlap = np.abs(vectors) ** 2
    n = overlap.shape[0]
    label = -np.ones(n, dtype=int)
    taken = np.zeros(n, dtype=bool)
    # stable sort keeps index order among equal overlaps
    flat = np.argsort(-overlap, axis=None, kind="stable")
    for k in flat:
        row, col = divmod(int(k), n)
        if label[col] < 0 and not taken[row]:
            label[col] = row
            taken[row] = True
    return label


def dressed_frequencies(p: DeviceParams) -> tuple[float, float]:
    """Dressed (control, target) qubit frequencies in GHz.

    Each is averaged over the state of the other qubit, so the static ZZ
    shift splits symmetrically and carries no IZ or ZI part.
    """
    e = dressed_energies(p) / GHZ
    L = p.levels
    e00, e01, e10, e11 = (e[basis_index(L, a, b)] for a, b in ((0, 0), (0, 1), (1, 0), (1, 1)))
    return float((e10 - e00 + e11 - e01) / 2), float((e01 - e00 + e11 - e10) / 2)


def static_zz(p: DeviceParams) -> float:
    """zeta = E11 - E10 - E01 + E00 in MHz (cyclic)."""
    e = dressed_energies(p) / MHZ
    L = p.levels
    return float(e[basis_index(L, 1, 1)] - e[basis_index(L, 1, 0)] - e[basis_index(L, 0, 1)] + e[0])


def static_zz_perturbative(p: DeviceParams) -> float:
    """Second-order estimate 2 J^2 [1/(Delta - d_t) - 1/(Delta + d_c)] in MHz."""
    delta = (p.f_control - p.f_target) * 1e3
    return 2 * p.J**2 * (1 / (delta - p.anharm_target) - 1 / (delta + p.anharm_control))


def drive_bandwidth(p: DeviceParams, frame_freq: float) -> float:
    """Largest carrier detuning (GHz) from the frame the truncated model can represent."""
    spread = max(abs(p.f_control - frame_freq), abs(p.f_target - frame_freq))
    return spread + p.levels * max(abs(p.anharm_control), abs(p.anharm_target)) * 1e-3


def build_drive_hamiltonian(p: DeviceParams, drives, frame_freq: float, t: float) -> np.ndarray:
    """RWA drive Hamiltonian (rad/ns) at time ``t`` (ns) in the rotating frame.

    A drive of amplitude Omega (MHz) and phase phi contributes
    ``(2 pi Omega / 2) (exp(i theta) a^dag + h.c.)`` with
    ``theta = phi - 2 pi (f_d - f_frame) t``,
    i.e. ``Omega * 2pi * (cos(phi) X + sin(phi) Y) / 2`` on a resonant qubit.
    Control-line drives also reach the target scaled by ``p.crosstalk``.
    """
    drives = list(drives)
    if not drives:
        raise DeviceError("no drives given")
    ac, at = ladder_ops(p.levels)
    h = np.zeros((p.dim, p.dim), dtype=complex)
    bw = drive_bandwidth(p, frame_freq)
    for d in drives:
        if abs(d.carrier_freq - frame_freq) > bw:
            raise DeviceError(
                f"carrier {d.carrier_freq} GHz is {abs(d.carrier_freq - frame_freq):.3f} GHz from the "
                f"frame, beyond the {bw:.3f} GHz model bandwidth"
            )
        if d.amplitude == 0:
            continue
        theta = d.phase - GHZ * (d.carrier_freq - frame_freq) * t
        coeff = MHZ * d.amplitude / 2
        terms = [(at, 1.0 + 0j)] if d.channel is Channel.TARGET else [(ac, 1.0 + 0j), (at, p.crosstalk)]
        for a, scale in terms:
            if scale == 0:
                continue
            z = coeff * scale * cmath.exp(1j * theta)
            h += z * dag(a) + np.conj(z) * a
    return h
