"""Least-action block diagonalization and effective CR Hamiltonian rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import (
    Channel,
    DeviceParams,
    DriveConfig,
    assign_to_bare,
    basis_index,
    build_drive_hamiltonian,
    build_static_hamiltonian,
)
from .propagation import _frequencies, default_frame
from .quantum import GHZ, PauliCoefficients, dag, pauli_decompose

SINGULAR_TOL = 1e-8


class BlockAssignmentError(np.linalg.LinAlgError):
    def __init__(self, message: str, overlap: np.ndarray):
        super().__init__(message)
        self.overlap = overlap


@dataclass(frozen=True)
class BlockSpec:
    """Ordered partition of basis indices into blocks."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        flat = [i for b in blocks for i in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        if len(set(flat)) != len(flat):
            raise ValueError("blocks overlap")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("blocks must cover 0..n-1 exactly")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self) -> int:
        return sum(len(b) for b in self.blocks)

    def labels(self) -> np.ndarray:
        out = np.empty(self.dim, dtype=int)
        for k, b in enumerate(self.blocks):
            out[list(b)] = k
        return out

    def mask(self) -> np.ndarray:
        lab = self.labels()
        return lab[:, None] == lab[None, :]

    def off_block(self, op: np.ndarray) -> np.ndarray:
        return np.where(self.mask(), 0, op)


def cr_block_spec(levels: int) -> BlockSpec:
    """Control-|0> qubit block, control-|1> qubit block, everything else."""
    b0 = [basis_index(levels, 0, 0), basis_index(levels, 0, 1)]
    b1 = [basis_index(levels, 1, 0), basis_index(levels, 1, 1)]
    rest = [i for i in range(levels * levels) if i not in b0 + b1]
    return BlockSpec((b0, b1, rest) if rest else (b0, b1))


def _inv_sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v / np.sqrt(w)) @ dag(v)


def least_action_blockdiag(h: np.ndarray, blocks: BlockSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unitary ``T`` closest to identity with ``T^dag H T`` block diagonal.

    Eigenvectors are matched to bare basis states by greedy maximum overlap,
    giving the ordered eigenvector matrix ``X``; with ``X_BD`` its in-block
    part, ``T = X X_BD^dag (X_BD X_BD^dag)^(-1/2)``.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (blocks.dim, blocks.dim):
        raise ValueError(f"H has shape {h.shape}, block spec covers {blocks.dim}")
    _, vecs = np.linalg.eigh(h)
    label = assign_to_bare(vecs)
    x = np.empty_like(vecs)
    x[:, label] = vecs
    x_bd = np.where(blocks.mask(), x, 0)
    sv = np.linalg.svd(x_bd, compute_uv=False)
    if sv.min() < SINGULAR_TOL:
        raise BlockAssignmentError(
            f"state-block assignment ambiguous (smallest singular value {sv.min():.2e})", np.abs(x) ** 2)
    t = x @ dag(x_bd) @ _inv_sqrt_psd(x_bd @ dag(x_bd))
    h_bd = dag(t) @ h @ t
    return t, h_bd


def cr_drive(amplitude: float, phase: float = 0.0, p: DeviceParams | None = None,
             carrier: float | None = None) -> DriveConfig:
    """Control-line drive at the (dressed) target frequency; negative amplitude means phase + pi."""
    if carrier is None:
        carrier = default_frame(p)
    if amplitude < 0:
        amplitude, phase = -amplitude, phase + np.pi
    return DriveConfig(Channel.CONTROL, carrier, amplitude, phase)


def effective_hamiltonian(p: DeviceParams, drives, frame_freq: float | None = None) -> np.ndarray:
    """4x4 qubit-block Hamiltonian (rad/ns) with each qubit in its dressed frame."""
    frame = default_frame(p) if frame_freq is None else frame_freq
    drives = list(drives)
    for d in drives:
        if abs(d.carrier_freq - frame) > 1e-12:
            raise ValueError("effective Hamiltonian needs drives at the frame frequency (static RWA)")
    h = build_static_hamiltonian(p, frame)
    if drives:
        h = h + build_drive_hamiltonian(p, drives, frame, 0.0)
    _, h_bd = least_action_blockdiag(h, cr_block_spec(p.levels))
    idx = [basis_index(p.levels, 0, 0), basis_index(p.levels, 0, 1),
           basis_index(p.levels, 1, 0), basis_index(p.levels, 1, 1)]
    h4 = h_bd[np.ix_(idx, idx)]
    h4 = 0.5 * (h4 + dag(h4))
    fc, ft = _frequencies(p)
    n_c = np.array([0, 0, 1, 1])
    n_t = np.array([0, 1, 0, 1])
    return h4 - np.diag(GHZ * ((fc - frame) * n_c + (ft - frame) * n_t))


def effective_cr_coefficients(p: DeviceParams, drive, frame_freq: float | None = None) -> PauliCoefficients:
    """Pauli rates (MHz) of the block-diagonalized CR Hamiltonian.

    ``drive`` is a :class:`DriveConfig` or a list of them (e.g. CR plus a
    cancellation tone). ZZ includes the static contribution.
    """
    drives = [drive] if isinstance(drive, DriveConfig) else list(drive)
    return pauli_decompose(effective_hamiltonian(p, drives, frame_freq))


def theory_curve_vs_amplitude(p: DeviceParams, amplitudes, phase: float = 0.0) -> list[tuple[float, PauliCoefficients]]:
    """Effective rates over a monotone list of CR amplitudes (MHz)."""
    amps = [float(a) for a in amplitudes]
    diffs = np.diff(amps)
    if len(amps) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("amplitudes must be strictly monotone")
    return [(a, effective_cr_coefficients(p, cr_drive(a, phase, p))) for a in amps]
