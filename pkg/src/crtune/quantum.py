"""Dense linear algebra for small Hilbert spaces.

Operators are plain complex ``numpy`` arrays. Hamiltonians are expressed in
angular frequency per nanosecond (rad/ns) and times in ns throughout the
package; :data:`MHZ` converts a cyclic rate in MHz into that unit.

Two-qubit operators are ordered control (x) target, so the label ``"ZX"``
means Z on the control and X on the target.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

MHZ = 2 * np.pi * 1e-3  # rad/ns per MHz
GHZ = 2 * np.pi  # rad/ns per GHz

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}
PAULI_LABELS = tuple(a + b for a, b in itertools.product("IXYZ", repeat=2))

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
LEAKAGE_WARN = 0.05


class QuantumError(ValueError):
    """Raised for malformed operators or states."""


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def pauli2(label: str) -> np.ndarray:
    """4x4 matrix for a two-letter Pauli label such as ``"ZX"``."""
    return np.kron(PAULIS[label[0]], PAULIS[label[1]])


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.max(np.abs(op - dag(op)), initial=0.0) < tol


def is_unitary(op: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    return np.max(np.abs(dag(op) @ op - np.eye(op.shape[0]))) < tol


def _check_square(op: np.ndarray, name: str = "operator") -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise QuantumError(f"{name} must be square, got shape {op.shape}")
    return op


@dataclass(frozen=True)
class PauliCoefficients:
    """Two-qubit Pauli rates in MHz (cyclic).

    The Hamiltonian is ``sum_PQ 2*pi*c_PQ * (P x Q) / 2``. ``II`` is a global
    energy offset and carries no physical information.
    """

    rates: dict

    def __getitem__(self, label: str) -> float:
        return self.rates[label]

    def __getattr__(self, label: str) -> float:
        rates = self.__dict__.get("rates", {})
        if label in rates:
            return rates[label]
        raise AttributeError(label)

    def as_dict(self, labels=None) -> dict:
        labels = PAULI_LABELS if labels is None else labels
        return {k: float(self.rates[k]) for k in labels}

    def operator(self) -> np.ndarray:
        """Rebuild the 4x4 Hamiltonian in rad/ns."""
        return pauli_reconstruct(self.rates)


def pauli_decompose(h4: np.ndarray, unit: float = MHZ) -> PauliCoefficients:
    """Decompose a 4x4 Hermitian operator as ``sum c_PQ (P x Q) / 2``.

    ``c_PQ = Tr[(P x Q) H] / 2`` in the angular units of ``h4``; the result is
    divided by ``unit`` (default: rad/ns -> MHz cyclic).
    """
    h4 = _check_square(h4, "H4")
    if h4.shape != (4, 4):
        raise QuantumError(f"expected a 4x4 operator, got {h4.shape}")
    scale = np.max(np.abs(h4), initial=1.0)
    if np.max(np.abs(h4 - dag(h4))) > HERMITIAN_TOL * max(scale, 1.0):
        raise QuantumError("operator is not Hermitian")
    rates = {}
    for label in PAULI_LABELS:
        rates[label] = float(np.real(np.trace(pauli2(label) @ h4)) / 2 / unit)
    return PauliCoefficients(rates)


def pauli_reconstruct(rates: dict, unit: float = MHZ) -> np.ndarray:
    h = np.zeros((4, 4), dtype=complex)
    for label, c in rates.items():
        h += c * unit * pauli2(label) / 2
    return h


def matrix_exp(a: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """Return ``exp(scale * a)``.

    Hermitian and anti-Hermitian generators go through an eigendecomposition
    (exactly unitary output); anything else uses Pade scaling-and-squaring.
    """
    a = _check_square(a, "A")
    if not np.all(np.isfinite(a)) or not np.isfinite(scale):
        raise QuantumError("matrix_exp requires finite entries")
    m = scale * a
    if np.max(np.abs(m), initial=0.0) == 0.0:
        return np.eye(a.shape[0], dtype=complex)
    if np.allclose(m, -dag(m), atol=1e-14 * np.max(np.abs(m))):
        w, v = np.linalg.eigh(1j * m)
        return (v * np.exp(-1j * w)) @ dag(v)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        try:
            out = scipy.linalg.expm(m)
        except RuntimeWarning as exc:
            raise QuantumError(f"matrix_exp overflow: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise QuantumError("matrix_exp overflow")
    return out


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ dag(v)


# -- channels -----------------------------------------------------------------
# Superoperators act on column-stacked density matrices: vec(A rho B) = (B^T x A) vec(rho).


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(d, d, order="F")


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u.conj(), u)


def average_gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average gate fidelity between ``u`` (ideal) and ``v`` (actual).

    For unitaries this is ``(|Tr(U^dag V)|^2 + d) / (d^2 + d)``. A non-unitary
    ``v`` (e.g. a leaky projection onto the qubit subspace) is scored with the
    general Kraus form ``(Tr(M M^dag) + |Tr M|^2) / (d^2 + d)``, ``M = U^dag V``.
    """
    u = _check_square(u, "U")
    v = _check_square(v, "V")
    if u.shape != v.shape:
        raise QuantumError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    m = dag(u) @ v
    val = (np.real(np.trace(m @ dag(m))) + abs(np.trace(m)) ** 2) / (d * d + d)
    return float(min(max(val, 0.0), 1.0))


def channel_fidelity(ideal: np.ndarray, channel: np.ndarray) -> float:
    """Average gate fidelity of a superoperator ``channel`` against a target.

    ``ideal`` may be a d x d unitary or a d^2 x d^2 superoperator.
    """
    channel = np.asarray(channel, dtype=complex)
    d = int(round(np.sqrt(channel.shape[0])))
    if ideal.shape == (d, d):
        ideal = unitary_superop(ideal)
    if ideal.shape != channel.shape:
        raise QuantumError(f"dimension mismatch: {ideal.shape} vs {channel.shape}")
    f_pro = np.real(np.trace(dag(ideal) @ channel)) / d**2
    return float((d * f_pro + 1) / (d + 1))


def depolarizing_superop(p: float, d: int = 4) -> np.ndarray:
    """``rho -> p rho + (1 - p) Tr(rho) I / d``."""
    ident = np.eye(d * d, dtype=complex)
    tr = np.outer(vec(np.eye(d)), vec(np.eye(d)).conj()) / d
    return p * ident + (1 - p) * tr


# -- states -------------------------------------------------------------------


def ket(index: int, dim: int) -> np.ndarray:
    out = np.zeros(dim, dtype=complex)
    out[index] = 1.0
    return out


def as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        norm = np.vdot(state, state).real
        if abs(norm - 1) > 1e-12:
            raise QuantumError(f"pure state not normalized (norm^2 = {norm})")
        return np.outer(state, state.conj())
    rho = _check_square(state, "density matrix")
    if not is_hermitian(rho, 1e-10):
        raise QuantumError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-10:
        raise QuantumError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise QuantumError("density matrix has negative eigenvalues")
    return rho


def qubit_projector(levels: int) -> np.ndarray:
    """Isometry (levels^2 x 4) onto the |00>,|01>,|10>,|11> subspace."""
    idx = [0, 1, levels, levels + 1]
    p = np.zeros((levels * levels, 4), dtype=complex)
    for col, row in enumerate(idx):
        p[row, col] = 1.0
    return p


def partial_trace_control(rho4: np.ndarray) -> np.ndarray:
    """Reduced target state of a two-qubit density matrix."""
    return np.einsum("ajak->jk", rho4.reshape(2, 2, 2, 2))


@dataclass(frozen=True)
class TargetBloch:
    vector: np.ndarray
    leakage: float

    @property
    def leaky(self) -> bool:
        return self.leakage > LEAKAGE_WARN


def bloch_vector_of_target(state: np.ndarray, levels: int = 2) -> TargetBloch:
    """Target-qubit Bloch vector ``(<X>, <Y>, <Z>)`` after tracing out the control.

    States on a truncated multi-level space are projected onto the qubit
    block first and renormalized; the discarded weight is reported as leakage.
    """
    rho = as_density(state)
    if rho.shape[0] != levels * levels:
        raise QuantumError(f"state dim {rho.shape[0]} does not match {levels} levels per transmon")
    p = qubit_projector(levels)
    rho4 = dag(p) @ rho @ p
    kept = np.trace(rho4).real
    leakage = float(max(0.0, 1.0 - kept))
    if kept <= 0:
        raise QuantumError("state has no weight in the qubit subspace")
    rho_t = partial_trace_control(rho4 / kept)
    vecr = np.array([np.trace(s @ rho_t).real for s in (X, Y, Z)])
    if leakage > LEAKAGE_WARN:
        warnings.warn(f"leakage weight {leakage:.3f} exceeds {LEAKAGE_WARN}", stacklevel=2)
    return TargetBloch(vecr, leakage)
