"""Two-qubit randomized benchmarking on simulated gate channels.

The Clifford group is enumerated as C1xC1 plus the CNOT-like, iSWAP-like and
SWAP-like classes. Every element carries a compiled word of single-qubit
Clifford layers and ZX90 gates, so a simulated ZX90 channel is enough to
build the channel of any Clifford.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cache, lru_cache

import numpy as np
from scipy.optimize import curve_fit

from .quantum import (
    depolarizing_superop,
    kron,
    matrix_exp,
    pauli2,
    unitary_superop,
)

GROUP_ORDER = 11520
SCHEMA_VERSION = 1
DEFAULT_LENGTHS = (2, 4, 8, 16, 32, 64, 100)
DEFAULT_SEQUENCES = 35
D = 4

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j]).astype(complex)
_GATES = {"H": _H, "S": _S}


class CliffordError(RuntimeError):
    pass


class RBFitError(RuntimeError):
    def __init__(self, message: str, decays):
        super().__init__(message)
        self.decays = decays


def phase_key(u: np.ndarray) -> bytes:
    """Hash of a unitary up to global phase."""
    flat = np.asarray(u).ravel()
    k = int(np.argmax(np.abs(flat) > 0.1))
    v = flat * (np.conj(flat[k]) / abs(flat[k]))
    return (np.round(v.real, 6) + 0.0).tobytes() + (np.round(v.imag, 6) + 0.0).tobytes()


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-9) -> bool:
    overlap = np.vdot(u, v)
    if abs(overlap) < 1e-12:
        return False
    return bool(np.max(np.abs(u * (overlap / abs(overlap)) - v)) < tol)


def _word_unitary(word) -> np.ndarray:
    """Time-ordered word of 'H'/'S' letters as a matrix."""
    u = np.eye(2, dtype=complex)
    for g in word:
        u = _GATES[g] @ u
    return u


@lru_cache(maxsize=1)
def single_qubit_cliffords() -> tuple:
    """The 24 single-qubit Cliffords as (unitaries, words), breadth first from H and S."""
    units, words = [np.eye(2, dtype=complex)], [()]
    seen = {phase_key(units[0]): 0}
    i = 0
    while i < len(units):
        for name, g in _GATES.items():
            u = g @ units[i]
            k = phase_key(u)
            if k not in seen:
                seen[k] = len(units)
                units.append(u)
                words.append(words[i] + (name,))
        i += 1
    if len(units) != 24:
        raise CliffordError(f"single-qubit Clifford enumeration gave {len(units)} elements")
    return tuple(units), tuple(words)


def zx90_unitary() -> np.ndarray:
    return matrix_exp(pauli2("ZX"), -1j * math.pi / 4)


CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]

# Entangler compilations, time ordered: ("L", control word, target word) or ("ZX",).
_CNOT_WORD = (("ZX",), ("L", ("S", "S", "S"), ("S", "H", "S")))
_CNOT_REVERSED = (("L", ("H",), ("H",)),) + _CNOT_WORD + (("L", ("H",), ("H",)),)
_ENTANGLERS = {
    "cnot": (CNOT, _CNOT_WORD),
    "iswap": (ISWAP, (("L", ("H",), ()),) + _CNOT_WORD + (("L", ("H",), ("H",)),) + _CNOT_WORD
              + (("L", ("H", "S"), ("S",)),)),
    "swap": (SWAP, _CNOT_WORD + _CNOT_REVERSED + _CNOT_WORD),
}


@dataclass(frozen=True)
class CliffordElement:
    index: int
    unitary: np.ndarray = field(repr=False)
    word: tuple  # time ordered: ("L", a, b) with C1 indices, or ("ZX",)

    @property
    def n_zx(self) -> int:
        return sum(op[0] == "ZX" for op in self.word)


class CliffordGroup:
    """Indexed two-qubit Clifford group with composition and inverse via phase-free hashing."""

    def __init__(self):
        c1, _ = single_qubit_cliffords()
        self._c1 = c1
        self._c1_index = {phase_key(u): i for i, u in enumerate(c1)}
        # 120 degree rotation about (1,1,1): X -> Y -> Z
        r = next(i for i, u in enumerate(c1)
                 if np.allclose(u @ _X @ u.conj().T, _Y) and np.allclose(u @ _Y @ u.conj().T, _Z))
        s1 = (0, r, self._c1_mul(r, r))
        entangler_words = {name: self._lower(w) for name, (_, w) in _ENTANGLERS.items()}
        for name, (g, _) in _ENTANGLERS.items():
            if not equal_up_to_phase(self._word_matrix(entangler_words[name]), g):
                raise CliffordError(f"{name} compilation does not reproduce the gate")

        units, words = [], []
        for a in range(24):
            for b in range(24):
                units.append(kron(c1[a], c1[b]))
                words.append((("L", a, b),))
        for name in ("cnot", "iswap"):
            g, w = _ENTANGLERS[name][0], entangler_words[name]
            for a in range(24):
                for b in range(24):
                    for s in s1:
                        for t in s1:
                            units.append(kron(c1[a], c1[b]) @ g @ kron(c1[s], c1[t]))
                            words.append(self._merge((("L", s, t),) + w + (("L", a, b),)))
        for a in range(24):
            for b in range(24):
                units.append(kron(c1[a], c1[b]) @ SWAP)
                words.append(self._merge(entangler_words["swap"] + (("L", a, b),)))
        self.unitaries = np.array(units)
        self.words = tuple(words)
        self._index = {}
        for i, u in enumerate(units):
            k = phase_key(u)
            if k in self._index:
                raise CliffordError(f"duplicate Clifford at index {i}")
            self._index[k] = i
        if len(units) != GROUP_ORDER:
            raise CliffordError(f"enumeration produced {len(units)} elements, expected {GROUP_ORDER}")
        self.identity = self.index_of(np.eye(4))

    # -- helpers -----------------------------------------------------------------------

    def _c1_mul(self, later: int, earlier: int) -> int:
        return self._c1_index[phase_key(self._c1[later] @ self._c1[earlier])]

    def _lower(self, word) -> tuple:
        """Letter words to C1 indices."""
        out = []
        for op in word:
            if op[0] == "ZX":
                out.append(op)
            else:
                out.append(("L", self._c1_index[phase_key(_word_unitary(op[1]))],
                            self._c1_index[phase_key(_word_unitary(op[2]))]))
        return self._merge(tuple(out))

    def _merge(self, word) -> tuple:
        out = []
        for op in word:
            if op[0] == "L" and out and out[-1][0] == "L":
                prev = out.pop()
                op = ("L", self._c1_mul(op[1], prev[1]), self._c1_mul(op[2], prev[2]))
            if op[0] == "L" and op[1] == 0 and op[2] == 0:
                continue
            out.append(op)
        return tuple(out)

    def _word_matrix(self, word) -> np.ndarray:
        u = np.eye(4, dtype=complex)
        zx = zx90_unitary()
        for op in word:
            u = (zx if op[0] == "ZX" else kron(self._c1[op[1]], self._c1[op[2]])) @ u
        return u

    # -- public API -----------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.words)

    def __getitem__(self, i: int) -> CliffordElement:
        return CliffordElement(int(i), self.unitaries[i], self.words[i])

    def index_of(self, u: np.ndarray) -> int:
        try:
            return self._index[phase_key(u)]
        except KeyError:
            raise CliffordError("unitary is not a two-qubit Clifford") from None

    def compose(self, later: int, earlier: int) -> int:
        return self.index_of(self.unitaries[later] @ self.unitaries[earlier])

    def inverse(self, i: int) -> int:
        return self.index_of(self.unitaries[i].conj().T)

    def word_unitary(self, i: int) -> np.ndarray:
        return self._word_matrix(self.words[i])

    def verify_words(self, indices=None, tol: float = 1e-9) -> None:
        for i in range(len(self)) if indices is None else indices:
            if not equal_up_to_phase(self.word_unitary(i), self.unitaries[i], tol):
                raise CliffordError(f"compiled word of element {i} does not match its unitary")

    def local_superop(self, a: int, b: int) -> np.ndarray:
        return _local_superop(self, a, b)


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1, -1]).astype(complex)


@cache
def _local_superop(group: CliffordGroup, a: int, b: int) -> np.ndarray:
    return unitary_superop(kron(group._c1[a], group._c1[b]))


@lru_cache(maxsize=1)
def clifford_group_2q() -> CliffordGroup:
    return CliffordGroup()


# -- channel providers ---------------------------------------------------------------------


class IdealChannels:
    """Perfect Cliffords."""

    def __init__(self, group: CliffordGroup):
        self.group = group

    @cache
    def __call__(self, i: int) -> np.ndarray:
        return unitary_superop(self.group.unitaries[i])


class DepolarizingChannels(IdealChannels):
    """Perfect Cliffords followed by a global depolarizing channel of parameter ``p``."""

    def __init__(self, group: CliffordGroup, p: float):
        super().__init__(group)
        self.noise = depolarizing_superop(p, D)

    @cache
    def __call__(self, i: int) -> np.ndarray:
        return self.noise @ unitary_superop(self.group.unitaries[i])


class CompiledChannels(IdealChannels):
    """Cliffords built from their compiled words with a given ZX90 channel.

    ``zx_channel`` is a 16x16 superoperator for the ZX90 primitive; the
    single-qubit layers are ideal unless ``local_noise`` (a 16x16 channel
    applied after every layer) is given.
    """

    def __init__(self, group: CliffordGroup, zx_channel: np.ndarray, local_noise: np.ndarray | None = None):
        super().__init__(group)
        self.zx = np.asarray(zx_channel)
        self.local_noise = local_noise

    @cache
    def __call__(self, i: int) -> np.ndarray:
        s = np.eye(D * D, dtype=complex)
        for op in self.group.words[i]:
            if op[0] == "ZX":
                s = self.zx @ s
            else:
                s = self.group.local_superop(op[1], op[2]) @ s
                if self.local_noise is not None:
                    s = self.local_noise @ s
        return s


# -- experiments -------------------------------------------------------------------------------


def decay_model(m, a, alpha, b):
    return a * alpha**m + b


@dataclass
class RBResult:
    lengths: np.ndarray
    survival: np.ndarray  # (n_lengths, n_seqs)
    A: float
    B: float
    alpha: float

    @property
    def mean(self) -> np.ndarray:
        return self.survival.mean(axis=1)

    @property
    def stderr(self) -> np.ndarray:
        n = self.survival.shape[1]
        return self.survival.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(self.lengths))

    @property
    def r(self) -> float:
        """Error per Clifford."""
        return (D - 1) * (1 - self.alpha) / D

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "A": self.A, "B": self.B, "alpha": self.alpha, "r": self.r,
                "lengths": self.lengths.tolist(), "mean": self.mean.tolist(), "stderr": self.stderr.tolist()}


def fit_decay(lengths, survival) -> tuple[float, float, float]:
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(survival, dtype=float)
    b0 = 1.0 / D
    a0 = max(y[0] - b0, 1e-3)
    alpha0 = np.clip((max(y[-1] - b0, 1e-6) / a0) ** (1 / max(m[-1], 1)), 1e-3, 1.0)
    try:
        popt, _ = curve_fit(decay_model, m, y, p0=[min(a0, 1.2), alpha0, b0],
                            bounds=([0, 0, 0], [1.2, 1, 1.2]), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise RBFitError(f"RB decay fit failed: {exc}", y) from exc
    a, alpha, b = (float(v) for v in popt)
    return a, alpha, b


def rb_experiment(group: CliffordGroup, provider, lengths=DEFAULT_LENGTHS, n_seqs: int = DEFAULT_SEQUENCES,
                  shots="exact", seed: int | None = 0, interleave: tuple | None = None) -> RBResult:
    """Standard (or, with ``interleave=(index, channel)``, interleaved) RB.

    Each sequence is ``m`` uniformly random Cliffords followed by the
    recovery Clifford; survival is the |00> population.
    """
    lengths = np.asarray(lengths, dtype=int)
    if lengths.size < 3 or np.any(np.diff(lengths) <= 0) or lengths[0] < 1:
        raise ValueError("lengths must be >= 3 increasing positive integers")
    rng = np.random.default_rng(seed)
    rho0 = np.zeros(D * D, dtype=complex)
    rho0[0] = 1.0
    survival = np.zeros((lengths.size, n_seqs))
    for j in range(n_seqs):
        for k, m in enumerate(lengths):
            state = rho0
            total = np.eye(D, dtype=complex)
            for c in rng.integers(0, len(group), size=m):
                state = provider(int(c)) @ state
                total = group.unitaries[c] @ total
                if interleave is not None:
                    state = interleave[1] @ state
                    total = group.unitaries[interleave[0]] @ total
            rec = group.index_of(total.conj().T)
            state = provider(rec) @ state
            p = float(np.real(state[0]))
            if shots != "exact":
                p = rng.binomial(int(shots), min(max(p, 0.0), 1.0)) / int(shots)
            survival[k, j] = p
    a, alpha, b = fit_decay(lengths, survival.mean(axis=1))
    return RBResult(lengths, survival, a, b, alpha)


def irb_systematic_bound(alpha_ref: float, alpha_int: float, d: int = D) -> float:
    """Worst-case systematic error of the interleaved estimate of r_gate."""
    ratio = alpha_int / alpha_ref
    e1 = (d - 1) * (abs(alpha_ref - ratio) + (1 - alpha_ref)) / d
    e2 = (2 * (d * d - 1) * (1 - alpha_ref) / (alpha_ref * d * d)
          + 4 * math.sqrt(max(1 - alpha_ref, 0.0)) * math.sqrt(d * d - 1) / alpha_ref)
    return min(e1, e2)


@dataclass
class IRBResult:
    reference: RBResult
    interleaved: RBResult

    @property
    def ratio(self) -> float:
        return self.interleaved.alpha / self.reference.alpha

    @property
    def r_gate(self) -> float:
        return (D - 1) * (1 - self.ratio) / D

    @property
    def bound(self) -> float:
        return irb_systematic_bound(self.reference.alpha, self.interleaved.alpha)

    @property
    def interval(self) -> tuple[float, float]:
        return self.r_gate - self.bound, self.r_gate + self.bound

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "reference": self.reference.to_dict(),
                "interleaved": self.interleaved.to_dict(), "r_gate": self.r_gate, "bound": self.bound,
                "interval": list(self.interval)}


def interleaved_rb(group: CliffordGroup, provider, gate_unitary: np.ndarray, gate_channel: np.ndarray,
                   lengths=DEFAULT_LENGTHS, n_seqs: int = DEFAULT_SEQUENCES, shots="exact",
                   seed: int | None = 0) -> IRBResult:
    """Reference and interleaved decays with the same random draws; ``gate_unitary`` must be a Clifford."""
    target = group.index_of(gate_unitary)
    ref = rb_experiment(group, provider, lengths, n_seqs, shots, seed)
    inter = rb_experiment(group, provider, lengths, n_seqs, shots, seed, interleave=(target, gate_channel))
    out = IRBResult(ref, inter)
    noise = 3 * max(ref.stderr.max(), inter.stderr.max(), 1e-6) if shots != "exact" else 1e-6
    if inter.alpha > ref.alpha + noise:
        warnings.warn("interleaved gate better than reference - check model", stacklevel=2)
    return out
