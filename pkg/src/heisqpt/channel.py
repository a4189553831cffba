"""Noisy density-matrix simulation standing in for quantum hardware.

Density matrices are ``(D, D)`` complex arrays; batches are ``(B, D, D)``.
Superoperators act on column-stacked density matrices, so a unitary ``U``
has superoperator ``conj(U) kron U``.
"""

from __future__ import annotations

import abc
import copy
import math
import zlib
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from . import circuit as cq
from .linalg import dagger, embed, kron
from .pauli import PauliString, to_matrix

PREP_LABELS = ("0", "1", "+", "+i")

_ONE_QUBIT_STATES = {
    "0": np.array([[1, 0], [0, 0]], dtype=complex),
    "1": np.array([[0, 0], [0, 1]], dtype=complex),
    "+": np.full((2, 2), 0.5, dtype=complex),
    "+i": np.array([[0.5, -0.5j], [0.5j, 0.5]], dtype=complex),
}


@dataclass(frozen=True)
class NoiseModel:
    """Local depolarizing noise after every gate plus readout bit flips.

    ``cx_overrotation`` adds a coherent ``exp(-i delta/2 Z_c X_t)`` after each
    CX.
    """

    p1: float = 0.001
    p2: float = 0.01
    p_ro: float = 0.01
    seed: int = 0
    cx_overrotation: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "p_ro"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(p1=0.0, p2=0.0, p_ro=0.0, seed=seed)

    @property
    def is_noiseless(self) -> bool:
        return self.p1 == 0 and self.p2 == 0 and self.p_ro == 0 and self.cx_overrotation == 0


class KrausSet:
    """Trace-preserving Kraus decomposition ``rho -> sum_a K_a rho K_a^dagger``."""

    def __init__(self, operators, atol: float = 1e-10):
        ops = [np.asarray(k, dtype=complex) for k in operators]
        if not ops:
            raise ValueError("a Kraus set needs at least one operator")
        d = ops[0].shape[0]
        if any(k.shape != (d, d) for k in ops):
            raise ValueError("Kraus operators must be square and of equal size")
        total = sum(dagger(k) @ k for k in ops)
        if np.linalg.norm(total - np.eye(d)) > atol:
            raise ValueError("Kraus operators are not trace preserving")
        self.operators = ops
        self.dim = d

    def __len__(self) -> int:
        return len(self.operators)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ dagger(k) for k in self.operators)

    def superoperator(self) -> np.ndarray:
        return sum(np.kron(k.conj(), k) for k in self.operators)


def depolarizing_kraus(p: float, num_qubits: int = 1) -> KrausSet:
    """``rho -> (1 - p) rho + p I / d`` as Pauli-weighted Kraus operators."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    N = 4**num_qubits
    ops = [math.sqrt(1 - p + p / N) * np.eye(2**num_qubits, dtype=complex)]
    for idx in range(1, N):
        ops.append(math.sqrt(p / N) * to_matrix(PauliString.from_index(idx, num_qubits)))
    return KrausSet(ops)


def unitary_superoperator(u: np.ndarray) -> np.ndarray:
    return np.kron(np.conj(u), u)


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F") if np.ndim(rho) == 2 else _vec_batch(rho)


def _vec_batch(rhos: np.ndarray) -> np.ndarray:
    return np.swapaxes(rhos, -1, -2).reshape(rhos.shape[0], -1)


def unvec(v: np.ndarray) -> np.ndarray:
    D = int(round(math.sqrt(v.shape[-1])))
    if v.ndim == 1:
        return v.reshape(D, D, order="F")
    return np.swapaxes(v.reshape(v.shape[0], D, D), -1, -2)


def apply_superoperator(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return unvec(superop @ vec(rho))


def validate_density_matrix(rho, atol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, dagger(rho), atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh((rho + dagger(rho)) / 2).min() < -1e-9:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def apply_channel(rho, kraus: KrausSet) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (kraus.dim, kraus.dim):
        raise ValueError(f"state of shape {rho.shape} does not match channel dimension {kraus.dim}")
    return kraus.apply(rho)


def prepare_product(spec) -> np.ndarray:
    """Pure product state from per-qubit labels in {0, 1, +, +i}."""
    labels = split_prep_label(spec) if isinstance(spec, str) else list(spec)
    if not labels:
        raise ValueError("empty preparation label")
    for lab in labels:
        if lab not in _ONE_QUBIT_STATES:
            raise ValueError(f"unknown preparation label {lab!r}")
    return kron(*(_ONE_QUBIT_STATES[lab] for lab in labels))


def split_prep_label(text: str) -> list[str]:
    """``"0+i1"`` -> ``["0", "+i", "1"]``."""
    out, k = [], 0
    while k < len(text):
        if text.startswith("+i", k):
            out.append("+i")
            k += 2
        elif text[k] in "01+":
            out.append(text[k])
            k += 1
        else:
            raise ValueError(f"bad preparation label {text!r}")
    return out


def prep_circuit(labels: Sequence[str]) -> cq.Circuit:
    """Gates taking ``|0...0>`` to the product state ``labels``."""
    gates = []
    for q, lab in enumerate(labels):
        if lab == "1":
            gates.append(cq.x_gate(q))
        elif lab == "+":
            gates.append(cq.h(q))
        elif lab == "+i":
            gates += [cq.h(q), cq.s(q)]
        elif lab != "0":
            raise ValueError(f"unknown preparation label {lab!r}")
    return cq.Circuit(len(labels), tuple(gates), "prep_" + "".join(labels))


def basis_change_circuit(basis: str) -> cq.Circuit:
    """Rotation mapping the eigenbasis of each letter in ``basis`` onto Z."""
    gates = []
    for q, letter in enumerate(basis):
        if letter == "X":
            gates.append(cq.h(q))
        elif letter == "Y":
            gates += [cq.sdg(q), cq.h(q)]
        elif letter not in "ZI":
            raise ValueError(f"bad measurement letter {letter!r}")
    return cq.Circuit(len(basis), tuple(gates), "meas_" + basis)


# Batched simulation kernels


def _left(rhos: np.ndarray, g: np.ndarray, qubits, L: int) -> np.ndarray:
    B, D = rhos.shape[0], rhos.shape[1]
    k = len(qubits)
    t = rhos.reshape((B,) + (2,) * L + (D,))
    t = np.tensordot(g.reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), [1 + q for q in qubits]))
    t = np.moveaxis(t, list(range(k)), [1 + q for q in qubits])
    return t.reshape(B, D, D)


def _conjugate(rhos: np.ndarray, g: np.ndarray, qubits, L: int) -> np.ndarray:
    t = _left(rhos, g, qubits, L)
    t = _left(np.conj(np.swapaxes(t, 1, 2)), g, qubits, L)
    return np.conj(np.swapaxes(t, 1, 2))


def _full_depolarize(rhos: np.ndarray, q: int, L: int) -> np.ndarray:
    B, D = rhos.shape[0], rhos.shape[1]
    a, b = 2**q, 2 ** (L - q - 1)
    t = rhos.reshape(B, a, 2, b, a, 2, b)
    red = np.trace(t, axis1=2, axis2=5) / 2  # (B, a, b, a, b)
    out = np.zeros_like(t)
    out[:, :, 0, :, :, 0, :] = red
    out[:, :, 1, :, :, 1, :] = red
    return out.reshape(B, D, D)


def _depolarize(rhos: np.ndarray, p: float, qubits, L: int) -> np.ndarray:
    if p == 0:
        return rhos
    mixed = rhos
    for q in qubits:
        mixed = _full_depolarize(mixed, q, L)
    return (1 - p) * rhos + p * mixed


def _zx_overrotation(delta: float) -> np.ndarray:
    zx = np.kron(np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    return math.cos(delta / 2) * np.eye(4) - 1j * math.sin(delta / 2) * zx


def evolve(rhos: np.ndarray, c: cq.Circuit, noise: NoiseModel | None = None) -> np.ndarray:
    """Run a decomposed circuit on a batch of matrices (no readout noise)."""
    if not c.is_decomposed():
        bad = sorted({g.kind for g in c.gates if g.kind not in cq.SINGLE_QUBIT_KINDS and g.kind != "cx"})
        raise ValueError(f"circuit must be decomposed to single-qubit gates and CX, found {bad}")
    noise = noise or NoiseModel.noiseless()
    L = c.num_qubits
    out = np.array(rhos, dtype=complex)
    if out.ndim == 2:
        out = out[None]
    over = _zx_overrotation(noise.cx_overrotation) if noise.cx_overrotation else None
    for g in c.gates:
        out = _conjugate(out, g.matrix(), g.qubits, L)
        if g.kind == "cx":
            if over is not None:
                out = _conjugate(out, over, g.qubits, L)
            out = _depolarize(out, noise.p2, g.qubits, L)
        else:
            out = _depolarize(out, noise.p1, g.qubits, L)
    return out


def run_circuit(rho, c: cq.Circuit, nm: NoiseModel | None = None) -> np.ndarray:
    """Evolve a single density matrix through a noisy decomposed circuit."""
    return evolve(np.asarray(rho, dtype=complex)[None], c, nm)[0]


def circuit_superoperator(c: cq.Circuit, noise: NoiseModel | None = None) -> np.ndarray:
    """Superoperator of the noisy circuit, built by evolving all matrix units."""
    D = 2**c.num_qubits
    units = np.zeros((D * D, D, D), dtype=complex)
    for col in range(D * D):
        # column-stacked index col = i + D j  <->  |i><j|
        units[col, col % D, col // D] = 1.0
    return _vec_batch(evolve(units, cq.decompose(c), noise)).T


def gate_superoperator(g: cq.Gate, L: int, noise: NoiseModel | None = None) -> np.ndarray:
    """Superoperator of one noisy decomposed gate, built from its Kraus form."""
    noise = noise or NoiseModel.noiseless()
    if g.kind not in cq.SINGLE_QUBIT_KINDS and g.kind != "cx":
        raise ValueError(f"gate {g.kind!r} must be decomposed first")
    local = g.matrix()
    p = noise.p1
    if g.kind == "cx":
        p = noise.p2
        if noise.cx_overrotation:
            local = _zx_overrotation(noise.cx_overrotation) @ local
    k = len(g.qubits)
    ops = [local] if p == 0 else [K @ local for K in depolarizing_kraus(p, k).operators]
    out = 0
    for K in ops:
        E = embed(K, g.qubits, L)
        out = out + np.kron(E.conj(), E)
    return out


def readout_probabilities(probs: np.ndarray, p_ro: float, L: int) -> np.ndarray:
    """Push outcome probabilities through independent per-qubit bit flips."""
    if p_ro == 0:
        return probs
    flip = np.array([[1 - p_ro, p_ro], [p_ro, 1 - p_ro]])
    t = probs.reshape((2,) * L)
    for q in range(L):
        t = np.moveaxis(np.tensordot(flip, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def _rng(seed: int, label: str, setting: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(label.encode()), setting])


def measure_pauli(rho, p: PauliString, shots: int = 0, nm: NoiseModel | None = None, rng=None, label: str = "", setting: int = 0) -> float:
    """Estimate ``<P>`` from simulated single-shot outcomes in the rotated basis.

    ``shots=0`` returns the exact expectation, still including the readout
    flip bias of the noise model.
    """
    nm = nm or NoiseModel.noiseless()
    if p.is_identity():
        return 1.0
    L = p.num_qubits
    basis = "".join("Z" if ch == "I" else ch for ch in p.label)
    rot = basis_change_circuit(basis)
    rotated = run_circuit(rho, rot, NoiseModel.noiseless())
    probs = readout_probabilities(np.clip(np.real(np.diag(rotated)), 0, None), nm.p_ro, L)
    probs = probs / probs.sum()
    signs = parity_signs(p.x_bits | p.z_bits, L)
    if shots == 0:
        return float(signs @ probs)
    rng = rng or _rng(nm.seed, label, setting)
    counts = rng.multinomial(shots, probs)
    return float(signs @ counts / shots)


def parity_signs(mask: int, L: int) -> np.ndarray:
    """``(-1)^{popcount(outcome & mask)}`` for every outcome index."""
    idx = np.arange(2**L)
    bits = np.zeros_like(idx)
    m = idx & mask
    while m.any():
        bits ^= m & 1
        m >>= 1
    return 1 - 2 * bits


def bitstring(index: int, L: int) -> str:
    return format(index, f"0{L}b")


# Executors

Stage = Union[cq.Circuit, np.ndarray, KrausSet]


class Executor(abc.ABC):
    """Boundary where a real device could be substituted.

    ``prep`` and ``process`` are a circuit, a superoperator, a Kraus set, or a
    tuple of those applied in order; ``measurement`` is the basis-change
    circuit applied before a computational-basis readout.
    """

    @abc.abstractmethod
    def probabilities(self, prep, process, measurement: cq.Circuit | None) -> np.ndarray:
        """Exact outcome distribution (readout noise included)."""

    @abc.abstractmethod
    def run(self, prep, process, measurement: cq.Circuit | None, shots: int, setting: int = 0, label: str = "") -> dict[str, int]:
        """Outcome counts keyed by bitstring; counts sum to ``shots``."""


class SimulatedExecutor(Executor):
    """Executor backed by the noisy density-matrix simulator.

    Gate and circuit superoperators are cached, and so are outcome maps for
    stage sequences that recur (such as the same basis rotation around the
    same process), which keeps large tomography sweeps cheap.
    """

    def __init__(self, num_qubits: int, noise: NoiseModel | None = None):
        self.num_qubits = num_qubits
        self.noise = noise or NoiseModel.noiseless()
        self._superops: dict = {}
        self._gate_ops: dict = {}
        self._states: dict = {}
        self._maps: dict = {}
        self._seen: dict = {}
        self._confusion = self._readout_matrix()
        self.calls = 0

    def reseeded(self, seed: int) -> "SimulatedExecutor":
        """Copy that shares every simulation cache but samples with ``seed``."""
        other = copy.copy(self)
        other.noise = replace(self.noise, seed=seed)
        return other

    def _readout_matrix(self) -> np.ndarray:
        p = self.noise.p_ro
        flip = np.array([[1 - p, p], [p, 1 - p]])
        out = np.ones((1, 1))
        for _ in range(self.num_qubits):
            out = np.kron(out, flip)
        return out

    def _gate_superop(self, g: cq.Gate) -> np.ndarray:
        op = self._gate_ops.get(g)
        if op is None:
            op = gate_superoperator(g, self.num_qubits, self.noise)
            self._gate_ops[g] = op
        return op

    def _superop(self, stage) -> np.ndarray:
        if isinstance(stage, KrausSet):
            return stage.superoperator()
        if isinstance(stage, np.ndarray):
            return stage
        if isinstance(stage, cq.Circuit):
            if stage.num_qubits != self.num_qubits:
                raise ValueError("circuit width does not match executor")
            if stage not in self._superops:
                self._superops[stage] = circuit_superoperator(stage, self.noise)
            return self._superops[stage]
        raise TypeError(f"unsupported stage type {type(stage).__name__}")

    @staticmethod
    def _stages(obj) -> tuple:
        if obj is None:
            return ()
        return tuple(obj) if isinstance(obj, (tuple, list)) else (obj,)

    def _initial(self, stages: tuple) -> tuple[np.ndarray, tuple]:
        """State after the leading preparation circuit, and the remaining stages."""
        D = 2**self.num_qubits
        if stages and isinstance(stages[0], cq.Circuit):
            first = stages[0]
            v = self._states.get(first)
            if v is None:
                if first.num_qubits != self.num_qubits:
                    raise ValueError("circuit width does not match executor")
                v = np.zeros(D * D, dtype=complex)
                v[0] = 1
                for g in cq.decompose(first).gates:
                    v = self._gate_superop(g) @ v
                self._states[first] = v
            return v, stages[1:]
        v = np.zeros(D * D, dtype=complex)
        v[0] = 1
        return v, stages

    @staticmethod
    def _key(stages: tuple) -> tuple:
        return tuple(s if isinstance(s, cq.Circuit) else ("obj", id(s)) for s in stages)

    def _outcome_map(self, stages: tuple) -> np.ndarray:
        """``(D, D^2)`` matrix from an input state vector to outcome probabilities."""
        D = 2**self.num_qubits
        key = self._key(stages)
        cached = self._maps.get(key)
        if cached is not None:
            return cached[0]
        out = self._confusion @ np.eye(D * D, dtype=complex)[:: D + 1]
        for st in reversed(stages):
            out = out @ self._superop(st)
        # keep the stage objects alive so their ids stay unique
        self._maps[key] = (out, stages)
        return out

    def output_state(self, prep, process, measurement=None) -> np.ndarray:
        v, rest = self._initial(self._stages(prep))
        for st in rest + self._stages(process) + self._stages(measurement):
            v = self._superop(st) @ v
        return unvec(v)

    def probabilities(self, prep, process, measurement=None) -> np.ndarray:
        self.calls += 1
        v, rest = self._initial(self._stages(prep))
        stages = rest + self._stages(process) + self._stages(measurement)
        key = self._key(stages)
        if key in self._maps or self._seen.get(key, 0) >= 1:
            probs = np.real(self._outcome_map(stages) @ v)
        else:
            self._seen[key] = 1
            for st in stages:
                v = self._superop(st) @ v
            probs = self._confusion @ np.real(v[:: 2**self.num_qubits + 1])
        probs = np.clip(probs, 0, None)
        total = probs.sum()
        return probs / total if total > 0 else probs

    def run(self, prep, process, measurement=None, shots: int = 1024, setting: int = 0, label: str = "") -> dict[str, int]:
        if shots < 1:
            raise ValueError("shots must be positive; use probabilities() for exact values")
        probs = self.probabilities(prep, process, measurement)
        counts = _rng(self.noise.seed, label, setting).multinomial(shots, probs)
        L = self.num_qubits
        return {bitstring(i, L): int(c) for i, c in enumerate(counts) if c}


def counts_to_probabilities(counts: dict[str, int], L: int) -> np.ndarray:
    probs = np.zeros(2**L)
    total = sum(counts.values())
    for key, c in counts.items():
        probs[int(key, 2)] = c
    return probs / total


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """``<psi| rho |psi>`` for a pure reference state."""
    return float(np.real(np.conj(psi) @ rho @ psi))
