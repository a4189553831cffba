"""Gate-level circuits for Heisenberg-chain time evolution.

Conventions used throughout the package:

* qubit 0 is the most significant bit of computational-basis indices;
* gates are listed in application order (first gate acts first);
* a Heisenberg bond over time ``dt`` is ``exp(-i dt/4 (XX + YY + ZZ))``,
  i.e. the spin operators are ``S = sigma / 2``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .linalg import apply_local, dagger

MAX_DENSE_QUBITS = 10

SINGLE_QUBIT_KINDS = frozenset({"u", "h", "s", "sdg"})
TWO_QUBIT_KINDS = frozenset({"canonical", "heis", "cx", "swap"})
ENTANGLING_KINDS = frozenset({"canonical", "heis"})

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
XX = np.kron(_X, _X)
YY = np.kron(_Y, _Y)
ZZ = np.kron(_Z, _Z)

_FIXED = {
    "h": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "s": np.diag([1, 1j]).astype(complex),
    "sdg": np.diag([1, -1j]).astype(complex),
    "cx": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def u_matrix(mu1: float, mu2: float, mu3: float) -> np.ndarray:
    """Three-angle single-qubit rotation (an arbitrary SU(2) element)."""
    c, s = math.cos(mu1), math.sin(mu1)
    return np.array(
        [
            [np.exp(1j * mu2) * c, np.exp(1j * mu3) * s],
            [-np.exp(-1j * mu3) * s, np.exp(-1j * mu2) * c],
        ]
    )


def canonical_matrix(nu1: float, nu2: float, nu3: float) -> np.ndarray:
    """``exp(-i (nu1 XX + nu2 YY + nu3 ZZ))``; the three terms commute."""
    out = np.eye(4, dtype=complex)
    for nu, P in ((nu1, XX), (nu2, YY), (nu3, ZZ)):
        out = out @ (math.cos(nu) * np.eye(4) - 1j * math.sin(nu) * P)
    return out


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind in SINGLE_QUBIT_KINDS:
            n = 1
        elif self.kind in TWO_QUBIT_KINDS:
            n = 2
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != n or len(set(self.qubits)) != n:
            raise ValueError(f"{self.kind} needs {n} distinct qubits, got {self.qubits}")
        expected = {"u": 3, "canonical": 3, "heis": 1}.get(self.kind, 0)
        if len(self.params) != expected:
            raise ValueError(f"{self.kind} takes {expected} parameters, got {len(self.params)}")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2

    def matrix(self) -> np.ndarray:
        if self.kind == "u":
            return u_matrix(*self.params)
        if self.kind == "canonical":
            return canonical_matrix(*self.params)
        if self.kind == "heis":
            q = self.params[0] / 4
            return canonical_matrix(q, q, q)
        return _FIXED[self.kind]

    def inverse(self) -> "Gate":
        if self.kind == "u":
            m1, m2, m3 = self.params
            return Gate("u", self.qubits, (-m1, -m2, m3))
        if self.kind in ("canonical", "heis"):
            return Gate(self.kind, self.qubits, tuple(-p for p in self.params))
        if self.kind == "s":
            return Gate("sdg", self.qubits)
        if self.kind == "sdg":
            return Gate("s", self.qubits)
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(d["kind"], tuple(d["qubits"]), tuple(float(p) for p in d.get("params", ())))


# Convenience constructors


def u_gate(q: int, mu1: float, mu2: float, mu3: float) -> Gate:
    return Gate("u", (q,), (float(mu1), float(mu2), float(mu3)))


def rz(q: int, theta: float) -> Gate:
    return u_gate(q, 0.0, -theta / 2, 0.0)


def ry(q: int, theta: float) -> Gate:
    return u_gate(q, theta / 2, 0.0, math.pi)


def x_gate(q: int) -> Gate:
    """Pauli X up to a global phase (``i X``)."""
    return u_gate(q, math.pi / 2, 0.0, math.pi / 2)


def z_gate(q: int) -> Gate:
    """Pauli Z up to a global phase (``-i Z``)."""
    return u_gate(q, 0.0, -math.pi / 2, 0.0)


def y_gate(q: int) -> Gate:
    """Pauli Y up to a global phase (``i Y``)."""
    return u_gate(q, math.pi / 2, 0.0, 0.0)


def canonical(i: int, j: int, nu1: float, nu2: float, nu3: float) -> Gate:
    return Gate("canonical", (i, j), (float(nu1), float(nu2), float(nu3)))


def heis_bond(i: int, j: int, dt: float) -> Gate:
    return Gate("heis", (i, j), (float(dt),))


def cx(control: int, target: int) -> Gate:
    return Gate("cx", (control, target))


def swap(i: int, j: int) -> Gate:
    return Gate("swap", (i, j))


def h(q: int) -> Gate:
    return Gate("h", (q,))


def s(q: int) -> Gate:
    return Gate("s", (q,))


def sdg(q: int) -> Gate:
    return Gate("sdg", (q,))


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[Gate, ...] = ()
    label: str = ""
    topology: str = field(default="linear", compare=False)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.num_qubits:
                raise ValueError(f"gate {g} acts outside {self.num_qubits} qubits")

    def __hash__(self) -> int:
        # circuits are used as cache keys; hashing long gate tuples is not free
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.num_qubits, self.gates, self.label))
            object.__setattr__(self, "_hash", h)
        return h

    def __len__(self) -> int:
        return len(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.num_qubits != self.num_qubits:
            raise ValueError("cannot concatenate circuits on different qubit counts")
        label = "+".join(x for x in (self.label, other.label) if x)
        return Circuit(self.num_qubits, self.gates + other.gates, label)

    def with_gates(self, gates, label: str | None = None) -> "Circuit":
        return Circuit(self.num_qubits, tuple(gates), self.label if label is None else label)

    def inverse(self) -> "Circuit":
        return self.with_gates([g.inverse() for g in reversed(self.gates)], self.label + "^dg")

    def is_local(self) -> bool:
        """True when every two-qubit gate acts on neighbouring qubits."""
        return all(abs(g.qubits[0] - g.qubits[1]) == 1 for g in self.gates if g.is_two_qubit)

    def is_decomposed(self) -> bool:
        return all(g.kind in SINGLE_QUBIT_KINDS or g.kind == "cx" for g in self.gates)

    def depth(self) -> int:
        frontier = [0] * self.num_qubits
        for g in self.gates:
            layer = max(frontier[q] for q in g.qubits) + 1
            for q in g.qubits:
                frontier[q] = layer
        return max(frontier, default=0)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "num_qubits": self.num_qubits,
            "gates": [g.to_dict() for g in self.gates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["num_qubits"]), tuple(Gate.from_dict(g) for g in d["gates"]), d.get("label", ""))


# Bond bookkeeping


def _check_chain(L: int, bc: str, n: int | None = None) -> None:
    if bc not in ("open", "periodic"):
        raise ValueError(f"boundary condition must be 'open' or 'periodic', got {bc!r}")
    if L < 2:
        raise ValueError("a chain needs at least 2 qubits")
    if bc == "periodic" and L < 3:
        raise ValueError("periodic boundary conditions need L >= 3")
    if n is not None and n < 1:
        raise ValueError("number of Trotter steps must be >= 1")


def bond_groups(L: int, bc: str) -> list[list[tuple[int, int]]]:
    """Commuting bond groups: even bonds, odd bonds and (periodic) the wrap bond."""
    _check_chain(L, bc)
    even = [(i, i + 1) for i in range(0, L - 1, 2)]
    odd = [(i, i + 1) for i in range(1, L - 1, 2)]
    groups = [even, odd]
    if bc == "periodic":
        groups.append([(L - 1, 0)])
    return groups


def bonds(L: int, bc: str) -> list[tuple[int, int]]:
    return [b for grp in bond_groups(L, bc) for b in grp]


def _routed_bond(L: int, i: int, j: int, dt: float) -> list[Gate]:
    """Apply a bond between distant qubits through a symmetric SWAP chain."""
    lo, hi = min(i, j), max(i, j)
    if hi - lo == 1:
        return [heis_bond(lo, hi, dt)]
    chain = [swap(q, q - 1) for q in range(hi, lo + 1, -1)]
    return chain + [heis_bond(lo, lo + 1, dt)] + chain[::-1]


def _expand(L: int, bc: str, schedule, route: bool) -> list[Gate]:
    groups = bond_groups(L, bc)
    # merge consecutive applications of the same (internally commuting) group
    merged: list[list] = []
    for grp, dur in schedule:
        if not groups[grp]:
            continue
        if merged and merged[-1][0] == grp:
            merged[-1][1] += dur
        else:
            merged.append([grp, dur])
    gates: list[Gate] = []
    for grp, dur in merged:
        for i, j in groups[grp]:
            if route:
                gates.extend(_routed_bond(L, i, j, dur))
            else:
                gates.append(heis_bond(i, j, dur))
    return gates


def build_trotter1(L: int, bc: str, t: float, n: int, route: bool = True) -> Circuit:
    """First-order Trotter circuit: even, odd (and wrap) bond layers, repeated n times."""
    _check_chain(L, bc, n)
    dt = t / n
    k = len(bond_groups(L, bc))
    schedule = [(g, dt) for _ in range(n) for g in range(k)]
    return Circuit(L, _expand(L, bc, schedule, route), f"trotter1_L{L}_{bc}_n{n}")


def build_trotter2(L: int, bc: str, t: float, n: int, route: bool = True) -> Circuit:
    """Symmetric second-order Trotter circuit with half steps merged.

    Each step is ``U0(dt/2) U1(dt/2) U2(dt) U1(dt/2) U0(dt/2)`` with the wrap
    bond ``U2`` only present for periodic chains; adjacent applications of the
    same group are fused into one gate layer.
    """
    _check_chain(L, bc, n)
    dt = t / n
    k = len(bond_groups(L, bc))
    step = [(g, dt / 2) for g in range(k - 1)] + [(k - 1, dt)] + [(g, dt / 2) for g in reversed(range(k - 1))]
    schedule = step * n
    return Circuit(L, _expand(L, bc, schedule, route), f"trotter2_L{L}_{bc}_n{n}")


# Brickwall ansatz

PARAMS_PER_GATE = 12
PARAMS_PER_ROTATION = 3


def brickwall_layout(L: int, n_layers: int) -> list[tuple[int, int]]:
    """Bond sequence of the brickwall: per layer all even bonds then all odd bonds."""
    if L < 2:
        raise ValueError("brickwall needs at least 2 qubits")
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    even = [(i, i + 1) for i in range(0, L - 1, 2)]
    odd = [(i, i + 1) for i in range(1, L - 1, 2)]
    return (even + odd) * n_layers


def brickwall_param_count(L: int, n_layers: int) -> int:
    return PARAMS_PER_GATE * len(brickwall_layout(L, n_layers)) + PARAMS_PER_ROTATION * L


def brickwall_gates(L: int, n_layers: int, theta) -> list[Gate]:
    """Expand a parameter vector into primitive gates.

    Every bulk two-qubit block on bond (i, i+1) consumes 12 angles, laid out as
    ``[pre_i(3), pre_j(3), nu(3), post_i(3)]`` and emitted as
    ``u(i) u(j) canonical(i, j) u(i)``. The last ``3 L`` angles form the
    closing layer of single-qubit rotations.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    layout = brickwall_layout(L, n_layers)
    expected = brickwall_param_count(L, n_layers)
    if theta.size != expected:
        raise ValueError(
            f"brickwall with L={L}, n_layers={n_layers} needs {expected} parameters, got {theta.size}"
        )
    gates: list[Gate] = []
    k = 0
    for i, j in layout:
        p = theta[k : k + PARAMS_PER_GATE]
        gates.append(u_gate(i, *p[0:3]))
        gates.append(u_gate(j, *p[3:6]))
        gates.append(canonical(i, j, *p[6:9]))
        gates.append(u_gate(i, *p[9:12]))
        k += PARAMS_PER_GATE
    for q in range(L):
        gates.append(u_gate(q, *theta[k : k + 3]))
        k += 3
    return gates


def build_brickwall(L: int, n_layers: int, theta) -> Circuit:
    return Circuit(L, brickwall_gates(L, n_layers, theta), f"brickwall_L{L}_layers{n_layers}")


def trotter_equivalent_theta(L: int, n_layers: int, t: float) -> np.ndarray:
    """Angles that make the brickwall reproduce open-chain first-order Trotter."""
    theta = np.zeros(brickwall_param_count(L, n_layers))
    if n_layers == 0:
        return theta
    nu = t / n_layers / 4
    for g in range(len(brickwall_layout(L, n_layers))):
        theta[g * PARAMS_PER_GATE + 6 : g * PARAMS_PER_GATE + 9] = nu
    return theta


# Decomposition and accounting


def decompose_two_qubit(g: Gate) -> list[Gate]:
    """Three-CX realization of a canonical or Heisenberg gate (exact up to phase)."""
    if g.kind == "heis":
        q = g.params[0] / 4
        nu = (q, q, q)
    elif g.kind == "canonical":
        nu = g.params
    else:
        raise ValueError(f"decompose_two_qubit supports canonical/heis gates, got {g.kind!r}")
    i, j = g.qubits
    # template realizes exp(+i(a XX + b YY + d ZZ)); our gates carry a minus sign
    a, b, d = (-v for v in nu)
    return [
        rz(j, -math.pi / 2),
        cx(j, i),
        rz(i, math.pi / 2 - 2 * d),
        ry(j, 2 * a - math.pi / 2),
        cx(i, j),
        ry(j, math.pi / 2 - 2 * b),
        cx(j, i),
        rz(i, math.pi / 2),
    ]


def decompose(c: Circuit) -> Circuit:
    """Lower every gate to single-qubit rotations and CX."""
    out: list[Gate] = []
    for g in c.gates:
        if g.kind in ENTANGLING_KINDS:
            out.extend(decompose_two_qubit(g))
        elif g.kind == "swap":
            a, b = g.qubits
            out.extend([cx(a, b), cx(b, a), cx(a, b)])
        else:
            out.append(g)
    return c.with_gates(out, c.label)


def cnot_count(c: Circuit) -> int:
    total = 0
    for g in c.gates:
        if g.kind in ENTANGLING_KINDS or g.kind == "swap":
            total += 3
        elif g.kind == "cx":
            total += 1
    return total


def unitary(c: Circuit) -> np.ndarray:
    """Dense unitary of ``c``; the first gate in the list acts first."""
    L = c.num_qubits
    if L > MAX_DENSE_QUBITS:
        raise ValueError(f"dense evaluation limited to {MAX_DENSE_QUBITS} qubits, got {L}")
    u = np.eye(2**L, dtype=complex)
    for g in c.gates:
        u = apply_local(u, g.matrix(), g.qubits, L)
    return u


def overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Phase-insensitive agreement ``|Tr(a^dagger b)| / dim``."""
    return float(abs(np.trace(dagger(a) @ b)) / a.shape[0])


# OpenQASM 3 subset

_QASM_HEADER = 'OPENQASM 3.0;\ninclude "stdgates.inc";\nqubit[{n}] q;\n'


def _u_to_qasm_angles(mu1: float, mu2: float, mu3: float) -> tuple[float, float, float]:
    # our u(mu) equals exp(i mu2) * qasm u(theta, phi, lam)
    return 2 * mu1, math.pi - mu3 - mu2, mu3 - mu2 + math.pi


def _qasm_angles_to_u(theta: float, phi: float, lam: float) -> tuple[float, float, float]:
    return theta / 2, math.pi - (phi + lam) / 2, (lam - phi) / 2


_QASM_FIXED = {
    "h": (math.pi / 2, 0.0, math.pi),
    "s": (0.0, 0.0, math.pi / 2),
    "sdg": (0.0, 0.0, -math.pi / 2),
}


def export_qasm(c: Circuit) -> str:
    lines = [_QASM_HEADER.format(n=c.num_qubits)]
    for g in c.gates:
        if g.kind == "cx":
            lines.append(f"cx q[{g.qubits[0]}], q[{g.qubits[1]}];\n")
        elif g.kind == "swap":
            lines.append(f"swap q[{g.qubits[0]}], q[{g.qubits[1]}];\n")
        elif g.kind in SINGLE_QUBIT_KINDS:
            ang = _u_to_qasm_angles(*g.params) if g.kind == "u" else _QASM_FIXED[g.kind]
            args = ", ".join(repr(float(a)) for a in ang)
            lines.append(f"u({args}) q[{g.qubits[0]}];\n")
        else:
            raise ValueError(f"gate {g.kind!r} must be decomposed before QASM export")
    return "".join(lines)


_STMT = re.compile(r"^(u|cx|swap)\s*(?:\(([^)]*)\))?\s+(.+);$")
_QREG = re.compile(r"^qubit\[(\d+)\]\s+q;$")
_QARG = re.compile(r"q\[(\d+)\]")


def parse_qasm(text: str, label: str = "") -> Circuit:
    """Parse the subset produced by :func:`export_qasm`."""
    n = None
    gates: list[Gate] = []
    for raw in text.splitlines():
        line = raw.split("//")[0].strip()
        if not line or line.startswith(("OPENQASM", "include")):
            continue
        m = _QREG.match(line)
        if m:
            n = int(m.group(1))
            continue
        m = _STMT.match(line)
        if not m:
            raise ValueError(f"unsupported QASM statement: {raw!r}")
        name, args, operands = m.groups()
        qs = tuple(int(x) for x in _QARG.findall(operands))
        if name == "u":
            theta, phi, lam = (float(a) for a in args.split(","))
            gates.append(u_gate(qs[0], *_qasm_angles_to_u(theta, phi, lam)))
        else:
            gates.append(Gate(name, qs))
    if n is None:
        raise ValueError("QASM program declares no qubit register")
    return Circuit(n, tuple(gates), label)
