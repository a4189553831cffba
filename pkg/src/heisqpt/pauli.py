"""Exact algebra of L-qubit Pauli strings in the symplectic (x, z) encoding.

A string is stored as two L-bit masks. Qubit 0 sits at the most significant
bit, so the mixed-radix index over (I, X, Y, Z) per qubit reads left to right
like the text label. Phases are tracked as exponents of ``i`` modulo 4 and are
never turned into floats inside the algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DENSE_QUBITS = 12

_LETTERS = "IXYZ"
# letter -> (x, z)
_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_CODE = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def phase_value(exponent: int) -> complex:
    """Return ``i**exponent`` exactly as one of 1, 1j, -1, -1j."""
    return (1, 1j, -1, -1j)[exponent % 4]


@dataclass(frozen=True)
class PauliString:
    x_bits: int
    z_bits: int
    num_qubits: int

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        limit = 1 << self.num_qubits
        if not (0 <= self.x_bits < limit and 0 <= self.z_bits < limit):
            raise ValueError("bit masks exceed num_qubits")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        label = label.strip().upper()
        if not label or any(ch not in _XZ for ch in label):
            raise ValueError(f"bad Pauli label {label!r}")
        x = z = 0
        for ch in label:
            bx, bz = _XZ[ch]
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(x, z, len(label))

    @classmethod
    def from_index(cls, index: int, num_qubits: int) -> "PauliString":
        if not 0 <= index < 4**num_qubits:
            raise ValueError(f"index {index} out of range for {num_qubits} qubits")
        digits = []
        for _ in range(num_qubits):
            digits.append(index % 4)
            index //= 4
        return cls.from_label("".join(_LETTERS[d] for d in reversed(digits)))

    @classmethod
    def identity(cls, num_qubits: int) -> "PauliString":
        return cls(0, 0, num_qubits)

    def _bit(self, q: int) -> int:
        return self.num_qubits - 1 - q

    def letter(self, q: int) -> str:
        b = self._bit(q)
        return _LETTERS[_CODE[((self.x_bits >> b) & 1, (self.z_bits >> b) & 1)]]

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in range(self.num_qubits))

    @property
    def index(self) -> int:
        idx = 0
        for q in range(self.num_qubits):
            idx = 4 * idx + _LETTERS.index(self.letter(q))
        return idx

    @property
    def weight(self) -> int:
        return (self.x_bits | self.z_bits).bit_count()

    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0

    def support(self) -> list[int]:
        return [q for q in range(self.num_qubits) if self.letter(q) != "I"]

    def __str__(self) -> str:
        return self.label

    def __mul__(self, other: "PauliString") -> tuple[int, "PauliString"]:
        return mul(self, other)


def _check_same_length(*ps: PauliString) -> None:
    if len({p.num_qubits for p in ps}) != 1:
        raise ValueError(
            "Pauli strings act on different numbers of qubits: "
            + ", ".join(str(p.num_qubits) for p in ps)
        )


def mul(a: PauliString, b: PauliString) -> tuple[int, PauliString]:
    """Multiply two strings; returns ``(k, P)`` with ``a @ b == i**k * P``."""
    _check_same_length(a, b)
    x = a.x_bits ^ b.x_bits
    z = a.z_bits ^ b.z_bits
    # each string is i^{|x&z|} X^x Z^z; moving Z^{z_a} past X^{x_b} costs (-1)^{z_a.x_b}
    k = (
        (a.x_bits & a.z_bits).bit_count()
        + (b.x_bits & b.z_bits).bit_count()
        - (x & z).bit_count()
        + 2 * (a.z_bits & b.x_bits).bit_count()
    )
    return k % 4, PauliString(x, z, a.num_qubits)


def triple_product(m: PauliString, l: PauliString, n: PauliString) -> tuple[int, PauliString]:
    """Return ``(k, P)`` such that ``m @ l @ n == i**k * P``."""
    _check_same_length(m, l, n)
    k1, ml = mul(m, l)
    k2, out = mul(ml, n)
    return (k1 + k2) % 4, out


def commutation_sign(a: PauliString, m: PauliString) -> int:
    """+1 if the strings commute, -1 if they anticommute."""
    _check_same_length(a, m)
    odd = ((a.x_bits & m.z_bits).bit_count() + (a.z_bits & m.x_bits).bit_count()) & 1
    return -1 if odd else 1


def to_matrix(p: PauliString) -> np.ndarray:
    if p.num_qubits > MAX_DENSE_QUBITS:
        raise ValueError(
            f"dense realization limited to {MAX_DENSE_QUBITS} qubits, got {p.num_qubits}"
        )
    out = np.ones((1, 1), dtype=complex)
    for q in range(p.num_qubits):
        out = np.kron(out, _SINGLE[p.letter(q)])
    return out


def all_paulis(num_qubits: int) -> list[PauliString]:
    """Every string in index order."""
    return [PauliString.from_index(i, num_qubits) for i in range(4**num_qubits)]


@lru_cache(maxsize=None)
def _pauli_stack(num_qubits: int) -> np.ndarray:
    mats = np.array([to_matrix(p) for p in all_paulis(num_qubits)])
    mats.setflags(write=False)
    return mats


def pauli_matrices(num_qubits: int) -> np.ndarray:
    """Read-only array of shape (4**L, 2**L, 2**L) holding every string's matrix."""
    return _pauli_stack(num_qubits)


@lru_cache(maxsize=None)
def _sign_matrix(num_qubits: int) -> np.ndarray:
    ps = all_paulis(num_qubits)
    x = np.array([p.x_bits for p in ps])
    z = np.array([p.z_bits for p in ps])
    sym = (x[:, None] & z[None, :]) ^ (z[:, None] & x[None, :])
    parity = np.vectorize(lambda v: v.bit_count() & 1)(sym)
    s = 1 - 2 * parity
    s.setflags(write=False)
    return s


def sign_matrix(num_qubits: int) -> np.ndarray:
    """Commutation matrix ``s[m, a]`` over all strings; ``s @ s == 4**L * I``."""
    return _sign_matrix(num_qubits)


def conjugate_by_clifford(p: PauliString, gates) -> tuple[int, PauliString]:
    """Heisenberg-propagate ``p`` through a Clifford gate list.

    Returns ``(k, P')`` with ``C^dagger p C = i**k P'`` where ``C`` is the
    unitary of ``gates`` (first gate applied first). Supported kinds are
    h, s, sdg, cx and swap; anything else raises ``ValueError``.
    """
    k = 0
    cur = p
    L = p.num_qubits
    for g in reversed(list(gates)):
        dk, cur = _conj_gate(cur, g.kind, g.qubits, L)
        k += dk
    return k % 4, cur


def _conj_gate(p: PauliString, kind: str, qubits, L: int) -> tuple[int, PauliString]:
    # G^dagger P G via images of the X_q, Z_q generators
    images = {}

    def gen(letter, q):
        return PauliString.from_label("".join(letter if i == q else "I" for i in range(L)))

    if kind == "h":
        (q,) = qubits
        images[("X", q)] = (0, gen("Z", q))
        images[("Z", q)] = (0, gen("X", q))
    elif kind == "s":
        # S^dagger X S = -Y, S^dagger Z S = Z
        (q,) = qubits
        images[("X", q)] = (2, gen("Y", q))
    elif kind == "sdg":
        (q,) = qubits
        images[("X", q)] = (0, gen("Y", q))
    elif kind == "cx":
        c, t = qubits
        images[("X", c)] = (0, mul(gen("X", c), gen("X", t))[1])
        images[("Z", t)] = (0, mul(gen("Z", c), gen("Z", t))[1])
    elif kind == "swap":
        a, b = qubits
        images[("X", a)] = (0, gen("X", b))
        images[("X", b)] = (0, gen("X", a))
        images[("Z", a)] = (0, gen("Z", b))
        images[("Z", b)] = (0, gen("Z", a))
    else:
        raise ValueError(f"gate kind {kind!r} is not a supported Clifford")

    # p = i^{|x&z|} prod_q X_q^{x_q} * prod_q Z_q^{z_q}
    k = (p.x_bits & p.z_bits).bit_count()
    acc = PauliString.identity(L)
    for letter, bits in (("X", p.x_bits), ("Z", p.z_bits)):
        for q in range(L):
            if (bits >> (L - 1 - q)) & 1:
                dk, img = images.get((letter, q), (0, gen(letter, q)))
                k += dk
                mk, acc = mul(acc, img)
                k += mk
    return k % 4, acc
