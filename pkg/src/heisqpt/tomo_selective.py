"""Selective process tomography: single process-matrix elements on demand.

Each element ``chi_mn`` follows from average survival probabilities over a
complete set of mutually unbiased bases (a 2-design). The bases are
stabilizer states: class 0 is the computational basis, and for every field
element ``a`` of GF(2^L) the class with generators ``X_i prod_j Z_j^{M_a[i,j]}``
where ``M_a[i, j] = Tr(a t^i t^j)``.

Diagonal elements are read in bulk by Pauli-twirling the channel.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from functools import lru_cache
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channel as chn
from . import circuit as cq
from .pauli import PauliString, all_paulis, conjugate_by_clifford, phase_value, sign_matrix

log = logging.getLogger(__name__)

MAX_QUBITS = 4

# lowest irreducible polynomial of each degree, as a bitmask
_IRREDUCIBLE = {1: 0b11, 2: 0b111, 3: 0b1011, 4: 0b10011}

GAMMAS = (0.0, math.pi, -math.pi / 2, math.pi / 2)


def recombination_weights() -> np.ndarray:
    """Coefficients turning the four phased fidelities into ``G_mn``.

    ``G_mn = sum_g w_g F^g_mn`` with ``w_g = e^{-i gamma_g} / 4``: the pair
    (0, pi) isolates the real part, (-pi/2, pi/2) the imaginary part.
    """
    return np.exp(-1j * np.array(GAMMAS)) / 4


def _check_width(L: int) -> None:
    if not 1 <= L <= MAX_QUBITS:
        raise ValueError(f"selective tomography supports 1..{MAX_QUBITS} qubits, got {L}")


def gf_mul(a: int, b: int, L: int) -> int:
    """Product in GF(2^L) with polynomial-basis integers."""
    mod = _IRREDUCIBLE[L]
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> L:
            a ^= mod
    return out


def gf_trace(a: int, L: int) -> int:
    """Absolute trace ``sum_k a^(2^k)``, which lands in {0, 1}."""
    acc, cur = 0, a
    for _ in range(L):
        acc ^= cur
        cur = gf_mul(cur, cur, L)
    if acc not in (0, 1):
        raise ArithmeticError("field trace left the prime field")
    return acc


def symmetric_form(a: int, L: int) -> np.ndarray:
    """``M[i, j] = Tr(a t^i t^j)`` over the polynomial basis."""
    M = np.zeros((L, L), dtype=int)
    for i in range(L):
        for j in range(L):
            M[i, j] = gf_trace(gf_mul(a, gf_mul(1 << i, 1 << j, L), L), L)
    return M


def _qubit_mask(qs, L: int) -> int:
    return sum(1 << (L - 1 - q) for q in qs)


def _basis_circuit(M: np.ndarray | None, L: int, alpha: int) -> cq.Circuit:
    if M is None:
        return cq.Circuit(L, (), f"mub{alpha}")
    gates = [cq.h(q) for q in range(L)]
    for i, j in itertools.combinations(range(L), 2):
        if M[i, j]:
            gates += [cq.h(j), cq.cx(i, j), cq.h(j)]
    gates += [cq.s(q) for q in range(L) if M[q, q]]
    return cq.Circuit(L, tuple(gates), f"mub{alpha}")


@dataclass
class MubSet:
    """``D + 1`` mutually unbiased stabilizer bases with their preparation circuits.

    ``circuits[alpha]`` maps ``|i>`` to the ``i``-th state of basis ``alpha``;
    ``generators[alpha]`` lists its stabilizer generators (images of Z_q).
    """

    num_qubits: int
    circuits: list
    generators: list

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def __len__(self) -> int:
        return len(self.circuits)

    def states(self) -> np.ndarray:
        """Dense ``(D + 1, D, D)`` array: ``states[alpha][:, i]`` is ``V_alpha |i>``."""
        return np.array([cq.unitary(c) for c in self.circuits])


def build_mubs(L: int) -> MubSet:
    _check_width(L)
    circuits = [_basis_circuit(None, L, 0)]
    generators = [[PauliString(0, _qubit_mask([q], L), L) for q in range(L)]]
    for a in range(2**L):
        M = symmetric_form(a, L)
        circuits.append(_basis_circuit(M, L, a + 1))
        generators.append(
            [PauliString(_qubit_mask([i], L), _qubit_mask([j for j in range(L) if M[i, j]], L), L) for i in range(L)]
        )
    return MubSet(L, circuits, generators)


def is_unbiased(mubs: MubSet, atol: float = 1e-9) -> bool:
    st = mubs.states()
    D = mubs.dim
    for a, b in itertools.combinations(range(len(st)), 2):
        ov = np.abs(st[a].conj().T @ st[b]) ** 2
        if not np.allclose(ov, 1 / D, atol=atol):
            return False
    return True


# state preparation


def _apply_pauli(p: PauliString, k: int, i: int) -> tuple[complex, int]:
    """``i^k P |i> = coeff |out>``."""
    coeff = phase_value(k + (p.x_bits & p.z_bits).bit_count())
    if (p.z_bits & i).bit_count() & 1:
        coeff = -coeff
    return coeff, i ^ p.x_bits


def _bits(v: int, L: int) -> list[int]:
    return [(v >> (L - 1 - q)) & 1 for q in range(L)]


@lru_cache(maxsize=65536)
def superposition_circuit(a: int, c: int, omega: complex, L: int) -> cq.Circuit:
    """Circuit taking ``|0>`` to ``(|a> + omega |c>) / sqrt 2`` up to a phase.

    With ``a == c`` it prepares ``|a>``. ``omega`` must be one of 1, i, -1, -i.
    """
    ab, cb = _bits(a, L), _bits(c, L)
    gates = []
    if a == c:
        gates = [cq.x_gate(q) for q in range(L) if ab[q]]
        return cq.Circuit(L, tuple(gates), f"basis{a}")
    diff = [q for q in range(L) if ab[q] != cb[q]]
    if ab[diff[0]] == 1:
        a, c, ab, cb = c, a, cb, ab
        omega = 1 / omega  # global phase omega, then relative phase 1/omega
    pivot = diff[0]
    gates.append(cq.h(pivot))
    w = complex(np.round(omega.real)) + 1j * np.round(omega.imag)
    if w == 1j:
        gates.append(cq.s(pivot))
    elif w == -1j:
        gates.append(cq.sdg(pivot))
    elif w == -1:
        gates.append(cq.z_gate(pivot))
    elif w != 1:
        raise ValueError(f"relative phase {omega} is not a power of i")
    for q in diff[1:]:
        gates.append(cq.cx(pivot, q))
    gates += [cq.x_gate(q) for q in range(L) if ab[q] and q != pivot]
    return cq.Circuit(L, tuple(gates), f"sup{a}_{c}_{w}")


@dataclass
class _Setting:
    alpha: int
    outcome: int
    weight: float
    prep: cq.Circuit


@lru_cache(maxsize=4096)
def _conjugated(p: PauliString, V: cq.Circuit) -> tuple[int, PauliString]:
    return conjugate_by_clifford(p, V.gates)


@lru_cache(maxsize=65536)
def _depth(c: cq.Circuit) -> int:
    return c.depth()


def _settings(mubs: MubSet, m: PauliString, n: PauliString, gamma: float) -> list[_Setting]:
    """Physical inputs ``Q^dagger |phi>`` normalized, with their squared norms.

    ``Q = P_m + e^{i gamma} P_n``; for ``m == n`` the input is ``P_m |phi>``.
    """
    L = mubs.num_qubits
    out = []
    diag = m == n
    rot = complex(np.round(np.cos(gamma))) - 1j * np.round(np.sin(gamma))  # e^{-i gamma}
    for alpha, V in enumerate(mubs.circuits):
        km, pm = _conjugated(m, V)
        kn, pn = _conjugated(n, V)
        for i in range(2**L):
            A, a = _apply_pauli(pm, km, i)
            if diag:
                out.append(_Setting(alpha, i, 1.0, superposition_circuit(a, a, 1, L)))
                continue
            B, c = _apply_pauli(pn, kn, i)
            B = B * rot
            if a == c:
                w = abs(A + B) ** 2
                if w < 1e-12:
                    continue
                out.append(_Setting(alpha, i, w, superposition_circuit(a, a, 1, L)))
            else:
                out.append(_Setting(alpha, i, 2.0, superposition_circuit(a, c, B / A, L)))
    return out


CSV_FIELDS = ["m", "n", "re", "im", "sigma", "settings", "max_prep_depth", "flagged"]


@dataclass
class ElementEstimate:
    m: int
    n: int
    value: complex
    sigma: float
    settings: int
    max_prep_depth: int
    flagged: bool = False

    def row(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "re": self.value.real,
            "im": self.value.imag,
            "sigma": self.sigma,
            "settings": self.settings,
            "max_prep_depth": self.max_prep_depth,
            "flagged": int(self.flagged),
        }


@lru_cache(maxsize=64)
def _inverse(V: cq.Circuit) -> cq.Circuit:
    return V.inverse()


def _survival(executor, s: _Setting, mubs: MubSet, process, shots: int, setting: int, label: str) -> tuple[float, float]:
    V = mubs.circuits[s.alpha]
    prep = (s.prep, V) if V.gates else s.prep
    meas = _inverse(V) if V.gates else None
    if shots == 0:
        return float(executor.probabilities(prep, process, meas)[s.outcome]), 0.0
    counts = executor.run(prep, process, meas, shots, setting=setting, label=label)
    p = counts.get(chn.bitstring(s.outcome, mubs.num_qubits), 0) / shots
    return p, p * (1 - p) / shots


def sqpt_element(executor: chn.Executor, process, m: int, n: int, mubs: MubSet, shots: int = 1024, label: str = "sqpt") -> ElementEstimate:
    """Estimate one entry ``chi_mn`` and its statistical standard deviation."""
    L = mubs.num_qubits
    D = mubs.dim
    N = D * D
    if not (0 <= m < N and 0 <= n < N):
        raise IndexError(f"element ({m}, {n}) out of range for {L} qubits")
    pm, pn = PauliString.from_index(m, L), PauliString.from_index(n, L)
    norm = 1.0 / (D * (D + 1))
    gammas = (0.0,) if m == n else GAMMAS
    F, var = [], []
    count, depth = 0, 0
    for gi, gamma in enumerate(gammas):
        total, v = 0.0, 0.0
        for j, s in enumerate(_settings(mubs, pm, pn, gamma)):
            idx = ((m * N + n) * 4 + gi) * 4096 + j
            p, pv = _survival(executor, s, mubs, process, shots, idx, label)
            total += s.weight * p
            v += s.weight**2 * pv
            count += 1
            depth = max(depth, _depth(s.prep) + _depth(mubs.circuits[s.alpha]))
        F.append(total * norm)
        var.append(v * norm**2)
    if m == n:
        G = complex(F[0])
        sig_re, sig_im = math.sqrt(var[0]), 0.0
    else:
        G = complex(recombination_weights() @ np.array(F))
        sig_re = math.sqrt(var[0] + var[1]) / 4
        sig_im = math.sqrt(var[2] + var[3]) / 4
    value = ((D + 1) * G - (1 if m == n else 0)) / D
    sigma = (D + 1) / D * math.hypot(sig_re, sig_im)
    flagged = abs(value) > 1 + 5 * sigma
    if flagged:
        log.warning("element (%d, %d) has modulus %.3f beyond physical range", m, n, abs(value))
    return ElementEstimate(m, n, complex(value), sigma, count, depth, flagged)


def select_top_k(chi_ideal: np.ndarray, k: int) -> list[tuple[int, int]]:
    """The ``k`` largest off-diagonal ideal entries, as pairs with ``m < n``."""
    chi_ideal = np.asarray(chi_ideal)
    N = chi_ideal.shape[0]
    if k < 0:
        raise ValueError("k must be non-negative")
    iu = np.triu_indices(N, 1)
    mags = np.abs(chi_ideal[iu])
    order = np.argsort(-mags, kind="stable")[:k]
    return [(int(iu[0][o]), int(iu[1][o])) for o in order]


def assemble_sparse_chi(diag, offdiag, L: int, atol: float = 1e-9) -> np.ndarray:
    """Hermitian ``chi`` from a diagonal and off-diagonal entries.

    ``offdiag`` holds ``(m, n, value)`` triples; missing conjugate partners
    are filled in, supplied ones must agree.
    """
    N = 4**L
    diag = np.asarray(diag)
    if diag.shape != (N,):
        raise ValueError(f"diagonal must have length {N}")
    chi = np.diag(diag.astype(complex))
    seen = {}
    for m, n, v in offdiag:
        if m == n:
            raise ValueError("off-diagonal list contains a diagonal entry")
        seen[(m, n)] = complex(v)
    for (m, n), v in seen.items():
        partner = seen.get((n, m))
        if partner is not None and abs(partner - np.conj(v)) > atol:
            raise ValueError(f"entries ({m}, {n}) and ({n}, {m}) are not complex conjugates")
        chi[m, n] = v
        chi[n, m] = np.conj(v)
    return chi


@dataclass
class TwirlResult:
    """Diagonal of ``chi`` with the Pauli-channel eigenvalues behind it."""

    num_qubits: int
    eigenvalues: np.ndarray
    chi_diag: np.ndarray
    sigma: np.ndarray
    settings: int = 0
    metadata: dict = field(default_factory=dict)


def pauli_circuit(p: PauliString) -> cq.Circuit:
    gates = []
    for q in range(p.num_qubits):
        letter = p.letter(q)
        if letter == "X":
            gates.append(cq.x_gate(q))
        elif letter == "Y":
            gates.append(cq.y_gate(q))
        elif letter == "Z":
            gates.append(cq.z_gate(q))
    return cq.Circuit(p.num_qubits, tuple(gates), "pauli_" + p.label)


_EIG_PREP = {"X": "+", "Y": "+i", "Z": "0"}


def twirl_diagonal(executor: chn.Executor, process, L: int, shots: int = 1024, label: str = "twirl") -> TwirlResult:
    """Pauli-twirl the channel and read off every diagonal ``chi`` entry.

    For each of the 3^L product bases the +1 eigenstate is prepared, the
    channel is conjugated by every Pauli string, and all Paulis diagonal in
    that basis are measured. ``c_a`` averages the twirled expectations, and
    ``chi_diag = s c / 4^L`` with the commutation sign matrix ``s``.
    """
    _check_width(L)
    paulis = all_paulis(L)
    N = len(paulis)
    bases = ["".join(b) for b in itertools.product("XYZ", repeat=L)]
    base_of = {b: j for j, b in enumerate(bases)}
    twirls = [pauli_circuit(p) for p in paulis]
    stages = process if isinstance(process, (tuple, list)) else (process,)
    sums = np.zeros((len(bases), N))
    sq = np.zeros((len(bases), N))
    masks = [chn.parity_signs(p.x_bits | p.z_bits, L) for p in paulis]
    settings = 0
    for j, b in enumerate(bases):
        prep = chn.prep_circuit([_EIG_PREP[ch] for ch in b])
        meas = chn.basis_change_circuit(b)
        for mi, tw in enumerate(twirls):
            proc = (tw,) + tuple(stages) + (tw,) if tw.gates else tuple(stages)
            if shots == 0:
                probs = executor.probabilities(prep, proc, meas)
            else:
                counts = executor.run(prep, proc, meas, shots, setting=j * N + mi, label=label)
                probs = chn.counts_to_probabilities(counts, L)
            vals = np.array([s @ probs for s in masks])
            sums[j] += vals
            sq[j] += vals**2
            settings += 1
    c = np.zeros(N)
    var_c = np.zeros(N)
    for a, p in enumerate(paulis):
        if p.is_identity():
            c[a] = 1.0
            continue
        j = base_of["".join("Z" if ch == "I" else ch for ch in p.label)]
        c[a] = sums[j, a] / N
        if shots:
            # each term is a sample mean of +-1 outcomes
            terms_var = np.clip(1 - sq[j, a] / N, 0, None) / shots
            var_c[a] = terms_var / N
    s = sign_matrix(L)
    chi_diag = s @ c / N
    sigma = np.sqrt((s**2) @ var_c) / N
    return TwirlResult(L, c, chi_diag, sigma, settings, {"label": label, "shots": shots})


@dataclass
class SqptRun:
    """Sparse reconstruction: twirled diagonal plus top-K off-diagonal entries."""

    num_qubits: int
    chi: np.ndarray
    elements: list
    twirl: TwirlResult | None

    @property
    def settings(self) -> int:
        return sum(e.settings for e in self.elements) + (self.twirl.settings if self.twirl else 0)

    def write_csv(self, path) -> None:
        rows = [e.row() for e in self.elements]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            writer.writerows(rows)


def run_sqpt(executor: chn.Executor, process, chi_ideal: np.ndarray, k: int, shots: int = 1024, diagonal: str = "twirl", label: str = "sqpt") -> SqptRun:
    """Twirl for the diagonal, then selectively estimate the ``k`` largest ideal off-diagonals.

    ``diagonal="sqpt"`` estimates diagonal entries one by one instead.
    """
    N = np.asarray(chi_ideal).shape[0]
    L = int(round(math.log(N, 4)))
    _check_width(L)
    mubs = build_mubs(L)
    pairs = select_top_k(chi_ideal, k)
    elements = [sqpt_element(executor, process, m, n, mubs, shots, label) for m, n in pairs]
    if diagonal == "twirl":
        tw = twirl_diagonal(executor, process, L, shots, label + "_twirl")
        diag = tw.chi_diag
    elif diagonal == "sqpt":
        tw = None
        ds = [sqpt_element(executor, process, m, m, mubs, shots, label) for m in range(N)]
        elements = ds + elements
        diag = np.array([e.value.real for e in ds])
    else:
        raise ValueError(f"unknown diagonal mode {diagonal!r}")
    chi = assemble_sparse_chi(diag, [(e.m, e.n, e.value) for e in elements if e.m != e.n], L)
    return SqptRun(L, chi, elements, tw)


def full_qpt_settings(L: int) -> int:
    return 4**L * 3**L


def overhead_summary(run: SqptRun) -> dict:
    L = run.num_qubits
    depths = [e.max_prep_depth for e in run.elements]
    return {
        "sqpt_settings": run.settings,
        "full_qpt_settings": full_qpt_settings(L),
        "elements": len(run.elements),
        "max_prep_depth": max(depths) if depths else 0,
    }


def element_table(elements) -> list[dict]:
    return [asdict(e) | {"value": [e.value.real, e.value.imag]} for e in elements]
