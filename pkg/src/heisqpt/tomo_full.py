"""Standard process tomography over the Pauli basis.

The process matrix ``chi`` is defined by ``Lambda(rho) = sum_mn chi_mn P_m
rho P_n`` and is normalized to unit trace for a trace-preserving channel, so a
unitary has a rank-one ``chi`` with trace 1.

Reconstruction goes through the Pauli transfer matrix ``R_kl = Tr(P_k
Lambda(P_l)) / D`` assembled from product preparations {0, 1, +, +i} and
Pauli-basis measurements; ``chi`` then follows by a fixed change of basis.
The textbook route that inverts the ``kappa`` tensor directly is kept as an
oracle for small registers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import channel as chn
from . import circuit as cq
from .linalg import eig_general, solve
from .pauli import all_paulis, pauli_matrices, phase_value, triple_product

MAX_QUBITS = 4

# rows: Paulis I, X, Y, Z; columns: preparations 0, 1, +, +i
_FRAME = np.array(
    [
        [1, 1, 0, 0],
        [-1, -1, 2, 0],
        [-1, -1, 0, 2],
        [1, -1, 0, 0],
    ],
    dtype=float,
)


def _check_width(L: int) -> None:
    if not 1 <= L <= MAX_QUBITS:
        raise ValueError(f"process tomography supports 1..{MAX_QUBITS} qubits, got {L}")


def prep_labels(L: int) -> list[tuple[str, ...]]:
    """All product preparations, qubit 0 most significant."""
    return list(itertools.product(chn.PREP_LABELS, repeat=L))


def measurement_bases(L: int) -> list[str]:
    return ["".join(b) for b in itertools.product("XYZ", repeat=L)]


def canonical_basis(label: str) -> str:
    """Measurement basis used to estimate a Pauli: identity letters read in Z."""
    return "".join("Z" if ch == "I" else ch for ch in label)


@dataclass
class TomoData:
    """Pauli expectations ``d[i, k] = Tr(P_k Lambda(rho_i))`` per preparation."""

    num_qubits: int
    expectations: np.ndarray
    shots: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_width(self.num_qubits)
        N = 4**self.num_qubits
        self.expectations = np.asarray(self.expectations, dtype=float)
        if self.expectations.shape != (N, N):
            raise ValueError(f"expectations must have shape {(N, N)}, got {self.expectations.shape}")
        if np.abs(self.expectations).max() > 1 + 1e-9:
            raise ValueError("Pauli expectations must lie in [-1, 1]")

    @property
    def num_settings(self) -> int:
        return 4**self.num_qubits * 3**self.num_qubits


def _process_stages(process):
    return process if isinstance(process, (tuple, list)) else (process,)


def run_full_qpt(executor: chn.Executor, process, L: int, shots: int = 1024, label: str = "qpt") -> TomoData:
    """Collect expectations for all 4^L x 3^L preparation/measurement settings.

    ``shots=0`` uses exact outcome probabilities.
    """
    _check_width(L)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    preps = prep_labels(L)
    bases = measurement_bases(L)
    base_index = {b: j for j, b in enumerate(bases)}
    paulis = all_paulis(L)
    signs = [chn.parity_signs(p.x_bits | p.z_bits, L) for p in paulis]
    use = [base_index[canonical_basis(p.label)] if not p.is_identity() else None for p in paulis]
    meas = [chn.basis_change_circuit(b) for b in bases]
    d = np.zeros((len(preps), len(paulis)))
    for i, labels in enumerate(preps):
        pc = chn.prep_circuit(labels)
        probs = []
        for j, m in enumerate(meas):
            try:
                if shots == 0:
                    probs.append(executor.probabilities(pc, process, m))
                else:
                    counts = executor.run(pc, process, m, shots, setting=i * len(bases) + j, label=label)
                    probs.append(chn.counts_to_probabilities(counts, L))
            except Exception as exc:
                raise RuntimeError(
                    f"QPT setting {i * len(bases) + j} (prep {''.join(labels)}, basis {bases[j]}) failed: {exc}"
                ) from exc
        for k, p in enumerate(paulis):
            d[i, k] = 1.0 if use[k] is None else signs[k] @ probs[use[k]]
    return TomoData(L, d, shots, {"label": label, "settings": len(preps) * len(bases)})


def _pauli_vec(L: int) -> np.ndarray:
    """Columns are column-stacked Pauli matrices."""
    P = pauli_matrices(L)
    return np.swapaxes(P, 1, 2).reshape(len(P), -1).T


def _frame(L: int) -> np.ndarray:
    F = np.ones((1, 1))
    for _ in range(L):
        F = np.kron(F, _FRAME)
    return F


def transfer_matrix(data: TomoData) -> np.ndarray:
    """Pauli transfer matrix ``R_kl`` from preparation/measurement data."""
    L = data.num_qubits
    D = 2**L
    return (_frame(L) @ data.expectations).T / D


def superoperator_from_ptm(R: np.ndarray) -> np.ndarray:
    L = int(round(math.log(R.shape[0], 4)))
    V = _pauli_vec(L)
    return V @ R @ V.conj().T / 2**L


def ptm_from_superoperator(S: np.ndarray) -> np.ndarray:
    L = int(round(math.log(S.shape[0], 4)))
    V = _pauli_vec(L)
    return np.real_if_close(V.conj().T @ S @ V / 2**L)


def reconstruct_superoperator(data: TomoData) -> np.ndarray:
    """Column-stacked superoperator estimated from tomography data."""
    return superoperator_from_ptm(transfer_matrix(data))


def _reshuffle(M: np.ndarray) -> np.ndarray:
    # involution mapping sum chi_mn P_n^T kron P_m <-> sum chi_mn |P_m>><<P_n|
    D = int(round(math.sqrt(M.shape[0])))
    return M.reshape(D, D, D, D).transpose(3, 1, 2, 0).reshape(D * D, D * D)


def chi_from_superoperator(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=complex)
    L = int(round(math.log(S.shape[0], 4)))
    if S.shape != (4**L, 4**L):
        raise ValueError("superoperator must be 4^L x 4^L")
    V = _pauli_vec(L)
    return V.conj().T @ _reshuffle(S) @ V / 4**L


def superoperator_from_chi(chi: np.ndarray) -> np.ndarray:
    chi = np.asarray(chi, dtype=complex)
    L = int(round(math.log(chi.shape[0], 4)))
    if chi.shape != (4**L, 4**L):
        raise ValueError("chi must be 4^L x 4^L")
    V = _pauli_vec(L)
    return _reshuffle(V @ chi @ V.conj().T)


def chi_from_unitary(u: np.ndarray) -> np.ndarray:
    """Ideal rank-one process matrix of a unitary."""
    u = np.asarray(u, dtype=complex)
    D = u.shape[0]
    L = int(round(math.log2(D)))
    # u = sum_m c_m P_m with c_m = Tr(P_m u) / D
    c = np.einsum("mij,ji->m", pauli_matrices(L), u) / D
    return np.outer(c, c.conj())


def chi_from_kraus(kraus: chn.KrausSet) -> np.ndarray:
    D = kraus.dim
    L = int(round(math.log2(D)))
    P = pauli_matrices(L)
    chi = 0
    for K in kraus.operators:
        c = np.einsum("mij,ji->m", P, K) / D
        chi = chi + np.outer(c, c.conj())
    return chi


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    L = int(round(math.log(chi.shape[0], 4)))
    P = pauli_matrices(L)
    return np.einsum("mn,mij,jk,nkl->il", chi, P, rho, P)


# kappa oracle


def kappa_tensor(L: int) -> np.ndarray:
    """``K[k, l, m, n] = kappa`` with ``P_m P_l P_n = sum_k kappa P_k``."""
    if L > 2:
        raise ValueError("the dense kappa tensor is only built for L <= 2")
    ps = all_paulis(L)
    N = len(ps)
    K = np.zeros((N, N, N, N), dtype=complex)
    for m, l, n in itertools.product(range(N), repeat=3):
        ph, out = triple_product(ps[m], ps[l], ps[n])
        K[out.index, l, m, n] = phase_value(ph)
    return K


def reconstruct_chi_kappa(data: TomoData) -> np.ndarray:
    """Reference reconstruction by solving ``d = A vec(chi)`` directly."""
    L = data.num_qubits
    D, N = 2**L, 4**L
    P = pauli_matrices(L)
    rhos = [chn.prepare_product(labels) for labels in prep_labels(L)]
    # c[i, l] = Tr(P_l rho_i) / D
    c = np.array([np.real(np.einsum("lab,ba->l", P, r)) / D for r in rhos])
    K = kappa_tensor(L)
    # Tr(P_k P_m rho_i P_n) = D sum_l c_il kappa[k, l, m, n]
    A = D * np.einsum("il,klmn->ikmn", c, K).reshape(N * N, N * N)
    x = solve(A, data.expectations.reshape(-1).astype(complex))
    return x.reshape(N, N)


# figures of merit and diagnostics


def process_fidelity(chi_ideal: np.ndarray, chi_exp: np.ndarray) -> float:
    """``Re Tr(chi_ideal^dagger chi_exp)`` for trace-normalized process matrices."""
    chi_ideal = np.asarray(chi_ideal)
    chi_exp = np.asarray(chi_exp)
    if chi_ideal.shape != chi_exp.shape:
        raise ValueError(f"shape mismatch {chi_ideal.shape} vs {chi_exp.shape}")
    return float(np.real(np.vdot(chi_ideal, chi_exp)))


def mask_to_ideal_support(chi_exp: np.ndarray, chi_ideal: np.ndarray, threshold: float = 1e-10) -> np.ndarray:
    """Zero every entry where the ideal process matrix is at most ``threshold``."""
    keep = np.abs(chi_ideal) > threshold
    return np.where(keep, chi_exp, 0)


def lambda_spectrum(superop: np.ndarray) -> np.ndarray:
    return eig_general(superop)


@dataclass
class SpectralStats:
    mean_modulus: float
    second_moment: float
    raw_second_moment: float
    histogram: np.ndarray
    bin_edges: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mean_modulus": self.mean_modulus,
            "second_moment": self.second_moment,
            "raw_second_moment": self.raw_second_moment,
            "histogram": self.histogram.tolist(),
            "bin_edges": self.bin_edges.tolist(),
        }


def spectral_stats(spectrum, bin_width: float = 0.05, upper: float = 1.2) -> SpectralStats:
    """Modulus statistics; ``second_moment`` is the variance of ``|lambda|``."""
    r = np.abs(np.asarray(spectrum))
    # widen the range so unphysical moduli stay in the histogram
    top = max(upper, float(r.max(initial=0.0)))
    edges = np.arange(0.0, top + bin_width, bin_width)
    edges = edges[: np.searchsorted(edges, top, side="left") + 1]
    hist, edges = np.histogram(r, bins=edges)
    return SpectralStats(float(r.mean()), float(r.var()), float(np.mean(r**2)), hist, edges)


def ideal_angles(u: np.ndarray, decimals: int = 8) -> np.ndarray:
    """Distinct eigenphases of the ideal superoperator ``conj(U) kron U``."""
    w = np.linalg.eigvals(np.asarray(u))
    phases = np.angle(np.outer(np.conj(w), w)).ravel()
    return np.unique(np.round(phases, decimals))


def hermiticity_deviation(chi: np.ndarray) -> float:
    return float(np.linalg.norm(chi - chi.conj().T))


def tp_deviation(chi: np.ndarray) -> float:
    """``|| sum_mn chi_mn P_n P_m - I ||`` (zero for trace preserving maps)."""
    L = int(round(math.log(chi.shape[0], 4)))
    P = pauli_matrices(L)
    s = np.einsum("mn,nij,mjk->ik", chi, P, P)
    return float(np.linalg.norm(s - np.eye(2**L)))


class ProcessTomography(BaseEstimator):
    """Estimator wrapper: ``fit`` on TomoData, ``predict`` maps states.

    method: "ptm" (transfer-matrix inversion) or "kappa" (direct linear
    solve, L <= 2 only). With ``symmetrize`` the Hermitian part of chi is
    kept; the deviation before symmetrization is stored as
    ``hermiticity_deviation_``.
    """

    def __init__(self, method: str = "ptm", symmetrize: bool = True):
        self.method = method
        self.symmetrize = symmetrize

    def fit(self, data: TomoData, y=None):
        if not isinstance(data, TomoData):
            raise TypeError("fit expects a TomoData instance")
        if self.method == "ptm":
            self.superoperator_ = reconstruct_superoperator(data)
            self.chi_ = chi_from_superoperator(self.superoperator_)
        elif self.method == "kappa":
            self.chi_ = reconstruct_chi_kappa(data)
            self.superoperator_ = superoperator_from_chi(self.chi_)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.num_qubits_ = data.num_qubits
        self.hermiticity_deviation_ = hermiticity_deviation(self.chi_)
        if self.symmetrize:
            self.chi_ = (self.chi_ + self.chi_.conj().T) / 2
            self.superoperator_ = superoperator_from_chi(self.chi_)
        self.tp_deviation_ = tp_deviation(self.chi_)
        return self

    def predict(self, X) -> np.ndarray:
        """Apply the reconstructed channel to one density matrix or a batch."""
        X = np.asarray(X, dtype=complex)
        single = X.ndim == 2
        batch = X[None] if single else X
        D = 2**self.num_qubits_
        if batch.shape[1:] != (D, D):
            raise ValueError(f"states must be {D}x{D}")
        out = chn.unvec(chn._vec_batch(batch) @ self.superoperator_.T)
        return out[0] if single else out

    def score(self, chi_ideal, y=None) -> float:
        """Process fidelity with respect to ``chi_ideal``."""
        return process_fidelity(chi_ideal, self.chi_)

    def spectrum(self) -> np.ndarray:
        return lambda_spectrum(self.superoperator_)


def ideal_chi_for_circuit(c: cq.Circuit) -> np.ndarray:
    return chi_from_unitary(cq.unitary(c))
