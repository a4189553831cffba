"""Dense complex linear algebra used across the package.

Matrices are plain ``numpy`` arrays of ``complex128``. The heavy lifting is
delegated to LAPACK through numpy: ``eigh`` for Hermitian exponentials and
``eigvals`` (Hessenberg reduction followed by shifted QR) for general spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 4096


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    unitary: float = 1e-10
    solve_residual: float = 1e-8
    max_condition: float = 1e12
    trace_relative: float = 1e-8


TOL = Tolerances()


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, condition: float):
        super().__init__(f"matrix is singular to working tolerance (condition ~ {condition:.3e})")
        self.condition = condition


def as_matrix(a, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Validate and coerce to a 2-d complex array."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if max(arr.shape) > MAX_DIM:
        raise ValueError(f"{name} dimension {max(arr.shape)} exceeds {MAX_DIM}")
    return arr


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def kron(*mats) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant."""
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        m = as_matrix(m)
        if out.shape[0] * m.shape[0] > MAX_DIM or out.shape[1] * m.shape[1] > MAX_DIM:
            raise ValueError(f"Kronecker product exceeds dimension bound {MAX_DIM}")
        out = np.kron(out, m)
    return out


def is_hermitian(a: np.ndarray, atol: float = TOL.hermitian) -> bool:
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.allclose(a, dagger(a), atol=atol, rtol=0)


def is_unitary(u: np.ndarray, atol: float = TOL.unitary) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0])) <= atol


def expm_hermitian(h, scale: float = 1.0) -> np.ndarray:
    """``exp(-1j * scale * h)`` for Hermitian ``h`` via its eigendecomposition."""
    h = as_matrix(h, square=True, name="h")
    if not is_hermitian(h):
        raise ValueError("expm_hermitian requires a Hermitian matrix")
    w, v = np.linalg.eigh((h + dagger(h)) / 2)
    return (v * np.exp(-1j * scale * w)) @ dagger(v)


def eig_general(a) -> np.ndarray:
    """Eigenvalues of a general square complex matrix."""
    a = as_matrix(a, square=True, name="a")
    return np.linalg.eigvals(a)


def solve(a, b) -> np.ndarray:
    """Solve ``a x = b``, refusing near-singular systems."""
    a = as_matrix(a, square=True, name="a")
    b = np.asarray(b, dtype=complex)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > TOL.max_condition:
        raise SingularMatrixError(cond)
    x = np.linalg.solve(a, b)
    resid = np.linalg.norm(a @ x - b)
    if resid > TOL.solve_residual * max(np.linalg.norm(b), 1.0):
        raise SingularMatrixError(cond)
    return x


def matrix_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "re": a.real.ravel().tolist(),
        "im": a.imag.ravel().tolist(),
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise ValueError("matrix JSON payload does not match rows*cols")
    return (re + 1j * im).reshape(rows, cols)


def apply_local(mat: np.ndarray, local: np.ndarray, qubits, num_qubits: int) -> np.ndarray:
    """Left-multiply ``mat`` (2**L rows) by ``local`` acting on ``qubits``.

    ``qubits`` may be any distinct qubits; the first listed is the most
    significant factor of ``local``.
    """
    k = len(qubits)
    D = 2**num_qubits
    cols = mat.shape[1]
    t = mat.reshape((2,) * num_qubits + (cols,))
    g = local.reshape((2,) * (2 * k))
    t = np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(qubits)))
    # tensordot puts the gate's output axes first; move them back into place
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return t.reshape(D, cols)


def embed(local: np.ndarray, qubits, num_qubits: int) -> np.ndarray:
    """Full 2**L matrix of ``local`` acting on ``qubits``."""
    return apply_local(np.eye(2**num_qubits, dtype=complex), local, qubits, num_qubits)
