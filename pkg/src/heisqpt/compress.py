"""Variational compression of Heisenberg time evolution into a brickwall circuit."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import circuit as cq
from .linalg import dagger, embed, expm_hermitian, is_unitary

_PAULI2 = (cq.XX, cq.YY, cq.ZZ)


def heisenberg_hamiltonian(L: int, bc: str) -> np.ndarray:
    """Sum over bonds of S_i . S_j with S = sigma / 2."""
    D = 2**L
    H = np.zeros((D, D), dtype=complex)
    for i, j in cq.bonds(L, bc):
        for P in _PAULI2:
            H += 0.25 * embed(P, (i, j), L)
    return H


def exact_propagator(L: int, bc: str, t: float) -> np.ndarray:
    if L > cq.MAX_DENSE_QUBITS:
        raise ValueError(f"exact propagator limited to {cq.MAX_DENSE_QUBITS} qubits")
    return expm_hermitian(heisenberg_hamiltonian(L, bc), t)


def epsilon(u_exact, u_circ) -> float:
    """Approximation error ``1 - Re Tr(U_E^dagger U_C) / 2**L`` (phase sensitive)."""
    u_exact = np.asarray(u_exact)
    u_circ = np.asarray(u_circ)
    if u_exact.shape != u_circ.shape:
        raise ValueError(f"dimension mismatch {u_exact.shape} vs {u_circ.shape}")
    return float(1.0 - np.real(np.vdot(u_exact, u_circ)) / u_exact.shape[0])


@dataclass
class CompressionProblem:
    L: int
    bc: str
    t: float
    n_layers: int
    u_exact: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.u_exact is None:
            self.u_exact = exact_propagator(self.L, self.bc, self.t)
        if not is_unitary(self.u_exact, atol=1e-10):
            raise ValueError("target propagator is not unitary")
        self._engine = _BrickwallEngine(self.L, self.n_layers)

    @property
    def num_params(self) -> int:
        """Brickwall angles plus one global phase."""
        return cq.brickwall_param_count(self.L, self.n_layers) + 1

    def split(self, params) -> tuple[np.ndarray, float]:
        params = np.asarray(params, dtype=float)
        if params.size != self.num_params:
            raise ValueError(f"expected {self.num_params} parameters, got {params.size}")
        return params[:-1], float(params[-1])

    def circuit_unitary(self, params) -> np.ndarray:
        theta, phase = self.split(params)
        return np.exp(1j * phase) * self._engine.unitary(theta)

    def cost(self, params) -> float:
        return epsilon(self.u_exact, self.circuit_unitary(params))

    def cost_and_gradient(self, params) -> tuple[float, np.ndarray]:
        theta, phase = self.split(params)
        return self._engine.cost_and_gradient(self.u_exact, theta, phase)

    def to_dict(self) -> dict:
        return {"L": self.L, "bc": self.bc, "t": self.t, "n_layers": self.n_layers}


def gradient(problem: CompressionProblem, params, free=None) -> np.ndarray:
    """Derivative of the error with respect to the parameters.

    ``free`` (boolean mask or index array) keeps only the unfrozen entries.
    """
    g = problem.cost_and_gradient(params)[1]
    return g if free is None else g[np.asarray(free)]


class _BrickwallEngine:
    """Dense forward/reverse sweep over the brickwall's primitive gates.

    Prefix products are cached on the way forward; the backward sweep carries
    ``A G_{N-1} ... G_{k+1}`` so every gate's derivative needs one D x D
    product and a partial trace down to the gate's own qubits.
    """

    def __init__(self, L: int, n_layers: int):
        self.L = L
        self.D = 2**L
        self.n_layers = n_layers
        self.n_theta = cq.brickwall_param_count(L, n_layers)
        # (kind, first qubit, offset into theta)
        self.elements: list[tuple[str, int, int]] = []
        k = 0
        for i, _ in cq.brickwall_layout(L, n_layers):
            self.elements += [("u", i, k), ("u", i + 1, k + 3), ("c", i, k + 6), ("u", i, k + 9)]
            k += cq.PARAMS_PER_GATE
        for q in range(L):
            self.elements.append(("u", q, k))
            k += 3

    def _dims(self, kind: str, q: int) -> tuple[int, int, int]:
        w = 1 if kind == "u" else 2
        return 2**q, 2**w, 2 ** (self.L - q - w)

    @staticmethod
    def _local(kind: str, p) -> np.ndarray:
        return cq.u_matrix(*p) if kind == "u" else cq.canonical_matrix(*p)

    @staticmethod
    def _derivs(kind: str, p, g: np.ndarray) -> np.ndarray:
        if kind == "u":
            m1, m2, m3 = p
            c, s = np.cos(m1), np.sin(m1)
            e2, e3 = np.exp(1j * m2), np.exp(1j * m3)
            return np.array(
                [
                    [[-e2 * s, e3 * c], [-c / e3, -s / e2]],
                    [[1j * e2 * c, 0], [0, -1j * c / e2]],
                    [[0, 1j * e3 * s], [1j * s / e3, 0]],
                ]
            )
        return np.array([-1j * P @ g for P in _PAULI2])

    def _left(self, g, u, dims) -> np.ndarray:
        dl, dg, dr = dims
        return np.matmul(g, u.reshape(dl, dg, dr * self.D)).reshape(self.D, self.D)

    def _right(self, r, g, dims) -> np.ndarray:
        dl, dg, dr = dims
        return np.matmul(g.T, r.reshape(self.D * dl, dg, dr)).reshape(self.D, self.D)

    def unitary(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        u = np.eye(self.D, dtype=complex)
        for kind, q, off in self.elements:
            u = self._left(self._local(kind, theta[off : off + 3]), u, self._dims(kind, q))
        return u

    def cost_and_gradient(self, u_exact, theta, phase) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_theta:
            raise ValueError(f"expected {self.n_theta} angles, got {theta.size}")
        locals_, prefixes = [], []
        u = np.eye(self.D, dtype=complex)
        for kind, q, off in self.elements:
            g = self._local(kind, theta[off : off + 3])
            dims = self._dims(kind, q)
            prefixes.append(u)
            locals_.append((g, dims))
            u = self._left(g, u, dims)
        overlap = np.vdot(u_exact, u)  # Tr(U_E^dagger U_C)
        ph = np.exp(1j * phase)
        cost = 1.0 - np.real(ph * overlap) / self.D
        grad = np.zeros(self.n_theta + 1)
        grad[-1] = np.imag(ph * overlap) / self.D
        R = ph * dagger(u_exact)
        for k in range(len(self.elements) - 1, -1, -1):
            kind, q, off = self.elements[k]
            g, dims = locals_[k]
            dl, dg, dr = dims
            M = (prefixes[k] @ R).reshape(dl, dg, dr, dl, dg, dr)
            env = np.einsum("ibjiaj->ab", M)  # env[a, b] = reduced M[b, a]
            dgs = self._derivs(kind, theta[off : off + 3], g)
            grad[off : off + 3] = -np.real((dgs * env).sum(axis=(1, 2))) / self.D
            R = self._right(R, g, dims)
        return float(cost), grad


@dataclass
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8
    max_iters: int = 5000
    restarts: int = 8
    seed: int = 0
    target_eps: float = 0.0
    trotter_init: bool = True

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0 or self.max_iters < 0 or self.restarts < 1:
            raise ValueError("invalid ADAM configuration")


@dataclass
class OptimizationTrace:
    histories: list[np.ndarray]
    best_params: np.ndarray
    best_eps: float
    best_restart: int
    wall_time: float

    @property
    def best_theta(self) -> np.ndarray:
        return self.best_params[:-1]

    @property
    def best_phase(self) -> float:
        return float(self.best_params[-1])

    @property
    def best_history(self) -> np.ndarray:
        return self.histories[self.best_restart]


def _adam_run(problem, x0, cfg: AdamConfig) -> tuple[np.ndarray, float, np.ndarray]:
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history = []
    best_x, best_f = x.copy(), np.inf
    for it in range(1, cfg.max_iters + 1):
        f, g = problem.cost_and_gradient(x)
        history.append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if f <= cfg.target_eps:
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        x -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.epsilon_hat)
    else:
        f = problem.cost(x)
        if f < best_f:
            best_f, best_x = f, x.copy()
    if cfg.max_iters == 0:
        best_f = problem.cost(x)
    return best_x, float(best_f), np.asarray(history)


def adam_optimize(problem: CompressionProblem, config: AdamConfig | None = None) -> OptimizationTrace:
    """Best-of-restarts ADAM minimization of the approximation error."""
    cfg = config or AdamConfig()
    rng = np.random.default_rng(cfg.seed)
    n_theta = problem.num_params - 1
    start = time.perf_counter()
    histories, best = [], (None, np.inf, -1)
    for r in range(cfg.restarts):
        if r == 0 and cfg.trotter_init:
            x0 = np.append(cq.trotter_equivalent_theta(problem.L, problem.n_layers, problem.t), 0.0)
        else:
            x0 = rng.uniform(-np.pi, np.pi, size=n_theta + 1)
        x, f, hist = _adam_run(problem, x0, cfg)
        histories.append(hist)
        if f < best[1]:
            best = (x, f, r)
        if f <= cfg.target_eps:
            break
    return OptimizationTrace(histories, best[0], best[1], best[2], time.perf_counter() - start)


class BrickwallCompressor(BaseEstimator):
    """Fit brickwall angles so the circuit approximates a target unitary.

    ``fit`` takes the target propagator (a ``2**L`` square unitary) and stores
    ``theta_``, ``phase_``, ``eps_`` and ``trace_``. ``predict`` returns the
    fitted circuit unitary including the global phase.
    """

    def __init__(
        self,
        n_layers: int = 2,
        learning_rate: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon_hat: float = 1e-8,
        max_iters: int = 5000,
        restarts: int = 8,
        seed: int = 0,
        target_eps: float = 0.0,
        trotter_init: bool = True,
        t: float = 1.0,
    ):
        self.n_layers = n_layers
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon_hat = epsilon_hat
        self.max_iters = max_iters
        self.restarts = restarts
        self.seed = seed
        self.target_eps = target_eps
        self.trotter_init = trotter_init
        self.t = t

    def _config(self) -> AdamConfig:
        return AdamConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon_hat=self.epsilon_hat,
            max_iters=self.max_iters,
            restarts=self.restarts,
            seed=self.seed,
            target_eps=self.target_eps,
            trotter_init=self.trotter_init,
        )

    def fit(self, X, y=None, bc: str = "open"):
        X = _check_target(X)
        L = int(np.log2(X.shape[0]))
        problem = CompressionProblem(L, bc, self.t, self.n_layers, X)
        self.trace_ = adam_optimize(problem, self._config())
        self.n_qubits_ = L
        self.theta_ = self.trace_.best_theta
        self.phase_ = self.trace_.best_phase
        self.eps_ = self.trace_.best_eps
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "theta_")
        u = np.exp(1j * self.phase_) * cq.unitary(self.to_circuit())
        return u

    def score(self, X, y=None) -> float:
        """Negative approximation error against ``X`` (higher is better)."""
        return -epsilon(_check_target(X), self.predict())

    def to_circuit(self) -> cq.Circuit:
        check_is_fitted(self, "theta_")
        return cq.build_brickwall(self.n_qubits_, self.n_layers, self.theta_)


def _check_target(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"target must be a square matrix, got shape {X.shape}")
    L = int(round(np.log2(X.shape[0])))
    if 2**L != X.shape[0] or L < 2:
        raise ValueError("target dimension must be 2**L with L >= 2")
    if not is_unitary(X, atol=1e-8):
        raise ValueError("target must be unitary")
    return X


def save_result(path, problem: CompressionProblem, config: AdamConfig, trace: OptimizationTrace, extra=None) -> dict:
    payload = {
        "problem": problem.to_dict(),
        "config": asdict(config),
        "theta": trace.best_theta.tolist(),
        "phase": trace.best_phase,
        "eps": trace.best_eps,
        "best_restart": trace.best_restart,
        "trace": [h.tolist() for h in trace.histories],
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return payload


def load_result(path) -> tuple[CompressionProblem, np.ndarray, float]:
    """Reload ``(problem, theta, phase)`` written by :func:`save_result`."""
    with open(path) as fh:
        payload = json.load(fh)
    p = payload["problem"]
    problem = CompressionProblem(int(p["L"]), p["bc"], float(p["t"]), int(p["n_layers"]))
    return problem, np.asarray(payload["theta"], dtype=float), float(payload["phase"])
