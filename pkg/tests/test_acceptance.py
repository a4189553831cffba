"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import itertools
import time

import numpy as np
import pytest

from heisqpt import channel as chn
from heisqpt import circuit as cq
from heisqpt import cli
from heisqpt import compress as cp
from heisqpt import tomo_full as tf
from heisqpt import tomo_selective as ts
from heisqpt.pauli import PauliString, sign_matrix, to_matrix

from conftest import random_kraus

SEEDS = range(5)


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return report


@pytest.fixture(scope="module")
def compressed_default():
    """L=3 open, 2 layers, t=1 with the default 8-restart ADAM, timed."""
    start = time.perf_counter()
    problem = cp.CompressionProblem(3, "open", 1.0, 2)
    trace = cp.adam_optimize(problem, cp.AdamConfig())
    return cq.build_brickwall(3, 2, trace.best_theta), trace.best_eps, time.perf_counter() - start


def exact_executor(L):
    return chn.SimulatedExecutor(L, chn.NoiseModel.noiseless())


def masked_spectrum(chi, chi_ideal):
    masked = tf.mask_to_ideal_support(chi, chi_ideal, cli.DEFAULTS["spectrum"]["mask_threshold"])
    return tf.lambda_spectrum(tf.superoperator_from_chi(masked))


def test_01_trotter_calibration(verdict):
    start = time.perf_counter()
    eps = cp.epsilon(cp.exact_propagator(3, "open", 1.0), cq.unitary(cq.build_trotter2(3, "open", 1.0, 2)))
    elapsed = time.perf_counter() - start
    ok = 0.75e-5 <= eps <= 3.0e-5 and elapsed < 1.0
    assert verdict(1, ok, f"eps(trotter2, L=3, n=2) = {eps:.3e} (band 7.5e-6..3e-5), {elapsed:.3f} s")


def test_02_compression_target(compressed_default, verdict):
    _, eps, elapsed = compressed_default
    ok = eps <= 1.0e-5 and elapsed < 120
    assert verdict(2, ok, f"best-of-8 ADAM eps = {eps:.4e} (target 1e-5), {elapsed:.1f} s")


def test_03_trotter_order_scaling(verdict):
    ue = cp.exact_propagator(3, "open", 1.0)
    ns = np.array([2, 4, 8, 16])
    slopes = {}
    for name, builder in (("trotter1", cq.build_trotter1), ("trotter2", cq.build_trotter2)):
        eps = [cp.epsilon(ue, cq.unitary(builder(3, "open", 1.0, int(n)))) for n in ns]
        slopes[name] = np.polyfit(np.log(1.0 / ns), np.log(eps), 1)[0]
    ok = abs(slopes["trotter1"] - 2) <= 0.1 and abs(slopes["trotter2"] - 4) <= 0.2
    assert verdict(3, ok, f"slopes {slopes['trotter1']:.3f} (2.0 +- 0.1), {slopes['trotter2']:.3f} (4.0 +- 0.2)")


def test_04_tomography_oracle_equivalence(verdict):
    rng = np.random.default_rng(40)
    worst, worst_kappa = 0.0, 0.0
    for L in (1, 2, 3):
        if L == 1:
            circuits = [cq.Circuit(1, (cq.u_gate(0, *rng.uniform(-np.pi, np.pi, 3)),)) for _ in range(2)]
        else:
            circuits = [cq.build_trotter2(L, "open", 0.9, 2),
                        cq.build_brickwall(L, 1, rng.uniform(-np.pi, np.pi, cq.brickwall_param_count(L, 1)))]
        for c in circuits:
            data = tf.run_full_qpt(exact_executor(L), c, L, shots=0)
            chi = tf.ProcessTomography().fit(data).chi_
            worst = max(worst, np.linalg.norm(chi - tf.chi_from_unitary(cq.unitary(c))))
            if L <= 2:
                worst_kappa = max(worst_kappa, np.linalg.norm(tf.reconstruct_chi_kappa(data) - chi))
    ok = worst <= 1e-9 and worst_kappa <= 1e-9
    assert verdict(4, ok, f"max ||chi - chi_analytic||_F = {worst:.2e}, max ||chi_kappa - chi||_F = {worst_kappa:.2e}")


def test_05_sqpt_correctness(verdict):
    rng = np.random.default_rng(50)
    exact_err, sigma_ratio, survival_err = 0.0, 0.0, 0.0
    for L in (2, 3):
        D = 2**L
        N = D * D
        # noisy trotter step as the process; preparation and readout ideal on both sides
        c = cq.build_trotter2(L, "open", 1.0, 1)
        process = chn.circuit_superoperator(c, chn.NoiseModel())
        chi_full = tf.ProcessTomography().fit(tf.run_full_qpt(exact_executor(L), process, L, shots=0)).chi_
        mubs = ts.build_mubs(L)
        pairs = [(m, m) for m in rng.integers(0, N, 4)] + ts.select_top_k(chi_full, 8)
        pairs += [tuple(p) for p in rng.integers(0, N, (8, 2))]
        pairs = list(dict.fromkeys((int(m), int(n)) for m, n in pairs))
        ex = chn.SimulatedExecutor(L, chn.NoiseModel.noiseless(seed=L))
        for m, n in pairs:
            exact = ts.sqpt_element(exact_executor(L), process, m, n, mubs, shots=0)
            exact_err = max(exact_err, abs(exact.value - chi_full[m, n]))
            e = ts.sqpt_element(ex, process, m, n, mubs, shots=1024)
            sigma_ratio = max(sigma_ratio, abs(e.value - chi_full[m, n]) / e.sigma)
        # survival formula on analytic channels, averaged over every MUB state
        ks = chn.KrausSet(random_kraus(D, rng))
        chi = tf.chi_from_kraus(ks)
        vs = [s[:, i] for s in mubs.states() for i in range(D)]
        P = [to_matrix(PauliString.from_index(k, L)) for k in range(N)]
        check = itertools.product(range(N), repeat=2) if L == 2 else [tuple(p) for p in rng.integers(0, N, (60, 2))]
        for m, n in check:
            F = np.mean([np.vdot(v, ks.apply(P[m] @ np.outer(v, v.conj()) @ P[n]) @ v) for v in vs])
            survival_err = max(survival_err, abs(F - (D * chi[m, n] + (m == n)) / (D + 1)))
    ok = exact_err <= 1e-9 and sigma_ratio <= 3 and survival_err <= 1e-9
    assert verdict(5, ok, f"exact err {exact_err:.2e}, max |dev|/sigma at 1024 shots {sigma_ratio:.2f}, "
                          f"survival formula err {survival_err:.2e}")


def test_06_twirling(verdict):
    p = 0.15
    cases = [
        ("identity", 2, cq.Circuit(2), np.eye(16)[0]),
        ("Z", 1, cq.Circuit(1, (cq.z_gate(0),)), np.eye(4)[3]),
        ("XY", 2, ts.pauli_circuit(PauliString.from_label("XY")), np.eye(16)[PauliString.from_label("XY").index]),
        ("depolarizing", 1, chn.depolarizing_kraus(p), np.array([1 - 3 * p / 4, p / 4, p / 4, p / 4])),
        ("depolarizing2", 2, chn.depolarizing_kraus(p, 2), np.r_[1 - 15 * p / 16, np.full(15, p / 16)]),
    ]
    exact_err, sigma_ratio = 0.0, 0.0
    for k, (_, L, process, expected) in enumerate(cases):
        exact_err = max(exact_err, np.abs(ts.twirl_diagonal(exact_executor(L), process, L, shots=0).chi_diag
                                          - expected).max())
        tw = ts.twirl_diagonal(chn.SimulatedExecutor(L, chn.NoiseModel.noiseless(seed=k)), process, L, shots=1024)
        dev = np.abs(tw.chi_diag - expected)
        # entries pinned at 0 or 1 have zero shot variance and must then be exact
        sigma_ratio = max(sigma_ratio, np.max(np.where(tw.sigma > 0, dev / np.where(tw.sigma > 0, tw.sigma, 1),
                                                       np.where(dev > 1e-12, np.inf, 0))))
    ss = all(np.array_equal(sign_matrix(L) @ sign_matrix(L), 4**L * np.eye(4**L)) for L in (1, 2, 3, 4))
    ok = exact_err <= 1e-9 and sigma_ratio <= 3 and ss
    assert verdict(6, ok, f"exact err {exact_err:.2e}, max |dev|/sigma {sigma_ratio:.2f}, s.s = 4^L I for L=1..4: {ss}")


def test_07_mub_suite(verdict):
    worst, counts = 0.0, []
    for L in (1, 2, 3, 4):
        D = 2**L
        states = ts.build_mubs(L).states()
        counts.append(len(states) == D + 1)
        for a, b in itertools.combinations(range(D + 1), 2):
            overlaps = np.abs(states[a].conj().T @ states[b]) ** 2
            worst = max(worst, np.abs(overlaps - 1 / D).max())
        for s in states:
            worst = max(worst, np.abs(s.conj().T @ s - np.eye(D)).max())
    ok = all(counts) and worst <= 1e-10
    assert verdict(7, ok, f"D+1 bases for L=1..4: {all(counts)}, max deviation {worst:.2e}")


def test_08_noise_ordering(compressed_default, compressed_l4, verdict):
    # L=3: full QPT at 1024 shots under the default noise model
    c_comp, eps_comp, _ = compressed_default
    c_trot = cq.build_trotter2(3, "open", 1.0, 2)
    base = chn.SimulatedExecutor(3, chn.NoiseModel())
    fids = []
    for seed in SEEDS:
        ex = base.reseeded(seed)
        F = {name: tf.ProcessTomography().fit(tf.run_full_qpt(ex, c, 3, 1024, name)).score(tf.ideal_chi_for_circuit(c))
             for name, c in (("compressed", c_comp), ("trotter", c_trot))}
        fids.append((F["compressed"], F["trotter"]))
    l3_ok = all(a > b for a, b in fids)
    # L=4 periodic: sparse SQPT with K=32 elements for Trotter and K=202 for the compressed circuit
    c4, _ = compressed_l4
    t4 = cq.build_trotter1(4, "periodic", 1.0, 1)
    base4 = chn.SimulatedExecutor(4, chn.NoiseModel())
    ratios = []
    for seed in SEEDS:
        ex = base4.reseeded(seed)
        var = {}
        for name, c, k in (("trotter", t4, 32), ("compressed", c4, 202)):
            ideal = tf.ideal_chi_for_circuit(c)
            run = ts.run_sqpt(ex, c, ideal, k, 1024, label=name)
            var[name] = tf.spectral_stats(masked_spectrum(run.chi, ideal)).second_moment
        ratios.append(var["trotter"] / var["compressed"])
    ok = l3_ok and min(ratios) >= 1.5
    detail = ", ".join(f"{a:.3f}>{b:.3f}" for a, b in fids)
    assert verdict(8, ok, f"L=3 F(compressed)>F(trotter2): {detail}; "
                          f"L=4 Var|lambda| ratios {', '.join(f'{r:.2f}' for r in ratios)} (>= 1.5)")


def test_09_spectral_sanity(compressed_default, verdict):
    c_comp = compressed_default[0]
    worst = 0.0
    for L, c in ((2, cq.build_trotter2(2, "open", 1.0, 1)), (3, cq.build_trotter2(3, "open", 1.0, 2)), (3, c_comp)):
        data = tf.run_full_qpt(exact_executor(L), c, L, shots=0)
        lam = tf.ProcessTomography().fit(data).spectrum()
        worst = max(worst, np.abs(np.abs(lam) - 1).max())
    u4 = cq.unitary(cq.build_trotter1(4, "periodic", 1.0, 1))
    worst = max(worst, np.abs(np.abs(tf.lambda_spectrum(chn.unitary_superoperator(u4))) - 1).max())
    # few shots push some moduli past one; they must survive into the statistics
    c = cq.build_trotter2(2, "open", 1.0, 1)
    est = tf.ProcessTomography().fit(tf.run_full_qpt(chn.SimulatedExecutor(2, chn.NoiseModel.noiseless(seed=3)), c, 2, 32))
    lam = est.spectrum()
    st = tf.spectral_stats(lam)
    above = int(np.sum(np.abs(lam) > 1 + 1e-12))
    kept = st.histogram.sum() == lam.size and st.bin_edges[-1] >= np.abs(lam).max()
    ok = worst <= 1e-8 and above > 0 and kept
    assert verdict(9, ok, f"noise-free max ||lambda|-1| = {worst:.2e}; noisy run has {above} moduli > 1 "
                          f"(max {np.abs(lam).max():.3f}), all kept in statistics: {kept}")


def test_10_gradient_check(verdict):
    rng = np.random.default_rng(100)
    worst = 0.0
    for L in (2, 3):
        problem = cp.CompressionProblem(L, "open", 1.0, 2)
        for _ in range(20):
            x = rng.uniform(-np.pi, np.pi, problem.num_params)
            g = cp.gradient(problem, x)
            fd = np.zeros_like(x)
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = 1e-5
                fd[k] = (problem.cost(x + e) - problem.cost(x - e)) / 2e-5
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    ok = worst <= 1e-5
    assert verdict(10, ok, f"max relative gradient error over 40 points = {worst:.2e}")


def test_11_end_to_end_runtime(tmp_path, verdict):
    start = time.perf_counter()
    common = ["--L", "3", "--layers", "2", "--out", str(tmp_path / "l3")]
    cli.run(["compress"] + common)
    q = cli.run(["qpt", "--circuit", "compressed", "--shots", "1024"] + common)
    cli.run(["spectrum", "--circuit", "compressed", "--shots", "1024"] + common)
    t3 = time.perf_counter() - start
    start = time.perf_counter()
    s = cli.run(["qpt", "--mode", "sqpt", "--L", "4", "--bc", "periodic", "--circuit", "trotter1", "--layers", "1",
                 "--k", "32", "--shots", "1024", "--out", str(tmp_path / "l4")])
    t4 = time.perf_counter() - start
    ok = t3 < 600 and t4 < 1800
    assert verdict(11, ok, f"L=3 pipeline {t3:.1f} s (< 600, F = {q['fidelity'][0]['F']:.3f}); "
                           f"L=4 SQPT K=32 {t4:.1f} s (< 1800, F = {s['fidelity'][0]['F']:.3f})")
