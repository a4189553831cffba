import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from heisqpt import circuit as cq
from heisqpt.compress import epsilon, exact_propagator
from heisqpt.linalg import is_unitary

I2 = np.eye(2)
XX, YY, ZZ = cq.XX, cq.YY, cq.ZZ


def dense_on_bond(g4, i, L):
    """Adjacent two-qubit matrix on (i, i+1) by plain Kronecker products."""
    return np.kron(np.kron(np.eye(2**i), g4), np.eye(2 ** (L - i - 2)))


def dense_single(g2, q, L):
    return np.kron(np.kron(np.eye(2**q), g2), np.eye(2 ** (L - q - 1)))


def test_single_cx_matrix():
    u = cq.unitary(cq.Circuit(2, (cq.cx(0, 1),)))
    np.testing.assert_array_equal(u, np.eye(4)[[0, 1, 3, 2]])


def test_empty_circuit_is_identity():
    assert np.array_equal(cq.unitary(cq.Circuit(3)), np.eye(8))
    assert cq.cnot_count(cq.Circuit(3)) == 0


def test_heis_bond_matches_expm():
    dt = 0.37
    expected = scipy.linalg.expm(-1j * dt / 4 * (XX + YY + ZZ))
    np.testing.assert_allclose(cq.heis_bond(0, 1, dt).matrix(), expected, atol=1e-14)


def test_canonical_matches_expm():
    nu = (0.3, -0.8, 1.1)
    expected = scipy.linalg.expm(-1j * (nu[0] * XX + nu[1] * YY + nu[2] * ZZ))
    np.testing.assert_allclose(cq.canonical_matrix(*nu), expected, atol=1e-14)


def test_trotter_two_sites_is_exact():
    for builder in (cq.build_trotter1, cq.build_trotter2):
        c = builder(2, "open", 1.0, 1)
        assert epsilon(exact_propagator(2, "open", 1.0), cq.unitary(c)) <= 1e-12


def test_trotter_error_shrinks_with_steps():
    ue = exact_propagator(3, "open", 1.0)
    for builder in (cq.build_trotter1, cq.build_trotter2):
        errs = [epsilon(ue, cq.unitary(builder(3, "open", 1.0, n))) for n in (1, 2, 4, 8, 16, 32, 64)]
        assert all(a > b for a, b in zip(errs, errs[1:]))


def test_second_order_step_doubling_ratio():
    ue = exact_propagator(3, "open", 1.0)
    e8 = epsilon(ue, cq.unitary(cq.build_trotter2(3, "open", 1.0, 8)))
    e16 = epsilon(ue, cq.unitary(cq.build_trotter2(3, "open", 1.0, 16)))
    assert 14 < e8 / e16 < 18


def test_second_order_beats_first_order_everywhere():
    for L, bc in ((3, "open"), (4, "open"), (4, "periodic")):
        ue = exact_propagator(L, bc, 1.0)
        for n in (1, 2, 4, 8):
            e1 = epsilon(ue, cq.unitary(cq.build_trotter1(L, bc, 1.0, n)))
            e2 = epsilon(ue, cq.unitary(cq.build_trotter2(L, bc, 1.0, n)))
            assert e2 <= e1


def test_periodic_routing_preserves_unitary():
    for builder in (cq.build_trotter1, cq.build_trotter2):
        routed = builder(4, "periodic", 0.8, 2)
        bare = builder(4, "periodic", 0.8, 2, route=False)
        assert routed.is_local() and not bare.is_local()
        np.testing.assert_allclose(cq.unitary(routed), cq.unitary(bare), atol=1e-12)


def test_periodic_swap_overhead_regression():
    c = cq.build_trotter1(4, "periodic", 1.0, 1)
    assert sum(g.kind == "swap" for g in c.gates) == 4
    assert cq.cnot_count(c) == 3 * 4 + 3 * 4
    open_c = cq.build_trotter1(4, "open", 1.0, 1)
    assert cq.cnot_count(c) > cq.cnot_count(open_c)


def test_trotter2_merges_half_steps():
    # n steps of A/2 B A/2 fuse into n + 1 even layers and n odd layers
    c = cq.build_trotter2(3, "open", 1.0, 4)
    assert [g.qubits for g in c.gates].count((0, 1)) == 5
    assert [g.qubits for g in c.gates].count((1, 2)) == 4


def test_invalid_chain_arguments():
    with pytest.raises(ValueError):
        cq.build_trotter1(1, "open", 1.0, 1)
    with pytest.raises(ValueError):
        cq.build_trotter2(2, "periodic", 1.0, 1)
    with pytest.raises(ValueError):
        cq.build_trotter1(3, "open", 1.0, 0)
    with pytest.raises(ValueError):
        cq.build_trotter1(3, "ring", 1.0, 1)


def test_brickwall_zero_angles_is_identity():
    theta = np.zeros(cq.brickwall_param_count(4, 3))
    np.testing.assert_allclose(cq.unitary(cq.build_brickwall(4, 3, theta)), np.eye(16), atol=1e-12)


def test_brickwall_param_count_regression():
    assert cq.brickwall_param_count(3, 2) == 57
    assert cq.brickwall_param_count(4, 1) == 48


def test_brickwall_wrong_length_message():
    with pytest.raises(ValueError, match="needs 57 parameters, got 3"):
        cq.build_brickwall(3, 2, np.zeros(3))


def test_brickwall_matches_dense_product(rng):
    L, layers = 3, 2
    theta = rng.uniform(-np.pi, np.pi, cq.brickwall_param_count(L, layers))
    u = np.eye(2**L, dtype=complex)
    k = 0
    for i, j in cq.brickwall_layout(L, layers):
        p = theta[k:k + 12]
        block = dense_single(cq.u_matrix(*p[9:12]), i, L) @ dense_on_bond(
            scipy.linalg.expm(-1j * (p[6] * XX + p[7] * YY + p[8] * ZZ)), i, L
        ) @ dense_single(cq.u_matrix(*p[3:6]), j, L) @ dense_single(cq.u_matrix(*p[0:3]), i, L)
        u = block @ u
        k += 12
    for q in range(L):
        u = dense_single(cq.u_matrix(*theta[k:k + 3]), q, L) @ u
        k += 3
    np.testing.assert_allclose(cq.unitary(cq.build_brickwall(L, layers, theta)), u, atol=1e-12)


def test_trotter_equivalent_theta_reproduces_trotter():
    theta = cq.trotter_equivalent_theta(4, 3, 0.9)
    u = cq.unitary(cq.build_brickwall(4, 3, theta))
    np.testing.assert_allclose(u, cq.unitary(cq.build_trotter1(4, "open", 0.9, 3)), atol=1e-12)


@pytest.mark.parametrize(
    "g",
    [cq.heis_bond(0, 1, 0.0), cq.heis_bond(0, 1, 0.77), cq.canonical(0, 1, np.pi / 4, 0, 0),
     cq.canonical(1, 0, 0.2, -0.4, 1.3)],
)
def test_two_qubit_decomposition(g):
    gates = cq.decompose_two_qubit(g)
    assert sum(x.kind == "cx" for x in gates) == 3
    target = cq.unitary(cq.Circuit(2, (g,)))
    assert cq.overlap(target, cq.unitary(cq.Circuit(2, tuple(gates)))) == pytest.approx(1, abs=1e-10)


def test_xx_interaction_decomposition():
    g = cq.canonical(0, 1, np.pi / 4, 0, 0)
    expected = (np.eye(4) - 1j * XX) / np.sqrt(2)
    assert cq.overlap(expected, cq.unitary(cq.decompose(cq.Circuit(2, (g,))))) == pytest.approx(1, abs=1e-10)


def test_decompose_rejects_fixed_gates():
    with pytest.raises(ValueError):
        cq.decompose_two_qubit(cq.cx(0, 1))


def test_cnot_counts():
    assert cq.cnot_count(cq.Circuit(2, (cq.heis_bond(0, 1, 0.3),))) == 3
    assert cq.cnot_count(cq.Circuit(2, (cq.swap(0, 1),))) == 3
    c = cq.build_trotter2(4, "periodic", 1.0, 2)
    assert cq.cnot_count(c) == cq.cnot_count(cq.decompose(c))
    assert sum(g.kind == "cx" for g in cq.decompose(c).gates) == cq.cnot_count(c)


def test_circuit_then_inverse_is_identity(rng):
    theta = rng.uniform(-np.pi, np.pi, cq.brickwall_param_count(3, 2))
    c = cq.build_brickwall(3, 2, theta) + cq.Circuit(3, (cq.s(0), cq.h(1), cq.swap(0, 2)))
    np.testing.assert_allclose(cq.unitary(c + c.inverse()), np.eye(8), atol=1e-10)


def test_qasm_empty_and_cx():
    text = cq.export_qasm(cq.Circuit(2))
    assert "qubit[2] q;" in text and "cx" not in text
    text = cq.export_qasm(cq.Circuit(2, (cq.cx(0, 1),)))
    assert text.count("cx q[0], q[1];") == 1


def test_qasm_requires_decomposition():
    with pytest.raises(ValueError, match="decomposed"):
        cq.export_qasm(cq.Circuit(2, (cq.heis_bond(0, 1, 0.1),)))


def test_qasm_roundtrip_random_circuit(rng):
    theta = rng.uniform(-np.pi, np.pi, cq.brickwall_param_count(3, 2))
    c = cq.decompose(cq.build_brickwall(3, 2, theta) + cq.Circuit(3, (cq.h(2), cq.sdg(1), cq.swap(0, 2))))
    back = cq.parse_qasm(cq.export_qasm(c))
    assert cq.overlap(cq.unitary(c), cq.unitary(back)) == pytest.approx(1, abs=1e-9)


def test_circuit_json_roundtrip(rng):
    c = cq.build_trotter2(3, "open", 1.0, 2)
    assert cq.Circuit.from_dict(c.to_dict()) == c


def test_gate_validation():
    with pytest.raises(ValueError):
        cq.Gate("cx", (0, 0))
    with pytest.raises(ValueError):
        cq.Gate("u", (0,), (1.0,))
    with pytest.raises(ValueError):
        cq.Gate("toffoli", (0, 1))
    with pytest.raises(ValueError):
        cq.Circuit(2, (cq.h(2),))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_brickwall_always_unitary(L, layers, seed):
    theta = np.random.default_rng(seed).uniform(-np.pi, np.pi, cq.brickwall_param_count(L, layers))
    assert is_unitary(cq.unitary(cq.build_brickwall(L, layers, theta)))


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_decomposition_is_exact_for_any_canonical(a, b, d):
    g = cq.canonical(0, 1, a, b, d)
    gates = cq.decompose_two_qubit(g)
    assert cq.overlap(g.matrix(), cq.unitary(cq.Circuit(2, tuple(gates)))) == pytest.approx(1, abs=1e-10)
