import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isotns import lattice as L
from isotns.channels import (
    QuantumChannel,
    apply,
    channel_from_isometry,
    choi,
    depolarizing_channel,
    injectivity_delta,
    unitary_channel,
)
from isotns.exact import reduced_density_matrix
from isotns.site import NotIsometricError, SiteTensor, adapt_to_bonds
from isotns.tensor_core import DenseTensor, check_isometry, haar_unitary, singular_values
from oracles import circuit_state, trace_distance

seeds = st.integers(0, 2**32 - 1)


def kraus_choi(ks):
    return choi(QuantumChannel(4, 4, tuple(ks)))


def mixture_choi(u, p):
    return (1 - p) * choi(unitary_channel(u)) + p * choi(depolarizing_channel(4))


def restart_target(rho, p):
    """(1-p)|0><0| (x) Tr_1(rho) + p Tr(rho) 1/4, first qubit reset."""
    r = rho.reshape(2, 2, 2, 2)
    second = np.einsum("abad->bd", r)
    return (1 - p) * np.kron(np.diag([1.0, 0.0]), second) + p * np.trace(rho) * np.eye(4) / 4


def restart_choi(p):
    j = np.zeros((16, 16), dtype=complex)
    for i in range(4):
        for k in range(4):
            e = np.zeros((4, 4))
            e[i, k] = 1
            j += np.kron(e, restart_target(e, p))
    return j


# ---------------------------------------------------------------------------
# embedding tensors


def test_gate_tensor_identity_channel():
    ch = channel_from_isometry(L.gate_tensor(np.eye(4)))
    np.testing.assert_allclose(choi(ch), choi(unitary_channel(np.eye(4))))


def test_gate_of_swap_equals_identity_tensor():
    np.testing.assert_array_equal(L.gate_tensor(L.SWAP).array, L.identity_tensor().array)


def test_gate_tensor_rejects_non_unitary():
    with pytest.raises(ValueError, match="not unitary"):
        L.gate_tensor(np.diag([1, 1, 1, 2]))
    with pytest.raises(ValueError):
        L.gate_tensor(np.eye(2))


def test_identity_tensor_physical_state_and_channel(rng):
    t = L.identity_tensor()
    assert t.role == "identity" and t.d == 4
    assert np.all(t.array[1:] == 0)
    rho = rng.standard_normal((4, 4))
    rho = rho @ rho.T
    np.testing.assert_allclose(apply(channel_from_isometry(t), rho), L.SWAP @ rho @ L.SWAP)


def test_two_identity_tensors_route_unchanged(rng):
    # (0,0) -> up-out -> (0,1) down-in -> right-out; the ancilla entering (0,0) on the
    # left leaves (0,1) on the right, i.e. two steps along the diagonal, untouched
    t = L.identity_tensor()
    psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    psi /= np.linalg.norm(psi)
    first = np.einsum("plDru,l->pDru", t.array, psi)[0, 0]  # down-in |0>, keep (r, u)
    second = np.einsum("pLdRU,rd->pLRUr", t.array, first)[0, 0]  # its up-out feeds our down-in
    out = second.sum(axis=1)  # second's up-out carries the |0> from its left input
    np.testing.assert_allclose(second[:, 0, 0], psi)
    assert out.shape == (2, 2)


def test_swap_tensor_properties():
    s = L.swap_tensor()
    assert s.role == "swap" and s.dims == (2, 2, 1, 1)
    assert check_isometry(s.matrix())[0]
    # physical ij <- virtual (i, j)
    for i in range(2):
        for j in range(2):
            assert s.array[2 * i + j, i, j, 0, 0] == 1


def test_swap_after_gate_gives_circuit_output(rng):
    u = haar_unitary(4, rng)
    g = L.gate_tensor(L.SWAP @ u)  # outputs (r, u) = (q1, q0)
    s = L.swap_tensor()
    # apply the gate to |00>, route r into s.l and u into s.d as on the swap diagonal
    v = g.array[0, 0, 0]  # (r, u)
    phys = np.einsum("pldRU,ld->p", s.array, v.T)
    np.testing.assert_allclose(phys, u[:, 0], atol=1e-12)


# ---------------------------------------------------------------------------
# injective perturbations


def test_stinespring_identity_padded_is_not_injective():
    ks = [np.eye(4)] + [np.zeros((4, 4))] * 15
    site = L.stinespring_site(ks)
    assert injectivity_delta(site).delta == 0
    with pytest.raises(ValueError, match="linearly independent"):
        L.stinespring_site(ks, require_injective=True)


def test_stinespring_rejects_non_trace_preserving():
    with pytest.raises(ValueError, match="trace preserving"):
        L.stinespring_site([np.eye(4) * 0.9])


def test_depolarized_unitary_delta_examples(rng):
    u = haar_unitary(4, rng)
    site = L.stinespring_site(L.depolarized_unitary_kraus(u, 0.04))
    assert injectivity_delta(site).delta == pytest.approx(0.1, abs=1e-9)


def test_depolarized_unitary_small_p_limit(rng):
    u = haar_unitary(4, rng)
    j = kraus_choi(L.depolarized_unitary_kraus(u, 1e-12))
    assert np.max(np.abs(j - choi(unitary_channel(u)))) < 1e-5


def test_depolarized_unitary_is_unital(rng):
    ch = QuantumChannel(4, 4, tuple(L.depolarized_unitary_kraus(haar_unitary(4, rng), 0.04)))
    np.testing.assert_allclose(apply(ch, np.eye(4) / 4), np.eye(4) / 4, atol=1e-14)


def test_depolarized_unitary_choi(rng):
    u = haar_unitary(4, rng)
    assert len(L.depolarized_unitary_kraus(u, 0.5)) == 16
    np.testing.assert_allclose(kraus_choi(L.depolarized_unitary_kraus(u, 0.5)), mixture_choi(u, 0.5), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_kraus_sets_reject_p(p):
    with pytest.raises(ValueError):
        L.depolarized_unitary_kraus(np.eye(4), p)
    with pytest.raises(ValueError):
        L.depolarized_restart_kraus(p)


def test_restart_on_basis_state():
    p = 0.04
    ch = QuantumChannel(4, 4, tuple(L.depolarized_restart_kraus(p)))
    rho = np.zeros((4, 4))
    rho[3, 3] = 1  # |11><11|
    expected = (1 - p) * np.kron(np.diag([1.0, 0]), np.diag([0, 1.0])) + p * np.eye(4) / 4
    np.testing.assert_allclose(apply(ch, rho), expected, atol=1e-12)
    expected = (1 - p) * np.kron(np.diag([1.0, 0]), np.eye(2) / 2) + p * np.eye(4) / 4
    np.testing.assert_allclose(apply(ch, np.eye(4) / 4), expected, atol=1e-12)


def test_restart_kraus_structure():
    ks = L.depolarized_restart_kraus(0.04)
    assert len(ks) == 16
    gram = np.array([[np.trace(a.conj().T @ b) for b in ks] for a in ks])
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-14
    basis = L.restart_basis()
    hs = np.array([[np.trace(a.conj().T @ b) for b in basis] for a in basis])
    np.testing.assert_allclose(hs, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(basis[0], np.eye(2) / np.sqrt(2))
    assert all(abs(np.trace(b)) < 1e-15 for b in basis[1:])


def test_restart_delta():
    for p in (0.01, 0.04, 0.25):
        site = L.stinespring_site(L.depolarized_restart_kraus(p))
        k = L.RESTART_LEVELS
        assert injectivity_delta(site).delta == pytest.approx(np.sqrt(p / k**2), abs=1e-9)


@given(seeds, st.floats(1e-3, 1 - 1e-3))
def test_kraus_set_choi_property(seed, p):
    u = haar_unitary(4, np.random.default_rng(seed))
    assert np.max(np.abs(kraus_choi(L.depolarized_unitary_kraus(u, p)) - mixture_choi(u, p))) < 1e-10
    assert np.max(np.abs(kraus_choi(L.depolarized_restart_kraus(p)) - restart_choi(p))) < 1e-10


@given(seeds, st.floats(1e-3, 1 - 1e-3))
def test_depolarized_unitary_delta_property(seed, p):
    u = haar_unitary(4, np.random.default_rng(seed))
    site = L.stinespring_site(L.depolarized_unitary_kraus(u, p))
    assert abs(injectivity_delta(site).delta - np.sqrt(p) / 2) < 1e-9


# ---------------------------------------------------------------------------
# W isometry


def test_w_rejects_large_delta():
    with pytest.raises(ValueError):
        L.w_isometry(0.8)
    with pytest.raises(ValueError):
        L.w_isometry(-0.1)


@given(st.floats(0, np.sqrt(0.5)))
def test_w_completeness(delta):
    k = L.w_kraus(delta)
    total = sum(k[i, j].conj().T @ k[i, j] for i in range(2) for j in range(2))
    np.testing.assert_allclose(total, np.eye(2), atol=1e-12)
    unequal = k[0, 1].conj().T @ k[0, 1] + k[1, 0].conj().T @ k[1, 0]
    np.testing.assert_allclose(unequal, delta**2 * np.eye(2), atol=1e-15)


def test_w_at_zero_delta():
    w = L.w_isometry(0.0).data  # [i, j, out, in]
    for a in range(2):
        np.testing.assert_allclose(w[:, :, a, a], np.eye(2) / np.sqrt(2))
    assert np.all(w[0, 1] == 0) and np.all(w[1, 0] == 0)


def test_w_reset_probability_and_projection():
    k = L.w_kraus(0.5)
    plus = np.array([1, 1]) / np.sqrt(2)
    probs = {(i, j): np.linalg.norm(k[i, j] @ plus) ** 2 for i in range(2) for j in range(2)}
    assert probs[(0, 1)] + probs[(1, 0)] == pytest.approx(0.25)
    for psi in (np.array([1, 0]), plus, np.array([0.6, 0.8j])):
        out01 = k[0, 1] @ psi
        out10 = k[1, 0] @ psi
        if np.linalg.norm(out01) > 0:
            assert abs(out01[0]) < 1e-15
        if np.linalg.norm(out10) > 0:
            assert abs(out10[1]) < 1e-15


def test_perturbed_gate_tensor(rng):
    u = haar_unitary(4, rng)
    site = L.perturbed_gate_tensor(u, 0.3)
    assert site.d == 16 and site.role == "w_perturbed"
    assert check_isometry(site.matrix())[0]
    # each W contributes one factor of delta to the smallest singular value
    assert injectivity_delta(L.perturbed_gate_tensor(np.eye(4), 0.3)).delta == pytest.approx(0.09, abs=1e-9)


def test_perturbed_gate_at_zero_delta(rng):
    u = haar_unitary(4, rng)
    site = L.perturbed_gate_tensor(u, 0.0)
    ch = channel_from_isometry(site)
    np.testing.assert_allclose(choi(ch), choi(unitary_channel(u)), atol=1e-12)
    arr = site.array.reshape(2, 2, 2, 2, 2, 2, 2, 2)
    # unequal W outcomes never occur
    assert np.all(arr[0, 1] == 0) and np.all(arr[1, 0] == 0)
    assert np.all(arr[:, :, 0, 1] == 0) and np.all(arr[:, :, 1, 0] == 0)


def test_postselect_gate_projector(rng):
    u = haar_unitary(4, rng)
    site = L.postselect_gate_projector(u)
    np.testing.assert_allclose(singular_values(site.peps_matrix()), np.full(16, 0.5), atol=1e-12)
    np.testing.assert_allclose(site.kraus()[0], u / 4, atol=1e-15)
    direct = sum(
        np.einsum("ab,bc,dc->ad", u @ s / 4, np.eye(4), (u @ s / 4).conj()) for s in L.two_qubit_paulis()
    )
    np.testing.assert_allclose(apply(channel_from_isometry(site), np.eye(4)), direct, atol=1e-12)
    # twirl: the unpostselected channel is completely depolarizing
    np.testing.assert_allclose(choi(channel_from_isometry(site)), choi(depolarizing_channel(4)), atol=1e-12)


def test_pauli_order():
    ps = L.two_qubit_paulis()
    np.testing.assert_array_equal(ps[0], np.eye(4))
    np.testing.assert_array_equal(ps[1], np.kron(np.eye(2), L.X))
    np.testing.assert_array_equal(ps[4], np.kron(L.X, np.eye(2)))


def test_swap_projector():
    site = L.maximally_injective_swap_projector()
    np.testing.assert_allclose(singular_values(site.peps_matrix()), np.full(16, 0.5), atol=1e-12)
    k0 = site.kraus()[0]
    expected = np.zeros((4, 4))
    expected[0, 0] = 0.5
    np.testing.assert_array_equal(k0, expected)
    k = (1 << 3) | (0 << 2) | (1 << 1) | 1  # k0 k1 k2 k3 = 1 0 1 1
    op = site.kraus()[k]
    assert op[2, 3] == 0.5 and np.count_nonzero(op) == 1


def test_pad_physical():
    site = L.pad_physical(L.identity_tensor())
    assert site.d == 16 and site.phys_dims == (2, 2, 2, 2)
    np.testing.assert_array_equal(site.array[0], L.identity_tensor().array[0])


@given(seeds)
def test_all_constructors_isometric(seed):
    r = np.random.default_rng(seed)
    u = haar_unitary(4, r)
    delta = r.uniform(0, np.sqrt(0.5))
    p = r.uniform(0.01, 0.99)
    for site in (
        L.gate_tensor(u),
        L.identity_tensor(),
        L.swap_tensor(),
        L.stinespring_site(L.depolarized_unitary_kraus(u, p)),
        L.stinespring_site(L.depolarized_restart_kraus(p)),
        L.perturbed_gate_tensor(u, delta),
        L.postselect_gate_projector(u),
        L.maximally_injective_swap_projector(),
    ):
        assert check_isometry(site.matrix(), 1e-10)[0]


# ---------------------------------------------------------------------------
# lattice and adaptation


def test_site_tensor_rejects_non_isometry():
    arr = np.zeros((1, 1, 1, 1, 1))
    with pytest.raises(NotIsometricError):
        SiteTensor(DenseTensor(arr, L.LEGS))


def test_adapt_to_bonds_keeps_isometry(rng):
    site = L.perturbed_gate_tensor(haar_unitary(4, rng), 0.4)
    for dims in ((1, 2, 2, 2), (2, 2, 1, 2), (2, 2, 2, 1), (1, 1, 1, 1), (2, 2, 1, 1)):
        out = adapt_to_bonds(site, dims)
        assert out.dims == dims
        assert check_isometry(out.matrix())[0]
        assert int(np.prod(out.phys_dims)) == out.d
    with pytest.raises(ValueError):
        adapt_to_bonds(site, (3, 2, 2, 2))


def test_lattice_validation(rng):
    good = L.random_lattice(2, 3, rng)
    assert good.nx == 2 and good.ny == 3
    sites = [list(c) for c in good.sites]
    sites[0][0] = L.identity_tensor()  # interior dims on a corner
    with pytest.raises(ValueError):
        L.IsoTnsLattice(2, 3, tuple(tuple(c) for c in sites))
    with pytest.raises(ValueError):
        L.IsoTnsLattice(3, 3, good.sites)


def test_causal_order():
    lat = L.uniform_lattice(3, 2, L.identity_tensor())
    assert lat.causal_order() == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]


def test_lattice_record_round_trip(rng):
    lat = L.embed_brickwork(L.bell_circuit())
    rec = json.loads(json.dumps(lat.to_record()))
    back = L.IsoTnsLattice.from_record(rec)
    assert back.readout == lat.readout
    for s in lat.positions():
        np.testing.assert_array_equal(back[s].array, lat[s].array)
        assert back[s].phys_dims == lat[s].phys_dims


def test_depolarized_lattice_eta(rng):
    lat = L.depolarized_lattice(3, 3, 0.3, rng)
    for s in lat.positions():
        rep = injectivity_delta(lat[s])
        if lat[s].dim_out > 1:
            assert rep.eta == pytest.approx(0.3, abs=1e-9)


# ---------------------------------------------------------------------------
# circuits and embedding


def test_circuit_validation():
    with pytest.raises(ValueError, match="overlapping"):
        L.BrickworkCircuit(4, (((0, np.eye(4)), (0, np.eye(4))),))
    with pytest.raises(ValueError, match="brickwork"):
        L.BrickworkCircuit(4, (((1, np.eye(4)),),))
    with pytest.raises(ValueError):
        L.BrickworkCircuit(3, ())
    with pytest.raises(ValueError):
        L.BrickworkCircuit(2, (((0, np.diag([1, 1, 1, 2])),),))


def test_circuit_record_rejects_non_neighbour():
    rec = L.bell_circuit().to_record()
    rec["layers"][0][0]["pair"] = [0, 2]
    with pytest.raises(ValueError):
        L.BrickworkCircuit.from_record(rec)


def swap_marginal(lat):
    return reduced_density_matrix(lat, list(lat.readout), cap=2**16)


def test_empty_circuit_embedding():
    lat = L.embed_brickwork(L.BrickworkCircuit(2, ()))
    rho = swap_marginal(lat)
    assert rho[0, 0] == pytest.approx(1.0)


def test_bell_embedding():
    lat = L.embed_brickwork(L.bell_circuit(), size=3)
    assert lat.nx == 3
    rho = swap_marginal(lat)
    zz = np.kron(L.Z, L.Z)
    z1 = np.kron(L.Z, np.eye(2))
    assert np.trace(rho @ zz).real == pytest.approx(1.0)
    assert abs(np.trace(rho @ z1)) < 1e-12
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert trace_distance(rho, np.outer(bell, bell)) < 1e-12
    # both qubits of the final gate share one swap site
    assert lat.readout[0][0] == lat.readout[1][0]


def test_paper_layout_bell():
    lat = L.embed_brickwork(L.bell_circuit(), t0=1)
    gate_sites = [s for s in lat.positions() if lat[s].role == "gate"]
    assert all(x + y == 1 for x, y in gate_sites)
    assert all(x + y == 3 for (x, y), _ in lat.readout)


def test_embedding_too_small():
    with pytest.raises(ValueError):
        L.embed_brickwork(L.random_brickwork(4, 3, np.random.default_rng(0)), size=2)


@given(seeds, st.sampled_from([2, 4]), st.integers(0, 4), st.integers(0, 1))
def test_embedding_matches_circuit(seed, n, depth, offset):
    c = L.random_brickwork(n, depth, np.random.default_rng(seed), offset)
    lat = L.embed_brickwork(c)
    psi = circuit_state(n, c.layers)
    assert trace_distance(swap_marginal(lat), np.outer(psi, psi.conj())) < 1e-10
    np.testing.assert_allclose(c.statevector(), psi, atol=1e-12)
