import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshforge.mesh import (
    DIFFERENTIAL,
    STANDARD,
    TDC,
    MeshParams,
    NodePhases,
    column_matrix,
    embed_node,
    mesh_matrix,
    node_matrix,
    permutation_matrix,
    power,
    propagate,
    unitarity_error,
)
from meshforge.topology import rectangular, triangular

VARIANTS = [STANDARD, DIFFERENTIAL, TDC]
angles = st.floats(0.0, np.pi)
phases = st.floats(0.0, 2 * np.pi, exclude_max=True)


def literal_node(theta, phi):
    s, c = np.sin(theta / 2), np.cos(theta / 2)
    return 1j * np.array([[np.exp(1j * phi) * s, c], [np.exp(1j * phi) * c, -s]])


def random_params(topo, rng):
    shape = (topo.m, topo.depth)
    return MeshParams.for_topology(topo, rng.uniform(0, np.pi, shape), rng.uniform(0, 2 * np.pi, shape),
                                   rng.uniform(0, 2 * np.pi, topo.n))


def test_node_examples():
    assert np.allclose(node_matrix((0.0, 0.0)), 1j * np.array([[0, 1], [1, 0]]), atol=1e-15)
    assert np.allclose(node_matrix((np.pi, np.pi)), -1j * np.eye(2), atol=1e-15)
    assert np.allclose(node_matrix((np.pi / 2, 0.0)), 1j / np.sqrt(2) * np.array([[1, 1], [1, -1]]), atol=1e-15)


def test_node_phases_validation():
    assert NodePhases(1.0, 7.0).phi == pytest.approx(7.0 - 2 * np.pi)
    with pytest.raises(ValueError):
        NodePhases(-0.1, 0.0)
    with pytest.raises(ValueError):
        NodePhases(np.pi + 0.1, 0.0)


def test_node_grid_unitary_and_variant_equivalence():
    theta, phi = np.meshgrid(np.linspace(0, np.pi, 33), np.linspace(0, 2 * np.pi, 33, endpoint=False))
    mags = []
    for variant in VARIANTS:
        for t, p in zip(theta.ravel(), phi.ravel()):
            m = node_matrix((t, p), variant)
            assert np.linalg.norm(m.conj().T @ m - np.eye(2)) < 1e-12
        mags.append(np.abs(np.array([node_matrix((t, p), variant) for t, p in zip(theta.ravel(), phi.ravel())])) ** 2)
    assert np.max(np.abs(mags[0] - mags[1])) < 1e-12
    assert np.max(np.abs(mags[0] - mags[2])) < 1e-12


@given(angles, phases)
def test_variants_differ_by_diagonal_phases(theta, phi):
    ref = literal_node(theta, phi)
    assert np.allclose(node_matrix((theta, phi)), ref, atol=1e-14)
    for variant in (DIFFERENTIAL, TDC):
        m = node_matrix((theta, phi), variant)
        # m = diag(d) @ ref with unit-modulus d
        d = np.array([np.vdot(ref[i], m[i]) for i in range(2)])
        assert np.allclose(np.abs(d), 1.0, atol=1e-12)
        assert np.allclose(np.diag(d) @ ref, m, atol=1e-12)


def test_embed_node_examples():
    assert np.array_equal(embed_node(np.eye(2), 1, 4), np.eye(4))
    cross = node_matrix((0.0, 0.0))
    expected = np.zeros((4, 4), dtype=complex)
    expected[:2, :2] = np.eye(2)
    expected[2:, 2:] = 1j * np.array([[0, 1], [1, 0]])
    assert np.allclose(embed_node(cross, 2, 4), expected)
    with pytest.raises(IndexError):
        embed_node(cross, 3, 5)


def test_embed_node_unitary_random(rng):
    for _ in range(100):
        n = int(rng.integers(2, 17))
        m = int(rng.integers(1, n // 2 + 1))
        u = embed_node(node_matrix((rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi))), m, n)
        assert np.linalg.norm(u.conj().T @ u - np.eye(n)) < 1e-12


def test_column_matrix_examples(rng):
    bar = column_matrix(np.arange(6), np.full(3, np.pi), np.full(3, np.pi))
    assert np.allclose(bar, (-1j) * np.eye(6))
    single = column_matrix(np.arange(2), np.array([np.pi / 2]), np.array([0.0]))
    assert np.allclose(single, node_matrix((np.pi / 2, 0.0)))
    with pytest.raises(ValueError):
        column_matrix([0, 0, 1, 2], np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("n", [2, 5, 6, 9])
def test_column_matrix_against_naive_products(n, rng):
    perm = rng.permutation(n)
    m = n // 2
    theta, phi = rng.uniform(0, np.pi, m), rng.uniform(0, 2 * np.pi, m)
    naive = np.eye(n, dtype=complex)
    for k in range(m):
        naive = embed_node(literal_node(theta[k], phi[k]), k + 1, n) @ naive
    naive = naive @ np.eye(n)[perm]
    assert np.allclose(column_matrix(perm, theta, phi), naive, atol=1e-14)


def test_permutation_convention():
    perm = [2, 0, 1]
    x = np.array([10.0, 20.0, 30.0])
    assert np.array_equal(permutation_matrix(perm) @ x, x[perm])


def test_mesh_matrix_examples(rng):
    topo = rectangular(6)
    u = mesh_matrix(topo, MeshParams.bar(topo))
    assert np.allclose(np.abs(u), np.eye(6))
    topo2 = rectangular(2)
    params = MeshParams(np.array([[0.7]]), np.array([[1.3]]), np.array([0.2, 0.5]))
    expected = np.diag(np.exp(1j * params.gamma)) @ np.eye(2)[list(topo2.final_perm)] @ literal_node(0.7, 1.3)
    assert np.allclose(mesh_matrix(topo2, params), expected)
    with pytest.raises(ValueError):
        mesh_matrix(topo, MeshParams.bar(rectangular(8)))


@pytest.mark.parametrize("build,n", [(rectangular, 8), (triangular, 7), (rectangular, 5)])
def test_mesh_matrix_is_product_of_columns(build, n, rng):
    topo = build(n)
    params = random_params(topo, rng)
    u = np.eye(n, dtype=complex)
    for ell in range(1, topo.depth + 1):
        u = column_matrix(topo.perm_array(ell), params.theta[:, ell - 1], params.phi[:, ell - 1]) @ u
    u = np.diag(np.exp(1j * params.gamma)) @ permutation_matrix(topo.final_perm) @ u
    assert np.allclose(mesh_matrix(topo, params), u, atol=1e-13)
    assert unitarity_error(u) < 1e-10 * n


def test_propagate_examples(rng):
    topo = rectangular(8)
    params = random_params(topo, rng)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    assert np.array_equal(propagate(topo, params, v, 0), v)
    for k in range(9):
        assert abs(power(propagate(topo, params, v, k)) - power(v)) < 1e-12 * power(v)
    full = propagate(topo, params, v, topo.depth, apply_output_phases=True)
    assert np.max(np.abs(full - mesh_matrix(topo, params) @ v)) < 1e-12
    with pytest.raises(ValueError):
        propagate(topo, params, v, 9)


def test_power_conservation_random_meshes(rng):
    for _ in range(200):
        n = int(rng.integers(2, 17))
        topo = rectangular(n)
        params = random_params(topo, rng)
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        out = propagate(topo, params, v, apply_output_phases=True)
        assert abs(power(out) - power(v)) < 1e-10


def test_column_loss_scales_operator(rng):
    topo = rectangular(6)
    params = random_params(topo, rng)
    mu = rng.uniform(0.9, 1.0, topo.depth)
    assert np.allclose(mesh_matrix(topo, params, column_loss=mu), np.prod(mu) * mesh_matrix(topo, params))


def test_mesh_params_invariants(rng):
    topo = rectangular(6)
    p = MeshParams.for_topology(topo, np.zeros((3, 6)), np.full((3, 6), 7.0))
    mask = topo.active_mask()
    assert np.all(p.theta[~mask] == np.pi) and np.all(p.phi[~mask] == np.pi)
    assert np.all((p.phi >= 0) & (p.phi < 2 * np.pi))
    with pytest.raises(ValueError):
        MeshParams(np.full((3, 6), 4.0), np.zeros((3, 6)), np.zeros(6))
    with pytest.raises(ValueError):
        p.theta[0, 0] = 1.0
    assert MeshParams.from_dict(p.to_dict()).theta.tolist() == p.theta.tolist()
