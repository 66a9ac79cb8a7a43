import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshforge.errors import DegenerateInputError
from meshforge.mesh import MeshParams, node_matrix, power, propagate
from meshforge.nullification import (
    closed_form_settings,
    golden_minimize,
    node_bottom_power,
    nullification_set,
    nullification_vector,
    nullify_node_closed_form,
    sweep_nullify,
    target_vector,
)
from meshforge.topology import butterfly, compactify, random_netlist, rectangular, triangular

finite = st.floats(-10, 10, allow_nan=False)


def random_params(topo, rng):
    shape = (topo.m, topo.depth)
    return MeshParams.for_topology(topo, rng.uniform(0, np.pi, shape), rng.uniform(0, 2 * np.pi, shape))


def dense_vector(topo, params, ell):
    """Oracle: conj of the explicit inverse of the partial product applied to o."""
    partial = propagate(topo, params, np.eye(topo.n, dtype=complex), ell)
    return np.linalg.solve(partial, target_vector(topo.n))


def test_target_vector_examples():
    assert np.array_equal(target_vector(4), [1, 0, 1, 0])
    assert np.array_equal(target_vector(5), [1, 0, 1, 0, 0])
    assert np.array_equal(target_vector(2), [1, 0])


def test_first_column_all_bar():
    topo = rectangular(4)
    w = nullification_vector(topo, MeshParams.bar(topo), 1)
    assert np.allclose(np.abs(w), target_vector(4))
    # bar nodes multiply by -i, so w carries the conjugate phase +i
    assert np.allclose(w[[0, 2]], 1j)


@pytest.mark.parametrize("topo", [rectangular(8), rectangular(7), triangular(6), butterfly(16)],
                         ids=["rect8", "rect7", "tri6", "bfly16"])
def test_defining_identity_and_dense_oracle(topo, rng):
    params = random_params(topo, rng)
    nset = nullification_set(topo, params)
    assert len(nset) == topo.depth
    for ell in range(1, topo.depth + 1):
        w = nset[ell]
        assert np.allclose(w, nullification_vector(topo, params, ell), atol=1e-13)
        assert np.allclose(w, dense_vector(topo, params, ell), atol=1e-11)
        assert np.linalg.norm(propagate(topo, params, w, ell) - nset.target_pattern) < 1e-10
        assert power(w) == pytest.approx(topo.n // 2, abs=1e-10)
    assert nset.identity_error() < 1e-10


def test_random_dag_identity(rng):
    for _ in range(20):
        topo = compactify(random_netlist(int(rng.integers(2, 11)), int(rng.integers(1, 30)), rng))
        assert nullification_set(topo, random_params(topo, rng)).identity_error() < 1e-10


def test_set_sizes():
    for topo, size in ((rectangular(6), 6), (triangular(5), 7), (butterfly(8), 3)):
        assert len(nullification_set(topo, MeshParams.bar(topo))) == size


def test_column_out_of_range():
    topo = rectangular(4)
    with pytest.raises(ValueError):
        nullification_vector(topo, MeshParams.bar(topo), 5)


def test_closed_form_examples():
    assert nullify_node_closed_form(1, 1) == pytest.approx((np.pi / 2, 0.0))
    assert nullify_node_closed_form(1, 0) == pytest.approx((np.pi, 0.0))
    assert nullify_node_closed_form(1, 1j) == pytest.approx((np.pi / 2, np.pi / 2))
    assert nullify_node_closed_form(0, 2) == pytest.approx((0.0, 0.0))
    with pytest.raises(DegenerateInputError):
        nullify_node_closed_form(0, 0)
    _, _, flag = closed_form_settings(np.array([1.0, 1.0, 0.0]), np.array([0.0, 1.0, 3.0]))
    assert flag.tolist() == [True, False, True]


@given(finite, finite, finite, finite)
def test_closed_form_nulls_bottom_port(a, b, c, d):
    u = np.array([a + 1j * b, c + 1j * d])
    if np.linalg.norm(u) < 1e-6:
        return
    alpha, beta = nullify_node_closed_form(*u)
    assert 0 <= alpha <= np.pi and 0 <= beta < 2 * np.pi
    out = node_matrix((alpha, beta)) @ u
    assert abs(out[1]) ** 2 < 1e-24 * max(1.0, power(u)) + 1e-28
    assert abs(out[0]) ** 2 == pytest.approx(power(u), rel=1e-12)


def test_golden_minimize_vectorized():
    centres = np.array([0.3, -1.0, 2.5])
    x, evals = golden_minimize(lambda x: (x - centres) ** 2, centres - 1, centres + 2)
    assert np.allclose(x, centres, atol=1e-9)
    assert evals < 80


def test_sweep_matches_closed_form(rng):
    k = 500
    u1 = rng.normal(size=k) + 1j * rng.normal(size=k)
    u2 = rng.normal(size=k) + 1j * rng.normal(size=k)
    res = sweep_nullify(lambda a, b: node_bottom_power(u1, u2, a, b), k, rng.uniform(0, np.pi, k))
    alpha, beta, _ = closed_form_settings(u1, u2)
    assert np.max(np.abs(res.alpha - alpha)) < 1e-8
    assert np.max(np.abs(np.angle(np.exp(1j * (res.beta - beta))))) < 1e-8


def test_sweep_flags_dark_port():
    u1, u2 = np.array([1.0 + 0j]), np.array([0j])
    res = sweep_nullify(lambda a, b: node_bottom_power(u1, u2, a, b), 1, np.array([1.0]))
    assert res.indeterminate[0] and res.beta[0] == 0.0
    assert res.alpha[0] == pytest.approx(np.pi, abs=1e-9)


def test_beta_argmin_independent_of_alpha(rng):
    grid = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    for _ in range(50):
        u1, u2 = rng.normal(size=2) + 1j * rng.normal(size=2)
        argmins = [grid[np.argmin(node_bottom_power(u1, u2, a, grid))] for a in (0.4, 1.3, 2.7)]
        assert np.ptp(argmins) <= grid[1]
