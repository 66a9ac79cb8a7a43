import numpy as np
import pytest

from meshforge.decompose import decompose_rectangular, haar_unitary
from meshforge.errors import NonLinearizableError, NonNullifiableError, OrderError
from meshforge.hardware import ErrorModel, PhysicalMesh
from meshforge.mesh import DIFFERENTIAL, TDC, MeshParams, mesh_matrix
from meshforge.metrics import phase_aligned_distance
from meshforge.nullification import nullification_set
from meshforge.program import (
    ColumnProgrammer,
    Interstitial,
    align_output_phases,
    cascade_matrix,
    parallel_nullify,
    program_cascade,
)
from meshforge.topology import butterfly, rectangular, triangular


def haar_target(n, seed):
    u = haar_unitary(n, np.random.default_rng(seed))
    topo = rectangular(n)
    return topo, decompose_rectangular(u, topo), u


def phase_random(topo, seed):
    rng = np.random.default_rng(seed)
    shape = (topo.m, topo.depth)
    return MeshParams.for_topology(topo, rng.uniform(0.05, np.pi - 0.05, shape), rng.uniform(0, 2 * np.pi, shape))


def test_closed_form_programs_haar_target():
    topo, params, u = haar_target(8, 1)
    chip = PhysicalMesh.randomized(topo, seed=2)
    report = parallel_nullify(chip, nullification_set(topo, params))
    assert report.inputs_consumed == topo.depth
    assert report.max_alpha_delta < 1e-8 and report.max_beta_delta < 1e-8
    assert report.fidelity_after > 1 - 1e-12 > report.fidelity_before
    assert phase_aligned_distance(u, chip.matrix()) < 1e-8
    assert all(r < 1e-12 for c in report.columns for r in c.residuals)


@pytest.mark.parametrize("build,n", [(triangular, 6), (butterfly, 8), (rectangular, 7)])
def test_other_architectures(build, n):
    topo = build(n)
    params = phase_random(topo, 3)
    chip = PhysicalMesh.randomized(topo, seed=4)
    report = parallel_nullify(chip, nullification_set(topo, params))
    assert report.max_alpha_delta < 1e-9
    assert report.distance_after < 1e-9


def test_fixed_point_and_idempotence():
    topo, params, _ = haar_target(6, 5)
    chip = PhysicalMesh.from_params(topo, params)
    nset = nullification_set(topo, params)
    report = parallel_nullify(chip, nset)
    assert report.max_residual() < 1e-12
    assert report.max_alpha_delta < 1e-12 and report.max_beta_delta < 1e-12
    alpha, beta = chip.alpha.copy(), chip.beta.copy()
    parallel_nullify(chip, nset)
    assert np.max(np.abs(chip.alpha - alpha)) < 1e-12
    assert np.max(np.abs(np.angle(np.exp(1j * (chip.beta - beta))))) < 1e-12


def test_sweep_agrees_with_closed_form():
    topo, params, _ = haar_target(8, 7)
    nset = nullification_set(topo, params)
    a = PhysicalMesh.randomized(topo, seed=8)
    b = PhysicalMesh.randomized(topo, seed=8)
    parallel_nullify(a, nset, "closed-form")
    report = parallel_nullify(b, nset, "sweep")
    assert np.max(np.abs(a.alpha - b.alpha)) < 1e-8
    assert np.max(np.abs(np.angle(np.exp(1j * (a.beta - b.beta))))) < 1e-8
    assert report.measurements > report.inputs_consumed


def test_order_within_column_irrelevant_without_crosstalk():
    topo, params, _ = haar_target(8, 9)
    nset = nullification_set(topo, params)
    a = PhysicalMesh.randomized(topo, seed=1)
    b = PhysicalMesh.randomized(topo, seed=1)
    parallel_nullify(a, nset, "sweep", concurrent=True)
    parallel_nullify(b, nset, "sweep", concurrent=False)
    assert np.max(np.abs(a.alpha - b.alpha)) < 1e-12
    assert np.max(np.abs(a.beta - b.beta)) < 1e-12


def test_columns_must_be_programmed_in_order():
    topo, params, _ = haar_target(4, 1)
    session = ColumnProgrammer(PhysicalMesh.randomized(topo, seed=0), nullification_set(topo, params))
    with pytest.raises(OrderError):
        session.program_column(2)
    session.program_column(1)
    with pytest.raises(OrderError):
        session.program_column(1)


def test_mismatched_topology_rejected():
    topo, params, _ = haar_target(4, 1)
    with pytest.raises(ValueError):
        parallel_nullify(PhysicalMesh.randomized(rectangular(6), seed=0), nullification_set(topo, params))
    with pytest.raises(ValueError):
        parallel_nullify(PhysicalMesh.randomized(topo, seed=0), nullification_set(topo, params), mode="magic")


def test_drift_repair():
    topo, params, u = haar_target(16, 3)
    chip = PhysicalMesh.from_params(topo, params)
    chip.inject_drift(0.05, seed=10)
    report = parallel_nullify(chip, nullification_set(topo, params))
    assert report.fidelity_before < 0.999
    assert report.distance_after < 1e-8


@pytest.mark.parametrize("sigma", [0.1, 0.3])
def test_drift_repair_large_sigma_reports_clamps(sigma):
    topo, params, _ = haar_target(8, 4)
    chip = PhysicalMesh.from_params(topo, params)
    chip.inject_drift(sigma, seed=1)
    report = parallel_nullify(chip, nullification_set(topo, params))
    assert report.distance_after < 1e-8


def test_loss_commutes_with_programming():
    topo, params, u = haar_target(8, 6)
    nset = nullification_set(topo, params)
    mu = np.random.default_rng(0).uniform(0.9, 1.0, topo.depth)
    lossy = PhysicalMesh.randomized(topo, seed=3, error_model=ErrorModel(column_loss=mu))
    clean = PhysicalMesh.randomized(topo, seed=3)
    parallel_nullify(lossy, nset)
    parallel_nullify(clean, nset)
    assert np.max(np.abs(lossy.alpha - clean.alpha)) < 1e-10
    assert np.max(np.abs(lossy.beta - clean.beta)) < 1e-10
    align_output_phases(lossy, u)
    assert np.linalg.norm(lossy.matrix() - np.prod(mu) * u) < 1e-10


@pytest.mark.parametrize("variant", [DIFFERENTIAL, TDC], ids=["differential", "tdc"])
def test_other_node_variants_match_up_to_output_phases(variant):
    topo, params, u = haar_target(6, 12)
    chip = PhysicalMesh.randomized(topo, seed=2, variant=variant)
    report = parallel_nullify(chip, nullification_set(topo, params))
    assert report.distance_after < 1e-9
    assert report.max_alpha_delta < 1e-9


def test_crosstalk_convergence_and_slowdown():
    topo, params, u = haar_target(8, 0)
    nset = nullification_set(topo, params)
    totals = []
    for c in (0.001, 0.005, 0.01, 0.02):
        chip = PhysicalMesh.randomized(topo, seed=4, error_model=ErrorModel(crosstalk=c))
        report = parallel_nullify(chip, nset)
        assert report.distance_after < 1e-10
        assert all(col.iterations <= 50 for col in report.columns)
        totals.append(sum(col.iterations for col in report.columns))
    assert totals == sorted(totals) and totals[-1] > totals[0]


def test_crosstalk_sweep_round_robin_converges():
    topo, params, _ = haar_target(8, 0)
    chip = PhysicalMesh.randomized(topo, seed=4, error_model=ErrorModel(crosstalk=0.01))
    report = parallel_nullify(chip, nullification_set(topo, params), "sweep")
    assert report.max_residual() < 1e-8
    assert all(col.iterations <= 50 for col in report.columns)


def test_split_ratio_limit_flags_node():
    topo = rectangular(2)
    params = MeshParams(np.array([[0.1]]), np.array([[0.4]]), np.zeros(2))
    chip = PhysicalMesh.randomized(topo, seed=0, error_model=ErrorModel(theta_range=(0.3, np.pi)))
    with pytest.raises(NonNullifiableError) as info:
        parallel_nullify(chip, nullification_set(topo, params))
    err = info.value
    assert err.column == 1 and err.nodes == [1]
    # residual of the best clamped setting: sin^2((0.3 - 0.1) / 2)
    assert err.residuals[0] == pytest.approx(np.sin(0.1) ** 2, rel=1e-9)
    assert err.report.flagged == [(1, 1)]


def test_split_ratio_limit_non_strict_and_tdc_exempt():
    topo, params, _ = haar_target(4, 2)
    params = MeshParams(np.where(topo.active_mask(), 0.1, np.pi), params.phi, params.gamma)
    limited = ErrorModel(theta_range=(0.3, np.pi))
    report = parallel_nullify(PhysicalMesh.randomized(topo, seed=0, error_model=limited),
                              nullification_set(topo, params), strict=False)
    assert report.flagged and not report.ok
    tdc = PhysicalMesh.randomized(topo, seed=0, error_model=limited, variant=TDC)
    assert parallel_nullify(tdc, nullification_set(topo, params)).ok


def test_full_range_limit_changes_nothing():
    topo, params, _ = haar_target(6, 2)
    a = PhysicalMesh.randomized(topo, seed=5)
    b = PhysicalMesh.randomized(topo, seed=5)
    b.set_split_ratio_limit(0.0, np.pi)
    nset = nullification_set(topo, params)
    parallel_nullify(a, nset)
    parallel_nullify(b, nset)
    assert np.array_equal(a.alpha, b.alpha)


def test_detector_floor_terminates():
    topo, params, u = haar_target(6, 8)
    chip = PhysicalMesh.randomized(topo, seed=2, error_model=ErrorModel(detector_floor=1e-6))
    report = parallel_nullify(chip, nullification_set(topo, params), "sweep")
    assert all(r == 0.0 for c in report.columns for r in c.residuals)
    assert report.distance_after < 1e-8


def test_align_output_phases():
    topo, params, u = haar_target(8, 2)
    chip = PhysicalMesh.from_params(topo, params)
    assert np.allclose(align_output_phases(chip, u), 0.0, atol=1e-12)
    kick = np.random.default_rng(1).uniform(-1, 1, 8)
    chip.gamma = chip.gamma + kick
    assert np.allclose(align_output_phases(chip, u), -kick, atol=1e-12)
    chip = PhysicalMesh.randomized(topo, seed=9)
    parallel_nullify(chip, nullification_set(topo, params))
    align_output_phases(chip, u)
    assert np.linalg.norm(chip.matrix() - u) < 1e-10
    with pytest.raises(ValueError):
        align_output_phases(chip, np.eye(4))


def test_cascade_of_one_matches_single_mesh():
    topo, params, u = haar_target(6, 1)
    a = PhysicalMesh.randomized(topo, seed=2)
    b = PhysicalMesh.randomized(topo, seed=2)
    program_cascade([a], [params])
    parallel_nullify(b, nullification_set(topo, params))
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.beta, b.beta)


@pytest.mark.parametrize("gain", [1.0, 0.7 * np.exp(0.3j)])
def test_two_mesh_cascade(gain):
    t1, p1, u1 = haar_target(8, 1)
    t2, p2, u2 = haar_target(8, 2)
    meshes = [PhysicalMesh.randomized(t1, seed=3), PhysicalMesh.randomized(t2, seed=4)]
    reports = program_cascade(meshes, [p1, p2], [Interstitial(np.full(8, gain))])
    assert all(r.ok for r in reports)
    assert phase_aligned_distance(gain * u2 @ u1, cascade_matrix(meshes, [Interstitial(np.full(8, gain))])) < 1e-8


def test_cascade_non_linearizable():
    t1, p1, _ = haar_target(4, 1)
    meshes = [PhysicalMesh.randomized(t1, seed=3), PhysicalMesh.randomized(t1, seed=4)]
    with pytest.raises(NonLinearizableError):
        program_cascade(meshes, [p1, p1], [Interstitial(np.ones(4), linearizable=False)])
    with pytest.raises(NonLinearizableError):
        program_cascade(meshes, [p1, p1], [Interstitial(np.array([1, 0, 1, 1]))])


def test_report_serializes():
    topo, params, _ = haar_target(4, 1)
    report = parallel_nullify(PhysicalMesh.randomized(topo, seed=0), nullification_set(topo, params))
    doc = report.to_dict()
    assert doc["inputs_consumed"] == 4 and len(doc["columns"]) == 4
    assert all(min(c["residuals"]) >= 0 for c in doc["columns"])
