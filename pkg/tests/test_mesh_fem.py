import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import p1_mass_reference, p1_stiffness_reference
from rmrom.mesh_fem import (
    AssemblyError,
    ConcentrationField,
    MeshError,
    assemble,
    build_mesh,
    diffusion_matrix,
    invariant_bounds,
    m_norm,
    mass_matrix,
    observed_orders,
    run_simulation,
    step_invariant,
)
from rmrom.physics import SimulationConfig
from rmrom.qp import BoxBounds


@pytest.mark.parametrize("n", [2, 3, 21])
def test_mesh_counts_and_areas(n):
    m = build_mesh(n)
    assert m.n_nodes == n * n
    assert m.n_triangles == 2 * (n - 1) ** 2
    a = m.signed_areas()
    assert np.all(a > 0)
    assert a.sum() == pytest.approx(1.0, abs=1e-14)


def test_mesh_numbering():
    m = build_mesh(3)
    np.testing.assert_allclose(m.node_coords[5], [1.0, 0.5])
    with pytest.raises(MeshError):
        build_mesh(1)


def test_mass_matrix_against_quadrature():
    m = build_mesh(4)
    M = mass_matrix(m).toarray()
    np.testing.assert_allclose(M, p1_mass_reference(m.node_coords, m.triangles), atol=1e-15)
    assert M.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_stiffness_hand_assembly_diag_tensor():
    m = build_mesh(3)
    D = np.diag([2.0, 1.0])
    K = diffusion_matrix(m, np.broadcast_to(D, (m.n_triangles, 2, 2))).toarray()
    np.testing.assert_allclose(K, p1_stiffness_reference(m.node_coords, m.triangles, D), atol=1e-14)
    # centre node couples only through the axes for a diagonal tensor
    assert K[4, 4] == pytest.approx(6.0)
    assert K[4, 3] == pytest.approx(-2.0) and K[4, 1] == pytest.approx(-1.0)
    assert K[4, 0] == pytest.approx(0.0, abs=1e-15)


@given(seed=st.integers(0, 10**6))
def test_stiffness_symmetric_psd_kernel_constants(seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(5)
    A = rng.standard_normal((m.n_triangles, 2, 2))
    T = A @ A.transpose(0, 2, 1) + 0.1 * np.eye(2)
    K = diffusion_matrix(m, T).toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.testing.assert_allclose(K @ np.ones(m.n_nodes), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() > -1e-10


def test_assembly_rejects_non_spd():
    m = build_mesh(3)
    bad = np.broadcast_to(np.diag([1.0, -1.0]), (m.n_triangles, 2, 2))
    with pytest.raises(AssemblyError):
        diffusion_matrix(m, bad)
    with pytest.raises(AssemblyError):
        diffusion_matrix(m, np.ones((3, 2, 2)))


def test_assemble_uses_centroids():
    m = build_mesh(3)
    seen = []

    def disp(c):
        seen.append(c.copy())
        return np.broadcast_to(np.eye(2), (c.shape[0], 2, 2))

    s = assemble(m, disp, t=0.3)
    np.testing.assert_allclose(seen[0], m.centroids())
    assert s.evaluated_at == 0.3


def test_step_respects_bounds_and_norm():
    m = build_mesh(9)
    rng = np.random.default_rng(0)
    c0 = (rng.random(m.n_nodes) > 0.5).astype(float)
    s = assemble(m, lambda c: np.broadcast_to(np.diag([1.0, 1e-3]), (c.shape[0], 2, 2)))
    prev = ConcentrationField(c0, "F", 0.0)
    b = invariant_bounds(c0)
    for _ in range(5):
        nxt = step_invariant(prev, s, 0.01, b)
        assert nxt.values.min() >= 0 and nxt.values.max() <= 1
        assert m_norm(s.mass_matrix, nxt.values) <= m_norm(s.mass_matrix, prev.values) + 1e-12
        prev = nxt
    assert prev.time == pytest.approx(0.05)
    with pytest.raises(ValueError):
        step_invariant(prev, s, 0.0, b)


def test_step_unconstrained_conserves_mass():
    m = build_mesh(9)
    c0 = np.where(m.node_coords[:, 0] < 0.5, 1.0, 0.0)
    s = assemble(m, lambda c: np.broadcast_to(np.diag([1.0, 0.01]), (c.shape[0], 2, 2)))
    c1 = step_invariant(ConcentrationField(c0, "F", 0.0), s, 0.01, BoxBounds.unbounded())
    M = s.mass_matrix
    assert (M @ c1.values).sum() == pytest.approx((M @ c0).sum(), abs=1e-13)


def test_species_tag_validated():
    with pytest.raises(ValueError):
        ConcentrationField(np.zeros(2), "X", 0.0)
    with pytest.raises(ValueError):
        ConcentrationField(np.array([np.nan]), "A", 0.0)


def test_simulation_shapes_and_snapshots(tmp_path):
    cfg = SimulationConfig(nodes_per_side=6, dt=0.05, end_time=0.3, snapshot_stride=4)
    r = run_simulation(cfg)
    assert r.c_F.shape == (7, 36) and r.n_steps == 6
    assert r.snapshot_indices() == [0, 4, 6]
    r.write_snapshots(tmp_path / "s.csv", "x", species=("A",))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sim_id,t,node_id,species,value"
    assert len(lines) == 1 + 3 * 36


def test_manufactured_solution_second_order():
    errs, orders = observed_orders((11, 21, 41))
    assert np.all(np.diff(errs) < 0)
    assert np.all(np.abs(orders - 2.0) <= 0.3)
