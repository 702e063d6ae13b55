"""Linear triangles on a structured square mesh and the non-negative stepper.

Each backward-Euler step for an invariant is the bound-constrained QP::

    minimize   0.5 c'(M/dt + K_d)c - (1/dt) c'M c_prev
    subject to lower <= c <= upper

with zero-flux boundaries and no volumetric source.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import physics
from .qp import BoxBounds, solve_box_qp

logger = logging.getLogger(__name__)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class MeshError(ValueError):
    pass


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes_per_side: int
    node_coords: np.ndarray
    triangles: np.ndarray
    domain_length: float

    @property
    def n_nodes(self):
        return self.node_coords.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def h(self):
        return self.domain_length / (self.nodes_per_side - 1)

    def signed_areas(self):
        p = self.node_coords[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self):
        return self.node_coords[self.triangles].mean(axis=1)


def build_mesh(nodes_per_side: int, domain_length: float = 1.0) -> Mesh:
    """Uniform grid on [0, L]^2, each square cut along its lower-left/upper-right diagonal.

    Nodes are numbered row-major: node ``j * n + i`` sits at ``(i*h, j*h)``.
    """
    n = int(nodes_per_side)
    if n < 2:
        raise MeshError(f"nodes_per_side must be >= 2, got {nodes_per_side}")
    if not domain_length > 0:
        raise MeshError("domain_length must be positive")
    s = np.linspace(0.0, domain_length, n)
    X, Y = np.meshgrid(s, s)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1))
    n0 = (j * n + i).ravel()
    n1 = n0 + 1
    n2 = n0 + n + 1
    n3 = n0 + n
    tris = np.concatenate([np.column_stack([n0, n1, n2]), np.column_stack([n0, n2, n3])])
    return Mesh(n, coords, tris.astype(np.int64), float(domain_length))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    mass_matrix: sp.csr_matrix
    diffusion_matrix: sp.csr_matrix
    evaluated_at: float = 0.0


def _element_geometry(mesh):
    p = mesh.node_coords[mesh.triangles]
    area = mesh.signed_areas()
    # gradients of the three barycentric basis functions, shape (E, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=-1) / (2.0 * area)[:, None, None]
    return area, grads


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    area, _ = _element_geometry(mesh)
    return _scatter(mesh, area[:, None, None] * _LOCAL_MASS)


def diffusion_matrix(mesh: Mesh, tensors: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix for per-element constant tensors of shape (E, 2, 2)."""
    tensors = np.asarray(tensors, dtype=float)
    if tensors.shape != (mesh.n_triangles, 2, 2):
        raise AssemblyError(f"expected tensors of shape {(mesh.n_triangles, 2, 2)}")
    asym = np.abs(tensors[:, 0, 1] - tensors[:, 1, 0])
    det = tensors[:, 0, 0] * tensors[:, 1, 1] - tensors[:, 0, 1] * tensors[:, 1, 0]
    bad = (tensors[:, 0, 0] <= 0) | (det <= 0) | (asym > 1e-12 * np.abs(tensors).max(axis=(1, 2)))
    bad |= ~np.isfinite(tensors).all(axis=(1, 2))
    if bad.any():
        e = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"dispersion tensor is not SPD at element {e}: {tensors[e].tolist()}")
    area, grads = _element_geometry(mesh)
    local = area[:, None, None] * np.einsum("eik,ekl,ejl->eij", grads, tensors, grads)
    return _scatter(mesh, local)


def assemble(mesh: Mesh, dispersion: Callable[[np.ndarray], np.ndarray], t: float = 0.0) -> AssembledSystem:
    """Consistent mass and diffusion matrices.

    ``dispersion`` maps an (E, 2) array of element centroids to (E, 2, 2)
    tensors; each element uses the tensor at its centroid.
    """
    tensors = np.asarray(dispersion(mesh.centroids()), dtype=float)
    if tensors.shape == (2, 2):
        tensors = np.broadcast_to(tensors, (mesh.n_triangles, 2, 2))
    return AssembledSystem(mass_matrix(mesh), diffusion_matrix(mesh, tensors), float(t))


@dataclass(frozen=True, eq=False)
class ConcentrationField:
    values: np.ndarray
    species_tag: str
    time: float

    def __post_init__(self):
        if self.species_tag not in {"A", "B", "C", "F", "G"}:
            raise ValueError(f"unknown species tag {self.species_tag!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("concentration values must be finite")


def m_norm(M, c):
    return float(np.sqrt(max(c @ (M @ c), 0.0)))


def step_invariant(
    c_prev: ConcentrationField,
    system: AssembledSystem,
    dt: float,
    bounds: BoxBounds,
    tol: float = 1e-10,
    *,
    time: float | None = None,
    lhs=None,
) -> ConcentrationField:
    """Advance one invariant by one backward-Euler step under box bounds."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    M = system.mass_matrix
    H = lhs if lhs is not None else (M / dt + system.diffusion_matrix)
    g = (M @ c_prev.values) / dt
    x = solve_box_qp(H, g, bounds, tol=tol, x0=c_prev.values)
    t = c_prev.time + dt if time is None else time
    return ConcentrationField(x, c_prev.species_tag, t)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config: physics.SimulationConfig
    mesh: Mesh
    times: np.ndarray          # (N+1,), t_0 = 0 included
    c_F: np.ndarray            # (N+1, n_nodes)
    c_G: np.ndarray
    mass_matrix: sp.csr_matrix
    bounds_F: BoxBounds
    bounds_G: BoxBounds
    diagnostics: list = field(default_factory=list)

    @property
    def n_steps(self):
        return self.times.size - 1

    def species(self, index=None):
        """(c_A, c_B, c_C) for every stored time, or for one time index."""
        st = self.config.stoichiometry
        if index is None:
            return physics.recover_species(self.c_F, self.c_G, st)
        return physics.recover_species(self.c_F[index], self.c_G[index], st)

    def snapshot_indices(self):
        stride = self.config.snapshot_stride
        idx = list(range(0, self.times.size, stride))
        if idx[-1] != self.times.size - 1:
            idx.append(self.times.size - 1)
        return idx

    def write_snapshots(self, path, sim_id="sim", species=("F", "G", "A", "B", "C")):
        """Long-format CSV ``sim_id,t,node_id,species,value`` at the snapshot stride."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sim_id", "t", "node_id", "species", "value"])
            for k in self.snapshot_indices():
                fields = dict(zip("ABC", self.species(k)))
                fields["F"] = self.c_F[k]
                fields["G"] = self.c_G[k]
                t = f"{self.times[k]:.10g}"
                for tag in species:
                    for node, v in enumerate(fields[tag]):
                        w.writerow([sim_id, t, node, tag, repr(float(v))])


def write_field_csv(path, mesh: Mesh, values):
    """One field as ``node_id,x,y,value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "x", "y", "value"])
        for node, ((x, y), v) in enumerate(zip(mesh.node_coords, values)):
            w.writerow([node, repr(float(x)), repr(float(y)), repr(float(v))])


def invariant_bounds(c0):
    """[0, max(c0)]: non-negativity plus the discrete maximum principle."""
    return BoxBounds(0.0, float(np.max(c0)))


def run_simulation(config: physics.SimulationConfig, tol: float = 1e-10) -> SimulationResult:
    """Non-negative FEM solve of both invariants on ``[0, end_time]``."""
    mesh = build_mesh(config.nodes_per_side, config.domain_length)
    stoich = config.stoichiometry
    cF0, cG0 = physics.initial_invariants(mesh, stoich)
    bF, bG = invariant_bounds(cF0), invariant_bounds(cG0)
    dt = config.dt
    M = mass_matrix(mesh)
    centroids = mesh.centroids()

    # the tensor only depends on which half-period branch is active
    systems = {}

    def lhs_for(t):
        phase = physics.flow_phase(t, config.velocity.period_T)
        if phase not in systems:
            D = physics.dispersion_tensor(
                centroids, t, config.dispersion, config.velocity, config.domain_length
            )
            Kd = diffusion_matrix(mesh, D)
            systems[phase] = (AssembledSystem(M, Kd, t), (M / dt + Kd).tocsc())
        return systems[phase]

    N = config.n_steps
    times = np.arange(N + 1) * dt
    cF = np.empty((N + 1, mesh.n_nodes))
    cG = np.empty((N + 1, mesh.n_nodes))
    cF[0], cG[0] = cF0, cG0
    mass0 = (M @ cF0).sum(), (M @ cG0).sum()
    diags = []
    prevF = ConcentrationField(cF0, "F", 0.0)
    prevG = ConcentrationField(cG0, "G", 0.0)
    for n in range(N):
        t_next = times[n + 1]
        system, H = lhs_for(t_next)
        prevF = step_invariant(prevF, system, dt, bF, tol, time=t_next, lhs=H)
        prevG = step_invariant(prevG, system, dt, bG, tol, time=t_next, lhs=H)
        cF[n + 1], cG[n + 1] = prevF.values, prevG.values
        d = {
            "step": n + 1,
            "t": t_next,
            "mass_drift_F": abs((M @ cF[n + 1]).sum() - mass0[0]) / mass0[0],
            "mass_drift_G": abs((M @ cG[n + 1]).sum() - mass0[1]) / mass0[1],
            "m_norm_F": m_norm(M, cF[n + 1]),
            "m_norm_G": m_norm(M, cG[n + 1]),
        }
        diags.append(d)
        logger.debug("step %(step)d t=%(t).4g drift F=%(mass_drift_F).2e G=%(mass_drift_G).2e", d)
    return SimulationResult(config, mesh, times, cF, cG, M, bF, bG, diags)


def manufactured_error(nodes_per_side, diffusivity=0.1, end_time=0.1, dt_factor=0.5):
    """L2 (mass-norm) error against u = exp(-2 pi^2 D t) cos(pi x) cos(pi y).

    Isotropic diffusion on the unit square with zero-flux boundaries. The
    step is tied to the mesh, dt = dt_factor * h^2, so the backward-Euler
    error shrinks at the same rate as the spatial error.
    """
    mesh = build_mesh(nodes_per_side)
    xy = mesh.node_coords

    def exact(t):
        return (np.exp(-2.0 * np.pi**2 * diffusivity * t)
                * np.cos(np.pi * xy[:, 0]) * np.cos(np.pi * xy[:, 1]))

    n_steps = max(1, int(np.ceil(end_time / (dt_factor * mesh.h**2))))
    dt = end_time / n_steps
    system = assemble(mesh, lambda c: diffusivity * np.eye(2))
    H = (system.mass_matrix / dt + system.diffusion_matrix).tocsc()
    field_ = ConcentrationField(exact(0.0), "F", 0.0)
    free = BoxBounds.unbounded()
    for _ in range(n_steps):
        field_ = step_invariant(field_, system, dt, free, lhs=H)
    return m_norm(system.mass_matrix, field_.values - exact(end_time))


def observed_orders(sizes=(11, 21, 41), **kw):
    """(errors, orders) with orders[i] = log2(err[i] / err[i+1]) for halved h."""
    errs = np.array([manufactured_error(n, **kw) for n in sizes])
    hs = 1.0 / (np.asarray(sizes) - 1.0)
    return errs, np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])
