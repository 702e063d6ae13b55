"""Velocity field, dispersion tensor, initial data and species recovery.

All concentrations are dimensionless. The velocity only enters through the
dispersion tensor; there is no advective transport.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

_SNAP = 1e-9


@dataclass(frozen=True)
class Stoichiometry:
    n_A: float = 1.0
    n_B: float = 1.0
    n_C: float = 1.0
    k_AB: float = 1.0  # cancels out of the invariant formulation

    def __post_init__(self):
        for name in ("n_A", "n_B", "n_C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"stoichiometric coefficient {name} must be positive")


@dataclass(frozen=True)
class VelocityConfig:
    kappa_fL: float = 3.0
    v0: float = 0.1
    period_T: float = 1e-4

    def __post_init__(self):
        if self.kappa_fL <= 0:
            raise ValueError("kappa_fL must be positive")
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")
        if not self.period_T > 0:
            raise ValueError("period_T must be positive")


@dataclass(frozen=True)
class DispersionConfig:
    alpha_L: float = 1.0
    alpha_T: float = 1e-2
    D_m: float = 1e-3

    def __post_init__(self):
        if not self.alpha_T > 0:
            raise ValueError("alpha_T must be positive")
        if self.alpha_L < self.alpha_T:
            raise ValueError("alpha_L must be >= alpha_T")
        if self.D_m < 0:
            raise ValueError("D_m must be non-negative")

    @property
    def aniso_ratio(self) -> float:
        return self.alpha_L / self.alpha_T

    @classmethod
    def from_ratio(cls, ratio: float, D_m: float, alpha_L: float = 1.0):
        """alpha_L is held fixed and alpha_T = alpha_L / ratio."""
        return cls(alpha_L=alpha_L, alpha_T=alpha_L / ratio, D_m=D_m)

    def eigenvalue_bounds(self, speed: float) -> tuple[float, float]:
        """(lambda_min, lambda_max) of the tensor for a velocity of magnitude ``speed``."""
        return self.D_m + self.alpha_T * speed, self.D_m + self.alpha_L * speed


_CONFIG_KEYS = (
    "n_A", "n_B", "n_C", "kappa_fL", "v0", "period_T", "alpha_L", "alpha_T",
    "D_m", "nodes_per_side", "dt", "end_time", "snapshot_stride",
)


@dataclass(frozen=True)
class SimulationConfig:
    stoichiometry: Stoichiometry = field(default_factory=Stoichiometry)
    velocity: VelocityConfig = field(default_factory=VelocityConfig)
    dispersion: DispersionConfig = field(default_factory=DispersionConfig)
    nodes_per_side: int = 21
    dt: float = 0.01
    end_time: float = 1.0
    snapshot_stride: int = 10
    domain_length: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nodes_per_side < 2:
            raise ValueError("nodes_per_side must be >= 2")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        ratio = self.end_time / self.dt
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("end_time must be an integral multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.end_time / self.dt))

    def to_dict(self) -> dict:
        flat = {}
        flat.update(asdict(self.stoichiometry))
        flat.pop("k_AB")
        flat.update(asdict(self.velocity))
        flat.update(asdict(self.dispersion))
        flat.update(
            nodes_per_side=self.nodes_per_side,
            dt=self.dt,
            end_time=self.end_time,
            snapshot_stride=self.snapshot_stride,
        )
        return {k: flat[k] for k in _CONFIG_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        missing = [k for k in _CONFIG_KEYS if k not in d]
        if missing:
            raise ValueError(f"config is missing keys: {missing}")
        return cls(
            stoichiometry=Stoichiometry(d["n_A"], d["n_B"], d["n_C"]),
            velocity=VelocityConfig(d["kappa_fL"], d["v0"], d["period_T"]),
            dispersion=DispersionConfig(d["alpha_L"], d["alpha_T"], d["D_m"]),
            nodes_per_side=int(d["nodes_per_side"]),
            dt=float(d["dt"]),
            end_time=float(d["end_time"]),
            snapshot_stride=int(d["snapshot_stride"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimulationConfig":
        return cls.from_dict(json.loads(text))


def flow_phase(t: float, period_T: float) -> int:
    """0 on [nu*T, (nu+1/2)*T), 1 on [(nu+1/2)*T, (nu+1)*T).

    Times within a relative 1e-9 of a half-period boundary snap onto it, so
    ``t = n*dt`` lands on the same branch regardless of round-off.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    half = 2.0 * t / period_T
    k = math.floor(half)
    nearest = round(half)
    if abs(half - nearest) <= _SNAP * max(1.0, abs(half)):
        k = nearest
    return int(k % 2)


def velocity(p, t: float, cfg: VelocityConfig, domain_length: float = 1.0) -> np.ndarray:
    """Velocity at point(s) ``p`` (shape (2,) or (n, 2)) and time ``t``."""
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    w = 2.0 * np.pi * cfg.kappa_fL / domain_length
    vx = np.cos(w * y)
    vy = np.cos(w * x)
    if flow_phase(t, cfg.period_T) == 0:
        vx = vx + cfg.v0 * np.sin(w * y)
    else:
        vy = vy + cfg.v0 * np.sin(w * x)
    return np.stack([vx, vy], axis=-1)


def tensor_from_velocity(v, dcfg: DispersionConfig) -> np.ndarray:
    """Dispersion tensor for velocity vector(s) ``v`` of shape (..., 2)."""
    v = np.asarray(v, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    eye = np.eye(2)
    D = (dcfg.D_m + dcfg.alpha_T * speed)[..., None, None] * eye
    moving = speed >= 1e-12
    safe = np.where(moving, speed, 1.0)
    outer = v[..., :, None] * v[..., None, :]
    coef = np.where(moving, (dcfg.alpha_L - dcfg.alpha_T) / safe, 0.0)
    D = D + coef[..., None, None] * outer
    # isotropic fallback when the flow stagnates
    D = np.where(moving[..., None, None], D, dcfg.D_m * eye)
    return D


def dispersion_tensor(
    p, t: float, dcfg: DispersionConfig, vcfg: VelocityConfig, domain_length: float = 1.0
) -> np.ndarray:
    return tensor_from_velocity(velocity(p, t, vcfg, domain_length), dcfg)


def initial_invariants(mesh, stoich: Stoichiometry) -> tuple[np.ndarray, np.ndarray]:
    """Nodal c_F and c_G at t = 0 for the segregated reaction tank."""
    x = mesh.node_coords[:, 0]
    half = 0.5 * mesh.domain_length
    tol = 1e-12 * mesh.domain_length
    c_A = np.where(x < half - tol, 1.0, 0.0)
    c_B = np.where(x > half + tol, 1.0, 0.0)
    interface = np.abs(x - half) <= tol
    c_A[interface] = 0.5
    c_B[interface] = 0.5
    c_C = np.zeros_like(x)
    c_F = c_A + (stoich.n_A / stoich.n_C) * c_C
    c_G = c_B + (stoich.n_B / stoich.n_C) * c_C
    return c_F, c_G


def recover_species(c_F, c_G, stoich: Stoichiometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reactant and product concentrations from the two invariants.

    A and B never co-exist at a node; the product takes what is left of F.
    """
    c_F = np.asarray(c_F, dtype=float)
    c_G = np.asarray(c_G, dtype=float)
    r_AB = stoich.n_A / stoich.n_B
    c_A = np.maximum(c_F - r_AB * c_G, 0.0)
    c_B = (stoich.n_B / stoich.n_A) * np.maximum(-c_F + r_AB * c_G, 0.0)
    c_C = (stoich.n_C / stoich.n_A) * (c_F - c_A)
    return c_A, c_B, c_C
