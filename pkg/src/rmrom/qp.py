"""Bound-constrained convex quadratic programs.

Solves::

    minimize   0.5 x'Hx - g'x
    subject to lower <= x <= upper

with H symmetric positive definite. The main route is a primal-dual
active-set iteration; when that cycles, a primal active-set method (finite
termination, one constraint change per iteration) finishes the job.
Free-block solves use a symmetric SuperLU factorization with diagonal
pivoting, so its pivots double as an SPD check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

logger = logging.getLogger(__name__)


class QPError(RuntimeError):
    """H is not SPD, or the input is malformed."""


class QPConvergenceError(QPError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (KKT residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray | float = 0.0
    upper: np.ndarray | float = np.inf

    def __post_init__(self):
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("lower bound exceeds upper bound")

    def expand(self, n):
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        return lo, hi

    @classmethod
    def unbounded(cls):
        return cls(-np.inf, np.inf)


def _as_csc(H):
    if sp.issparse(H):
        return sp.csc_matrix(H, dtype=float)
    return sp.csc_matrix(np.asarray(H, dtype=float))


def _factor(H_ff):
    if H_ff.shape[0] == 0:
        return None
    try:
        lu = splu(
            H_ff,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:  # exactly singular
        raise QPError(f"H is singular on the free block: {exc}") from None
    piv = lu.U.diagonal()
    if np.any(piv <= 0) or not np.all(np.isfinite(piv)):
        raise QPError("H is not symmetric positive definite (non-positive pivot)")
    return lu


class _FreeSolver:
    """x_F = H_FF^{-1} (g_F - H_FA x_A); factorizations cached per free set."""

    def __init__(self, H):
        self.H = H
        self._key = None
        self._lu = None

    def solve(self, free, x, g):
        idx = np.flatnonzero(free)
        out = x.copy()
        if idx.size == 0:
            return out
        key = free.tobytes()
        if key != self._key:
            self._lu = _factor(self.H[idx][:, idx].tocsc())
            self._key = key
        fixed = np.flatnonzero(~free)
        rhs = g[idx].copy()
        if fixed.size:
            rhs -= self.H[idx][:, fixed] @ x[fixed]
        out[idx] = self._lu.solve(rhs)
        return out


def kkt_residual(H, g, x, lower, upper, tol_bound=0.0):
    """Largest violation of the KKT conditions, in the units of ``Hx - g``.

    A component counts as active when it sits exactly on a bound (within
    ``tol_bound``).
    """
    mu = H @ x - g
    at_lo = x <= lower + tol_bound
    at_hi = x >= upper - tol_bound
    free = ~(at_lo | at_hi)
    viol = np.zeros_like(x)
    viol[free] = np.abs(mu[free])
    viol[at_lo & ~at_hi] = np.maximum(-mu[at_lo & ~at_hi], 0.0)
    viol[at_hi & ~at_lo] = np.maximum(mu[at_hi & ~at_lo], 0.0)
    bound_viol = np.maximum(lower - x, 0.0) + np.maximum(x - upper, 0.0)
    return float(max(viol.max(initial=0.0), bound_viol.max(initial=0.0)))


def _pdas(H, g, lo, hi, x, solver, max_iter):
    n = x.size
    d = H.diagonal()
    mu = H @ x - g
    seen = set()
    for _ in range(max_iter):
        trial = x - mu / d
        act_lo = trial < lo
        act_hi = (trial > hi) & ~act_lo
        free = ~(act_lo | act_hi)
        key = (act_lo.tobytes(), act_hi.tobytes())
        if key in seen:
            return None
        seen.add(key)
        x = np.empty(n)
        x[act_lo] = lo[act_lo]
        x[act_hi] = hi[act_hi]
        x[free] = 0.0
        x = solver.solve(free, x, g)
        mu = H @ x - g
        mu[free] = 0.0
        if (
            np.all(x[free] >= lo[free])
            and np.all(x[free] <= hi[free])
            and np.all(mu[act_lo] >= 0)
            and np.all(mu[act_hi] <= 0)
        ):
            return x, act_lo, act_hi
    return None


def _primal_active_set(H, g, lo, hi, x, solver, max_iter):
    x = np.clip(x, lo, hi)
    act_lo = x <= lo
    act_hi = (x >= hi) & ~act_lo
    for _ in range(max_iter):
        free = ~(act_lo | act_hi)
        target = solver.solve(free, x, g)
        step = target - x
        # ratio test along step over the free block
        alpha = 1.0
        block = -1
        block_hi = False
        with np.errstate(divide="ignore", invalid="ignore"):
            down = free & (step < 0)
            if down.any():
                r = (lo[down] - x[down]) / step[down]
                j = np.argmin(r)
                if r[j] < alpha:
                    alpha, block, block_hi = r[j], np.flatnonzero(down)[j], False
            up = free & (step > 0)
            if up.any():
                r = (hi[up] - x[up]) / step[up]
                j = np.argmin(r)
                if r[j] < alpha:
                    alpha, block, block_hi = r[j], np.flatnonzero(up)[j], True
        alpha = max(alpha, 0.0)
        x = x + alpha * step
        if block >= 0:
            if block_hi:
                x[block] = hi[block]
                act_hi[block] = True
            else:
                x[block] = lo[block]
                act_lo[block] = True
            continue
        mu = H @ x - g
        wrong_lo = np.where(act_lo, -mu, 0.0)
        wrong_hi = np.where(act_hi, mu, 0.0)
        worst = np.maximum(wrong_lo, wrong_hi)
        j = int(np.argmax(worst)) if worst.size else 0
        if worst.size == 0 or worst[j] <= 0:
            return x, act_lo, act_hi
        act_lo[j] = False
        act_hi[j] = False
    return None


def solve_box_qp(H, g, bounds: BoxBounds | None = None, tol=1e-10, x0=None, max_iter=None):
    """Minimize ``0.5 x'Hx - g'x`` subject to ``bounds``.

    ``x0`` warm-starts the active set. The returned vector lies inside the
    bounds exactly. Raises :class:`QPError` if H is not SPD and
    :class:`QPConvergenceError` if the KKT conditions cannot be met to
    ``tol`` (relative to ``max|g|``) within the iteration cap.
    """
    H = _as_csc(H)
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    if H.shape != (n, n):
        raise QPError(f"H has shape {H.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(g)):
        raise QPError("g must be finite")
    bounds = bounds if bounds is not None else BoxBounds.unbounded()
    lo, hi = bounds.expand(n)
    if max_iter is None:
        max_iter = max(50, 4 * n)
    solver = _FreeSolver(H)

    if x0 is None:
        x = np.clip(np.zeros(n), lo, hi)
    else:
        x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    x = np.where(np.isfinite(x), x, 0.0)

    if np.all(np.isinf(lo)) and np.all(np.isinf(hi)):
        out = solver.solve(np.ones(n, bool), np.zeros(n), g)
    else:
        res = _pdas(H, g, lo, hi, x, solver, min(max_iter, 100))
        if res is None:
            logger.debug("active-set iteration cycled; switching to primal active set")
            res = _primal_active_set(H, g, lo, hi, x, solver, max_iter)
        if res is None:
            out = np.clip(x, lo, hi)
            raise QPConvergenceError(
                "box QP did not converge", kkt_residual(H, g, out, lo, hi)
            )
        out, act_lo, act_hi = res
        out[act_lo] = lo[act_lo]
        out[act_hi] = hi[act_hi]
    out = np.clip(out, lo, hi)

    scale = max(float(np.abs(g).max(initial=0.0)), 1.0)
    resid = kkt_residual(H, g, out, lo, hi)
    if resid > tol * scale:
        raise QPConvergenceError("box QP solution fails the KKT check", resid)
    return out
