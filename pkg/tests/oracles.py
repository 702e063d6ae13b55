"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np


def box_qp_enumerate(H, g, lo, hi):
    """Exact box-QP minimizer by trying all 3^n active-set patterns."""
    n = g.size
    best, best_val = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pat = np.array(pattern)
        x = np.where(pat == 1, lo, np.where(pat == 2, hi, 0.0))
        if np.any(~np.isfinite(x[pat != 0])):
            continue
        free = pat == 0
        if free.any():
            rhs = g[free] - H[np.ix_(free, ~free)] @ x[~free]
            x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        val = 0.5 * x @ H @ x - g @ x
        if val < best_val - 1e-14:
            best, best_val = x, val
    return best


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * lam) @ Q.T


def p1_stiffness_reference(coords, tris, D):
    """P1 stiffness via basis coefficients from a 3x3 Vandermonde solve."""
    n = coords.shape[0]
    K = np.zeros((n, n))
    for t in tris:
        P = coords[t]
        V = np.column_stack([np.ones(3), P])
        coef = np.linalg.solve(V, np.eye(3))  # column k: (a, b, c) of phi_k
        grads = coef[1:].T
        area = 0.5 * abs(np.linalg.det(V))
        K[np.ix_(t, t)] += area * grads @ D @ grads.T
    return K


def p1_mass_reference(coords, tris):
    """Consistent mass via the exact 3-point edge-midpoint rule (degree 2)."""
    n = coords.shape[0]
    M = np.zeros((n, n))
    mids = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    for t in tris:
        P = coords[t]
        area = 0.5 * abs(np.linalg.det(np.column_stack([np.ones(3), P])))
        for lam in mids:
            M[np.ix_(t, t)] += area / 3.0 * np.outer(lam, lam)
    return M


def _project_box_hyperplane(v, w, C):
    """Euclidean projection onto {0 <= z <= C, w'z = 0} for w in {+1, -1}^n."""
    from scipy.optimize import brentq

    f = lambda lam: w @ np.clip(v - lam * w, 0.0, C)
    span = np.abs(v).max() + C + 1.0
    lam = brentq(f, -span, span, xtol=1e-15, rtol=1e-15, maxiter=500)
    return np.clip(v - lam * w, 0.0, C)


def _polish(Q, p, w, C, z, tol):
    """Exact KKT solve on the active set suggested by ``z``; None if inconsistent."""
    at0 = z <= tol * C
    atC = z >= C - tol * C
    free = ~(at0 | atC)
    x = np.where(atC, C, 0.0)
    nf = int(free.sum())
    # [Q_ff w_f; w_f' 0] [x_f; b] = [-p_f - Q_fb x_b; -w_b' x_b]
    A = np.zeros((nf + 1, nf + 1))
    A[:nf, :nf] = Q[np.ix_(free, free)]
    A[:nf, nf] = w[free]
    A[nf, :nf] = w[free]
    rhs = np.concatenate([-p[free] - Q[np.ix_(free, ~free)] @ x[~free], [-(w[~free] @ x[~free])]])
    try:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    x[free] = sol[:nf]
    b = sol[nf] if nf else None
    if np.any(x < -1e-12) or np.any(x > C + 1e-12) or abs(w @ x) > 1e-10:
        return None
    g = Q @ x + p
    if b is None:
        # any b with g + b w >= 0 on the lower bound and <= 0 on the upper bound
        lo = max([-g[i] / w[i] if w[i] > 0 else -np.inf for i in np.flatnonzero(at0)]
                 + [g[i] / -w[i] if w[i] < 0 else -np.inf for i in np.flatnonzero(atC)], default=-np.inf)
        b = lo if np.isfinite(lo) else 0.0
    r = g + b * w
    viol = np.concatenate([np.abs(r[free]), np.maximum(-r[at0], 0), np.maximum(r[atC], 0)])
    if viol.size and viol.max() > 1e-9:
        return None
    return np.clip(x, 0.0, C)


def dual_qp_reference(Q, p, w, C, iters=3000):
    """min 0.5 z'Qz + p'z on the box [0, C] with w'z = 0.

    Accelerated projected gradient finds the active set, then the KKT system
    on that set is solved exactly. Returns (z, objective). Independent of any
    SMO logic.
    """
    L = np.linalg.eigvalsh(Q).max() + 1e-12
    z = np.zeros(p.size)
    yk, t = z.copy(), 1.0
    for k in range(1, iters + 1):
        z_new = _project_box_hyperplane(yk - (Q @ yk + p) / L, w, C)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        yk = z_new + (t - 1) / t_new * (z_new - z)
        z, t = z_new, t_new
        if k % 100 == 0:
            exact = _polish(Q, p, w, C, z, 1e-6)
            if exact is not None:
                z = exact
                break
    return z, float(0.5 * z @ Q @ z + p @ z)
