"""SMO decomposition for the RBF-kernel SVM/SVR duals.

Both duals are written in the common form::

    minimize   0.5 a'Qa + p'a
    subject to y'a = 0,  0 <= a <= C,  y in {+1, -1}

with ``Q_ts = y_t y_s K(x_r(t), x_r(s))``. For classification ``r(t) = t``;
for epsilon-SVR there are ``2n`` variables and ``r(t) = t mod n``.

Kernel rows live in a fixed-size LRU cache so memory stays bounded.
"""

import math

import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True)
def _fill_row(X, gamma, i, out):
    n, f = X.shape
    for t in range(n):
        d = 0.0
        for k in range(f):
            diff = X[i, k] - X[t, k]
            d += diff * diff
        out[t] = math.exp(-gamma * d)


@njit(cache=True)
def _get_row(i, X, gamma, rows, slot_of, owner, stamp, clock):
    clock[0] += 1
    s = slot_of[i]
    if s >= 0:
        stamp[s] = clock[0]
        return s
    s = 0
    best = stamp[0]
    for k in range(1, stamp.shape[0]):
        if stamp[k] < best:
            best = stamp[k]
            s = k
    if owner[s] >= 0:
        slot_of[owner[s]] = -1
    owner[s] = i
    slot_of[i] = s
    stamp[s] = clock[0]
    _fill_row(X, gamma, i, rows[s])
    return s


@njit(cache=True)
def _select_i(active, n_active, y, alpha, G, C):
    """Index maximizing -y_t G_t over I_up, with the maximum."""
    Gmax = -np.inf
    i = -1
    for k in range(n_active):
        t = active[k]
        if y[t] > 0:
            if alpha[t] < C and -G[t] >= Gmax:
                Gmax = -G[t]
                i = t
        else:
            if alpha[t] > 0 and G[t] >= Gmax:
                Gmax = G[t]
                i = t
    return i, Gmax


@njit(cache=True)
def _be_shrunk(t, y, alpha, G, C, Gmax1, Gmax2):
    if alpha[t] >= C:
        if y[t] > 0:
            return -G[t] > Gmax1
        return -G[t] > Gmax2
    if alpha[t] <= 0:
        if y[t] > 0:
            return G[t] > Gmax2
        return G[t] > Gmax1
    return False


@njit(cache=True)
def _reconstruct(active, n_active, l, y, p, alpha, G, G_bar, C, rmap,
                 X, gamma, rows, slot_of, owner, stamp, clock):
    """Recompute G on the shrunk variables from G_bar and the free variables."""
    if n_active == l:
        return
    for k in range(n_active, l):
        t = active[k]
        G[t] = G_bar[t] + p[t]
    for k in range(n_active):
        s = active[k]
        if 0 < alpha[s] < C:
            sl = _get_row(rmap[s], X, gamma, rows, slot_of, owner, stamp, clock)
            a = alpha[s] * y[s]
            for m in range(n_active, l):
                t = active[m]
                G[t] += a * y[t] * rows[sl, rmap[t]]


@njit(cache=True)
def smo_solve(X, gamma, y, p, C, tol, max_iter, cache_rows, second_order, shrinking=True):
    """Returns (alpha, G, n_iter, converged, gap) with gap = m(a) - M(a).

    Shrinking follows libsvm: bounded variables that cannot re-enter the
    working set are set aside every ``min(l, 1000)`` updates and their
    gradients rebuilt from ``G_bar`` before the final optimality check.
    """
    n = X.shape[0]
    l = y.shape[0]
    m = max(2, min(cache_rows, n))
    rows = np.empty((m, n))
    slot_of = -np.ones(n, dtype=np.int64)
    owner = -np.ones(m, dtype=np.int64)
    stamp = -np.ones(m, dtype=np.int64)
    clock = np.zeros(1, dtype=np.int64)
    rmap = np.empty(l, dtype=np.int64)
    for t in range(l):
        rmap[t] = t % n

    alpha = np.zeros(l)
    G = p.copy()
    G_bar = np.zeros(l)
    active = np.arange(l)
    n_active = l
    unshrink = False
    counter = min(l, 1000)
    it = 0
    gap = np.inf
    converged = False
    i, Gmax = _select_i(active, n_active, y, alpha, G, C)
    recheck = False
    while it < max_iter:
        if shrinking and not recheck:
            counter -= 1
            if counter == 0:
                counter = min(l, 1000)
                # shrink against the current violating pair bounds
                Gmax1 = -np.inf
                Gmax2 = -np.inf
                for k in range(n_active):
                    t = active[k]
                    if y[t] > 0:
                        if alpha[t] < C:
                            Gmax1 = max(Gmax1, -G[t])
                        if alpha[t] > 0:
                            Gmax2 = max(Gmax2, G[t])
                    else:
                        if alpha[t] < C:
                            Gmax2 = max(Gmax2, -G[t])
                        if alpha[t] > 0:
                            Gmax1 = max(Gmax1, G[t])
                if not unshrink and Gmax1 + Gmax2 <= 10.0 * tol:
                    unshrink = True
                    _reconstruct(active, n_active, l, y, p, alpha, G, G_bar, C, rmap,
                                 X, gamma, rows, slot_of, owner, stamp, clock)
                    n_active = l
                k = 0
                while k < n_active:
                    if _be_shrunk(active[k], y, alpha, G, C, Gmax1, Gmax2):
                        n_active -= 1
                        tmp = active[k]
                        active[k] = active[n_active]
                        active[n_active] = tmp
                    else:
                        k += 1
                i, Gmax = _select_i(active, n_active, y, alpha, G, C)

        j = -1
        Gmax2 = -np.inf
        if i >= 0:
            si = _get_row(rmap[i], X, gamma, rows, slot_of, owner, stamp, clock)
            obj_min = np.inf
            for k in range(n_active):
                t = active[k]
                if y[t] > 0:
                    if alpha[t] > 0:
                        g = G[t]
                        if g >= Gmax2:
                            Gmax2 = g
                            if not second_order:
                                j = t
                        if second_order:
                            diff = Gmax + g
                            if diff > 0:
                                quad = 2.0 - 2.0 * rows[si, rmap[t]]
                                if quad <= 0:
                                    quad = TAU
                                v = -diff * diff / quad
                                if v <= obj_min:
                                    obj_min = v
                                    j = t
                else:
                    if alpha[t] < C:
                        g = -G[t]
                        if g >= Gmax2:
                            Gmax2 = g
                            if not second_order:
                                j = t
                        if second_order:
                            diff = Gmax + g
                            if diff > 0:
                                quad = 2.0 - 2.0 * rows[si, rmap[t]]
                                if quad <= 0:
                                    quad = TAU
                                v = -diff * diff / quad
                                if v <= obj_min:
                                    obj_min = v
                                    j = t
        gap = Gmax + Gmax2 if i >= 0 else 0.0
        if i < 0 or j < 0 or gap < tol:
            if n_active < l:
                # optimal on the active set; confirm on all variables
                _reconstruct(active, n_active, l, y, p, alpha, G, G_bar, C, rmap,
                             X, gamma, rows, slot_of, owner, stamp, clock)
                n_active = l
                counter = 1
                recheck = True
                i, Gmax = _select_i(active, n_active, y, alpha, G, C)
                continue
            converged = True
            if i < 0 or j < 0:
                gap = 0.0
            break
        it += 1
        recheck = False

        sj = _get_row(rmap[j], X, gamma, rows, slot_of, owner, stamp, clock)
        # the LRU keeps i's row: it was touched just before j's
        si = slot_of[rmap[i]]
        Qij = y[i] * y[j] * rows[si, rmap[j]]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = 2.0 + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = 2.0 - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        ci = y[i] * (alpha[i] - ai_old)
        cj = y[j] * (alpha[j] - aj_old)
        # gradient update fused with the next i selection
        Gmax = -np.inf
        inext = -1
        for k in range(n_active):
            t = active[k]
            rt = rmap[t]
            yt = y[t]
            g = G[t] + yt * (ci * rows[si, rt] + cj * rows[sj, rt])
            G[t] = g
            if yt > 0:
                if alpha[t] < C and -g >= Gmax:
                    Gmax = -g
                    inext = t
            else:
                if alpha[t] > 0 and g >= Gmax:
                    Gmax = g
                    inext = t
        if shrinking:
            for t, old in ((i, ai_old), (j, aj_old)):
                was_up = old >= C
                if was_up != (alpha[t] >= C):
                    sl = slot_of[rmap[t]]
                    sgn = -C if was_up else C
                    for s in range(l):
                        G_bar[s] += sgn * y[t] * y[s] * rows[sl, rmap[s]]
        i = inext
    return alpha, G, it, converged, gap


@njit(cache=True)
def compute_rho(alpha, G, y, C):
    """Offset from the free variables, or the midpoint of the feasible interval."""
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(y.shape[0]):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            nfree += 1
            sfree += yG
    if nfree > 0:
        return sfree / nfree
    return 0.5 * (ub + lb)


@njit(cache=True)
def rbf_decision(X, sv, coef, gamma, bias):
    """sum_j coef_j exp(-gamma |x - sv_j|^2) + bias for every row of X."""
    n, f = X.shape
    out = np.empty(n)
    for a in range(n):
        s = 0.0
        for j in range(sv.shape[0]):
            d = 0.0
            for k in range(f):
                diff = X[a, k] - sv[j, k]
                d += diff * diff
            s += coef[j] * math.exp(-gamma * d)
        out[a] = s + bias
    return out
