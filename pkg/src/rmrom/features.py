"""Feature scaling, feature importance and clustering of scaling exponents."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.ensemble import RandomForestRegressor
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

FEATURE_NAMES = ("period_T", "log10_aniso_ratio", "kappa_fL", "log10_v0", "D_m", "time")
MIXING_THRESHOLDS = (0.25, 0.5, 0.75)


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-column affine map onto [0, 1]; constant columns map to 0 and are flagged."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.constant_ = ~(self.data_max_ > self.data_min_)
        self.n_features_in_ = X.shape[1]
        return self

    def _span(self):
        return np.where(self.constant_, 1.0, self.data_max_ - self.data_min_)

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=float)
        out = (X - self.data_min_) / self._span()
        out[:, self.constant_] = 0.0
        return out

    def inverse_transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=float)
        return X * self._span() + self.data_min_


def minmax_scale(X):
    """(scaled X, fitted scaler)."""
    sc = MinMaxScaler().fit(X)
    return sc.transform(X), sc


@dataclass
class ImportanceReport:
    method: str
    feature_names: list
    scores: np.ndarray
    ranking: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("importance scores must be finite")
        if self.ranking is None:
            self.ranking = np.argsort(-self.scores, kind="stable")

    def ranked_names(self):
        return [self.feature_names[i] for i in self.ranking]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "score", "rank"])
        rank = np.empty_like(self.ranking)
        rank[self.ranking] = np.arange(1, self.ranking.size + 1)
        for name, s, r in zip(self.feature_names, self.scores, rank):
            w.writerow([name, repr(float(s)), int(r)])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({
            "method": self.method,
            "features": list(self.feature_names),
            "scores": [float(s) for s in self.scores],
            "ranking": [self.feature_names[i] for i in self.ranking],
            "extra": self.extra,
        }, indent=1, sort_keys=True)


def _names(X, feature_names):
    if feature_names is None:
        return [f"x{i}" for i in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length does not match X")
    return list(feature_names)


def f_statistics(X, y):
    """Univariate regression F statistic ``r^2 / (1 - r^2) * (n - 2)`` per column."""
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    n = X.shape[0]
    if n < 3:
        raise ValueError("F-test needs at least 3 samples")
    yc = y - y.mean()
    if not np.any(yc):
        raise ValueError("F-test undefined for constant y")
    Xc = X - X.mean(axis=0)
    sx = np.sqrt((Xc**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ yc) / (sx * np.sqrt(yc @ yc))
    r = np.where(sx > 0, r, 0.0)
    r2 = np.minimum(r**2, 1.0)
    with np.errstate(divide="ignore"):
        F = r2 / (1.0 - r2) * (n - 2)
    # a perfectly linear column has unbounded F; keep it finite but on top
    return np.where(np.isfinite(F), F, np.finfo(float).max)


def f_test_importance(X, y, feature_names=None):
    X = check_array(X, dtype=float)
    return ImportanceReport("f_test", _names(X, feature_names), f_statistics(X, y))


def _standardize(v):
    s = v.std()
    return (v - v.mean()) / s if s > 0 else v - v.mean()


def ksg_mutual_information(x, y, k=3, seed=0, jitter=1e-10):
    """Kraskov (first variant) k-NN estimate of I(x; y) in nats, clamped at 0."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    if y.size != n:
        raise ValueError("x and y differ in length")
    if n <= k + 1:
        raise ValueError(f"need more than {k + 1} samples for k={k}")
    rng = np.random.default_rng(seed)
    x = _standardize(x) + jitter * rng.standard_normal(n)
    y = _standardize(y) + jitter * rng.standard_normal(n)
    pts = np.column_stack([x, y])
    dist, _ = cKDTree(pts).query(pts, k=k + 1, p=np.inf)
    eps = dist[:, -1]

    def strict_counts(v):
        vs = np.sort(v)
        hi = np.searchsorted(vs, v + eps, side="left")
        lo = np.searchsorted(vs, v - eps, side="right")
        return hi - lo - 1

    nx = strict_counts(x)
    ny = strict_counts(y)
    mi = digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))
    return max(float(mi), 0.0)


def mutual_info_importance(X, y, k_neighbors=3, seed=0, feature_names=None):
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    seeds = np.random.SeedSequence(seed).generate_state(X.shape[1])
    scores = [
        ksg_mutual_information(X[:, j], y, k_neighbors, seed=int(seeds[j]))
        for j in range(X.shape[1])
    ]
    return ImportanceReport(
        "mutual_info", _names(X, feature_names), scores,
        extra={"k_neighbors": k_neighbors, "seed": seed},
    )


def random_forest_importance(X, y, n_trees=100, seed=0, feature_names=None,
                             max_features=4, holdout=None):
    """Impurity-decrease importances of an un-bootstrapped regression forest.

    Split quality is variance reduction. ``holdout=(X_test, y_test)`` adds the
    forest's R^2 on those rows to ``extra``.
    """
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    names = _names(X, feature_names)
    if X.shape[0] < 2 or np.ptp(y) == 0:
        return ImportanceReport("random_forest", names, np.zeros(X.shape[1]),
                                extra={"degenerate": True, "n_trees": n_trees})
    forest = RandomForestRegressor(
        n_estimators=n_trees,
        criterion="squared_error",
        bootstrap=False,
        max_features=min(max_features, X.shape[1]),
        min_samples_split=2,
        min_samples_leaf=1,
        random_state=seed,
        n_jobs=1,
    ).fit(X, y)
    scores = forest.feature_importances_
    scores = scores / scores.sum() if scores.sum() > 0 else scores
    per_tree = np.array([t.feature_importances_ for t in forest.estimators_])
    extra = {"n_trees": n_trees, "seed": seed, "tree_std": per_tree.std(axis=0).tolist()}
    if holdout is not None:
        from .rom.metrics import r2_score

        Xt, yt = holdout
        extra["holdout_r2"] = r2_score(yt, forest.predict(np.asarray(Xt, dtype=float)))
    return ImportanceReport("random_forest", names, scores, extra=extra)


def label_mixing_class(sigma2):
    """Mixing class 1..4 from the normalized degree of mixing (vectorized)."""
    s = np.asarray(sigma2, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ValueError("degree of mixing must lie in [0, 1]")
    out = 1 + np.searchsorted(MIXING_THRESHOLDS, s, side="right")
    return int(out) if out.ndim == 0 else out.astype(int)


# -- k-means -----------------------------------------------------------------

@dataclass
class ClusterResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    explained_variance_fraction: float
    inertia: float
    inertia_history: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_id", "cluster"])
        for i, c in enumerate(self.assignments):
            w.writerow([i, int(c)])
        return buf.getvalue()


def _sq_dists(P, C):
    return ((P[:, None, :] - C[None, :, :]) ** 2).sum(-1)


def _kmeanspp(P, k, rng):
    n = P.shape[0]
    centers = [P[rng.integers(n)]]
    d2 = ((P - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(P[idx])
        d2 = np.minimum(d2, ((P - P[idx]) ** 2).sum(1))
    return np.array(centers)


def _lloyd(P, C, max_iter=300):
    C = C.copy()
    history = []
    labels = None
    for _ in range(max_iter):
        D = _sq_dists(P, C)
        new = D.argmin(1)
        inertia = float(D[np.arange(P.shape[0]), new].sum())
        history.append(inertia)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(C.shape[0]):
            members = labels == c
            if members.any():
                C[c] = P[members].mean(0)
            else:
                # reseed an empty cluster at the point farthest from its centroid
                far = D[np.arange(P.shape[0]), labels].argmax()
                C[c] = P[far]
                labels[far] = c
    D = _sq_dists(P, C)
    labels = D.argmin(1)
    inertia = float(D[np.arange(P.shape[0]), labels].sum())
    if inertia < history[-1]:
        history.append(inertia)
    return C, labels, inertia, history


def _result(P, C, labels, inertia, history):
    total = float(((P - P.mean(0)) ** 2).sum())
    evf = 1.0 if total == 0 else 1.0 - inertia / total
    return ClusterResult(C.shape[0], labels, C, float(np.clip(evf, 0.0, 1.0)), inertia, history)


def fit_kmeans(points, k, seed=0, n_init=10, max_iter=300, init_centroids=None):
    """Best of ``n_init`` k-means++ seeded Lloyd runs (lowest within-cluster SS).

    ``init_centroids`` adds one more candidate run started from those centers.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n = P.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    best = None
    streams = np.random.SeedSequence(seed).spawn(n_init)
    starts = [_kmeanspp(P, k, np.random.default_rng(s)) for s in streams]
    if init_centroids is not None:
        starts.append(np.asarray(init_centroids, dtype=float))
    for C0 in starts:
        C, labels, inertia, hist = _lloyd(P, C0, max_iter)
        if best is None or inertia < best[2] - 1e-12:
            best = (C, labels, inertia, hist)
    C, labels, inertia, hist = best
    # empty clusters cannot survive a Lloyd pass, but guard singleton k = n ties
    return _result(P, C, labels, inertia, hist)


class KMeansClustering(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters=4, seed=0, n_init=10, max_iter=300):
        self.n_clusters = n_clusters
        self.seed = seed
        self.n_init = n_init
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        res = fit_kmeans(X, self.n_clusters, self.seed, self.n_init, self.max_iter)
        self.result_ = res
        self.cluster_centers_ = res.centroids
        self.labels_ = res.assignments
        self.inertia_ = res.inertia
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return _sq_dists(X, self.cluster_centers_).argmin(1)


def explained_variance_curve(points, k_range, seed=0):
    """{k: ClusterResult}; each k also tries the (k-1) solution plus its worst-fit point."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    out = {}
    prev = None
    for k in sorted(k_range):
        init = None
        if prev is not None and prev.k == k - 1:
            D = _sq_dists(P, prev.centroids).min(1)
            init = np.vstack([prev.centroids, P[D.argmax()]])
        res = fit_kmeans(P, k, seed=seed, init_centroids=init)
        out[k] = res
        prev = res
    return out


def elbow_select(points, k_range=range(1, 11), seed=0, threshold=0.05):
    """Smallest k after which one more cluster explains less than ``threshold`` more variance."""
    ks = [k for k in sorted(k_range) if k <= len(points)]
    curve = explained_variance_curve(points, ks, seed)
    for a, b in zip(ks, ks[1:]):
        if curve[b].explained_variance_fraction - curve[a].explained_variance_fraction < threshold:
            return a
    return ks[-1]
