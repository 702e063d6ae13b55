"""RBF support-vector regression and one-vs-one classification.

Both estimators follow the scikit-learn API and are trained by the SMO
solver in :mod:`rmrom.rom._smo`.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _smo
from .kernels import rbf_matrix

_PRED_CHUNK = 2048


class SMOConvergenceError(RuntimeError):
    def __init__(self, n_iter, violation, duality_gap):
        super().__init__(
            f"SMO stopped after {n_iter} pair updates: KKT violation {violation:.3e}, "
            f"duality gap {duality_gap:.3e}"
        )
        self.n_iter = n_iter
        self.violation = violation
        self.duality_gap = duality_gap


def rbf_predict(X, support_vectors, coef, gamma, bias):
    """Decision values ``sum_j coef_j K(x, sv_j) + bias``, chunked over rows."""
    X = np.asarray(X, dtype=float)
    out = np.full(X.shape[0], float(bias))
    if support_vectors.shape[0] == 0:
        return out
    sv_sq = (support_vectors**2).sum(1)
    for a in range(0, X.shape[0], _PRED_CHUNK):
        xb = X[a:a + _PRED_CHUNK]
        d2 = (xb**2).sum(1)[:, None] + sv_sq[None, :] - 2.0 * xb @ support_vectors.T
        np.maximum(d2, 0.0, out=d2)
        d2 *= -gamma
        np.exp(d2, out=d2)
        out[a:a + _PRED_CHUNK] += d2 @ coef
    return out


def _cache_rows(cache_size_mb, n):
    return max(2, int(cache_size_mb * 2**20 // (8 * max(n, 1))))


def check_feature_range(X, where):
    if X.size and (X.min() < -1e-9 or X.max() > 1 + 1e-9):
        warnings.warn(
            f"{where}: features fall outside [0, 1]; were they scaled with the model's scaling?",
            stacklevel=3,
        )


def _run_smo(X, y, p, C, gamma, tol, max_iter, cache_size, working_set, shrinking=True):
    if working_set not in ("first", "second"):
        raise ValueError("working_set must be 'first' or 'second'")
    return _smo.smo_solve(
        X, float(gamma), y.astype(float), p.astype(float), float(C), float(tol),
        int(max_iter), _cache_rows(cache_size, X.shape[0]), working_set == "second", bool(shrinking),
    )


def svr_objectives(X, y, coef, bias, C, epsilon, gamma):
    """(primal, dual) objective values for an SVR solution ``coef = a - a*``.

    The dual is written in maximization form, so ``primal >= dual`` with
    equality at the optimum.
    """
    K = rbf_matrix(X, X, gamma)
    Kb = K @ coef
    quad = 0.5 * coef @ Kb
    loss = np.maximum(np.abs(Kb + bias - y) - epsilon, 0.0).sum()
    primal = quad + C * loss
    dual = -quad - epsilon * np.abs(coef).sum() + y @ coef
    return float(primal), float(dual)


def svc_objectives(X, ypm, alpha, bias, C, gamma):
    K = rbf_matrix(X, X, gamma)
    beta = ypm * alpha
    Kb = K @ beta
    quad = 0.5 * beta @ Kb
    primal = quad + C * np.maximum(1.0 - ypm * (Kb + bias), 0.0).sum()
    dual = alpha.sum() - quad
    return float(primal), float(dual)


class EpsilonSVR(RegressorMixin, BaseEstimator):
    """Epsilon-insensitive support vector regression with an RBF kernel.

    Parameters
    ----------
    C : float
        Penalty on samples outside the tube.
    epsilon : float
        Half-width of the insensitive tube.
    gamma : float
        RBF kernel coefficient.
    tol : float
        Stop once the maximal KKT violating pair differs by less than this.
    working_set : {"first", "second"}
        Maximal violating pair, or libsvm's second-order choice of ``j``.
    shrinking : bool
        Set aside bounded variables that cannot re-enter the working set.
    clip : {None, "nonneg", "unit"}
        Post-processing of predictions: none, negatives to 0, or into [0, 1].
    """

    def __init__(self, C=1.0, epsilon=0.1, gamma=0.1, tol=1e-3, max_iter=10**7,
                 cache_size=200, working_set="second", shrinking=True, clip=None):
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.cache_size = cache_size
        self.working_set = working_set
        self.shrinking = shrinking
        self.clip = clip

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        n = X.shape[0]
        if n < 2:
            raise ValueError("need at least two samples")
        if not self.C > 0 or not self.gamma > 0 or self.epsilon < 0:
            raise ValueError("C and gamma must be positive and epsilon non-negative")
        self.n_features_in_ = X.shape[1]
        if np.ptp(y) == 0:
            # flat targets sit inside any tube: bias-only model
            self._set_solution(X, np.zeros(n), np.zeros(n), float(y.mean()))
            self.n_iter_ = 0
            self.violation_ = 0.0
            return self
        ypm = np.concatenate([np.ones(n), -np.ones(n)])
        p = np.concatenate([self.epsilon - y, self.epsilon + y])
        alpha, G, n_iter, converged, gap = _run_smo(
            X, ypm, p, self.C, self.gamma, self.tol, self.max_iter, self.cache_size,
            self.working_set, self.shrinking,
        )
        rho = _smo.compute_rho(alpha, G, ypm, float(self.C))
        self.n_iter_ = int(n_iter)
        self.violation_ = float(gap)
        self.objective_ = float(0.5 * (alpha @ (G + p)))
        self._set_solution(X, alpha[:n], alpha[n:], -rho)
        if not converged:
            coef = alpha[:n] - alpha[n:]
            primal, dual = svr_objectives(X, y, coef, -rho, self.C, self.epsilon, self.gamma)
            raise SMOConvergenceError(n_iter, gap, primal - dual)
        return self

    def _set_solution(self, X, a, a_star, bias):
        coef = a - a_star
        sv = np.flatnonzero(np.abs(coef) > 1e-12)
        self.alpha_ = a
        self.alpha_star_ = a_star
        self.support_ = sv
        self.support_vectors_ = X[sv].copy()
        self.dual_coef_ = coef[sv].copy()
        self.intercept_ = float(bias)

    @property
    def n_support_(self):
        return int(self.support_.size)

    def decision_function(self, X):
        check_is_fitted(self, "support_vectors_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return rbf_predict(X, self.support_vectors_, self.dual_coef_, self.gamma, self.intercept_)

    def predict(self, X, clip="default"):
        out = self.decision_function(X)
        return apply_clip(out, self.clip if clip == "default" else clip)


def apply_clip(values, clip):
    if clip is None or clip is False:
        return values
    if clip in ("nonneg", True):
        return np.maximum(values, 0.0)
    if clip == "unit":
        return np.clip(values, 0.0, 1.0)
    raise ValueError(f"unknown clip mode {clip!r}")


@dataclass(frozen=True, eq=False)
class BinaryClassifier:
    pair: tuple
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # y_j * alpha_j
    bias: float
    support: np.ndarray = None
    alpha: np.ndarray = None
    n_iter: int = 0

    def decision_function(self, X, gamma):
        return rbf_predict(X, self.support_vectors, self.dual_coef, gamma, self.bias)


def fit_binary_svc(X, ypm, C, gamma, tol=1e-3, max_iter=10**7, cache_size=200,
                   working_set="second", pair=(1, -1), shrinking=True):
    """Soft-margin RBF classifier on labels in {+1, -1}."""
    n = X.shape[0]
    p = -np.ones(n)
    alpha, G, n_iter, converged, gap = _run_smo(
        X, ypm, p, C, gamma, tol, max_iter, cache_size, working_set, shrinking
    )
    rho = _smo.compute_rho(alpha, G, ypm.astype(float), float(C))
    if not converged:
        primal, dual = svc_objectives(X, ypm, alpha, -rho, C, gamma)
        raise SMOConvergenceError(n_iter, gap, primal - dual)
    sv = np.flatnonzero(alpha > 1e-12)
    return BinaryClassifier(
        pair=tuple(pair),
        support_vectors=X[sv].copy(),
        dual_coef=(ypm * alpha)[sv],
        bias=float(-rho),
        support=sv,
        alpha=alpha,
        n_iter=int(n_iter),
    )


class OneVsOneSVC(ClassifierMixin, BaseEstimator):
    """RBF soft-margin SVM, one binary classifier per class pair, plurality vote.

    ``classes`` optionally fixes the label set; pairs involving a class that
    is absent from the training data are skipped. Vote ties go to the
    smallest label.
    """

    def __init__(self, C=1.0, gamma=0.1, tol=1e-3, max_iter=10**7, cache_size=200,
                 working_set="second", shrinking=True, classes=None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.cache_size = cache_size
        self.working_set = working_set
        self.shrinking = shrinking
        self.classes = classes

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        present = np.unique(y)
        if present.size < 2:
            raise ValueError("need at least two distinct labels")
        classes = np.asarray(sorted(self.classes)) if self.classes is not None else present
        if not np.isin(present, classes).all():
            raise ValueError("training labels outside the declared classes")
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        est = []
        used = set()
        for a, b in itertools.combinations(classes, 2):
            mask = (y == a) | (y == b)
            if not ((y == a).any() and (y == b).any()):
                continue
            ypm = np.where(y[mask] == a, 1.0, -1.0)
            clf = fit_binary_svc(
                X[mask], ypm, self.C, self.gamma, self.tol, self.max_iter,
                self.cache_size, self.working_set, pair=(a, b), shrinking=self.shrinking,
            )
            used.update(np.flatnonzero(mask)[clf.support].tolist())
            est.append(clf)
        self.estimators_ = est
        self.support_ = np.asarray(sorted(used), dtype=int)
        return self

    def votes(self, X):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=float)
        index = {c: k for k, c in enumerate(self.classes_)}
        counts = np.zeros((X.shape[0], len(self.classes_)), dtype=int)
        for clf in self.estimators_:
            d = clf.decision_function(X, self.gamma)
            a, b = index[clf.pair[0]], index[clf.pair[1]]
            counts[:, a] += d > 0
            counts[:, b] += d <= 0
        return counts

    def predict(self, X):
        return self.classes_[vote_winner(self.votes(X))]

    @property
    def n_support_(self):
        """Distinct training samples that are support vectors of any pair."""
        check_is_fitted(self, "support_")
        return int(self.support_.size)


def vote_winner(counts):
    """Column index of the plurality winner per row; ties go to the first column."""
    return np.argmax(np.asarray(counts), axis=1)
