"""Support-vector reduced-order models."""

import numpy as np

from .ensemble import ensemble_predict
from .estimators import (
    EpsilonSVR,
    OneVsOneSVC,
    SMOConvergenceError,
    check_feature_range,
    apply_clip,
    vote_winner,
)
from .io import ModelFile, load_model, save_model
from .kernels import rbf_kernel, rbf_matrix
from .metrics import f1_score, r2_score

__all__ = [
    "EpsilonSVR", "OneVsOneSVC", "SMOConvergenceError", "ModelFile",
    "ensemble_predict", "f1_score", "load_model", "r2_score", "rbf_kernel",
    "rbf_matrix", "save_model", "svm_predict", "svm_train", "svr_predict",
    "svr_train", "vote_winner",
]


def svr_train(X, y, P, eps, gamma, **kw):
    return EpsilonSVR(C=P, epsilon=eps, gamma=gamma, **kw).fit(X, y)


def svr_predict(model, X, clip_nonneg=False, cap_unit=False):
    """Decision values; warns when features fall outside the scaled [0, 1] range."""
    X = np.asarray(X, dtype=float)
    check_feature_range(X, "svr_predict")
    raw = model.decision_function(X)
    if cap_unit:
        return apply_clip(raw, "unit")
    return apply_clip(raw, "nonneg" if clip_nonneg else None)


def svm_train(X, labels, P, gamma, **kw):
    return OneVsOneSVC(C=P, gamma=gamma, **kw).fit(X, labels)


def svm_predict(model, X):
    return model.predict(X)
