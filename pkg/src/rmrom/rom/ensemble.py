import numpy as np

from .estimators import apply_clip


def ensemble_predict(models, X, clip=None):
    """Mean and min/max band of member predictions, one row per sample."""
    models = list(models)
    if not models:
        raise ValueError("ensemble is empty")
    preds = np.vstack([apply_clip(m.decision_function(X), clip) for m in models])
    return preds.mean(axis=0), preds.min(axis=0), preds.max(axis=0)
