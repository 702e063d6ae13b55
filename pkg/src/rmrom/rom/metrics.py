import numpy as np


def r2_score(y_true, y_pred):
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in shape")
    if y_true.size < 2:
        raise ValueError("need at least two samples")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined for constant y_true")
    return 1.0 - float(((y_true - y_pred) ** 2).sum()) / ss_tot


def f1_score(labels_true, labels_pred, averaging="macro"):
    """Macro-averaged F1 over the classes present in either label vector."""
    if averaging != "macro":
        raise ValueError("only macro averaging is supported")
    t = np.asarray(labels_true)
    p = np.asarray(labels_pred)
    if t.shape != p.shape:
        raise ValueError("label vectors differ in shape")
    if t.size < 2:
        raise ValueError("need at least two samples")
    scores = []
    for c in np.union1d(t, p):
        tp = np.sum((t == c) & (p == c))
        fp = np.sum((t != c) & (p == c))
        fn = np.sum((t == c) & (p != c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))
