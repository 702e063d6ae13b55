"""JSON model files.

Floats are written with ``repr`` precision, so a loaded model reproduces the
saved model's predictions bit for bit on the same platform.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .estimators import BinaryClassifier, EpsilonSVR, OneVsOneSVC


class ModelSchemaError(ValueError):
    pass


@dataclass
class ModelFile:
    model: object
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None
    feature_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def scale(self, X_raw):
        X_raw = np.asarray(X_raw, dtype=float)
        if self.mins is None:
            return X_raw
        span = np.where(self.maxs > self.mins, self.maxs - self.mins, 1.0)
        out = (X_raw - self.mins) / span
        out[:, self.maxs <= self.mins] = 0.0
        return out


def _floats(a):
    return [float(v) for v in np.ravel(a)]


def _scaling(mins, maxs):
    return {"mins": _floats(mins) if mins is not None else [],
            "maxs": _floats(maxs) if maxs is not None else []}


def model_to_dict(model, mins=None, maxs=None, feature_names=(), meta=None):
    base = {
        "kernel": {"gamma": float(model.gamma)},
        "scaling": _scaling(mins, maxs),
        "feature_names": list(feature_names),
        "meta": meta or {},
    }
    if isinstance(model, EpsilonSVR):
        base.update(
            type="svr",
            hyperparams={"P": float(model.C), "eps": float(model.epsilon)},
            n_features=int(model.n_features_in_),
            support_vectors=[_floats(r) for r in model.support_vectors_],
            dual_coefs=_floats(model.dual_coef_),
            bias=float(model.intercept_),
            clip=model.clip,
        )
    elif isinstance(model, OneVsOneSVC):
        base.update(
            type="svm",
            hyperparams={"P": float(model.C)},
            n_features=int(model.n_features_in_),
            classes=[int(c) for c in model.classes_],
            classifiers=[
                {
                    "pair": [int(c.pair[0]), int(c.pair[1])],
                    "support_vectors": [_floats(r) for r in c.support_vectors],
                    "dual_coefs": _floats(c.dual_coef),
                    "bias": float(c.bias),
                }
                for c in model.estimators_
            ],
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return base


def _matrix(rows, nf):
    return np.asarray(rows, dtype=float).reshape(-1, nf)


def model_from_dict(d) -> ModelFile:
    try:
        kind = d["type"]
        gamma = d["kernel"]["gamma"]
        nf = int(d["n_features"])
        if kind == "svr":
            m = EpsilonSVR(C=d["hyperparams"]["P"], epsilon=d["hyperparams"]["eps"],
                           gamma=gamma, clip=d.get("clip"))
            m.n_features_in_ = nf
            m.support_vectors_ = _matrix(d["support_vectors"], nf)
            m.dual_coef_ = np.asarray(d["dual_coefs"], dtype=float)
            m.intercept_ = float(d["bias"])
            m.support_ = np.arange(m.dual_coef_.size)
        elif kind == "svm":
            m = OneVsOneSVC(C=d["hyperparams"]["P"], gamma=gamma)
            m.n_features_in_ = nf
            m.classes_ = np.asarray(d["classes"])
            m.estimators_ = [
                BinaryClassifier(
                    pair=tuple(c["pair"]),
                    support_vectors=_matrix(c["support_vectors"], nf),
                    dual_coef=np.asarray(c["dual_coefs"], dtype=float),
                    bias=float(c["bias"]),
                    support=np.arange(len(c["dual_coefs"])),
                )
                for c in d["classifiers"]
            ]
            m.support_ = np.arange(sum(len(c["dual_coefs"]) for c in d["classifiers"]))
        else:
            raise ModelSchemaError(f"unknown model type {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ModelSchemaError(f"malformed model file: {exc}") from None
    sc = d.get("scaling", {})
    mins = np.asarray(sc["mins"], dtype=float) if sc.get("mins") else None
    maxs = np.asarray(sc["maxs"], dtype=float) if sc.get("maxs") else None
    return ModelFile(m, mins, maxs, list(d.get("feature_names", [])), d.get("meta", {}))


def atomic_write_text(path, text):
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(path, model, mins=None, maxs=None, feature_names=(), meta=None):
    d = model_to_dict(model, mins, maxs, feature_names, meta)
    atomic_write_text(path, json.dumps(d, indent=1))


def load_model(path) -> ModelFile:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
