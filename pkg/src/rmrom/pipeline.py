"""Parameter sweeps, feature matrices, ROM training protocols and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import features as fa
from . import physics
from .mesh_fem import run_simulation
from .qoi import QOI_COLUMNS, FitDegenerateError, compute_qois, fit_exponent, read_qoi_csv, write_qoi_csv
from .rom import (
    EpsilonSVR,
    OneVsOneSVC,
    SMOConvergenceError,
    ensemble_predict,
    f1_score,
    load_model,
    r2_score,
    save_model,
    vote_winner,
)
from .rom.io import ModelSchemaError, atomic_write_text

logger = logging.getLogger(__name__)

PARAMS = ("v0", "aniso_ratio", "D_m", "kappa_fL", "period_T")
MANIFEST_COLUMNS = ("sim_id",) + PARAMS + ("status", "error")
SPECIES = ("A", "B", "C")


class SweepError(RuntimeError):
    pass


def _num(v):
    return repr(float(v))


# -- sweep -------------------------------------------------------------------

@dataclass
class SweepSpec:
    v0: list = field(default_factory=lambda: [1.0, 1e-2, 1e-4])
    aniso_ratio: list = field(default_factory=lambda: [1.0, 1e2, 1e4])
    D_m: list = field(default_factory=lambda: [1e-8, 1e-1])
    kappa_fL: list = field(default_factory=lambda: [2.0, 5.0])
    period_T: list = field(default_factory=lambda: [1e-4, 5e-4])
    nodes_per_side: int = 21
    dt: float = 0.01
    end_time: float = 1.0
    snapshot_stride: int = 10
    seed: int = 0

    @classmethod
    def desk(cls, **overrides):
        """72-run reduced grid that keeps the extremes of each parameter range."""
        return cls(**overrides)

    @classmethod
    def full_grid(cls, **overrides):
        base = dict(
            v0=[1.0, 1e-1, 1e-2, 1e-3, 1e-4],
            aniso_ratio=[1.0, 1e1, 1e2, 1e3, 1e4],
            D_m=[1e-8, 1e-1, 1e-2, 1e-3],
            kappa_fL=[2.0, 3.0, 4.0, 5.0],
            period_T=[1e-4, 2e-4, 3e-4, 4e-4, 5e-4],
        )
        base.update(overrides)
        return cls(**base)

    def __post_init__(self):
        for p in PARAMS:
            vals = [float(v) for v in getattr(self, p)]
            if not vals:
                raise ValueError(f"parameter list {p} is empty")
            setattr(self, p, vals)

    @property
    def size(self):
        return math.prod(len(getattr(self, p)) for p in PARAMS)

    def points(self):
        """[(sim_id, {param: value})] in a fixed enumeration order."""
        out = []
        width = max(4, len(str(self.size - 1)))
        combos = itertools.product(*(getattr(self, p) for p in PARAMS))
        for idx, vals in enumerate(combos):
            params = dict(zip(PARAMS, vals))
            out.append((f"{idx:0{width}d}_{param_hash(params)}", params))
        return out

    def config_for(self, params):
        return physics.SimulationConfig(
            velocity=physics.VelocityConfig(params["kappa_fL"], params["v0"], params["period_T"]),
            dispersion=physics.DispersionConfig.from_ratio(params["aniso_ratio"], params["D_m"]),
            nodes_per_side=self.nodes_per_side,
            dt=self.dt,
            end_time=self.end_time,
            snapshot_stride=self.snapshot_stride,
        )

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep spec keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def param_hash(params):
    key = json.dumps({k: _num(params[k]) for k in PARAMS}, sort_keys=True)
    return hashlib.sha1(key.encode()).hexdigest()[:8]


def _atomic_qoi_csv(path, series):
    tmp = f"{path}.tmp"
    write_qoi_csv(tmp, series)
    os.replace(tmp, path)


def _run_one(job):
    sim_id, params, spec_dict, out_dir = job
    spec = SweepSpec.from_dict(spec_dict)
    try:
        cfg = spec.config_for(params)
        atomic_write_text(Path(out_dir) / f"{sim_id}.config.json", cfg.to_json() + "\n")
        result = run_simulation(cfg)
        series = compute_qois(result, sim_id=sim_id)
        _atomic_qoi_csv(Path(out_dir) / f"{sim_id}.qoi.csv", series)
        return sim_id, params, "ok", ""
    except Exception as exc:  # isolate per-run failures
        logger.warning("simulation %s failed: %s", sim_id, exc)
        return sim_id, params, "failed", f"{type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec, out_dir, workers=1):
    """Run every grid point; returns the manifest rows. Failed runs are recorded, not raised."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise SweepError(f"output directory {out} is not writable: {exc}") from exc
    spec_dict = asdict(spec)
    jobs = [(sid, p, spec_dict, str(out)) for sid, p in spec.points()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for sid, p, status, err in rows:
        w.writerow([sid] + [_num(p[k]) for k in PARAMS] + [status, err])
    atomic_write_text(out / "manifest.csv", buf.getvalue())
    atomic_write_text(out / "sweep.json", spec.to_json() + "\n")
    return rows


def read_manifest(dataset_dir):
    path = Path(dataset_dir) / "manifest.csv"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.csv in {dataset_dir}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in PARAMS:
            r[k] = float(r[k])
    return rows


# -- dataset -----------------------------------------------------------------

def raw_features(params, times):
    """Unscaled feature rows (log10 on ratio and v0) for one parameter point."""
    times = np.asarray(times, dtype=float)
    fixed = [
        params["period_T"],
        math.log10(params["aniso_ratio"]),
        params["kappa_fL"],
        math.log10(params["v0"]),
        params["D_m"],
    ]
    return np.column_stack([np.tile(fixed, (times.size, 1)), times])


@dataclass
class FeatureMatrix:
    X: np.ndarray
    X_raw: np.ndarray
    y: np.ndarray
    sim_ids: np.ndarray
    times: np.ndarray
    scaler: fa.MinMaxScaler
    feature_names: tuple = fa.FEATURE_NAMES
    target: str = "degree_of_mixing"
    species: str = "A"

    @property
    def labels(self):
        """Mixing classes of the target (meaningful for degree of mixing)."""
        return fa.label_mixing_class(np.clip(self.y, 0.0, 1.0))

    def subset(self, sim_ids):
        mask = np.isin(self.sim_ids, list(sim_ids))
        return mask

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sim_id"] + list(self.feature_names) + [self.target])
        for sid, row, y in zip(self.sim_ids, self.X, self.y):
            w.writerow([sid] + [_num(v) for v in row] + [_num(y)])
        return buf.getvalue()


def load_qoi_series(dataset_dir, manifest=None):
    """{sim_id: (params, {species: {t, qoi...}})} for successful runs with a QoI file."""
    manifest = manifest if manifest is not None else read_manifest(dataset_dir)
    out = {}
    for r in manifest:
        if r["status"] != "ok":
            continue
        path = Path(dataset_dir) / f"{r['sim_id']}.qoi.csv"
        if not path.exists():
            warnings.warn(f"missing QoI file for {r['sim_id']}; skipped", stacklevel=2)
            continue
        out[r["sim_id"]] = ({k: r[k] for k in PARAMS}, read_qoi_csv(path))
    return out


def build_dataset(dataset_dir, target="degree_of_mixing", species="A", include_initial=False):
    """One row per (simulation, stored step); time 0 is left out unless asked for."""
    if target not in QOI_COLUMNS:
        raise ValueError(f"unknown QoI {target!r}; choose from {QOI_COLUMNS}")
    if species not in SPECIES:
        raise ValueError(f"unknown species {species!r}")
    runs = load_qoi_series(dataset_dir)
    if not runs:
        raise ValueError(f"no usable simulations in {dataset_dir}")
    blocks, ys, ids, ts = [], [], [], []
    for sid in sorted(runs):
        params, series = runs[sid]
        s = series[species]
        keep = slice(None) if include_initial else s["t"] > 0
        t = s["t"][keep]
        blocks.append(raw_features(params, t))
        ys.append(s[target][keep])
        ids.extend([sid] * t.size)
        ts.append(t)
    X_raw = np.vstack(blocks)
    X, scaler = fa.minmax_scale(X_raw)
    return FeatureMatrix(X, X_raw, np.concatenate(ys), np.asarray(ids), np.concatenate(ts),
                         scaler, target=target, species=species)


# -- training protocol -------------------------------------------------------

@dataclass
class ExperimentProtocol:
    train_fraction: float = 0.30
    P: list = field(default_factory=lambda: [1.0, 10.0, 1e2, 1e3, 1e4])
    gamma: list = field(default_factory=lambda: [0.1, 0.01, 0.001, 0.0001])
    eps: list = field(default_factory=lambda: [0.1, 0.01, 0.001, 0.0001])
    split_seed: int = 0
    target: str = "degree_of_mixing"
    species: str = "A"
    features: object = "all"   # "all", "top3" or a list of feature names
    train_svm: bool = True
    clip: str = "unit"
    tol: float = 1e-3
    max_iter: int = 10**7
    working_set: str = "second"
    sanity: bool = False       # evaluate on the training simulations

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown protocol keys: {sorted(unknown)}")
        return cls(**d)


def split_simulations(sim_ids, train_fraction, seed):
    """(train, test) sim ids. The permutation depends only on the seed, so
    smaller training fractions are prefixes of larger ones."""
    ids = sorted(set(sim_ids))
    n_train = int(round(train_fraction * len(ids)))
    if n_train < 1:
        raise ValueError(
            f"train fraction {train_fraction} of {len(ids)} simulations gives no training run"
        )
    if n_train >= len(ids):
        raise ValueError("train fraction leaves no test simulations")
    perm = np.random.default_rng(seed).permutation(len(ids))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return train, test


def select_features(fm: FeatureMatrix, rows, spec, seed):
    """Column indices for a feature subset spec; top3 ranks parameters by forest importance."""
    names = list(fm.feature_names)
    if spec == "all":
        return list(range(len(names)))
    if spec == "top3":
        params = list(range(len(names) - 1))
        rep = fa.random_forest_importance(fm.X[rows][:, params], fm.y[rows], n_trees=100,
                                          seed=seed, feature_names=[names[i] for i in params])
        top = sorted(params[i] for i in rep.ranking[:3])
        return top + [len(names) - 1]
    unknown = [f for f in spec if f not in names]
    if unknown:
        raise ValueError(f"unknown features {unknown}")
    return [names.index(f) for f in spec]


def _fit_member(args):
    kind, hp, Xtr, ytr, proto = args
    t0 = time.perf_counter()
    try:
        if kind == "svr":
            m = EpsilonSVR(C=hp["P"], epsilon=hp["eps"], gamma=hp["gamma"], tol=proto.tol,
                           max_iter=proto.max_iter, working_set=proto.working_set,
                           clip=proto.clip).fit(Xtr, ytr)
        else:
            m = OneVsOneSVC(C=hp["P"], gamma=hp["gamma"], tol=proto.tol, max_iter=proto.max_iter,
                            working_set=proto.working_set, classes=[1, 2, 3, 4]).fit(Xtr, ytr)
        err = ""
    except SMOConvergenceError as exc:
        m, err = None, str(exc)
    return m, err, time.perf_counter() - t0


@dataclass
class EvaluationReport:
    protocol: dict
    train_sims: list
    test_sims: list
    feature_names: list
    members: list
    summary: dict
    timings: list = field(default_factory=list)

    def to_json(self):
        body = {k: getattr(self, k) for k in
                ("protocol", "train_sims", "test_sims", "feature_names", "members", "summary")}
        return json.dumps(_jsonable(body), indent=1, sort_keys=True) + "\n"

    def members_csv(self):
        cols = ["model", "P", "gamma", "eps", "score", "n_support", "sv_percent", "converged"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for m in self.members:
            w.writerow([m.get(c, "") if not isinstance(m.get(c), float) else _num(m[c]) for c in cols])
        return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o


def _hp_grid(proto, kind):
    if kind == "svr":
        return [dict(P=P, gamma=g, eps=e) for P in proto.P for g in proto.gamma for e in proto.eps]
    return [dict(P=P, gamma=g) for P in proto.P for g in proto.gamma]


def train_protocol(fm: FeatureMatrix, protocol: ExperimentProtocol, out_dir=None, workers=1):
    """Train the hyperparameter ensemble on the training simulations and score it on the rest."""
    train_ids, test_ids = split_simulations(fm.sim_ids, protocol.train_fraction, protocol.split_seed)
    if protocol.sanity:
        test_ids = train_ids
    tr = fm.subset(train_ids)
    te = fm.subset(test_ids)
    cols = select_features(fm, tr, protocol.features, protocol.split_seed)
    names = [fm.feature_names[i] for i in cols]
    Xtr, Xte = fm.X[tr][:, cols], fm.X[te][:, cols]
    ytr, yte = fm.y[tr], fm.y[te]
    members, timings = [], []
    models_dir = Path(out_dir) / "models" if out_dir is not None else None
    if models_dir is not None:
        models_dir.mkdir(parents=True, exist_ok=True)

    kinds = ["svr"] + (["svm"] if protocol.train_svm else [])
    labels_tr = fa.label_mixing_class(np.clip(ytr, 0, 1))
    labels_te = fa.label_mixing_class(np.clip(yte, 0, 1))
    fitted = {"svr": [], "svm": []}
    for kind in kinds:
        grid = _hp_grid(protocol, kind)
        target = ytr if kind == "svr" else labels_tr
        if kind == "svm" and np.unique(labels_tr).size < 2:
            logger.warning("training split has a single mixing class; SVM skipped")
            continue
        jobs = [(kind, hp, Xtr, target, protocol) for hp in grid]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_fit_member, jobs))
        else:
            results = [_fit_member(j) for j in jobs]
        for hp, (model, err, secs) in zip(grid, results):
            name = kind + "_" + "_".join(f"{k}{v:g}" for k, v in hp.items())
            row = {"model": name, **{k: float(v) for k, v in hp.items()}, "converged": model is not None}
            timings.append({"model": name, "train_seconds": secs})
            logger.info("%s trained in %.2fs%s", name, secs, f" ({err})" if err else "")
            if model is None:
                row.update(score=float("nan"), n_support=0, sv_percent=0.0, error=err)
                members.append(row)
                continue
            if kind == "svr":
                pred = model.predict(Xte)
                row["score"] = r2_score(yte, pred)
            else:
                pred = model.predict(Xte)
                row["score"] = f1_score(labels_te, pred)
            row["n_support"] = model.n_support_
            row["sv_percent"] = 100.0 * model.n_support_ / Xtr.shape[0]
            members.append(row)
            fitted[kind].append((name, model, pred))
            if models_dir is not None:
                save_model(models_dir / f"{name}.json", model, fm.scaler.data_min_[cols],
                           fm.scaler.data_max_[cols], names,
                           meta={"target": fm.target, "species": fm.species, **hp})

    summary = {"n_train_rows": int(Xtr.shape[0]), "n_test_rows": int(Xte.shape[0])}
    if fitted["svr"]:
        preds = np.array([p for _, _, p in fitted["svr"]])
        scores = [m["score"] for m in members if m["model"].startswith("svr") and m["converged"]]
        summary.update(
            svr_ensemble_r2=r2_score(yte, preds.mean(0)),
            svr_median_r2=float(np.median(scores)),
            svr_best_r2=float(np.max(scores)),
            svr_members=len(scores),
            svr_band_coverage=float(np.mean((preds.min(0) <= yte) & (yte <= preds.max(0)))),
        )
    if fitted["svm"]:
        votes = np.zeros((Xte.shape[0], 4), dtype=int)
        for _, _, p in fitted["svm"]:
            votes[np.arange(p.size), p - 1] += 1
        scores = [m["score"] for m in members if m["model"].startswith("svm") and m["converged"]]
        summary.update(
            svm_ensemble_f1=f1_score(labels_te, vote_winner(votes) + 1),
            svm_median_f1=float(np.median(scores)),
            svm_best_f1=float(np.max(scores)),
            svm_members=len(scores),
        )
    report = EvaluationReport(asdict(protocol), train_ids, test_ids, names, members, summary, timings)
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write_text(out / "report.json", report.to_json())
        atomic_write_text(out / "members.csv", report.members_csv())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "train_seconds"])
        for t in timings:
            w.writerow([t["model"], f"{t['train_seconds']:.4f}"])
        atomic_write_text(out / "timings.csv", buf.getvalue())
    return report


# -- prediction --------------------------------------------------------------

def predict_point(model_paths, point, times, clip="unit"):
    """(mean, lo, hi, seconds per 1000 predictions) for one parameter point."""
    if not model_paths:
        raise ValueError("no model files given")
    files = [load_model(p) for p in sorted(map(str, model_paths))]
    names = files[0].feature_names
    for f in files[1:]:
        if f.feature_names != names:
            raise ModelSchemaError("model files disagree on feature names")
    missing = [k for k in PARAMS if k not in point]
    if missing:
        raise ModelSchemaError(f"query point is missing {missing}")
    raw = raw_features(point, times)
    full = list(fa.FEATURE_NAMES)
    unknown = [n for n in names if n not in full]
    if unknown or not names:
        raise ModelSchemaError(f"model features {names} do not match {full}")
    raw = raw[:, [full.index(n) for n in names]]
    X = files[0].scale(raw)
    if X.min() < -1e-9 or X.max() > 1 + 1e-9:
        warnings.warn("query lies outside the training range; extrapolating", stacklevel=2)
    models = [f.model for f in files]
    t0 = time.perf_counter()
    mean, lo, hi = ensemble_predict(models, X, clip=clip)
    per_1000 = (time.perf_counter() - t0) / max(X.shape[0], 1) * 1000.0
    return mean, lo, hi, per_1000


def prediction_csv(times, mean, lo, hi):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mean", "lo", "hi"])
    for row in zip(times, mean, lo, hi):
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


# -- analyses and report ------------------------------------------------------

def importance_reports(fm: FeatureMatrix, methods=("ftest", "mi", "rf"), seed=0, n_trees=100,
                       include_time=False):
    """{method: ImportanceReport}; the forest also reports R^2 on a 70/30 simulation holdout.

    By default only the five model parameters are ranked; time is dropped.
    """
    keep = [i for i, n in enumerate(fm.feature_names) if include_time or n != "time"]
    names = [fm.feature_names[i] for i in keep]
    X = fm.X[:, keep]
    out = {}
    for m in methods:
        if m == "ftest":
            out[m] = fa.f_test_importance(X, fm.y, names)
        elif m == "mi":
            out[m] = fa.mutual_info_importance(X, fm.y, 3, seed=seed, feature_names=names)
        elif m == "rf":
            train, test = split_simulations(fm.sim_ids, 0.7, seed)
            tr, te = fm.subset(train), fm.subset(test)
            out[m] = fa.random_forest_importance(
                X[tr], fm.y[tr], n_trees=n_trees, seed=seed, feature_names=names,
                holdout=(X[te], fm.y[te]),
            )
        else:
            raise ValueError(f"unknown importance method {m!r}")
    return out


def exponent_table(dataset_dir, target="degree_of_mixing", k="auto", seed=0):
    """Rows of (sim_id, params, species, exponent, fit r2, cluster) with k-means labels.

    Clustering runs per species on min-max scaled (log10 ratio, exponent)
    pairs; runs whose series cannot be fitted get cluster -1.
    """
    runs = load_qoi_series(dataset_dir)
    rows = []
    for sid in sorted(runs):
        params, series = runs[sid]
        for sp in SPECIES:
            s = series[sp]
            try:
                fit = fit_exponent(s[target], s["t"])
                e, r2 = fit.exponent, fit.r2
            except FitDegenerateError:
                e, r2 = float("nan"), float("nan")
            rows.append({"sim_id": sid, **params, "species": sp, "exponent": e, "fit_r2": r2,
                         "cluster": -1})
    chosen = {}
    for sp in SPECIES:
        idx = [i for i, r in enumerate(rows) if r["species"] == sp and math.isfinite(r["exponent"])]
        if not idx:
            continue
        pts = np.array([[math.log10(rows[i]["aniso_ratio"]), rows[i]["exponent"]] for i in idx])
        pts, _ = fa.minmax_scale(pts)
        kk = fa.elbow_select(pts, range(1, min(10, len(idx)) + 1), seed) if k == "auto" else int(k)
        res = fa.fit_kmeans(pts, kk, seed)
        chosen[sp] = kk
        for i, lab in zip(idx, res.assignments):
            rows[i]["cluster"] = int(lab)
    return rows, chosen


def _rows_csv(rows, cols):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_num(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def ensemble_mean_rows(dataset_dir):
    """Per (species, QoI, time step): mean, min and max over all simulations."""
    runs = load_qoi_series(dataset_dir)
    rows = []
    for sp in SPECIES:
        t = None
        stacks = {q: [] for q in QOI_COLUMNS}
        for sid in sorted(runs):
            s = runs[sid][1][sp]
            if t is None:
                t = s["t"]
            elif s["t"].shape != t.shape or not np.allclose(s["t"], t):
                raise ValueError(f"simulation {sid} uses a different time grid")
            for q in QOI_COLUMNS:
                stacks[q].append(s[q])
        for q in QOI_COLUMNS:
            a = np.array(stacks[q])
            for j, tj in enumerate(t):
                rows.append({"species": sp, "qoi": q, "t": float(tj), "mean": float(a[:, j].mean()),
                             "min": float(a[:, j].min()), "max": float(a[:, j].max())})
    return rows


def svg_lines(series, title="", width=480, height=320):
    """Minimal SVG line chart; ``series`` maps a label to (x, y) arrays."""
    pad = 40
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1
    y0, y1 = ys.min(), ys.max() if ys.max() > ys.min() else ys.min() + 1
    sx = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)  # noqa: E731
    sy = lambda v: height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)  # noqa: E731
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{pad}" y="20" font-size="12">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="#888"/>']
    for n, (label, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        c = colors[n % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 2}" y="{pad + 14 * n}" font-size="10" fill="{c}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report(dataset_dir, out_dir, seed=0, k="auto", analyses=("ensemble", "exponents", "importance"),
           svg=False, importance_species=SPECIES):
    """Write plot-ready CSVs (and optional SVGs); returns the list of files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        atomic_write_text(out / name, text)
        written.append(name)

    if "ensemble" in analyses:
        rows = ensemble_mean_rows(dataset_dir)
        put("qoi_ensemble_mean.csv", _rows_csv(rows, ["species", "qoi", "t", "mean", "min", "max"]))
        if svg:
            ser = {}
            for sp in SPECIES:
                sel = [r for r in rows if r["species"] == sp and r["qoi"] == "degree_of_mixing"]
                ser[sp] = ([r["t"] for r in sel], [r["mean"] for r in sel])
            put("qoi_ensemble_mean.svg", svg_lines(ser, "mean degree of mixing"))
    if "exponents" in analyses:
        rows, chosen = exponent_table(dataset_dir, k=k, seed=seed)
        cols = ["sim_id", *PARAMS, "species", "exponent", "fit_r2", "cluster"]
        put("exponents.csv", _rows_csv(rows, cols))
        put("clusters.json", json.dumps(chosen, indent=1, sort_keys=True) + "\n")
    if "importance" in analyses:
        for sp in importance_species:
            fm = build_dataset(dataset_dir, "degree_of_mixing", sp)
            for method, rep in importance_reports(fm, seed=seed).items():
                put(f"importance_{method}_{sp}.csv", rep.to_csv())
    for a in analyses:
        if a not in ("ensemble", "exponents", "importance"):
            logger.warning("unknown analysis %r skipped", a)
    return written
