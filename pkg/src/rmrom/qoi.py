"""Quantities of interest, exponential scaling fits and run diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

DEFAULT_WINDOW = (0.2, 1.0)


class FitDegenerateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QoISeries:
    sim_id: str
    times: np.ndarray
    species: str
    avg_conc: np.ndarray
    avg_sq_conc: np.ndarray
    degree_of_mixing: np.ndarray
    raw: dict = field(default_factory=dict)
    zero_flags: dict = field(default_factory=dict)

    def column(self, name):
        return getattr(self, name)


QOI_COLUMNS = ("avg_conc", "avg_sq_conc", "degree_of_mixing")


def _normalize(raw):
    top = float(np.max(raw))
    if top <= 0.0:
        return np.zeros_like(raw), True
    out = raw / top
    # self-normalized series attain 1 exactly at their maximum
    out[np.argmax(raw)] = 1.0
    return np.clip(out, 0.0, 1.0), False


def raw_moments(fields, M, area=1.0):
    """<c>, <c^2> and the spatial variance for each row of ``fields``."""
    fields = np.atleast_2d(fields)
    Mc = (M @ fields.T).T
    mean = Mc.sum(axis=1)
    sq = np.einsum("ij,ij->i", fields, Mc)
    var = sq - mean**2 / area
    return mean, sq, var


def compute_qois(result, mesh=None, stoich=None, sim_id="sim", species=("A", "B", "C")):
    """Normalized QoI series for each requested species of a finished run.

    ``result`` is a :class:`~rmrom.mesh_fem.SimulationResult`. Each raw
    series is divided by its own maximum over time; an all-zero series stays
    zero and is flagged rather than divided.
    """
    from .physics import recover_species

    mesh = mesh if mesh is not None else result.mesh
    stoich = stoich if stoich is not None else result.config.stoichiometry
    if result.times.size < 2:
        raise ValueError("need at least two time levels")
    M = result.mass_matrix
    area = mesh.domain_length**2
    c_A, c_B, c_C = recover_species(result.c_F, result.c_G, stoich)
    fields = {"A": c_A, "B": c_B, "C": c_C, "F": result.c_F, "G": result.c_G}
    out = {}
    for tag in species:
        mean, sq, var = raw_moments(fields[tag], M, area)
        if var.min() < -1e-12:
            raise AssertionError(f"negative raw variance {var.min():.3e} for species {tag}")
        var = np.maximum(var, 0.0)
        c, zc = _normalize(mean)
        s, zs = _normalize(sq)
        v, zv = _normalize(var)
        # exact zeros in the variance are numerically ~1e-17 noise
        if var.max() <= 1e-14 * max(sq.max(), 1e-300):
            v, zv = np.zeros_like(var), True
        out[tag] = QoISeries(
            sim_id, result.times.copy(), tag, c, s, v,
            raw={"avg_conc": mean, "avg_sq_conc": sq, "degree_of_mixing": var},
            zero_flags={"avg_conc": zc, "avg_sq_conc": zs, "degree_of_mixing": zv},
        )
    return out


def write_qoi_csv(path, series_by_species, sim_id=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sim_id", "t", "species"] + list(QOI_COLUMNS))
        for tag, s in series_by_species.items():
            sid = sim_id if sim_id is not None else s.sim_id
            for k, t in enumerate(s.times):
                w.writerow([sid, f"{t:.10g}", tag] + [repr(float(s.column(c)[k])) for c in QOI_COLUMNS])


def read_qoi_csv(path):
    """{species: {"t": array, qoi: array}} from a QoI CSV."""
    rows = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            d = rows.setdefault(r["species"], {k: [] for k in ("t",) + QOI_COLUMNS})
            d["t"].append(float(r["t"]))
            for c in QOI_COLUMNS:
                d[c].append(float(r[c]))
    return {sp: {k: np.asarray(v) for k, v in d.items()} for sp, d in rows.items()}


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    fit_window: tuple
    r2: float


def fit_exponent(series, times, window=DEFAULT_WINDOW) -> ScalingFit:
    """Least-squares line through ``(t, ln series)`` inside ``window``."""
    series = np.asarray(series, dtype=float)
    times = np.asarray(times, dtype=float)
    lo, hi = window
    sel = (times >= lo - 1e-12) & (times <= hi + 1e-12) & (series > 1e-12)
    if sel.sum() < 3:
        raise FitDegenerateError(
            f"only {int(sel.sum())} positive samples in window {window}; need 3"
        )
    t = times[sel]
    y = np.log(series[sel])
    A = np.column_stack([t, np.ones_like(t)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + icpt)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - float((resid**2).sum()) / ss_tot
    return ScalingFit(float(slope), float(np.exp(icpt)), (float(lo), float(hi)), r2)


@dataclass(frozen=True)
class BoundDiagnostics:
    mass_drift: float
    m_norm_monotone: bool
    envelope_ok: bool
    mass_ok: bool = True
    max_m_norm_increase: float = 0.0
    envelope_floor: float = float("nan")     # A
    envelope_amplitude: float = float("nan")  # M
    envelope_rate: float = float("nan")       # B


def mixing_envelope(sigma2, times, window=DEFAULT_WINDOW):
    """Fit ``A + M exp(-B t)`` lying on or above ``sigma2`` with ``A + M = 1``.

    B comes from the log-linear fit in ``window``; A is the smallest floor
    that keeps the envelope above every sample. Returns (A, M, B).
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    times = np.asarray(times, dtype=float)
    B = -fit_exponent(sigma2, times, window).exponent
    if B <= 0:
        return 1.0, 0.0, B
    decay = np.exp(-B * times)
    later = times > 0
    need = (sigma2[later] - decay[later]) / (1.0 - decay[later])
    A = float(np.clip(need.max(initial=0.0), 0.0, 1.0))
    return A, 1.0 - A, B


def check_diagnostics(result, cfg=None, mass_tol=1e-6, norm_tol=1e-12, species="A"):
    """Testable consequences of the a-priori QoI estimates on one run.

    (a) invariant mass constancy under zero flux, (b) non-increasing
    ``<c_F^2>`` and ``<c_G^2>``, (c) an exponential envelope above the
    degree of mixing of ``species`` with a positive rate.
    """
    M = result.mass_matrix
    drift = 0.0
    worst_rise = -np.inf
    for fields in (result.c_F, result.c_G):
        mean, sq, _ = raw_moments(fields, M)
        drift = max(drift, float(np.max(np.abs(mean - mean[0])) / abs(mean[0])))
        worst_rise = max(worst_rise, float(np.max(np.diff(sq))))
    monotone = worst_rise <= norm_tol
    try:
        s2 = compute_qois(result, species=(species,))[species].degree_of_mixing
        A, Mamp, B = mixing_envelope(s2, result.times)
        env = bool(B > 0 and A < 1.0)
        env = env and bool(np.all(A + Mamp * np.exp(-B * result.times) >= s2 - 1e-12))
    except FitDegenerateError:
        A = Mamp = B = float("nan")
        env = False
    return BoundDiagnostics(
        mass_drift=drift,
        m_norm_monotone=bool(monotone),
        envelope_ok=env,
        mass_ok=bool(drift <= mass_tol),
        max_m_norm_increase=worst_rise,
        envelope_floor=A,
        envelope_amplitude=Mamp,
        envelope_rate=B,
    )
