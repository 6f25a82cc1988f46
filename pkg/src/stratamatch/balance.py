"""Covariate balance diagnostics between treated and control groups.

All four metrics accept an optional weight vector on the control side so the
same code scores a raw control pool and a matched pool in which each selected
control counts 1/|selected| within its treated unit's match set.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import EmptyInput

logger = logging.getLogger(__name__)

DEFAULT_BINS = 20
SMD_GOOD = 0.1
VR_LOW, VR_HIGH = 0.5, 2.0


def _check(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise EmptyInput("balance metrics need non-empty samples on both sides")
    return a, b


def _weights(v: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    if w is None:
        return np.ones_like(v)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape != v.shape or np.any(w < 0) or w.sum() == 0:
        raise EmptyInput("weights must be non-negative, match the sample, and not all be zero")
    return w


def _wmean(v: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * v) / np.sum(w))


def _wvar(v: np.ndarray, w: np.ndarray) -> float:
    # population convention: weighted second moment about the weighted mean
    m = _wmean(v, w)
    return float(np.sum(w * (v - m) ** 2) / np.sum(w))


def smd_abs(treated: np.ndarray, control: np.ndarray, control_weights: np.ndarray | None = None) -> float:
    """Absolute standardized mean difference with pooled population variances.

    ``|mean_t - mean_c| / sqrt((var_t + var_c) / 2)``. When both variances
    are zero the metric is 0 for equal means and ``inf`` for unequal ones.
    """
    t, c = _check(treated, control)
    wc = _weights(c, control_weights)
    mt, mc = float(np.mean(t)), _wmean(c, wc)
    vt, vc = float(np.var(t)), _wvar(c, wc)
    denom = math.sqrt((vt + vc) / 2.0)
    if denom == 0.0:
        return 0.0 if mt == mc else math.inf
    return abs(mt - mc) / denom


def variance_ratio(treated: np.ndarray, control: np.ndarray, control_weights: np.ndarray | None = None) -> float:
    """Treated-over-control population variance ratio; ``nan`` when the
    control variance is zero (undefined)."""
    t, c = _check(treated, control)
    wc = _weights(c, control_weights)
    vc = _wvar(c, wc)
    if vc == 0.0:
        return math.nan
    return float(np.var(t)) / vc


def ks_distance(treated: np.ndarray, control: np.ndarray, control_weights: np.ndarray | None = None) -> float:
    """Largest vertical distance between the two empirical CDFs."""
    t, c = _check(treated, control)
    wc = _weights(c, control_weights)
    ts = np.sort(t)
    corder = np.argsort(c, kind="stable")
    cs = c[corder]
    ccum = np.cumsum(wc[corder])
    ctot = ccum[-1]
    grid = np.union1d(ts, cs)
    ft = np.searchsorted(ts, grid, side="right") / ts.size
    idx = np.searchsorted(cs, grid, side="right")
    fc = np.where(idx > 0, ccum[np.maximum(idx - 1, 0)], 0.0) / ctot
    return float(np.max(np.abs(ft - fc)))


def overlap_coefficient(
    treated: np.ndarray,
    control: np.ndarray,
    bins: int = DEFAULT_BINS,
    control_weights: np.ndarray | None = None,
) -> float:
    """Shared mass of the two distributions under a common histogram.

    Both samples are binned with ``bins`` equal-width bins spanning the
    pooled range; the coefficient is ``sum_b min(p_b, q_b)`` of the bin
    proportions, 1 for identical distributions and 0 for disjoint ones.
    """
    t, c = _check(treated, control)
    wc = _weights(c, control_weights)
    lo = float(min(t.min(), c.min()))
    hi = float(max(t.max(), c.max()))
    if lo == hi:
        return 1.0
    pt, _ = np.histogram(t, bins=bins, range=(lo, hi))
    pc, _ = np.histogram(c, bins=bins, range=(lo, hi), weights=wc)
    p = pt / pt.sum()
    q = pc / pc.sum()
    return float(np.sum(np.minimum(p, q)))


@dataclass(frozen=True)
class FeatureBalance:
    """Per-feature metric row with threshold annotations."""

    name: str
    mean_treated: float
    mean_control: float
    smd: float
    variance_ratio: float
    ks: float
    overlap: float

    @property
    def smd_good(self) -> bool:
        return self.smd < SMD_GOOD

    @property
    def vr_in_range(self) -> bool | None:
        if math.isnan(self.variance_ratio):
            return None
        return VR_LOW <= self.variance_ratio <= VR_HIGH


@dataclass(frozen=True)
class BalanceReport:
    """All per-feature rows for one comparison scope.

    ``scope`` is ``"pre"``, ``"post"``, or ``"stratum:<id>"``.
    """

    scope: str
    bins: int
    features: tuple[FeatureBalance, ...]
    n_treated: int
    n_control: int

    @property
    def mean_abs_smd(self) -> float:
        vals = [f.smd for f in self.features if math.isfinite(f.smd)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def worst_smd(self) -> float:
        return max((f.smd for f in self.features), default=math.nan)


def compute_balance(
    x_treated: np.ndarray,
    x_control: np.ndarray,
    feature_names: tuple[str, ...],
    control_weights: np.ndarray | None = None,
    scope: str = "pre",
    bins: int = DEFAULT_BINS,
) -> BalanceReport:
    """Score every feature column of a treated-vs-control comparison."""
    x_treated = np.asarray(x_treated, dtype=np.float64)
    x_control = np.asarray(x_control, dtype=np.float64)
    if x_treated.ndim != 2 or x_control.ndim != 2:
        raise EmptyInput("compute_balance expects two feature matrices")
    rows = []
    for j, name in enumerate(feature_names):
        t = x_treated[:, j]
        c = x_control[:, j]
        wc = control_weights
        mt = float(np.mean(t))
        mc = _wmean(c, _weights(c, wc))
        rows.append(
            FeatureBalance(
                name=name,
                mean_treated=mt,
                mean_control=mc,
                smd=smd_abs(t, c, wc),
                variance_ratio=variance_ratio(t, c, wc),
                ks=ks_distance(t, c, wc),
                overlap=overlap_coefficient(t, c, bins, wc),
            )
        )
    return BalanceReport(
        scope=scope,
        bins=bins,
        features=tuple(rows),
        n_treated=x_treated.shape[0],
        n_control=x_control.shape[0],
    )


def pre_match_report(d: Dataset, bins: int = DEFAULT_BINS) -> BalanceReport:
    """Balance of all treated units against the full control pool."""
    tmask = d.t == 1
    return compute_balance(d.x[tmask], d.x[~tmask], d.feature_names, scope="pre", bins=bins)


def matched_pool(
    d: Dataset, matches: list[tuple[int, tuple[int, ...]]]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool matched groups for post-match diagnostics.

    ``matches`` pairs each treated row id with its selected control row ids.
    Each treated unit enters with weight 1; each of its selected controls
    with weight ``1/|selected|``, so every treated unit contributes equally.
    Controls picked by several treated units accumulate weight. Returns
    ``(x_treated, x_control, control_weights)``.
    """
    if not matches:
        raise EmptyInput("no matched groups to pool")
    pos_of_row = {int(r): i for i, r in enumerate(d.rows())}
    trows = [pos_of_row[t] for t, _ in matches]
    cweight: dict[int, float] = {}
    for _, sel in matches:
        if not sel:
            raise EmptyInput("a matched group has no selected controls")
        share = 1.0 / len(sel)
        for r in sel:
            i = pos_of_row[int(r)]
            cweight[i] = cweight.get(i, 0.0) + share
    crows = sorted(cweight)
    wc = np.array([cweight[i] for i in crows])
    return d.x[trows], d.x[crows], wc


def post_match_report(
    d: Dataset, matches: list[tuple[int, tuple[int, ...]]], bins: int = DEFAULT_BINS
) -> BalanceReport:
    """Balance of matched treated units against their pooled weighted controls."""
    xt, xc, wc = matched_pool(d, matches)
    return compute_balance(xt, xc, d.feature_names, control_weights=wc, scope="post", bins=bins)


def report_to_dict(report: BalanceReport) -> dict:
    return {
        "scope": report.scope,
        "bins": report.bins,
        "n_treated": report.n_treated,
        "n_control": report.n_control,
        "mean_abs_smd": _json_safe(report.mean_abs_smd),
        "worst_smd": _json_safe(report.worst_smd),
        "features": [
            {
                "name": f.name,
                "mean_treated": f.mean_treated,
                "mean_control": f.mean_control,
                "smd": _json_safe(f.smd),
                "smd_good": f.smd_good,
                "variance_ratio": _json_safe(f.variance_ratio),
                "vr_in_range": f.vr_in_range,
                "ks": f.ks,
                "overlap": f.overlap,
            }
            for f in report.features
        ],
    }


def _json_safe(v: float) -> float | str | None:
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf"
    return v


def report_to_json(report: BalanceReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


def report_to_text(report: BalanceReport) -> str:
    """Aligned table, one feature per line, with threshold flags."""
    header = f"balance [{report.scope}]  treated={report.n_treated}  control={report.n_control}"
    cols = f"{'feature':<16} {'SMD':>9} {'flag':>5} {'VR':>9} {'flag':>5} {'KS':>7} {'OVL':>7}"
    lines = [header, cols, "-" * len(cols)]
    for f in report.features:
        smd = "inf" if math.isinf(f.smd) else f"{f.smd:9.4f}"
        sflag = "ok" if f.smd_good else "HIGH"
        if f.vr_in_range is None:
            vr, vflag = "n/a", "-"
        else:
            vr = f"{f.variance_ratio:9.4f}"
            vflag = "ok" if f.vr_in_range else "OUT"
        lines.append(
            f"{f.name:<16} {smd:>9} {sflag:>5} {vr:>9} {vflag:>5} {f.ks:7.4f} {f.overlap:7.4f}"
        )
    lines.append("-" * len(cols))
    lines.append(f"mean |SMD| = {report.mean_abs_smd:.4f}   worst = {report.worst_smd:.4f}")
    return "\n".join(lines) + "\n"
