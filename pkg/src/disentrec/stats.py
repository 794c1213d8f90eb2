"""Repeated-measures correlation (rmcorr) with a self-contained t-test."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class DegeneratePredictorError(ValueError):
    pass


@dataclass
class PairedObservations:
    groups: list[tuple[str, list[tuple[float, float]]]]
    x_name: str = "x"
    y_name: str = "y"

    def __post_init__(self):
        if len(self.groups) < 2:
            raise ValueError("need at least 2 groups")
        if any(len(obs) < 2 for _, obs in self.groups):
            raise ValueError("every group needs at least 2 observations")
        n = sum(len(obs) for _, obs in self.groups)
        if n - len(self.groups) - 1 < 1:
            raise ValueError("not enough observations for the significance test")

    @classmethod
    def from_arrays(cls, x, y, groups, x_name="x", y_name="y") -> "PairedObservations":
        buckets: dict = {}
        for xi, yi, g in zip(x, y, groups):
            buckets.setdefault(g, []).append((float(xi), float(yi)))
        return cls([(str(g), obs) for g, obs in buckets.items()], x_name, y_name)


@dataclass
class RmcorrResult:
    r: float
    dof: int
    p_value: float
    common_slope: float

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


# --- regularized incomplete beta & Student t ------------------------------------------

def _betacf(a: float, b: float, x: float, eps: float = 1e-12, max_iter: int = 10_000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``dof`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def t_cdf(t: float, dof: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, dof)
    return 1.0 - tail if t > 0 else tail


# --- rmcorr ----------------------------------------------------------------------------

def rmcorr(obs: PairedObservations) -> RmcorrResult:
    """Common within-group correlation from the ANCOVA (group-demeaned) formulation."""
    xs, ys = [], []
    for _, pairs in obs.groups:
        a = np.asarray(pairs, dtype=np.float64)
        xs.append(a[:, 0] - a[:, 0].mean())
        ys.append(a[:, 1] - a[:, 1].mean())
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    sxx, syy, sxy = float(x @ x), float(y @ y), float(x @ y)
    raw_x = np.concatenate([np.asarray(p, dtype=np.float64)[:, 0] for _, p in obs.groups])
    if sxx <= 1e-24 * max(float(raw_x @ raw_x), 1e-300):
        raise DegeneratePredictorError(f"no within-group variance in {obs.x_name}")
    raw_y = np.concatenate([np.asarray(p, dtype=np.float64)[:, 1] for _, p in obs.groups])
    if syy <= 1e-24 * max(float(raw_y @ raw_y), 1e-300):
        raise DegeneratePredictorError(f"no within-group variance in {obs.y_name}")
    dof = len(x) - len(obs.groups) - 1
    r = float(np.clip(sxy / math.sqrt(sxx * syy), -1.0, 1.0))
    slope = sxy / sxx
    if abs(r) >= 1.0 - 1e-15:
        p = 0.0
    else:
        t = r * math.sqrt(dof / (1.0 - r * r))
        p = t_sf_two_sided(t, dof)
    return RmcorrResult(r, dof, p, slope)


# --- grids over run records --------------------------------------------------------------

DEFAULT_MEASURES = tuple(
    [f"{m}@{k}" for m in ("ndcg", "recall", "mrr", "coverage") for k in (10, 50, 100)]
    + ["D", "C", "lime_global", "shap_global"]
)


def record_measures(record) -> dict[str, float | None]:
    """Flatten a RunRecord (object or dict) into measure -> value."""
    if not isinstance(record, Mapping):
        record = record.to_dict()
    out: dict[str, float | None] = {}
    ev = record.get("effectiveness") or {}
    out.update(ev.get("scores", ev))
    dci = record.get("dci") or {}
    out["D"] = dci.get("D")
    out["C"] = dci.get("C")
    out["lime_global"] = record.get("lime_global")
    out["shap_global"] = record.get("shap_global")
    return out


def correlation_grid(records: Iterable, grouping: str = "by_dataset",
                     measures: Sequence[str] = DEFAULT_MEASURES) -> dict[str, dict[tuple[str, str], RmcorrResult | None]]:
    """rmcorr for every measure pair.

    ``by_dataset`` yields one grid per dataset with models as groups;
    ``by_model`` one grid per model with datasets as groups. Cells lacking
    two usable groups or with degenerate variance are ``None``.
    """
    if grouping == "by_dataset":
        outer_key, group_key = "dataset", "model"
    elif grouping == "by_model":
        outer_key, group_key = "model", "dataset"
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    rows = []
    for rec in records:
        d = rec if isinstance(rec, Mapping) else rec.to_dict()
        rows.append((d[outer_key], d[group_key], record_measures(d)))
    grids: dict[str, dict[tuple[str, str], RmcorrResult | None]] = {}
    for outer in sorted({r[0] for r in rows}):
        sub = [r for r in rows if r[0] == outer]
        cells: dict[tuple[str, str], RmcorrResult | None] = {}
        for mx, my in itertools.product(measures, repeat=2):
            buckets: dict[str, list[tuple[float, float]]] = {}
            for _, g, vals in sub:
                vx, vy = vals.get(mx), vals.get(my)
                if vx is None or vy is None or not (math.isfinite(vx) and math.isfinite(vy)):
                    continue
                buckets.setdefault(g, []).append((float(vx), float(vy)))
            groups = [(g, o) for g, o in sorted(buckets.items()) if len(o) >= 2]
            try:
                cells[(mx, my)] = rmcorr(PairedObservations(groups, mx, my))
            except (ValueError, ArithmeticError):
                cells[(mx, my)] = None
        grids[outer] = cells
    return grids


def write_grid_csv(grids, path, grouping: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grouping", "grid", "x", "y", "r", "dof", "p", "significant"])
        for outer, cells in grids.items():
            for (mx, my), res in cells.items():
                if res is None:
                    w.writerow([grouping, outer, mx, my, "", "", "", "unavailable"])
                else:
                    w.writerow([grouping, outer, mx, my, f"{res.r:.6f}", res.dof,
                                f"{res.p_value:.6g}", int(res.significant)])
    return path
