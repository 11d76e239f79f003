"""Forecast quality metrics and replication-level aggregation."""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


def nrmse(estimate, target_mean):
    """``||estimate - target||_F / ||target||_F``."""
    est = np.asarray(estimate, dtype=np.float64)
    tgt = np.asarray(target_mean, dtype=np.float64)
    if est.shape != tgt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {tgt.shape}")
    denom = np.linalg.norm(tgt)
    if denom <= 1e-12:
        raise ValueError("target has (near) zero norm")
    return float(np.linalg.norm(est - tgt) / denom)


def ssim(x, y, data_range=None):
    """Single-window SSIM over all pixels.

    ``c1 = (0.01 R)^2`` and ``c2 = (0.03 R)^2`` with ``R`` the pixel range of
    the reference ``y`` unless ``data_range`` is given.  Variances and the
    covariance are population (1/N) moments.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    R = float(np.ptp(y)) if data_range is None else float(data_range)
    if R <= 0:
        raise ValueError("pixel range R is zero; pass data_range explicitly")
    c1, c2 = (0.01 * R) ** 2, (0.03 * R) ** 2
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cxy = np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)
    return float((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))


def psnr(x, y):
    """``10 log10(c^2 / MSE)`` with ``c`` the largest pixel of ``x`` and ``y``; ``inf`` if identical."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return float("inf")
    c = max(float(x.max()), float(y.max()))
    return float(10.0 * np.log10(c * c / mse))


@dataclass
class MetricsReport:
    """Per (method, s) mean, sample standard deviation and count."""

    rows: list = field(default_factory=list)

    def get(self, method, s):
        for r in self.rows:
            if r["method"] == method and r["s"] == s:
                return r
        raise KeyError((method, s))

    def methods(self):
        return list(dict.fromkeys(r["method"] for r in self.rows))


def aggregate(records, key="value"):
    """Aggregate ``{"method", "s", key}`` records over replications.

    The standard deviation uses ``ddof=1``; a single replication reports 0
    and sets ``single_replication``.
    """
    groups = defaultdict(list)
    for rec in records:
        groups[(rec["method"], int(rec["s"]))].append(float(rec[key]))
    if not groups:
        raise ValueError("no records to aggregate")
    rows = []
    for (method, s), vals in groups.items():
        v = np.asarray(vals)
        rows.append({"method": method, "s": s, "mean": float(v.mean()),
                     "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                     "count": int(v.size), "single_replication": v.size == 1})
    return MetricsReport(rows)
