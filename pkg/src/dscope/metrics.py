"""Diagnostics over model outputs and 2D embeddings."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_MASS = 0.8
DEFAULT_GRID = 128
PAD_BANDWIDTHS = 3.0


def accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def pearson_r(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return float("nan")
    return float(da @ db) / denom


@dataclass
class CorrelationReport:
    values: dict[int, float]
    skipped: list[tuple[int, int]] = field(default_factory=list)

    @property
    def mean(self) -> float:
        vals = [v for v in self.values.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")


def superclass_correlation(votes, superclass_map: dict[int, int]) -> CorrelationReport:
    """Mean squared Pearson correlation between vote columns of labels that
    share a superclass. Zero-variance columns are skipped and reported."""
    votes = np.asarray(votes, dtype=np.float64)
    groups: dict[int, list[int]] = {}
    for label, sc in sorted(superclass_map.items()):
        groups.setdefault(int(sc), []).append(int(label))
    values, skipped = {}, []
    for sc, labels in sorted(groups.items()):
        if len(labels) < 2:
            raise ValueError(f"superclass {sc} has fewer than 2 labels")
        r2 = []
        for i, j in itertools.combinations(labels, 2):
            r = pearson_r(votes[:, i], votes[:, j])
            if math.isnan(r):
                skipped.append((i, j))
                continue
            r2.append(r * r)
        values[sc] = float(np.mean(r2)) if r2 else float("nan")
    if skipped:
        log.warning("skipped %d zero-variance label pairs", len(skipped))
    return CorrelationReport(values, skipped)


@dataclass
class DensityGrid:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    density: np.ndarray  # (g, g), rows index y
    bandwidth: float
    warnings: list[str] = field(default_factory=list)

    @property
    def resolution(self) -> int:
        return self.density.shape[0]

    @property
    def cell_area(self) -> float:
        g = self.resolution
        return (self.xmax - self.xmin) / g * (self.ymax - self.ymin) / g

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.resolution
        dx = (self.xmax - self.xmin) / g
        dy = (self.ymax - self.ymin) / g
        return self.xmin + (np.arange(g) + 0.5) * dx, self.ymin + (np.arange(g) + 0.5) * dy

    def mass(self) -> float:
        return float(self.density.sum() * self.cell_area)


def scott_bandwidth(points) -> float:
    """N^(-1/6) times the RMS of the per-axis standard deviations."""
    pts = np.asarray(points, dtype=np.float64)
    std = math.sqrt(float(np.mean(pts.var(axis=0))))
    if std == 0.0:
        std = 1.0
    return len(pts) ** (-1.0 / 6.0) * std


def grid_extent(points, h: float) -> tuple[tuple[float, float, float, float], list[str]]:
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    warnings = []
    for axis in range(2):
        if hi[axis] == lo[axis]:
            lo[axis] -= 0.5
            hi[axis] += 0.5
            warnings.append(f"degenerate extent on axis {axis}; expanded to unit width")
    pad = PAD_BANDWIDTHS * h
    return (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad), warnings


def kde2d(points, h: float | None = None, g: int = DEFAULT_GRID, extent=None, weights=None) -> DensityGrid:
    """Gaussian KDE with isotropic bandwidth ``h`` evaluated at ``g x g`` cell centers.

    ``extent`` (xmin, xmax, ymin, ymax) defaults to the point range plus 3h.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("no points")
    if h is None:
        h = scott_bandwidth(pts)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if g < 16:
        raise ValueError("grid resolution must be >= 16")
    warnings: list[str] = []
    if extent is None:
        extent, warnings = grid_extent(pts, h)
        for w in warnings:
            log.warning(w)
    if weights is None:
        weights = np.full(len(pts), 1.0 / len(pts))
    else:
        weights = np.asarray(weights, dtype=np.float64)
        weights = weights / weights.sum()
    grid = DensityGrid(*map(float, extent), np.empty((g, g)), float(h), warnings)
    cx, cy = grid.centers()
    ex = np.exp(-((cx[None, :] - pts[:, 0:1]) ** 2) / (2 * h * h))
    ey = np.exp(-((cy[None, :] - pts[:, 1:2]) ** 2) / (2 * h * h))
    grid.density = (ey * weights[:, None]).T @ ex / (2 * math.pi * h * h)
    return grid


def hdr_cells(density: np.ndarray, q: float) -> int:
    """Number of cells in the highest-density region holding mass fraction q."""
    if not 0 < q <= 1:
        raise ValueError("mass fraction must be in (0, 1]")
    flat = density.ravel()
    order = np.argsort(-flat, kind="stable")
    cum = np.cumsum(flat[order])
    total = cum[-1]
    if total <= 0:
        return flat.size
    return int(np.searchsorted(cum, q * total, side="left")) + 1


def class_area_ratios(
    coords, labels, q: float = DEFAULT_MASS, h: float | None = None, g: int = DEFAULT_GRID
) -> dict[int, float]:
    """HDR cell count of each class KDE over the HDR cell count of the pooled KDE,
    all on the pooled grid with the pooled bandwidth."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    if h is None:
        h = scott_bandwidth(coords)
    pooled = kde2d(coords, h, g)
    extent = (pooled.xmin, pooled.xmax, pooled.ymin, pooled.ymax)
    whole = hdr_cells(pooled.density, q)
    out = {}
    for c in np.unique(labels):
        dens = kde2d(coords[labels == c], h, g, extent=extent).density
        out[int(c)] = min(1.0, hdr_cells(dens, q) / whole)
    return out


def class_area_ratio(
    coords, labels, c: int, q: float = DEFAULT_MASS, h: float | None = None, g: int = DEFAULT_GRID
) -> float:
    labels = np.asarray(labels)
    if not np.any(labels == c):
        raise ValueError(f"class {c} is empty")
    coords = np.asarray(coords, dtype=np.float64)
    if h is None:
        h = scott_bandwidth(coords)
    pooled = kde2d(coords, h, g)
    extent = (pooled.xmin, pooled.xmax, pooled.ymin, pooled.ymax)
    dens = kde2d(coords[labels == c], h, g, extent=extent).density
    return min(1.0, hdr_cells(dens, q) / hdr_cells(pooled.density, q))


def knn_table(points, k: int) -> np.ndarray:
    """Exact k nearest neighbours of every row (self excluded, ties to lower index)."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if not 0 < k < n:
        raise ValueError(f"k={k} must be in [1, {n - 1}]")
    d = pairwise_sq_dists(pts)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def pairwise_sq_dists(points, chunk: int = 256) -> np.ndarray:
    """Squared Euclidean distances from explicit differences (no dot-product expansion)."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty((len(pts), len(pts)))
    for start in range(0, len(pts), chunk):
        diff = pts[start : start + chunk, None, :] - pts[None, :, :]
        out[start : start + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def neighborhood_preservation(original, embedded, k: int = 10) -> float:
    """Mean fraction of each point's k original neighbours kept in the embedding."""
    original = np.asarray(original, dtype=np.float64)
    embedded = np.asarray(embedded, dtype=np.float64)
    if len(original) != len(embedded):
        raise ValueError("row counts differ")
    a = knn_table(original, k)
    b = knn_table(embedded, k)
    hits = sum(len(np.intersect1d(ra, rb, assume_unique=True)) for ra, rb in zip(a, b))
    return hits / (k * len(original))


def one_nn_accuracy(coords, labels) -> float:
    """Leave-one-out 1-NN classification accuracy."""
    nn1 = knn_table(coords, 1)[:, 0]
    labels = np.asarray(labels)
    return float(np.mean(labels[nn1] == labels))
