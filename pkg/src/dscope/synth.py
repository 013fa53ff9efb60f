"""Synthetic benchmarks: the 2D noise lift and Gaussian class clusters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LIFT_NAMES = (
    "x", "y", "x+y", "x-y", "x^2", "y^2", "sin(x+y)", "exp(x)",
    "x^3", "y^3", "x*y", "cos(x-y)", "exp(y)", "sin(x)", "cos(y)",
)

SUPERCLASS_SIZE = 5
CENTER_RADIUS = 3.0
# Spread of class directions around their latent group direction.
GROUP_SPREAD = 0.8
# Gives nearest-center (Bayes) accuracy near 0.9 for 10 classes in 32-D.
DEFAULT_SIGMA = 0.7


def lift_15d(x, y) -> np.ndarray:
    """Map 2D points to 15 fixed linear and non-linear features.

    Scalars give a 15-vector; arrays give shape ``x.shape + (15,)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cols = [
        x, y, x + y, x - y, x**2, y**2, np.sin(x + y), np.exp(x),
        x**3, y**3, x * y, np.cos(x - y), np.exp(y), np.sin(x), np.cos(y),
    ]
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def quadrant(x, y) -> np.ndarray:
    """0: x>=0,y>=0; 1: x<0,y>=0; 2: x<0,y<0; 3: x>=0,y<0."""
    x = np.asarray(x)
    y = np.asarray(y)
    return np.where(y >= 0, np.where(x >= 0, 0, 1), np.where(x < 0, 2, 3)).astype(np.int64)


@dataclass
class NoiseLiftDataset:
    base: np.ndarray
    lifted: np.ndarray
    labels: np.ndarray


def gen_noise_dataset(n: int, seed: int) -> NoiseLiftDataset:
    if n < 100:
        raise ValueError("noise dataset needs n >= 100")
    rng = np.random.default_rng(seed)
    base = rng.uniform(-1.0, 1.0, size=(n, 2))
    return NoiseLiftDataset(base, lift_15d(base[:, 0], base[:, 1]), quadrant(base[:, 0], base[:, 1]))


@dataclass
class ClusterDataset:
    features: np.ndarray
    labels: np.ndarray
    superclass_map: dict[int, int]
    centers: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def group_by_proximity(centers: np.ndarray, size: int = SUPERCLASS_SIZE) -> dict[int, int]:
    """Greedy balanced grouping: the lowest unassigned class takes its nearest
    ``size - 1`` unassigned classes. Returns class -> group id."""
    n = centers.shape[0]
    d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    unassigned = list(range(n))
    mapping: dict[int, int] = {}
    group = 0
    while unassigned:
        c = unassigned[0]
        rest = sorted(unassigned[1:], key=lambda j: (d[c, j], j))
        members = [c] + rest[: size - 1]
        for m in members:
            mapping[m] = group
            unassigned.remove(m)
        group += 1
    return mapping


def superclass_distances(centers: np.ndarray, superclass_map: dict[int, int]) -> tuple[float, float]:
    """Mean center distance within and across superclasses."""
    n = centers.shape[0]
    intra, inter = [], []
    for i in range(n):
        for j in range(i + 1, n):
            dist = float(np.linalg.norm(centers[i] - centers[j]))
            (intra if superclass_map[i] == superclass_map[j] else inter).append(dist)
    return (float(np.mean(intra)) if intra else 0.0, float(np.mean(inter)) if inter else math.inf)


def gen_cluster_dataset(
    classes: int = 10,
    per_class: int = 600,
    dim: int = 32,
    within_sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    group_spread: float = GROUP_SPREAD,
) -> ClusterDataset:
    """Isotropic Gaussian classes around centers on a radius-3 sphere.

    Centers are drawn around a few latent group directions so that the
    proximity-based superclasses carry real structure. Rows are ordered by
    class, ``per_class`` rows each.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    n_groups = math.ceil(classes / SUPERCLASS_SIZE)
    group_dirs = _unit(rng.standard_normal((n_groups, dim)))
    latent = rng.permutation(np.arange(classes) % n_groups)
    offsets = _unit(rng.standard_normal((classes, dim)))
    centers = CENTER_RADIUS * _unit(group_dirs[latent] + group_spread * offsets)

    superclass_map = group_by_proximity(centers)
    if n_groups > 1:
        intra, inter = superclass_distances(centers, superclass_map)
        if not intra < inter:
            raise RuntimeError(f"superclass structure not recovered (intra {intra:.3f} >= inter {inter:.3f})")

    labels = np.repeat(np.arange(classes), per_class)
    noise = rng.standard_normal((classes * per_class, dim))
    features = centers[labels] + within_sigma * noise
    return ClusterDataset(features, labels, superclass_map, centers)


def nearest_center_predict(centers: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Bayes-optimal rule for equal-prior isotropic Gaussians with shared sigma."""
    d = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1)


def bayes_accuracy(ds: ClusterDataset) -> float:
    return float(np.mean(nearest_center_predict(ds.centers, ds.features) == ds.labels))
