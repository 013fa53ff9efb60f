"""Random-projection tree forest for approximate nearest neighbours.

Each split takes two random points of the node and cuts along the hyperplane
through their midpoint, normal to their difference. Queries descend every tree
best-first by hyperplane margin until ``search_k`` candidates are collected,
then re-rank the candidates by exact distance.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TREES = 8
DEFAULT_LEAF = 16
# Candidate budget per query, in multiples of k * n_trees.
SEARCH_MULTIPLIER = 8


@dataclass
class RPTree:
    """Flat node lists. Internal nodes have ``left >= 0``; leaf nodes keep
    their point indices in ``leaves``."""

    normals: list[np.ndarray] = field(default_factory=list)
    offsets: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    leaves: list[np.ndarray] = field(default_factory=list)  # per node; empty for internal
    leaf_of: np.ndarray | None = None  # point index -> node id of its leaf

    def _add(self, normal=None, offset=0.0, items=None) -> int:
        self.normals.append(normal)
        self.offsets.append(offset)
        self.left.append(-1)
        self.right.append(-1)
        self.leaves.append(items if items is not None else np.empty(0, dtype=np.int64))
        return len(self.left) - 1

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def leaf_nodes(self) -> list[int]:
        return [i for i in range(len(self.left)) if self.is_leaf(i)]

    def to_json(self) -> dict:
        nodes = []
        for i in range(len(self.left)):
            if self.is_leaf(i):
                nodes.append({"leaf": self.leaves[i].tolist()})
            else:
                nodes.append(
                    {
                        "normal": self.normals[i].tolist(),
                        "offset": self.offsets[i],
                        "left": self.left[i],
                        "right": self.right[i],
                    }
                )
        return {"nodes": nodes}


def _build_tree(points: np.ndarray, max_leaf: int, rng: np.random.Generator) -> RPTree:
    tree = RPTree()
    tree.leaf_of = np.empty(len(points), dtype=np.int64)
    root = tree._add()
    stack = [(root, np.arange(len(points)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) <= max_leaf:
            tree.leaves[node] = idx
            tree.leaf_of[idx] = node
            continue
        i, j = rng.choice(len(idx), size=2, replace=False)
        a, b = points[idx[i]], points[idx[j]]
        normal = a - b
        offset = float(normal @ ((a + b) / 2.0))
        side = points[idx] @ normal - offset > 0
        if side.all() or not side.any():
            # duplicate or degenerate points: split at random, keep the plane
            side = np.zeros(len(idx), dtype=bool)
            side[rng.permutation(len(idx))[: len(idx) // 2]] = True
        tree.normals[node] = normal
        tree.offsets[node] = offset
        left, right = tree._add(), tree._add()
        tree.left[node], tree.right[node] = left, right
        stack.append((right, idx[side]))
        stack.append((left, idx[~side]))
    return tree


@dataclass
class ANNForest:
    points: np.ndarray
    trees: list[RPTree]
    n_trees: int
    max_leaf: int
    seed: int
    search_k: int | None = None

    @property
    def n_points(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_trees": self.n_trees,
                "max_leaf": self.max_leaf,
                "seed": self.seed,
                "trees": [t.to_json() for t in self.trees],
            }
        )


def build(points, n_trees: int = DEFAULT_TREES, max_leaf: int = DEFAULT_LEAF, seed: int = 0,
          search_k: int | None = None) -> ANNForest:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("need at least 2 points to build an index")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if max_leaf < 1:
        raise ValueError("max_leaf must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = [_build_tree(pts, max_leaf, np.random.default_rng(s)) for s in seeds]
    return ANNForest(pts, trees, n_trees, max_leaf, seed, search_k)


def _rank(points: np.ndarray, query: int, candidates: np.ndarray, k: int) -> np.ndarray:
    diff = points[candidates] - points[query]
    d = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((candidates, d))
    return candidates[order[:k]]


def _candidates(forest: ANNForest, query: int, budget: int) -> np.ndarray:
    q = forest.points[query]
    seen: set[int] = set()
    found: list[np.ndarray] = []
    count = 0
    # the leaves holding the query are reached first in every tree
    for t in forest.trees:
        leaf = t.leaves[t.leaf_of[query]]
        found.append(leaf)
        count += len(leaf)
    heap: list[tuple[float, int, int]] = []
    for ti, t in enumerate(forest.trees):
        heapq.heappush(heap, (-np.inf, ti, 0))
        seen.add((ti << 32) | int(t.leaf_of[query]))
    while heap and count < budget:
        neg_prio, ti, node = heapq.heappop(heap)
        t = forest.trees[ti]
        if t.is_leaf(node):
            key = (ti << 32) | node
            if key not in seen:
                seen.add(key)
                found.append(t.leaves[node])
                count += len(t.leaves[node])
            continue
        margin = float(q @ t.normals[node]) - t.offsets[node]
        prio = -neg_prio
        heapq.heappush(heap, (-min(prio, margin), ti, t.right[node]))
        heapq.heappush(heap, (-min(prio, -margin), ti, t.left[node]))
    cand = np.unique(np.concatenate(found))
    return cand[cand != query]


def knn(forest: ANNForest, query: int, k: int) -> np.ndarray:
    """k approximate neighbours of an indexed point, nearest first, query excluded."""
    n = forest.n_points
    if not 0 < k < n:
        raise ValueError(f"k={k} must be in [1, {n - 1}]")
    if not 0 <= query < n:
        raise IndexError(f"query {query} out of range")
    budget = forest.search_k or SEARCH_MULTIPLIER * k * forest.n_trees
    cand = _candidates(forest, query, max(budget, k + 1))
    if len(cand) < k:
        # tiny forests: fall back to every point
        cand = np.delete(np.arange(n), query)
    return _rank(forest.points, query, cand, k)


def knn_all(forest: ANNForest, k: int) -> np.ndarray:
    """Neighbour table for every indexed point, shape (n, k)."""
    return np.stack([knn(forest, i, k) for i in range(forest.n_points)])


def brute_knn(points, query: int, k: int) -> np.ndarray:
    """Exact k nearest neighbours by Euclidean distance, ties to the lower index."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if not 0 < k < n:
        raise ValueError(f"k={k} must be in [1, {n - 1}]")
    others = np.delete(np.arange(n), query)
    return _rank(pts, query, others, k)


def recall(approx: np.ndarray, exact: np.ndarray) -> float:
    return len(np.intersect1d(approx, exact)) / len(exact)
