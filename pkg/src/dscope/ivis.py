"""Parametric 2D embedding with a shared-weight (Siamese) encoder trained on
hinge triplet loss over approximate-nearest-neighbour triplets."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ann, nn
from .nn import MLPModel, NonFiniteError

log = logging.getLogger(__name__)


@dataclass
class TripletConfig:
    k_neighbors: int = 10
    margin: float = 1.0
    widths: tuple[int, ...] = (128, 128, 2)
    epochs: int = 200
    batch_size: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    n_trees: int = ann.DEFAULT_TREES
    max_leaf: int = ann.DEFAULT_LEAF
    # neighbour sets only seed positives, so a smaller candidate budget is enough
    search_k: int | None = 240

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.widths[-1] != 2:
            raise ValueError("encoder must end in 2 output units")
        self.widths = tuple(self.widths)


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int

    def __post_init__(self):
        if len({self.anchor, self.positive, self.negative}) != 3:
            raise ValueError(f"triplet indices must be distinct: {self}")


@dataclass
class EmbeddingResult:
    coords: np.ndarray
    encoder: MLPModel
    converged_loss: float
    loss_trace: list[float]
    epochs_ran: int
    config: TripletConfig = field(default_factory=TripletConfig)

    def summary(self) -> dict:
        cfg = asdict(self.config)
        cfg["widths"] = list(cfg["widths"])
        return {
            "converged_loss": self.converged_loss,
            "epochs_ran": self.epochs_ran,
            "config": cfg,
            "seed": self.config.seed,
        }


def sample_triplets(neighbors: np.ndarray, anchors: np.ndarray, rng: np.random.Generator):
    """Positive uniform from each anchor's neighbour row; negative uniform over
    the points outside that row (and not the anchor), by rejection."""
    n, k = neighbors.shape
    anchors = np.asarray(anchors, dtype=np.int64)
    rows = neighbors[anchors]
    pos = rows[np.arange(len(anchors)), rng.integers(0, k, size=len(anchors))]
    neg = np.empty(len(anchors), dtype=np.int64)
    todo = np.arange(len(anchors))
    while len(todo):
        draw = rng.integers(0, n, size=len(todo))
        bad = (draw == anchors[todo]) | (rows[todo] == draw[:, None]).any(axis=1)
        neg[todo[~bad]] = draw[~bad]
        todo = todo[bad]
    return pos, neg


def sample_triplet(forest: ann.ANNForest, anchor: int, rng: np.random.Generator, k: int = 10) -> Triplet:
    if forest.n_points < k + 2:
        raise ValueError(f"need at least k+2={k + 2} points, have {forest.n_points}")
    row = ann.knn(forest, anchor, k)
    table = np.zeros((forest.n_points, k), dtype=np.int64)
    table[anchor] = row
    pos, neg = sample_triplets(table, np.array([anchor]), rng)
    return Triplet(int(anchor), int(pos[0]), int(neg[0]))


def triplet_loss(a, p, n, margin: float) -> float:
    """max(0, |a-p|^2 - |a-n|^2 + margin) for single points."""
    a, p, n = (np.asarray(v, dtype=np.float64) for v in (a, p, n))
    return float(max(0.0, np.sum((a - p) ** 2) - np.sum((a - n) ** 2) + margin))


def triplet_loss_batch(ea, ep, en, margin: float):
    """Mean hinge triplet loss over rows and its gradients w.r.t. each leg."""
    dp = ea - ep
    dn = ea - en
    raw = np.sum(dp * dp, axis=1) - np.sum(dn * dn, axis=1) + margin
    active = (raw > 0).astype(np.float64)[:, None]
    m = len(ea)
    loss = float(np.maximum(raw, 0.0).mean())
    ga = 2.0 * active * (dp - dn) / m
    gp = -2.0 * active * dp / m
    gn = 2.0 * active * dn / m
    return loss, ga, gp, gn


class SiameseNetwork:
    """Three legs, one parameter set."""

    def __init__(self, encoder: MLPModel):
        self.encoder = encoder

    @property
    def legs(self) -> tuple[MLPModel, MLPModel, MLPModel]:
        return (self.encoder, self.encoder, self.encoder)

    def loss_and_grads(self, xa, xp, xn, margin: float):
        m = len(xa)
        stacked = np.concatenate([xa, xp, xn])
        pre, post = nn.forward_all(self.encoder, stacked)
        out = post[-1]
        loss, ga, gp, gn = triplet_loss_batch(out[:m], out[m : 2 * m], out[2 * m :], margin)
        # one backward pass sums the three chain-rule paths into the shared weights
        grads = nn.backward(self.encoder, stacked, pre, post, np.concatenate([ga, gp, gn]))
        return loss, grads


def make_encoder(input_dim: int, config: TripletConfig) -> MLPModel:
    return nn.init_mlp([input_dim, *config.widths], seed=config.seed, hidden_activation="tanh")


def prescale(points) -> np.ndarray:
    """Center columns and divide by one global std; neighbour structure is unchanged."""
    pts = np.asarray(points, dtype=np.float64)
    centered = pts - pts.mean(axis=0)
    scale = centered.std()
    return centered / scale if scale > 0 else centered


def fit(points, config: TripletConfig | None = None) -> EmbeddingResult:
    config = config or TripletConfig()
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    if n < config.k_neighbors + 2:
        raise ValueError(f"need at least k+2={config.k_neighbors + 2} points, have {n}")
    ss = np.random.SeedSequence(config.seed)
    forest_seed, sample_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    forest = ann.build(x, config.n_trees, config.max_leaf, forest_seed, config.search_k)
    neighbors = ann.knn_all(forest, config.k_neighbors)
    rng = np.random.default_rng(sample_seed)

    net = SiameseNetwork(make_encoder(x.shape[1], config))
    velocity = [[np.zeros_like(l.weights), np.zeros_like(l.bias)] for l in net.encoder.layers]
    best, best_model, wait = np.inf, net.encoder.copy(), 0
    trace: list[float] = []
    for epoch in range(config.epochs):
        anchors = rng.permutation(n)
        pos, neg = sample_triplets(neighbors, anchors, rng)
        total = 0.0
        for start in range(0, n, config.batch_size):
            sl = slice(start, start + config.batch_size)
            loss, grads = net.loss_and_grads(x[anchors[sl]], x[pos[sl]], x[neg[sl]], config.margin)
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite triplet loss at epoch {epoch}, batch starting {start}")
            for layer, vel, (dw, db) in zip(net.encoder.layers, velocity, grads):
                vel[0] *= config.momentum
                vel[0] -= config.lr * dw
                vel[1] *= config.momentum
                vel[1] -= config.lr * db
                layer.weights += vel[0]
                layer.bias += vel[1]
            total += loss * len(anchors[sl])
        epoch_loss = total / n
        trace.append(epoch_loss)
        if epoch_loss < best - config.min_delta:
            best, best_model, wait = epoch_loss, net.encoder.copy(), 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    coords = transform(best_model, x)
    if not np.all(np.isfinite(coords)):
        raise NonFiniteError("non-finite embedding coordinates")
    return EmbeddingResult(coords, best_model, float(best), trace, len(trace), config)


def transform(encoder: MLPModel, points) -> np.ndarray:
    return nn.predict(encoder, points)
