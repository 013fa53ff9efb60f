"""Teacher/student training: label-budget subsetting, baseline training and
cyclical temperature-scaled distillation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .metrics import accuracy
from .nn import MLPModel, SGDConfig

log = logging.getLogger(__name__)


@dataclass
class SplitDataset:
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    superclass_map: dict[int, int] | None = None
    labeled_idx: np.ndarray | None = None
    unlabeled_idx: np.ndarray | None = None


@dataclass
class DistillConfig:
    temperature: float = 4.0
    labeled_epochs: int = 1
    distill_epochs: int = 1
    cycles: int = 150
    sgd: SGDConfig = field(default_factory=SGDConfig)
    # Hinton-style T^2 gradient scaling; off to follow the loss as written.
    scale_t2: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if min(self.labeled_epochs, self.distill_epochs, self.cycles) < 0:
            raise ValueError("epoch counts must be non-negative")


@dataclass
class TrainReport:
    condition: str
    seed: int
    accuracy: float
    losses: dict[str, list[float]]
    lr_trace: list[float]
    config: dict
    model: MLPModel | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "condition": self.condition,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "losses": self.losses,
            "lr_trace": self.lr_trace,
            "config": self.config,
            "warnings": self.warnings,
        }


def balanced_subset(features, labels, budget: int, seed: int):
    """Draw ``budget / n_classes`` labeled rows per class; the rest become the
    unlabeled pool. Returns ``(labeled_idx, unlabeled_idx)`` as sorted index arrays."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(features) != len(labels):
        raise ValueError("features and labels differ in length")
    if budget <= 0 or budget % len(classes):
        raise ValueError(f"budget {budget} is not divisible by {len(classes)} classes")
    per_class = budget // len(classes)
    rng = np.random.default_rng(seed)
    chosen = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if len(members) < per_class:
            raise ValueError(f"class {c} has {len(members)} samples, needs {per_class}")
        chosen.append(rng.choice(members, size=per_class, replace=False))
    labeled = np.sort(np.concatenate(chosen))
    unlabeled = np.setdiff1d(np.arange(len(labels)), labeled)
    return labeled, unlabeled


def make_split(train_x, train_y, test_x, test_y, budget: int, seed: int, superclass_map=None) -> SplitDataset:
    lab, unl = balanced_subset(train_x, train_y, budget, seed)
    return SplitDataset(
        train_x[lab], train_y[lab], train_x[unl], test_x, test_y, superclass_map, lab, unl
    )


def holdout_split(labels, per_class: int, seed: int):
    """Per-class holdout of ``per_class`` rows. Returns (train_idx, test_idx)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        test.append(rng.choice(members, size=per_class, replace=False))
    test_idx = np.sort(np.concatenate(test))
    return np.setdiff1d(np.arange(len(labels)), test_idx), test_idx


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _labeled_epoch(model, x, y, sgd: SGDConfig, epoch: int, rng) -> float:
    total = 0.0
    for idx in _batches(len(x), sgd.batch_size, rng):
        labels = y[idx]
        _, loss = nn.backward_and_step(
            model, x[idx], lambda out: nn.cross_entropy_loss(out, labels), sgd, epoch
        )
        total += loss * len(idx)
    return total / len(x)


def _distill_epoch(model, x, teacher_out, config: DistillConfig, epoch: int, rng) -> float:
    total = 0.0
    for idx in _batches(len(x), config.sgd.batch_size, rng):
        target = teacher_out[idx]
        _, loss = nn.backward_and_step(
            model,
            x[idx],
            lambda out: nn.distillation_loss(out, target, config.temperature, config.scale_t2),
            config.sgd,
            epoch,
        )
        total += loss * len(idx)
    return total / len(x)


def _test_accuracy(model: MLPModel, split: SplitDataset) -> float:
    if split.test_x is None or len(split.test_x) == 0:
        return float("nan")
    return accuracy(nn.predict(model, split.test_x), split.test_y)


def train_undistilled(model: MLPModel, split: SplitDataset, sgd: SGDConfig, condition: str = "UD") -> TrainReport:
    """Cross-entropy training on the labeled split only. The input model is not modified."""
    if len(split.labeled_x) == 0:
        raise ValueError("labeled split is empty")
    if split.labeled_x.shape[1] != model.input_dim:
        raise nn.ShapeError(0, model.input_dim, split.labeled_x.shape[1])
    model = model.copy()
    rng = np.random.default_rng(sgd.seed)
    losses, lrs = [], []
    for epoch in range(sgd.epochs):
        lrs.append(nn.learning_rate(sgd, epoch))
        losses.append(_labeled_epoch(model, split.labeled_x, split.labeled_y, sgd, epoch, rng))
    return TrainReport(
        condition=condition,
        seed=sgd.seed,
        accuracy=_test_accuracy(model, split),
        losses={"labeled": losses},
        lr_trace=lrs,
        config={"sgd": asdict(sgd)},
        model=model,
    )


def distill_student(
    student: MLPModel, teacher: MLPModel, split: SplitDataset, config: DistillConfig
) -> TrainReport:
    """Cyclical distillation: each cycle runs labeled cross-entropy epochs, then
    KL epochs against the frozen teacher on the unlabeled pool."""
    if student.input_dim != teacher.input_dim:
        raise nn.ShapeError(0, teacher.input_dim, student.input_dim)
    if student.output_dim != teacher.output_dim:
        raise ValueError("student and teacher disagree on the number of outputs")
    if len(split.unlabeled_x) == 0:
        log.warning("empty unlabeled pool; distillation degenerates to plain training")
        report = train_undistilled(student, split, config.sgd, condition="D")
        report.warnings.append("empty unlabeled pool: trained without distillation")
        report.config = _config_echo(config)
        return report

    model = student.copy()
    rng = np.random.default_rng(config.sgd.seed)
    # the teacher is frozen, so its logits on the pool never change
    teacher_out = nn.predict(teacher, split.unlabeled_x)
    lab_losses, kd_losses, lrs = [], [], []
    for cycle in range(config.cycles):
        lrs.append(nn.learning_rate(config.sgd, cycle))
        for _ in range(config.labeled_epochs):
            if len(split.labeled_x):
                lab_losses.append(
                    _labeled_epoch(model, split.labeled_x, split.labeled_y, config.sgd, cycle, rng)
                )
        for _ in range(config.distill_epochs):
            kd_losses.append(_distill_epoch(model, split.unlabeled_x, teacher_out, config, cycle, rng))
    return TrainReport(
        condition="D",
        seed=config.sgd.seed,
        accuracy=_test_accuracy(model, split),
        losses={"labeled": lab_losses, "distill": kd_losses},
        lr_trace=lrs,
        config=_config_echo(config),
        model=model,
    )


def _config_echo(config: DistillConfig) -> dict:
    return asdict(config)


def extract_activations(model: MLPModel, features, tap: str) -> np.ndarray:
    idx = model.tap_index(tap)
    return nn.forward_all(model, features)[1][idx]
