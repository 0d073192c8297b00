"""Adam optimization, class-weight computation, and the training loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FerkitError, ShapeError
from .model import Model
from .ops import weighted_cross_entropy


@dataclass(frozen=True)
class AdamHyper:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class AdamState:
    """First/second moment tensors mirroring the parameter dict, plus the
    step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    hyper: AdamHyper = AdamHyper(),
) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Rejects non-finite gradients before touching any state.
    """
    for name, p in params.items():
        if name not in grads:
            raise ShapeError(f"missing gradient for parameter {name}")
        if grads[name].shape != p.shape:
            raise ShapeError(
                f"gradient for {name} has shape {grads[name].shape}, expected {p.shape}"
            )
        if not np.all(np.isfinite(grads[name])):
            raise FerkitError(f"non-finite gradient for parameter {name}; step rejected")

    state.t += 1
    t = state.t
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p -= (hyper.alpha * (m / bc1) / (np.sqrt(v / bc2) + hyper.epsilon)).astype(
            p.dtype, copy=False
        )


def compute_class_weights(counts) -> np.ndarray:
    """Inverse-frequency weights normalized so the sample-weighted mean is 1.

    w_c = N_total / (K_present * n_c) for classes with samples; empty
    classes get weight 0.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError("counts must be a vector of non-negative integers")
    total = counts.sum()
    if total == 0:
        raise ValueError("all class counts are zero")
    present = int(np.count_nonzero(counts))
    weights = np.zeros(counts.shape, dtype=np.float64)
    nonzero = counts > 0
    weights[nonzero] = total / (present * counts[nonzero])
    return weights


@dataclass
class ArrayDataset:
    """In-memory dataset of preprocessed images in [0,1] and integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ShapeError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.images) == 0:
            raise ValueError("dataset is empty")

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 13
    batch_size: int = 64
    seed: int = 0
    class_weighting: bool = True
    hyper: AdamHyper = AdamHyper()
    log: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    eval_top1: float
    eval_top3: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def peak_epoch(self) -> int:
        """Index of the epoch with the best eval top-1 (earliest on ties)."""
        best = max(e.eval_top1 for e in self.epochs)
        return next(i for i, e in enumerate(self.epochs) if e.eval_top1 == best)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc", "eval_top1", "eval_top3"])
            for e in self.epochs:
                writer.writerow(
                    [e.epoch, f"{e.train_loss:.6f}", f"{e.train_acc:.6f}",
                     f"{e.eval_top1:.6f}", f"{e.eval_top3:.6f}"]
                )


def evaluate_arrays(model: Model, data: ArrayDataset, batch_size: int = 64) -> tuple[float, float]:
    """Infer-mode top-1 and top-3 accuracy over an in-memory dataset."""
    top1 = top3 = 0
    for start in range(0, len(data), batch_size):
        batch = data.images[start : start + batch_size]
        labels = data.labels[start : start + batch_size]
        probs = model.forward(batch, mode="infer")
        # Rank with ties broken by ascending label index: sort on (-p, idx).
        order = np.argsort(-probs, axis=1, kind="stable")
        top1 += int((order[:, 0] == labels).sum())
        top3 += int((order[:, :3] == labels[:, None]).any(axis=1).sum())
    return top1 / len(data), top3 / len(data)


def train(
    model: Model,
    train_set: ArrayDataset,
    eval_set: ArrayDataset,
    config: TrainConfig = TrainConfig(),
) -> tuple[TrainHistory, Model]:
    """Minibatch training with Adam and (optionally) class-weighted loss.

    Deterministic for a fixed seed: seeded shuffle each epoch, fixed batch
    order. Returns the history and a snapshot of the parameters from the
    peak eval-top-1 epoch.
    """
    n_classes = len(model.spec.labels)
    if config.class_weighting:
        counts = np.bincount(train_set.labels, minlength=n_classes)
        class_weights = compute_class_weights(counts)
    else:
        class_weights = np.ones(n_classes, dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(model.params)
    history = TrainHistory()
    best: Model | None = None

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        losses = []
        hits = 0
        for batch_index, start in enumerate(range(0, len(train_set), config.batch_size)):
            idx = order[start : start + config.batch_size]
            batch = train_set.images[idx]
            labels = train_set.labels[idx]
            try:
                probs, tape = model.forward(batch, mode="train")
                loss, loss_tape = weighted_cross_entropy(probs, labels, class_weights)
                grads = tape.backward(loss_tape.backward())
                adam_step(state, model.params, grads, config.hyper)
            except FerkitError as exc:
                raise FerkitError(f"epoch {epoch}, batch {batch_index}: {exc}") from exc
            losses.append(loss)
            hits += int((probs.argmax(axis=1) == labels).sum())

        eval_top1, eval_top3 = evaluate_arrays(model, eval_set, config.batch_size)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            train_acc=hits / len(train_set),
            eval_top1=eval_top1,
            eval_top3=eval_top3,
        )
        history.epochs.append(stats)
        if config.log:
            print(
                f"epoch {epoch}: loss {stats.train_loss:.4f} "
                f"train_acc {stats.train_acc:.4f} eval_top1 {eval_top1:.4f} "
                f"eval_top3 {eval_top3:.4f}"
            )
        if history.peak_epoch == epoch:
            best = model.copy()

    assert best is not None
    return history, best
