"""Directory datasets, top-k / confusion-matrix metrics, and the accuracy
comparison report against the published baselines."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, DecodeError, FerkitError
from .labels import EMOTION_NAMES, NUM_CLASSES, EmotionLabel
from .model import Model
from .preprocess import pipeline, sniff_format

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass
class LabeledDataset:
    """Image files under label-named subdirectories of a root path."""

    root: Path
    records: list[tuple[Path, EmotionLabel]]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> np.ndarray:
        counts = np.zeros(NUM_CLASSES, dtype=np.int64)
        for _, label in self.records:
            counts[label] += 1
        return counts


def load_labeled_dataset(root) -> LabeledDataset:
    """Scan ``root/<label>/*.{jpg,jpeg,png}`` for the eight emotion labels.

    Files whose bytes do not carry a JPEG/PNG magic are skipped and counted
    in ``skipped``. Ordering is deterministic (labels in index order, then
    lexicographic file names).
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    records: list[tuple[Path, EmotionLabel]] = []
    skipped = 0
    for name in EMOTION_NAMES:
        label_dir = root / name
        if not label_dir.is_dir():
            continue
        for path in sorted(label_dir.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES or not path.is_file():
                continue
            try:
                with open(path, "rb") as fh:
                    head = fh.read(8)
            except OSError:
                skipped += 1
                continue
            if sniff_format(head) is None:
                skipped += 1
                continue
            records.append((path, EmotionLabel.from_name(name)))
    if not records:
        raise DatasetError(f"no readable labeled images under {root}")
    return LabeledDataset(root=root, records=records, skipped=skipped)


@dataclass
class EvalMetrics:
    top1: float
    top3: float
    per_class: np.ndarray
    confusion: np.ndarray  # rows = true label, columns = predicted
    evaluated: int = 0
    failed: int = 0


def evaluate(model: Model, data: LabeledDataset) -> EvalMetrics:
    """Preprocess and classify every record; failures are excluded from the
    denominators and reported in ``failed``."""
    if len(data) == 0:
        raise DatasetError("dataset is empty")
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    top1_hits = top3_hits = evaluated = failed = 0
    for path, truth in data.records:
        try:
            tensor = pipeline(path.read_bytes())
            result = model.predict_topk(tensor, k=3)
        except (DecodeError, OSError, FerkitError):
            failed += 1
            continue
        evaluated += 1
        ranked = [label for label, _ in result.top]
        confusion[truth, ranked[0]] += 1
        if ranked[0] == truth:
            top1_hits += 1
        if truth in ranked:
            top3_hits += 1
    if evaluated == 0:
        raise DatasetError("every image failed preprocessing")
    row_sums = confusion.sum(axis=1)
    per_class = np.where(row_sums > 0, np.diag(confusion) / np.maximum(row_sums, 1), 0.0)
    return EvalMetrics(
        top1=top1_hits / evaluated,
        top3=top3_hits / evaluated,
        per_class=per_class,
        confusion=confusion,
        evaluated=evaluated,
        failed=failed,
    )


@dataclass(frozen=True)
class BaselineRow:
    name: str
    accuracy_text: str  # rendered verbatim as published

    @property
    def accuracy(self) -> float:
        return float(self.accuracy_text)


# Published peak accuracies on the AffectNet test set.
BASELINES: tuple[BaselineRow, ...] = (
    BaselineRow("Our Model", "0.5509"),
    BaselineRow("VGGNet Variant", "0.58"),
    BaselineRow("MobileNet Variant", "0.58"),
    BaselineRow("SVR", "0.277"),
    BaselineRow("CNN", "0.470"),
    BaselineRow("2Att-CNN", "0.487"),
    BaselineRow("2Att-Mt", "0.539"),
    BaselineRow("2Att-2Mt", "0.635"),
)


@dataclass
class BaselineTable:
    rows: tuple[BaselineRow, ...] = BASELINES


def render_comparison_report(
    metrics: EvalMetrics | None,
    name: str = "Evaluated Model",
    baselines: BaselineTable | None = None,
) -> str:
    """Accuracy table sorted descending, with the evaluated model inserted;
    followed by its confusion matrix and per-class accuracies."""
    table = baselines or BaselineTable()
    rows: list[tuple[float, int, str, str]] = [
        (row.accuracy, i, row.name, row.accuracy_text) for i, row in enumerate(table.rows)
    ]
    if metrics is not None:
        rows.append((metrics.top1, len(rows), name, f"{metrics.top1:.4f}"))
    rows.sort(key=lambda r: (-r[0], r[1]))

    lines = ["Peak accuracy comparison:"]
    for _, _, model_name, acc_text in rows:
        lines.append(f"  {model_name} {acc_text}")
    if metrics is not None:
        lines.append("")
        lines.append(f"{name}: top-1 {metrics.top1:.4f}, top-3 {metrics.top3:.4f} "
                     f"({metrics.evaluated} images, {metrics.failed} failed)")
        lines.append("")
        lines.append("Confusion matrix (rows = true, columns = predicted):")
        header = " ".join(f"{n[:4]:>5}" for n in EMOTION_NAMES)
        lines.append(f"  {'':>8} {header}")
        for i, row in enumerate(metrics.confusion):
            cells = " ".join(f"{int(v):>5}" for v in row)
            lines.append(f"  {EMOTION_NAMES[i]:>8} {cells}")
        lines.append("")
        lines.append("Per-class accuracy:")
        for i, acc in enumerate(metrics.per_class):
            lines.append(f"  {EMOTION_NAMES[i]:>8} {acc:.4f}")
    return "\n".join(lines) + "\n"
