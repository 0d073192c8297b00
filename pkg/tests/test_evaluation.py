"""Dataset loading, metric algebra, and the comparison report."""

import io
import zipfile

import numpy as np
import pytest
from PIL import Image

from ferkit.errors import DatasetError
from ferkit.evaluation import (
    BASELINES,
    EvalMetrics,
    evaluate,
    load_labeled_dataset,
    render_comparison_report,
)
from ferkit.labels import EMOTION_NAMES, EmotionLabel
from ferkit.model import INPUT_HEIGHT, INPUT_WIDTH
from tests.test_model import FixedOutputModel


def write_png(path, color=(100, 100, 100), size=8):
    Image.fromarray(np.full((size, size, 3), color, dtype=np.uint8)).save(path)


def make_dataset(root, per_class: dict[str, int]):
    for name, count in per_class.items():
        (root / name).mkdir(parents=True, exist_ok=True)
        for i in range(count):
            write_png(root / name / f"img{i:03d}.png")
    return root


class TestLoader:
    def test_basic_construction(self, tmp_path):
        make_dataset(tmp_path, {"happy": 1, "sad": 1})
        data = load_labeled_dataset(tmp_path)
        assert len(data) == 2
        counts = data.class_counts
        assert counts[EmotionLabel.HAPPY] == 1 and counts[EmotionLabel.SAD] == 1

    def test_empty_tree_rejected(self, tmp_path):
        (tmp_path / "happy").mkdir()
        with pytest.raises(DatasetError):
            load_labeled_dataset(tmp_path)

    def test_missing_root_rejected(self, tmp_path):
        with pytest.raises(DatasetError):
            load_labeled_dataset(tmp_path / "nope")

    def test_corrupt_file_skipped_with_warning(self, tmp_path):
        make_dataset(tmp_path, {"anger": 10})
        (tmp_path / "anger" / "img003.png").write_bytes(b"not an image")
        data = load_labeled_dataset(tmp_path)
        assert len(data) == 9
        assert data.skipped == 1

    def test_deterministic_ordering(self, tmp_path):
        make_dataset(tmp_path, {"fear": 3, "neutral": 2})
        a = load_labeled_dataset(tmp_path)
        b = load_labeled_dataset(tmp_path)
        assert a.records == b.records
        labels = [int(l) for _, l in a.records]
        assert labels == sorted(labels)

    def test_non_image_suffixes_ignored(self, tmp_path):
        make_dataset(tmp_path, {"disgust": 2})
        (tmp_path / "disgust" / "notes.txt").write_text("hi")
        assert len(load_labeled_dataset(tmp_path)) == 2


class OracleModel(FixedOutputModel):
    """Predicts the color-encoded true label embedded in the red channel."""

    def __init__(self):
        super().__init__(np.full(8, 0.125))

    def predict_topk(self, image, k=3):
        label = int(round(float(image[0, 0, 0]) * 255 / 16))
        dist = np.full(8, 0.001, dtype=np.float32)
        dist[label] = 1 - 0.007
        order = sorted(range(8), key=lambda i: (-dist[i], i))
        from ferkit.model import ClassificationResult

        return ClassificationResult(
            top=[(EmotionLabel(i), float(dist[i])) for i in order[:k]], distribution=dist
        )


def make_color_coded(root, per_class):
    """Each image's red channel encodes its true label (16 * index)."""
    for name, count in per_class.items():
        label = EmotionLabel.from_name(name)
        (root / name).mkdir(parents=True, exist_ok=True)
        for i in range(count):
            write_png(root / name / f"i{i}.png", color=(16 * int(label), 0, 0),
                      size=INPUT_HEIGHT)
    return root


class TestEvaluate:
    def test_uniform_model_on_balanced_set(self, tmp_path):
        make_dataset(tmp_path, {name: 2 for name in EMOTION_NAMES})
        metrics = evaluate(FixedOutputModel(np.full(8, 0.125)), load_labeled_dataset(tmp_path))
        # tie-break ranks labels 0..2 first: only true-label-0 samples hit top-1
        assert metrics.top1 == 1 / 8
        assert metrics.top3 == 3 / 8

    def test_oracle_model_is_perfect(self, tmp_path):
        make_color_coded(tmp_path, {"happy": 2, "contempt": 3, "fear": 1})
        metrics = evaluate(OracleModel(), load_labeled_dataset(tmp_path))
        assert metrics.top1 == 1.0 and metrics.top3 == 1.0
        assert metrics.confusion.sum() == np.trace(metrics.confusion) == 6

    def test_confusion_marginals(self, tmp_path):
        make_dataset(tmp_path, {"happy": 3, "sad": 2, "anger": 4})
        data = load_labeled_dataset(tmp_path)
        metrics = evaluate(FixedOutputModel(np.full(8, 0.125)), data)
        np.testing.assert_array_equal(metrics.confusion.sum(axis=1), data.class_counts)
        assert metrics.confusion.sum() == len(data)
        assert metrics.top1 == np.trace(metrics.confusion) / len(data)
        assert metrics.top3 >= metrics.top1

    def test_failed_images_excluded_from_denominator(self, tmp_path):
        make_color_coded(tmp_path, {"happy": 4})
        # valid magic but undecodable body: skips the loader sniff, fails decode
        (tmp_path / "happy" / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\n" + b"junk")
        data = load_labeled_dataset(tmp_path)
        assert len(data) == 5
        metrics = evaluate(OracleModel(), data)
        assert metrics.failed == 1
        assert metrics.evaluated == 4
        assert metrics.top1 == 1.0


class TestReport:
    def test_baseline_only_rows_verbatim(self):
        report = render_comparison_report(None)
        for row in BASELINES:
            assert f"{row.name} {row.accuracy_text}" in report
        assert report.count("\n  ") == 8

    def test_published_score_placement(self):
        metrics = EvalMetrics(top1=0.5509, top3=0.8, per_class=np.zeros(8),
                              confusion=np.zeros((8, 8), dtype=np.int64), evaluated=100)
        report = render_comparison_report(metrics, name="Candidate")
        lines = [l.strip() for l in report.splitlines() if l.startswith("  ")]
        idx = {l: i for i, l in enumerate(lines)}
        assert idx["Candidate 0.5509"] > idx["VGGNet Variant 0.58"]
        assert idx["Candidate 0.5509"] < idx["2Att-Mt 0.539"]

    def test_perfect_score_first(self):
        metrics = EvalMetrics(top1=1.0, top3=1.0, per_class=np.ones(8),
                              confusion=np.eye(8, dtype=np.int64), evaluated=8)
        report = render_comparison_report(metrics, name="Oracle")
        table_lines = [l for l in report.splitlines() if l.startswith("  ")]
        assert table_lines[0].strip() == "Oracle 1.0000"

    def test_four_decimal_formatting(self):
        metrics = EvalMetrics(top1=1 / 3, top3=2 / 3, per_class=np.zeros(8),
                              confusion=np.zeros((8, 8), dtype=np.int64), evaluated=3)
        assert "0.3333" in render_comparison_report(metrics)


def test_export_reimport_round_trip(tmp_path):
    """The store's archive layout re-imports through the dataset loader."""
    import json

    from ferkit.store import ImageRecord, ImageStore, content_id, utc_now

    store = ImageStore(tmp_path / "store")
    for i, name in enumerate(["sad", "happy", "happy"]):
        buf = io.BytesIO()
        Image.fromarray(np.full((8, 8, 3), i * 40, dtype=np.uint8)).save(buf, format="PNG")
        data = buf.getvalue()
        record = ImageRecord(
            id=content_id(data), captured_at=utc_now(), source="upload",
            predictions=[("happy", 0.9), ("sad", 0.05), ("fear", 0.05)],
            model_id="m", consent=True, user_label=EmotionLabel.from_name(name),
        )
        store.put(record, data)
    archive = store.export_archive(labeled_only=True)
    out_root = tmp_path / "unpacked"
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        zf.extractall(out_root)
        manifest = json.loads(zf.read("manifest.json"))
    data = load_labeled_dataset(out_root)
    assert len(data) == len(manifest["records"]) == 3
    counts = data.class_counts
    assert counts[EmotionLabel.HAPPY] == 2 and counts[EmotionLabel.SAD] == 1
