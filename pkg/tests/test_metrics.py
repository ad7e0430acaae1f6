"""
Tests for the reported metrics and record persistence.
"""

import numpy as np
import pytest

from skillbench.errors import EmptyInput
from skillbench.metrics import (
    Aggregate,
    SkillMode,
    TrialRecord,
    aggregate,
    classification_accuracy,
    f1,
    macro_f1,
    read_records,
    skill_accuracy,
    vram_time,
    write_records,
)


def labelled(gold, pred):
    return [TrialRecord(id=str(i), strategy="DI", predicted_label=p, gold_label=g)
            for i, (g, p) in enumerate(zip(gold, pred))]


def routed(selected, gold_skill="a"):
    return TrialRecord(id="r", strategy="ASI", predicted_label="x", gold_label="x",
                       selected_skills=selected, gold_skill=gold_skill)


class TestClassification:
    """Test accuracy and F1."""

    def test_accuracy(self):
        """Test full, half and absent predictions."""
        assert classification_accuracy(labelled("AB", "AB")) == 1.0
        assert classification_accuracy(labelled("AB", "AA")) == 0.5
        assert classification_accuracy(labelled("AB", [None, None])) == 0.0

    def test_empty(self):
        """Test an empty record set raises EmptyInput."""
        with pytest.raises(EmptyInput):
            classification_accuracy([])
        with pytest.raises(EmptyInput):
            macro_f1([])

    def test_macro_f1(self):
        """Test perfect, one-sided and inverted predictions."""
        assert macro_f1(labelled("ABCA", "ABCA")) == 1.0
        assert macro_f1(labelled("AABB", "AAAA")) == pytest.approx(1 / 3)
        assert macro_f1(labelled("AB", "BA")) == 0.0

    def test_absent_prediction_forms_no_class(self):
        """Test absent predictions only hurt the gold class."""
        records = labelled("AABB", ["A", "A", "B", None])
        # A: P=1, R=1 -> 1; B: P=1, R=0.5 -> 2/3
        assert macro_f1(records) == pytest.approx((1 + 2 / 3) / 2)

    def test_micro(self):
        """Test the micro-average switch."""
        assert f1(labelled("AABB", "AAAB"), "micro") == pytest.approx(0.75)
        with pytest.raises(ValueError):
            f1(labelled("A", "A"), "weighted")

    def test_balanced_perfect(self):
        """Test perfect balanced binary predictions give F1 equal to accuracy."""
        records = labelled(["pos", "neg"] * 5, ["pos", "neg"] * 5)
        assert macro_f1(records) == classification_accuracy(records) == 1.0


class TestSkillAccuracy:
    """Test routing accuracy in both modes."""

    def test_modes(self):
        """Test single, multiple and empty selections."""
        assert skill_accuracy([routed(["a"])], "lenient") == 1.0
        assert skill_accuracy([routed(["a"])], "strict") == 1.0
        assert skill_accuracy([routed(["a", "b"])], SkillMode.LENIENT) == 1.0
        assert skill_accuracy([routed(["a", "b"])], SkillMode.STRICT) == 0.0
        assert skill_accuracy([routed([])]) == 0.0

    def test_missing_gold_skill(self):
        """Test records without a gold skill are rejected."""
        with pytest.raises(EmptyInput):
            skill_accuracy([routed(["a"], gold_skill=None)])

    def test_strict_never_exceeds_lenient(self):
        """Test strict <= lenient on 1000 random record sets."""
        rng = np.random.default_rng(21)
        names = ["a", "b", "c", "d"]
        for _ in range(1000):
            records = []
            for _ in range(int(rng.integers(1, 10))):
                k = int(rng.integers(0, 4))
                selected = [str(s) for s in rng.choice(names, size=k, replace=False)]
                records.append(routed(selected, gold_skill=str(rng.choice(names))))
            assert skill_accuracy(records, "strict") <= skill_accuracy(records, "lenient")


class TestVramTime:
    """Test the VRAM-time product."""

    @pytest.mark.parametrize("vram,minutes,reported", [
        (72.0, 0.015, 1.083),
        (29.0, 0.149, 4.298),
        (192.0, 0.027, 5.242),
        (10.0, 0.015, 0.145),
    ])
    def test_published_rows(self, vram, minutes, reported):
        """Test products agree with reported values within 5%."""
        assert abs(vram_time(vram, minutes) - reported) / reported <= 0.05

    def test_examples(self):
        """Test exact products and zero VRAM."""
        assert vram_time(72.0, 0.015) == pytest.approx(1.080)
        assert vram_time(29.0, 0.149) == pytest.approx(4.321)
        assert vram_time(0.0, 3.0) == 0.0

    def test_linear(self):
        """Test scaling VRAM scales the product."""
        assert vram_time(3 * 12.0, 0.5) == pytest.approx(3 * vram_time(12.0, 0.5))

    def test_negative(self):
        """Test negative inputs are rejected."""
        with pytest.raises(ValueError):
            vram_time(-1.0, 1.0)


class TestAggregate:
    """Test the five-metric aggregate."""

    def test_single_record(self):
        """Test one correct, routed record."""
        record = TrialRecord(id="1", strategy="ASI", predicted_label="pos", gold_label="pos",
                             selected_skills=["a"], gold_skill="a", gt_minutes=0.02, vram_gb=10.0)
        result = aggregate([record])
        assert (result.cls_acc, result.cls_f1, result.skill_acc) == (1.0, 1.0, 1.0)
        assert result.avg_gt_min == pytest.approx(0.02)
        assert result.avg_vram_time == pytest.approx(0.2)
        assert result.n == 1

    def test_skill_acc_absent_without_routing(self):
        """Test DI records report no skill accuracy."""
        result = aggregate(labelled("AB", "AB"))
        assert result.skill_acc is None
        assert result.cls_acc == 1.0

    def test_shuffle_invariance(self):
        """Test aggregation is independent of record order."""
        rng = np.random.default_rng(2)
        records = []
        for i in range(200):
            gold = str(rng.choice(["neg", "pos", "neutral"]))
            pred = None if rng.random() < 0.1 else str(rng.choice(["neg", "pos", "neutral"]))
            records.append(TrialRecord(
                id=str(i), strategy="ASI", predicted_label=pred, gold_label=gold,
                selected_skills=[str(rng.choice(["a", "b"]))], gold_skill="a",
                gt_minutes=float(rng.uniform(0, 0.3)), vram_gb=float(rng.choice([1.0, 10.0, 72.0]))))
        expected = aggregate(records)
        for _ in range(20):
            shuffled = [records[i] for i in rng.permutation(len(records))]
            assert aggregate(shuffled) == expected

    def test_row(self):
        """Test the row keeps the report column order."""
        row = Aggregate(0.5, 0.4, None, 0.1, 1.0, 2).to_row()
        assert list(row) == ["cls_acc", "cls_f1", "skill_acc", "avg_gt_min", "avg_vram_time", "n"]


class TestRecords:
    """Test record validation and JSONL persistence."""

    def test_invariants(self):
        """Test negative times are rejected."""
        with pytest.raises(ValueError):
            TrialRecord(id="1", strategy="DI", predicted_label="a", gold_label="a", gt_minutes=-1)

    def test_round_trip(self, tmp_path):
        """Test records survive a JSONL round trip."""
        records = labelled("AB", ["A", None]) + [routed(["a", "b"])]
        path = tmp_path / "records.jsonl"
        write_records(path, records)
        assert read_records(path) == records

    def test_unknown_fields_ignored(self):
        """Test extra keys in stored rows are dropped."""
        record = TrialRecord.from_dict({"id": "1", "strategy": "DI", "predicted_label": "a",
                                        "gold_label": "a", "latency_ms": 12})
        assert record.id == "1"
