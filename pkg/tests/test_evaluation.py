from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from intentgate import evaluation
from intentgate.domain import DEFAULT_OOS_TOKEN, IntentCatalog, IntentDef
from intentgate.errors import DataError
from oracles import brute_metrics

CATALOG = IntentCatalog(
    [IntentDef("alpha"), IntentDef("beta"), IntentDef("gamma")]
)
OOS = CATALOG.oos_token


def test_label_space_order():
    assert evaluation.label_space(CATALOG) == ("alpha", "beta", "gamma", OOS)


def test_perfect_predictions():
    golds = ["alpha", "beta", "gamma", OOS]
    report = evaluation.evaluate(golds, golds, CATALOG)
    assert report.micro_f1 == 1.0
    assert report.macro_f1 == 1.0
    assert report.weighted_f1 == 1.0
    assert report.ins_accuracy == 1.0
    assert report.oos_precision == 1.0
    assert report.oos_recall == 1.0
    assert report.flags == ()


def test_matches_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    labels = evaluation.label_space(CATALOG)
    for _ in range(30):
        n = int(rng.integers(1, 40))
        golds = [labels[i] for i in rng.integers(0, len(labels), n)]
        preds = [labels[i] for i in rng.integers(0, len(labels), n)]
        report = evaluation.evaluate(golds, preds, CATALOG)
        ref = brute_metrics(golds, preds, labels)
        for label in labels:
            got = report.per_class[label]
            want = ref["per_class"][label]
            assert got.precision == want["precision"]
            assert got.recall == want["recall"]
            assert got.f1 == want["f1"]
            assert got.support == want["support"]
        assert report.micro_f1 == ref["accuracy"]
        assert report.macro_f1 == ref["macro_f1"]
        assert report.weighted_f1 == ref["weighted_f1"]


def test_micro_equals_accuracy():
    golds = ["alpha", "alpha", "beta", OOS, "gamma"]
    preds = ["alpha", "beta", "beta", "gamma", OOS]
    report = evaluation.evaluate(golds, preds, CATALOG)
    correct = sum(g == p for g, p in zip(golds, preds))
    assert report.micro_f1 == correct / len(golds)


def test_confusion_layout():
    golds = ["alpha", "alpha", "beta", OOS]
    preds = ["alpha", "beta", "beta", "alpha"]
    report = evaluation.evaluate(golds, preds, CATALOG)
    assert report.confusion[0] == (1, 1, 0, 0)  # gold alpha row
    assert report.confusion[1] == (0, 1, 0, 0)
    assert report.confusion[3] == (1, 0, 0, 0)  # gold OOS predicted alpha
    assert sum(map(sum, report.confusion)) == report.total == 4


def test_never_predicted_flag():
    report = evaluation.evaluate(["alpha", "gamma"], ["alpha", "alpha"], CATALOG)
    assert report.per_class["gamma"].precision == 0.0
    assert "precision undefined for 'gamma': never predicted" in report.flags


def test_no_gold_items_flag():
    report = evaluation.evaluate(["alpha"], ["beta"], CATALOG)
    assert report.per_class["gamma"].recall == 0.0
    assert "recall undefined for 'gamma': no gold items" in report.flags


def test_f1_undefined_flag():
    # beta appears in gold and predictions but never correctly
    golds = ["beta", "alpha"]
    preds = ["alpha", "beta"]
    report = evaluation.evaluate(golds, preds, CATALOG)
    assert report.per_class["beta"].f1 == 0.0
    assert "f1 undefined for 'beta': precision and recall both zero" in report.flags


def test_all_oos_gold_flags_ins_accuracy():
    report = evaluation.evaluate([OOS, OOS], [OOS, "alpha"], CATALOG)
    assert report.gold_ins_total == 0
    assert report.ins_accuracy == 0.0
    assert "in-scope accuracy undefined: no in-scope gold items" in report.flags


def test_ins_accuracy_ignores_oos_rows():
    golds = ["alpha", "beta", OOS, OOS]
    preds = ["alpha", OOS, OOS, "beta"]
    report = evaluation.evaluate(golds, preds, CATALOG)
    assert report.ins_accuracy == 0.5
    assert report.gold_ins_total == 2


def test_evaluate_input_errors():
    with pytest.raises(DataError, match="length mismatch"):
        evaluation.evaluate(["alpha"], [], CATALOG)
    with pytest.raises(DataError, match="nothing to evaluate"):
        evaluation.evaluate([], [], CATALOG)
    with pytest.raises(DataError, match="unknown gold label"):
        evaluation.evaluate(["mystery"], ["alpha"], CATALOG)
    with pytest.raises(DataError, match="unknown predicted label"):
        evaluation.evaluate(["alpha"], ["mystery"], CATALOG)


@pytest.fixture()
def sample_report():
    golds = ["alpha", "alpha", "beta", "gamma", OOS, OOS]
    preds = ["alpha", "beta", "beta", "gamma", OOS, "alpha"]
    return evaluation.evaluate(golds, preds, CATALOG)


def test_report_dict_shape(sample_report):
    data = evaluation.report_to_dict(sample_report)
    assert set(data["per_class"]) == set(sample_report.labels)
    assert data["micro_f1"] == sample_report.micro_f1
    assert data["confusion"] == [list(row) for row in sample_report.confusion]
    assert data["total"] == 6


def test_json_format_roundtrips(sample_report):
    parsed = json.loads(evaluation.format_report_json(sample_report))
    assert parsed == evaluation.report_to_dict(sample_report)


def test_text_format_mentions_everything(sample_report):
    text = evaluation.format_report_text(sample_report)
    for label in sample_report.labels:
        assert label in text
    assert "micro" in text
    assert "confusion" in text.lower()


def test_text_format_carries_flags():
    report = evaluation.evaluate(["alpha"], ["beta"], CATALOG)
    text = evaluation.format_report_text(report)
    assert "note:" in text


def test_csv_format_parses(sample_report):
    rows = list(csv.reader(io.StringIO(evaluation.format_report_csv(sample_report))))
    header = rows[0]
    assert header[0] == "label"
    f1_col = header.index("f1")
    body = {row[0]: row for row in rows[1:]}
    for label in sample_report.labels:
        assert label in body
    assert float(body["micro_f1"][f1_col]) == pytest.approx(
        sample_report.micro_f1, abs=1e-6
    )
    assert float(body["ins_accuracy"][f1_col]) == pytest.approx(
        sample_report.ins_accuracy, abs=1e-6
    )


def test_formatter_registry(sample_report):
    assert set(evaluation.FORMATTERS) == {"json", "text", "csv"}
    for fmt in evaluation.FORMATTERS.values():
        assert isinstance(fmt(sample_report), str)


def test_routing_analysis_fractions():
    golds = [OOS, OOS, "alpha", "alpha", "beta"]
    top1 = ["alpha", "beta", "alpha", "beta", "beta"]
    scores = [0.2, 0.08, 0.01, 0.12, 0.3]
    result = evaluation.routing_analysis(golds, top1, scores)
    assert set(result) == {"low", "moderate", "high"}
    assert result["low"]["gold_oos"] == 0.5  # only 0.2 clears 0.15
    assert result["high"]["gold_oos"] == 1.0
    assert result["low"]["misclassified_ins"] == 0.0
    assert result["moderate"]["misclassified_ins"] == 1.0
    assert result["moderate"]["correct_ins"] == 0.5


def test_routing_analysis_drops_empty_groups():
    result = evaluation.routing_analysis(["alpha"], ["alpha"], [0.5])
    for row in result.values():
        assert set(row) == {"correct_ins"}


def test_routing_analysis_custom_thresholds():
    result = evaluation.routing_analysis(
        [OOS], ["alpha"], [0.5], thresholds={"only": 0.4}
    )
    assert result == {"only": {"gold_oos": 1.0}}


def test_routing_analysis_rejects_nan_and_mismatch():
    with pytest.raises(DataError, match="NaN"):
        evaluation.routing_analysis(["alpha"], ["alpha"], [float("nan")])
    with pytest.raises(DataError, match="equally long"):
        evaluation.routing_analysis(["alpha"], ["alpha"], [0.1, 0.2])


def test_load_hint3_fixture(hint3_path):
    dataset = evaluation.load_hint3(hint3_path)
    assert len(dataset) == 10
    labels = dataset.labels
    assert labels.count(DEFAULT_OOS_TOKEN) == 2
    assert evaluation.HINT3_SENTINEL not in labels
    assert [u.id for u in dataset.utterances] == [f"row-{n}" for n in range(2, 12)]
    assert all(u.embedding is None for u in dataset.utterances)
    assert dataset.utterances[0].text


def test_load_hint3_custom_oos_token(hint3_path):
    dataset = evaluation.load_hint3(hint3_path, oos_token="none")
    assert dataset.labels.count("none") == 2


def test_load_hint3_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sentence,tag\nhello,GREET\n", encoding="utf-8")
    with pytest.raises(DataError, match="missing column 'label'"):
        evaluation.load_hint3(path)


def test_load_hint3_blank_fields(tmp_path):
    path = tmp_path / "gaps.csv"
    path.write_text(
        "sentence,label\nwhere is it,ORDER_STATUS\n  ,ORDER_STATUS\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match=r"gaps\.csv:3: empty sentence"):
        evaluation.load_hint3(path)
    path.write_text("sentence,label\nwhere is it,\n", encoding="utf-8")
    with pytest.raises(DataError, match=r"gaps\.csv:2: empty label"):
        evaluation.load_hint3(path)


def test_load_hint3_header_only(tmp_path, caplog):
    path = tmp_path / "empty.csv"
    path.write_text("sentence,label\n", encoding="utf-8")
    with caplog.at_level("WARNING"):
        dataset = evaluation.load_hint3(path)
    assert len(dataset) == 0
    assert any("header-only" in rec.message for rec in caplog.records)
