import json
import math
from pathlib import Path

import pytest

import docpipe

SAMPLE = Path(__file__).resolve().parents[2] / "data" / "sample"


def test_comparators():
    assert docpipe.edit_distance("kitten", "sitting") == 3
    assert docpipe.similarity("Acme", " acme ") == 1.0
    assert math.isclose(docpipe.bbox_iou((0, 0, 0.2, 0.2), (0.1, 0.1, 0.3, 0.3)), 1 / 7, abs_tol=1e-12)


def test_hungarian():
    pairs, total = docpipe.hungarian_assign([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
    assert pairs == [(0, 1), (1, 0), (2, 2)]
    assert total == 5.0
    with pytest.raises(docpipe.DocpipeError):
        docpipe.hungarian_assign([[1, 2], [3]])


def test_bio_round_trip():
    sections = docpipe.decode_bio(["B-invoice", "I-invoice", "O", "B-w2"])
    assert [s["class_name"] for s in sections] == ["invoice", "other", "w2"]
    assert sections[0]["pages"] == [0, 1]
    assert docpipe.encode_bio(sections) == ["B-invoice", "I-invoice", "O", "B-w2"]


def test_split_metrics():
    truth = [("invoice", [0, 1]), ("w2", [2])]
    over = [("invoice", [0]), ("invoice", [1]), ("w2", [2])]
    s = docpipe.split_metrics(truth, over, 3)
    assert s["pages_correct"] == 3
    assert s["ordered_matches"] == 1


def test_evaluate_document():
    schema = json.loads((SAMPLE / "classes.json").read_text())["classes"][0]
    attr = schema["attributes"][0]
    name = attr["name"]
    counts = docpipe.evaluate_document({name: "A-1"}, {name: "A-1"}, schema)
    assert counts[name]["tp"] == attr.get("weight", 1.0)
    assert counts[name]["fp"] == counts[name]["fn"] == 0.0


def test_conditions():
    assert docpipe.evaluate_condition("total <= limit", {"total": 120, "limit": 500})
    assert not docpipe.evaluate_condition("total <= limit", {"total": [120, 900], "limit": 500})
    with pytest.raises(docpipe.DocpipeError):
        docpipe.evaluate_condition("total <=", {"total": 1})


def test_corpus_process_evaluate(tmp_path):
    manifest = docpipe.gen_corpus(SAMPLE / "classes.json", tmp_path / "corpus", count=3, seed=42)
    code, report = docpipe.process(manifest, tmp_path / "run", config=SAMPLE / "engine.json")
    assert code == 0
    assert report["rows"][0]["extraction_score"] == 1.0
    again = docpipe.process(manifest, tmp_path / "run2", config=SAMPLE / "engine.json")[1]
    assert docpipe.mask_latency(report) == docpipe.mask_latency(again)
    ev = docpipe.evaluate(tmp_path / "run" / "results", manifest, tmp_path / "eval")
    assert ev["extraction_score"] == 1.0
    assert ev["missing_baselines"] == []


def test_missing_manifest(tmp_path):
    with pytest.raises(docpipe.DocpipeError):
        docpipe.process(tmp_path / "none.csv", tmp_path / "run", config=SAMPLE / "engine.json")
