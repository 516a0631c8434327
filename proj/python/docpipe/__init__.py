"""Python access to the docpipe engine: comparators, assignment, segmentation and batch runs."""

import json
from os import PathLike
from typing import Any, Optional, Sequence

from . import _core
from ._core import DocpipeError, bbox_iou, edit_distance, hungarian_assign, similarity

__all__ = [
    "DocpipeError",
    "bbox_iou",
    "decode_bio",
    "edit_distance",
    "encode_bio",
    "evaluate",
    "evaluate_condition",
    "evaluate_document",
    "gen_corpus",
    "hungarian_assign",
    "mask_latency",
    "process",
    "similarity",
    "split_metrics",
]


def decode_bio(labels: Sequence[str]) -> list:
    """Sections for per-page labels such as ["B-invoice", "I-invoice", "O"]."""
    return json.loads(_core.decode_bio(list(labels)))


def encode_bio(sections: list) -> list:
    return _core.encode_bio(json.dumps(sections))


def split_metrics(truth, predicted, page_count: int) -> dict:
    """truth and predicted are lists of (class_name, pages) pairs."""
    return json.loads(_core.split_metrics(list(truth), list(predicted), page_count))


def evaluate_document(expected: dict, predicted: dict, schema: dict) -> dict:
    """Per-field tp/fp/fn counts; schema is one class entry of a class config."""
    return json.loads(_core.evaluate_document(json.dumps(expected), json.dumps(predicted), json.dumps(schema)))


def evaluate_condition(expression: str, facts: dict) -> bool:
    return _core.evaluate_condition(expression, json.dumps(facts))


def gen_corpus(classes: PathLike, out: PathLike, count: int = 10, seed: int = 42,
               low_confidence_rate: float = 0.0) -> str:
    """Writes a synthetic corpus and returns the manifest path."""
    return str(_core.gen_corpus(classes, out, count, seed, low_confidence_rate))


def process(manifest: PathLike, out: PathLike, config: Optional[PathLike] = None,
            backend: str = "mock") -> tuple:
    """Runs a manifest; returns (exit_code, run report)."""
    code, report = _core.process(manifest, out, config, backend)
    return code, json.loads(report)


def evaluate(results: PathLike, baselines: PathLike, out: PathLike) -> dict:
    return json.loads(_core.evaluate(results, baselines, out))


def mask_latency(doc: Any) -> Any:
    return json.loads(_core.mask_latency(json.dumps(doc)))
