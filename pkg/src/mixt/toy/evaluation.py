"""Four-choice evaluation with per-layer hidden-state capture."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidConfig
from .model import ToyModel
from .task import LABEL_BASE, NUM_LABELS, TaskData


@dataclass
class EvalRecord:
    """One question's outcome.

    ``probs`` is the normalized 4-way answer distribution from the
    final-position logits restricted to the label tokens; ``hidden`` holds
    each block's output at that position (``[num_layers, hidden]``),
    or None when capture is disabled.
    """

    probs: np.ndarray
    predicted: int
    correct: int
    hidden: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (NUM_LABELS,):
            raise InvalidConfig(f"probs must have shape ({NUM_LABELS},)")
        if self.probs.min() < 0 or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise InvalidConfig("probs must be a normalized distribution")


def evaluate(
    model: ToyModel,
    data: TaskData,
    *,
    capture_hidden: bool = True,
    batch_size: int = 256,
) -> tuple[float, list[EvalRecord]]:
    """Accuracy plus one record per question.

    Final-position logits are restricted to the four label tokens and
    softmax-renormalized; the prediction is the argmax with lowest-index
    tie-break.
    """
    if data.size < 1:
        raise InvalidConfig("evaluation set is empty")
    records: list[EvalRecord] = []
    hits = 0
    for start in range(0, data.size, batch_size):
        tokens = data.tokens[start : start + batch_size]
        labels = data.labels[start : start + batch_size]
        result = model.forward(tokens)
        final_logits = result.logits.value[:, -1, LABEL_BASE : LABEL_BASE + NUM_LABELS]
        shifted = final_logits - final_logits.max(axis=-1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=-1, keepdims=True)
        predicted = np.argmax(probs, axis=-1)
        hits += int(np.sum(predicted == labels))
        if capture_hidden:
            stacked = np.stack(
                [h.value[:, -1, :] for h in result.hidden], axis=1
            )
        for j in range(tokens.shape[0]):
            records.append(
                EvalRecord(
                    probs=probs[j],
                    predicted=int(predicted[j]),
                    correct=int(labels[j]),
                    hidden=stacked[j].copy() if capture_hidden else None,
                )
            )
    return hits / data.size, records


def save_eval_records(path, records: list[EvalRecord], *, include_hidden: bool = True) -> Path:
    """JSON array of records; hidden states can be elided to bound size."""
    payload = []
    for rec in records:
        entry = {
            "probs": [float(x) for x in rec.probs],
            "predicted": rec.predicted,
            "correct": rec.correct,
        }
        if include_hidden and rec.hidden is not None:
            entry["hidden"] = [[float(x) for x in row] for row in rec.hidden]
        payload.append(entry)
    path = Path(path)
    path.write_text(json.dumps(payload))
    return path


def load_eval_records(path) -> list[EvalRecord]:
    payload = json.loads(Path(path).read_text())
    records = []
    for entry in payload:
        hidden = np.array(entry["hidden"]) if "hidden" in entry else None
        records.append(
            EvalRecord(
                probs=np.array(entry["probs"]),
                predicted=int(entry["predicted"]),
                correct=int(entry["correct"]),
                hidden=hidden,
            )
        )
    return records
