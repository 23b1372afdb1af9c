"""Synthetic 4-choice sequence task.

Each item is a fixed-length token sequence: seven content positions
holding four *key* tokens (ids 0..3, value = id) and three *distractor*
tokens (ids 4..7) in shuffled order, followed by a question-marker token.
The gold answer is label ``sum(key values) mod 4``, encoded as one of the
four label tokens. The label distribution is balanced exactly by cycling
target labels and adjusting the last key of each item to hit its target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig

NUM_KEYS = 4
NUM_DISTRACTORS = 3
SEQ_LEN = NUM_KEYS + NUM_DISTRACTORS + 1
NUM_LABELS = 4

KEY_IDS = range(0, 4)
DISTRACTOR_IDS = range(4, 8)
MARKER_ID = 8
LABEL_BASE = 9
VOCAB_SIZE = LABEL_BASE + NUM_LABELS


@dataclass(frozen=True)
class TaskData:
    """Token sequences plus gold label indices (0..3)."""

    tokens: np.ndarray  # int64 [size, SEQ_LEN]
    labels: np.ndarray  # int64 [size]

    def __post_init__(self):
        if self.tokens.shape[0] != self.labels.shape[0]:
            raise InvalidConfig("tokens and labels disagree on size")

    @property
    def size(self) -> int:
        return self.tokens.shape[0]

    @property
    def label_tokens(self) -> np.ndarray:
        return self.labels + LABEL_BASE


def gold_label(sequence: np.ndarray) -> int:
    """Re-derive the gold label of one sequence from the generative rule."""
    keys = [int(t) for t in sequence[:-1] if 0 <= int(t) < NUM_KEYS]
    return sum(keys) % NUM_LABELS


def make_task(seed: int, size: int) -> TaskData:
    """Deterministic balanced dataset of ``size`` items."""
    if size < 1:
        raise InvalidConfig(f"size must be >= 1, got {size}")
    rng = np.random.default_rng(seed)
    tokens = np.empty((size, SEQ_LEN), dtype=np.int64)
    labels = np.empty(size, dtype=np.int64)
    base_order = np.array([0] * NUM_KEYS + [1] * NUM_DISTRACTORS)
    for i in range(size):
        kinds = rng.permutation(base_order)
        key_positions = np.flatnonzero(kinds == 0)
        content = np.empty(SEQ_LEN - 1, dtype=np.int64)
        content[kinds == 0] = rng.integers(0, NUM_KEYS, size=NUM_KEYS)
        content[kinds == 1] = rng.integers(4, 8, size=NUM_DISTRACTORS)
        # force the cycled target label by adjusting the last key
        target = i % NUM_LABELS
        others = int(content[key_positions[:-1]].sum())
        content[key_positions[-1]] = (target - others) % NUM_LABELS
        tokens[i, :-1] = content
        tokens[i, -1] = MARKER_ID
        labels[i] = target
    return TaskData(tokens=tokens, labels=labels)
