"""Output-distribution statistics, inter-layer geometry, and regime fits.

Everything in this module is a pure function of its inputs.  The sweep
driver and the offline ``analyze`` command both call the same entry
points, so recomputing metrics from stored evaluation records reproduces
the inline numbers bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateFit,
    EmptyPairSet,
    InvalidConfig,
    LayerCountMismatch,
    ZeroVector,
)

NUM_OPTIONS = 4
_LOG_OPTIONS = math.log(NUM_OPTIONS)
PE_CLAMP = 1e-12

__all__ = [
    "NUM_OPTIONS",
    "PE_CLAMP",
    "AnswerDistBatch",
    "SimilarityMap",
    "TrendFit",
    "SegmentedFit",
    "SweepEntry",
    "SweepReport",
    "output_entropy",
    "prediction_entropy",
    "transformed_pe",
    "trend_fit",
    "interlayer_similarity",
    "geometry_drift",
    "drift_profile",
    "drift_summaries",
    "default_output_pairs",
    "segmented_fit",
    "transition_threshold",
    "entry_from_records",
    "assemble_report",
    "write_metrics_csv",
    "write_drift_profile_csv",
    "write_summary_csv",
]


# ---------------------------------------------------------------------------
# answer distributions


@dataclass(frozen=True)
class AnswerDistBatch:
    """Per-question answer distributions with gold and predicted labels.

    Parameters
    ----------
    probs:
        ``[N, 4]`` matrix; each row is a probability distribution over
        the four answer options.
    gold:
        ``[N]`` gold labels in ``0..3``.
    predicted:
        ``[N]`` predicted labels in ``0..3``.
    """

    probs: np.ndarray
    gold: np.ndarray
    predicted: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        gold = np.asarray(self.gold, dtype=np.int64)
        predicted = np.asarray(self.predicted, dtype=np.int64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "gold", gold)
        object.__setattr__(self, "predicted", predicted)
        if probs.ndim != 2 or probs.shape[1] != NUM_OPTIONS:
            raise InvalidConfig(f"probs must be [N, {NUM_OPTIONS}], got {probs.shape}")
        if probs.shape[0] == 0:
            raise InvalidConfig("batch must contain at least one question")
        if gold.shape != (probs.shape[0],) or predicted.shape != (probs.shape[0],):
            raise InvalidConfig("label arrays must match the batch size")
        if probs.min() < -1e-12 or probs.max() > 1 + 1e-12:
            raise InvalidConfig("probabilities must lie in [0, 1]")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-9:
            raise InvalidConfig("probability rows must sum to 1 within 1e-9")
        for labels, name in ((gold, "gold"), (predicted, "predicted")):
            if labels.min() < 0 or labels.max() >= NUM_OPTIONS:
                raise InvalidConfig(f"{name} labels must lie in 0..{NUM_OPTIONS - 1}")

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def from_eval_records(cls, records: Sequence) -> "AnswerDistBatch":
        """Build a batch from evaluation records (probs/predicted/correct)."""
        return cls(
            probs=np.stack([rec.probs for rec in records]),
            gold=np.array([rec.correct for rec in records]),
            predicted=np.array([rec.predicted for rec in records]),
        )

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.predicted == self.gold))


def _entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy along the last axis, with 0·log 0 := 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1) + 0.0  # + 0.0 turns -0.0 into 0.0


def output_entropy(batch: AnswerDistBatch) -> float:
    """Mean per-question answer entropy, normalized to ``[0, 1]``.

    ``OE = E[H4(p)] / log 4`` where ``H4`` is the Shannon entropy of a
    question's four-way answer distribution.
    """
    return float(np.mean(_entropy(batch.probs)) / _LOG_OPTIONS)


def prediction_entropy(batch: AnswerDistBatch) -> float:
    """Entropy of the empirical predicted-label frequencies, normalized.

    ``PE = H4(f) / log 4`` where ``f_j`` is the fraction of questions
    whose argmax prediction is label ``j``.
    """
    freqs = np.bincount(batch.predicted, minlength=NUM_OPTIONS) / batch.size
    return float(_entropy(freqs) / _LOG_OPTIONS)


def transformed_pe(pe: float) -> float:
    """Diverging-scale transform ``-log10(1 - PE)``.

    ``PE`` is clamped to ``1 - 1e-12`` first so that a perfectly
    balanced prediction profile maps to a large finite value instead of
    infinity.
    """
    if not 0.0 <= pe <= 1.0 + 1e-12:
        raise InvalidConfig(f"PE must lie in [0, 1], got {pe}")
    clamped = min(pe, 1.0 - PE_CLAMP)
    return -math.log10(1.0 - clamped) + 0.0  # + 0.0 turns -0.0 into 0.0


# ---------------------------------------------------------------------------
# trend fits


@dataclass(frozen=True)
class TrendFit:
    """Ordinary least-squares line with its residual sum of squares."""

    slope: float
    intercept: float
    residual: float

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def trend_fit(points: Sequence[tuple[float, float]]) -> TrendFit:
    """Fit ``statistic = slope · accuracy + intercept`` by least squares.

    Raises
    ------
    DegenerateFit
        If fewer than two points are given or all accuracies coincide.
    """
    if len(points) < 2:
        raise DegenerateFit(f"need at least 2 points, got {len(points)}")
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    if np.all(x == x[0]):
        raise DegenerateFit("all accuracy values are equal")
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    residual = float(np.sum((design @ coef - y) ** 2))
    return TrendFit(slope=slope, intercept=intercept, residual=residual)


# ---------------------------------------------------------------------------
# inter-layer similarity and drift


@dataclass(frozen=True)
class SimilarityMap:
    """Mean statistic per ordered layer pair ``(l, l')`` with ``l' > l``.

    ``values`` is an ``[L, L]`` matrix whose strict upper triangle holds
    the pair statistics; all other entries are zero and meaningless.
    The same container carries similarity maps (entries in ``[-1, 1]``)
    and their absolute-difference drift maps.
    """

    layer_count: int
    values: np.ndarray
    skipped: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.layer_count < 2:
            raise InvalidConfig("similarity needs at least two layers")
        if values.shape != (self.layer_count, self.layer_count):
            raise InvalidConfig(
                f"values must be [{self.layer_count}, {self.layer_count}],"
                f" got {values.shape}"
            )
        if not np.all(values[~np.triu(np.ones_like(values, dtype=bool), k=1)] == 0.0):
            raise InvalidConfig("entries outside the strict upper triangle must be 0")

    def pair(self, layer: int, later: int) -> float:
        if not 0 <= layer < later < self.layer_count:
            raise InvalidConfig(f"invalid layer pair ({layer}, {later})")
        return float(self.values[layer, later])

    def pairs(self) -> Iterable[tuple[int, int]]:
        for layer in range(self.layer_count - 1):
            for later in range(layer + 1, self.layer_count):
                yield layer, later

    def to_payload(self) -> dict:
        return {
            "layer_count": self.layer_count,
            "skipped": self.skipped,
            "values": [
                [int(l), int(lp), float(self.values[l, lp])] for l, lp in self.pairs()
            ],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SimilarityMap":
        layer_count = int(payload["layer_count"])
        values = np.zeros((layer_count, layer_count))
        for l, lp, v in payload["values"]:
            values[int(l), int(lp)] = float(v)
        return cls(layer_count=layer_count, values=values,
                   skipped=int(payload.get("skipped", 0)))


def interlayer_similarity(hidden: np.ndarray) -> SimilarityMap:
    """Mean cosine similarity between hidden states of distinct layers.

    Parameters
    ----------
    hidden:
        ``[P, L, H]`` hidden states at the answer-decision position for
        ``P`` prompts and ``L`` layers.

    A prompt whose hidden state is exactly zero at either layer of a
    pair has no defined cosine there; that contribution is skipped and
    the pair mean is taken over the remaining prompts (the skip count is
    recorded on the returned map).

    Raises
    ------
    ZeroVector
        If every prompt is skipped for some pair, leaving its mean
        undefined.
    """
    states = np.asarray(hidden, dtype=np.float64)
    if states.ndim != 3:
        raise InvalidConfig(f"hidden states must be [P, L, H], got {states.shape}")
    prompts, layers, _ = states.shape
    if prompts == 0:
        raise InvalidConfig("need at least one prompt")
    if layers < 2:
        raise InvalidConfig("similarity needs at least two layers")

    norms = np.linalg.norm(states, axis=2)  # [P, L]
    nonzero = norms > 0.0
    safe = np.where(nonzero, norms, 1.0)
    unit = states / safe[:, :, None]
    # cosine for every prompt and layer pair in one batched product
    cos = np.einsum("pld,pmd->plm", unit, unit)

    values = np.zeros((layers, layers))
    skipped = 0
    for l in range(layers - 1):
        for lp in range(l + 1, layers):
            valid = nonzero[:, l] & nonzero[:, lp]
            count = int(valid.sum())
            skipped += prompts - count
            if count == 0:
                raise ZeroVector(
                    f"pair ({l}, {lp}) has no prompt with nonzero hidden states"
                )
            values[l, lp] = np.clip(cos[valid, l, lp].sum() / count, -1.0, 1.0)
    return SimilarityMap(layer_count=layers, values=values, skipped=skipped)


def geometry_drift(current: SimilarityMap, reference: SimilarityMap) -> SimilarityMap:
    """Elementwise absolute difference of two similarity maps.

    Raises
    ------
    LayerCountMismatch
        If the maps cover different layer counts.
    """
    if current.layer_count != reference.layer_count:
        raise LayerCountMismatch(
            f"layer counts differ: {current.layer_count} vs {reference.layer_count}"
        )
    return SimilarityMap(
        layer_count=current.layer_count,
        values=np.abs(current.values - reference.values),
    )


def drift_profile(drift: SimilarityMap) -> np.ndarray:
    """Mean drift per start layer: ``profile[l] = mean over l' > l``."""
    layers = drift.layer_count
    profile = np.empty(layers - 1)
    for l in range(layers - 1):
        profile[l] = drift.values[l, l + 1:].mean()
    return profile


def default_output_pairs(layer_count: int, tail: int = 4) -> list[tuple[int, int]]:
    """All pairs ``(l, l')`` whose end layer lies in the last ``tail`` layers."""
    if tail < 1:
        raise InvalidConfig(f"tail must be >= 1, got {tail}")
    first_end = max(1, layer_count - tail)
    return [
        (l, lp)
        for lp in range(first_end, layer_count)
        for l in range(lp)
    ]


def drift_summaries(
    drift: SimilarityMap,
    output_pairs: Sequence[tuple[int, int]] | None = None,
) -> tuple[float, float]:
    """Uniform drift means over the output-side pair set and all pairs.

    ``output_pairs`` defaults to every pair ending in the last four
    layers; the caller records whichever set it used.

    Raises
    ------
    EmptyPairSet
        If the output-side pair set is empty.
    """
    if output_pairs is None:
        output_pairs = default_output_pairs(drift.layer_count)
    pairs = [(int(l), int(lp)) for l, lp in output_pairs]
    if not pairs:
        raise EmptyPairSet("output-side pair set is empty")
    for l, lp in pairs:
        if not 0 <= l < lp < drift.layer_count:
            raise InvalidConfig(f"invalid layer pair ({l}, {lp})")
    output_mean = float(np.mean([drift.values[l, lp] for l, lp in pairs]))
    global_mean = float(
        np.mean([drift.values[l, lp] for l, lp in drift.pairs()])
    )
    return output_mean, global_mean


# ---------------------------------------------------------------------------
# regime detection


@dataclass(frozen=True)
class SegmentedFit:
    """Two-segment piecewise-linear least squares over an integer series.

    ``breakpoint`` is the abscissa where the two fitted lines intersect;
    it is ``None`` when the slopes coincide (``indeterminate`` is then
    set and the series is effectively a single line).
    """

    pre_slope: float
    post_slope: float
    breakpoint: float | None
    indeterminate: bool
    split_at: float
    residual: float


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    sse = float(np.sum((design @ coef - y) ** 2))
    return float(coef[0]), float(coef[1]), sse


def segmented_fit(series: Sequence[tuple[float, float]]) -> SegmentedFit:
    """Fit two lines joined at the best interior split of the series.

    Every interior point (index ``1 .. n-2``) is tried as the shared
    last-point-of-segment-one / first-point-of-segment-two; the split
    minimizing total squared residual wins, and the reported breakpoint
    is the intersection of the two fitted lines.

    Raises
    ------
    DegenerateFit
        If fewer than four points are given or either segment's
        abscissas coincide.
    """
    if len(series) < 4:
        raise DegenerateFit(f"need at least 4 points, got {len(series)}")
    x = np.array([p[0] for p in series], dtype=np.float64)
    y = np.array([p[1] for p in series], dtype=np.float64)
    if np.any(np.diff(x) <= 0):
        raise InvalidConfig("series abscissas must be strictly increasing")

    best: tuple[float, int, tuple, tuple] | None = None
    for split in range(1, len(x) - 1):
        left = _line_fit(x[: split + 1], y[: split + 1])
        right = _line_fit(x[split:], y[split:])
        total = left[2] + right[2]
        if best is None or total < best[0] - 1e-15:
            best = (total, split, left, right)
    assert best is not None
    total, split, (m1, b1, _), (m2, b2, _) = best

    if math.isclose(m1, m2, rel_tol=0.0, abs_tol=1e-12):
        return SegmentedFit(
            pre_slope=m1, post_slope=m2, breakpoint=None,
            indeterminate=True, split_at=float(x[split]), residual=total,
        )
    crossing = (b2 - b1) / (m1 - m2)
    return SegmentedFit(
        pre_slope=m1, post_slope=m2, breakpoint=float(crossing),
        indeterminate=False, split_at=float(x[split]), residual=total,
    )


def transition_threshold(
    series: Sequence[tuple[float, float]],
    plateau_window: int = 3,
    drop_delta: float | None = None,
) -> float | None:
    """Smallest depth whose accuracy drop below the plateau is permanent.

    The plateau is the mean accuracy of the first ``plateau_window``
    points.  A depth qualifies when its accuracy falls below
    ``plateau - drop_delta`` and every later depth stays below as well;
    ``None`` (no transition inside the swept range) is a valid result.

    ``drop_delta`` defaults to ``0.1 · plateau``.
    """
    if plateau_window < 1:
        raise InvalidConfig(f"plateau_window must be >= 1, got {plateau_window}")
    if len(series) == 0:
        raise InvalidConfig("series must be nonempty")
    x = np.array([p[0] for p in series], dtype=np.float64)
    acc = np.array([p[1] for p in series], dtype=np.float64)
    if np.any(np.diff(x) <= 0):
        raise InvalidConfig("series must be sorted by depth")

    plateau = float(acc[: plateau_window].mean())
    delta = 0.1 * plateau if drop_delta is None else float(drop_delta)
    if delta <= 0.0:
        raise InvalidConfig(f"drop_delta must be > 0, got {delta}")
    cutoff = plateau - delta

    below = acc < cutoff
    for i in range(len(acc)):
        if np.all(below[i:]) and below[i]:
            return float(x[i])
    return None


# ---------------------------------------------------------------------------
# sweep report assembly (shared by the sweep driver and offline analysis)


@dataclass(frozen=True)
class SweepEntry:
    """All metrics for one compression depth."""

    n_b: int
    accuracy: float
    oe: float
    pe: float
    tpe: float
    similarity: SimilarityMap | None
    drift: SimilarityMap | None
    output_mean: float | None
    global_mean: float | None

    def to_payload(self) -> dict:
        return {
            "n_b": self.n_b,
            "accuracy": self.accuracy,
            "oe": self.oe,
            "pe": self.pe,
            "tpe": self.tpe,
            "similarity": None if self.similarity is None else self.similarity.to_payload(),
            "drift": None if self.drift is None else self.drift.to_payload(),
            "output_mean": self.output_mean,
            "global_mean": self.global_mean,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SweepEntry":
        def maybe_map(entry):
            return None if entry is None else SimilarityMap.from_payload(entry)

        return cls(
            n_b=int(payload["n_b"]),
            accuracy=float(payload["accuracy"]),
            oe=float(payload["oe"]),
            pe=float(payload["pe"]),
            tpe=float(payload["tpe"]),
            similarity=maybe_map(payload["similarity"]),
            drift=maybe_map(payload["drift"]),
            output_mean=payload["output_mean"],
            global_mean=payload["global_mean"],
        )


def entry_from_records(
    n_b: int,
    records: Sequence,
    reference: SimilarityMap | None = None,
    output_pairs: Sequence[tuple[int, int]] | None = None,
) -> SweepEntry:
    """Compute one depth's metrics from its evaluation records.

    ``reference`` is the dense baseline's similarity map; passing the
    entry's own map (the depth-0 case) yields an all-zero drift.  When
    the records carry no hidden states, geometry metrics are omitted.
    """
    batch = AnswerDistBatch.from_eval_records(records)
    oe = output_entropy(batch)
    pe = prediction_entropy(batch)
    entry = {
        "n_b": n_b,
        "accuracy": batch.accuracy,
        "oe": oe,
        "pe": pe,
        "tpe": transformed_pe(pe),
    }
    if records[0].hidden is None:
        return SweepEntry(**entry, similarity=None, drift=None,
                          output_mean=None, global_mean=None)

    similarity = interlayer_similarity(np.stack([rec.hidden for rec in records]))
    if reference is None:
        reference = similarity
    drift = geometry_drift(similarity, reference)
    output_mean, global_mean = drift_summaries(drift, output_pairs)
    return SweepEntry(**entry, similarity=similarity, drift=drift,
                      output_mean=output_mean, global_mean=global_mean)


@dataclass(frozen=True)
class SweepReport:
    """Per-depth metrics plus the cross-depth fits and detected threshold."""

    entries: tuple[SweepEntry, ...]
    threshold: float | None
    trend_oe: TrendFit | None
    trend_tpe: TrendFit | None
    segmented: SegmentedFit | None
    output_pairs: tuple[tuple[int, int], ...] | None
    settings: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        depths = [entry.n_b for entry in self.entries]
        if len(self.entries) == 0:
            raise InvalidConfig("report needs at least one entry")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise InvalidConfig("entries must be strictly increasing in depth")
        if self.threshold is not None and not (
            depths[0] <= self.threshold <= depths[-1]
        ):
            raise InvalidConfig("threshold must lie within the swept range")

    def entry(self, n_b: int) -> SweepEntry:
        for item in self.entries:
            if item.n_b == n_b:
                return item
        raise InvalidConfig(f"no entry for depth {n_b}")

    def to_json(self) -> str:
        def fit_payload(fit):
            return None if fit is None else fit.__dict__.copy()

        payload = {
            "entries": [entry.to_payload() for entry in self.entries],
            "threshold": self.threshold,
            "trend_oe": fit_payload(self.trend_oe),
            "trend_tpe": fit_payload(self.trend_tpe),
            "segmented": fit_payload(self.segmented),
            "output_pairs": (
                None if self.output_pairs is None
                else [list(pair) for pair in self.output_pairs]
            ),
            "settings": self.settings,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepReport":
        payload = json.loads(text)
        segmented = payload["segmented"]
        return cls(
            entries=tuple(
                SweepEntry.from_payload(entry) for entry in payload["entries"]
            ),
            threshold=payload["threshold"],
            trend_oe=None if payload["trend_oe"] is None else TrendFit(**payload["trend_oe"]),
            trend_tpe=None if payload["trend_tpe"] is None else TrendFit(**payload["trend_tpe"]),
            segmented=None if segmented is None else SegmentedFit(**segmented),
            output_pairs=(
                None if payload["output_pairs"] is None
                else tuple(tuple(pair) for pair in payload["output_pairs"])
            ),
            settings=payload["settings"],
        )


def assemble_report(
    entries: Sequence[SweepEntry],
    output_pairs: Sequence[tuple[int, int]] | None,
    settings: dict | None = None,
    plateau_window: int = 3,
    drop_delta: float | None = None,
) -> SweepReport:
    """Combine per-depth entries into a report with cross-depth analyses.

    Fits that their inputs cannot determine (too few depths, equal
    accuracies, missing geometry) are recorded as absent rather than
    raised: a short sweep is a valid sweep.
    """
    entries = tuple(entries)
    acc_series = [(float(e.n_b), e.accuracy) for e in entries]
    threshold = (
        transition_threshold(acc_series, plateau_window, drop_delta)
        if len(entries) >= plateau_window
        else None
    )

    def try_trend(points):
        try:
            return trend_fit(points)
        except DegenerateFit:
            return None

    trend_oe = try_trend([(e.accuracy, e.oe) for e in entries])
    trend_tpe = try_trend([(e.accuracy, e.tpe) for e in entries])

    drift_series = [
        (float(e.n_b), e.global_mean) for e in entries if e.global_mean is not None
    ]
    segmented = None
    if len(drift_series) >= 4:
        try:
            segmented = segmented_fit(drift_series)
        except DegenerateFit:
            segmented = None

    return SweepReport(
        entries=entries,
        threshold=threshold,
        trend_oe=trend_oe,
        trend_tpe=trend_tpe,
        segmented=segmented,
        output_pairs=None if output_pairs is None else tuple(
            (int(l), int(lp)) for l, lp in output_pairs
        ),
        settings={} if settings is None else dict(settings),
    )


# ---------------------------------------------------------------------------
# CSV exports (the plotting interface)


def _write_rows(path, header: list[str], rows: Iterable[list]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_metrics_csv(path, report: SweepReport) -> Path:
    """One row per depth: accuracy and the three entropy statistics."""
    return _write_rows(
        path,
        ["N_B", "acc", "OE", "PE", "tPE"],
        ([e.n_b, e.accuracy, e.oe, e.pe, e.tpe] for e in report.entries),
    )


def write_drift_profile_csv(path, report: SweepReport) -> Path:
    """Drift landscape: mean drift per start layer for every depth."""
    def rows():
        for entry in report.entries:
            if entry.drift is None:
                continue
            for layer, value in enumerate(drift_profile(entry.drift)):
                yield [entry.n_b, layer, float(value)]

    return _write_rows(path, ["N_B", "layer", "mean_drift"], rows())


def write_summary_csv(path, report: SweepReport) -> Path:
    """Output-side and global drift means per depth."""
    def rows():
        for entry in report.entries:
            if entry.output_mean is None:
                continue
            yield [entry.n_b, entry.output_mean, entry.global_mean]

    return _write_rows(path, ["N_B", "output_mean", "global_mean"], rows())
