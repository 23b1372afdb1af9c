"""Analytic parameter, FLOP, and storage accounting for compression plans.

All quantities are closed-form functions of an architecture description
and a compression plan; nothing here touches weights.  Parameter counts
are exact integers; FLOPs follow the stated conventions (two FLOPs per
multiply-add, attention kept uncompressed, training = 3x inference).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidConfig, PlanInvalid
from .operator import MixtSpec, flop_count, param_count
from .plan import CompressionPlan

BYTES_PER_PARAM = {"bf16": 2.0, "int8": 1.0, "int4": 0.5}
FLOP_MODES = ("paper", "contraction")
TRAINING_FLOP_FACTOR = 3

__all__ = [
    "BYTES_PER_PARAM",
    "FLOP_MODES",
    "TRAINING_FLOP_FACTOR",
    "ArchConfig",
    "ParamCensus",
    "ResourceReport",
    "count_params",
    "flops",
    "storage",
    "scaling_curve",
    "write_scaling_csv",
    "build_report",
    "render_report",
]


@dataclass(frozen=True)
class ArchConfig:
    """Shape description of a pre-norm decoder-only transformer.

    ``norm_params_per_layer`` counts the hidden-wide gain vectors in
    each block (two for the usual attention/feed-forward pair); a final
    norm of one hidden-wide vector is always added.  ``pos_embeddings``
    is the number of learned absolute position rows (0 for models with
    computed positional encodings).
    """

    num_layers: int
    hidden: int
    intermediate: int
    vocab: int
    heads: int
    kv_heads: int
    tied_embeddings: bool = False
    norm_params_per_layer: int = 2
    pos_embeddings: int = 0

    def __post_init__(self) -> None:
        for name in ("num_layers", "hidden", "intermediate", "vocab", "heads",
                     "kv_heads"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.heads % self.kv_heads != 0:
            raise InvalidConfig(
                f"kv_heads ({self.kv_heads}) must divide heads ({self.heads})"
            )
        if self.hidden % self.heads != 0:
            raise InvalidConfig(
                f"heads ({self.heads}) must divide hidden ({self.hidden})"
            )
        if self.norm_params_per_layer < 0 or self.pos_embeddings < 0:
            raise InvalidConfig("norm and position counts must be >= 0")

    @property
    def kv_dim(self) -> int:
        return self.hidden * self.kv_heads // self.heads

    def map_shapes(self) -> list[tuple[str, int, int]]:
        """Per-layer linear maps as (name, out_dim, in_dim)."""
        return [
            ("q", self.hidden, self.hidden),
            ("k", self.kv_dim, self.hidden),
            ("v", self.kv_dim, self.hidden),
            ("o", self.hidden, self.hidden),
            ("gate", self.intermediate, self.hidden),
            ("up", self.intermediate, self.hidden),
            ("down", self.hidden, self.intermediate),
        ]

    @classmethod
    def from_toy(cls, cfg) -> "ArchConfig":
        """Architecture of a toy model config (untied, learned positions)."""
        return cls(
            num_layers=cfg.num_blocks,
            hidden=cfg.hidden,
            intermediate=cfg.ffn_dim,
            vocab=cfg.vocab_size,
            heads=cfg.num_heads,
            kv_heads=cfg.num_heads,
            tied_embeddings=False,
            norm_params_per_layer=2,
            pos_embeddings=cfg.max_seq_len,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        return cls(**json.loads(text))


def _layer_specs(arch: ArchConfig, plan: CompressionPlan) -> list[MixtSpec]:
    try:
        return [
            MixtSpec.for_dims(plan.d, in_dim, out_dim, plan.n_t)
            for _, out_dim, in_dim in arch.map_shapes()
        ]
    except InvalidConfig as exc:
        raise PlanInvalid(f"plan does not fit the architecture: {exc}") from exc


@dataclass(frozen=True)
class ParamCensus:
    """Exact integer parameter totals with a per-component breakdown."""

    dense_total: int
    compressed_total: int
    dense_breakdown: dict
    compressed_breakdown: dict

    @property
    def reduction_percent(self) -> float:
        return 100.0 * (1.0 - self.compressed_total / self.dense_total)


def count_params(arch: ArchConfig, plan: CompressionPlan) -> ParamCensus:
    """Exact parameter census of the dense and plan-compressed model.

    Dense linear maps cost out·in; a replaced map costs the branch total
    of its minimally padded operator.  Embeddings, norms, and positions
    are never compressed.

    Raises
    ------
    PlanInvalid
        If the plan names more layers than exist or its tensorization
        does not fit some map.
    """
    replaced = plan.blocks_to_replace(arch.num_layers)
    specs = _layer_specs(arch, plan) if replaced else []

    embed = arch.vocab * arch.hidden
    head = 0 if arch.tied_embeddings else arch.vocab * arch.hidden
    positions = arch.pos_embeddings * arch.hidden
    norms = (arch.num_layers * arch.norm_params_per_layer + 1) * arch.hidden

    dense_layer = sum(out * inp for _, out, inp in arch.map_shapes())
    mixt_layer = sum(param_count(spec) for spec in specs)

    dense_breakdown = {
        "embeddings": embed,
        "lm_head": head,
        "positions": positions,
        "norms": norms,
        "linear_maps": arch.num_layers * dense_layer,
    }
    compressed_breakdown = dict(dense_breakdown)
    compressed_breakdown["linear_maps"] = (
        (arch.num_layers - len(replaced)) * dense_layer + len(replaced) * mixt_layer
    )
    return ParamCensus(
        dense_total=sum(dense_breakdown.values()),
        compressed_total=sum(compressed_breakdown.values()),
        dense_breakdown=dense_breakdown,
        compressed_breakdown=compressed_breakdown,
    )


def flops(
    arch: ArchConfig,
    plan: CompressionPlan,
    seq_len: int,
    mode: str = "paper",
    phase: str = "inference",
) -> dict:
    """FLOP totals for one sequence, dense vs compressed.

    Linear maps cost two FLOPs per multiply-add per token: dense maps at
    their raw dimensions, replaced maps per ``flop_count`` in the given
    mode.  Attention scores and value mixing add ``4·seq²·hidden`` per
    layer and are never compressed.  Embedding lookup is free; the
    output head matmul is always counted.  Training is inference times
    3 (one forward plus twice for the backward pass) by convention.
    """
    if seq_len < 1:
        raise InvalidConfig(f"seq_len must be >= 1, got {seq_len}")
    if mode not in FLOP_MODES:
        raise InvalidConfig(f"mode must be one of {FLOP_MODES}, got {mode!r}")
    if phase not in ("inference", "training"):
        raise InvalidConfig(f"phase must be inference or training, got {phase!r}")

    replaced = plan.blocks_to_replace(arch.num_layers)
    specs = _layer_specs(arch, plan) if replaced else []

    dense_layer_tok = sum(2 * out * inp for _, out, inp in arch.map_shapes())
    mixt_layer_tok = sum(2 * flop_count(spec, mode) for spec in specs)
    attention = arch.num_layers * 4 * seq_len * seq_len * arch.hidden
    head = seq_len * 2 * arch.vocab * arch.hidden

    def total(layer_linear: int) -> int:
        scale = TRAINING_FLOP_FACTOR if phase == "training" else 1
        return scale * (seq_len * layer_linear + attention + head)

    dense_linear = arch.num_layers * dense_layer_tok
    mixt_linear = (
        (arch.num_layers - len(replaced)) * dense_layer_tok
        + len(replaced) * mixt_layer_tok
    )
    scale = TRAINING_FLOP_FACTOR if phase == "training" else 1
    return {
        "seq_len": seq_len,
        "mode": mode,
        "phase": phase,
        "dense_total": total(dense_linear),
        "compressed_total": total(mixt_linear),
        "dense_linear": scale * seq_len * dense_linear,
        "compressed_linear": scale * seq_len * mixt_linear,
        "attention": scale * attention,
    }


def storage(params: int, precision: str) -> float:
    """Bytes needed to store ``params`` parameters at the given precision."""
    if params < 0:
        raise InvalidConfig(f"params must be >= 0, got {params}")
    if precision not in BYTES_PER_PARAM:
        raise InvalidConfig(
            f"precision must be one of {sorted(BYTES_PER_PARAM)}, got {precision!r}"
        )
    return params * BYTES_PER_PARAM[precision]


def scaling_curve(
    h_values: Sequence[int],
    n_t_values: Sequence[int],
    d: int = 2,
) -> list[tuple[int, int, int, int]]:
    """Width-scaling table: rows of (H, N_T, params_dense, params_mixt).

    The dense column is the raw ``H²``; the compressed column is the
    branch total of the minimally padded square operator.
    """
    rows = []
    for h in h_values:
        for n_t in n_t_values:
            spec = MixtSpec.for_dims(d, h, h, n_t)
            rows.append((int(h), int(n_t), int(h) * int(h), param_count(spec)))
    return rows


def write_scaling_csv(path, rows: Iterable[tuple[int, int, int, int]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["H", "N_T", "params_dense", "params_mixt"])
        writer.writerows(rows)
    return path


@dataclass(frozen=True)
class ResourceReport:
    """Dense-vs-compressed accounting for one architecture and plan."""

    arch: ArchConfig
    plan: CompressionPlan
    seq_len: int
    params: ParamCensus
    inference_flops: dict
    training_flops: dict
    storage_bytes: dict

    @property
    def param_reduction_percent(self) -> float:
        return self.params.reduction_percent

    def flop_reduction_percent(self, mode: str, phase: str = "inference") -> float:
        table = self.inference_flops if phase == "inference" else self.training_flops
        entry = table[mode]
        return 100.0 * (1.0 - entry["compressed_total"] / entry["dense_total"])

    def to_json(self) -> str:
        payload = {
            "arch": asdict(self.arch),
            "plan": {
                "n_b": self.plan.n_b,
                "n_t": self.plan.n_t,
                "d": self.plan.d,
                "direction": self.plan.direction,
            },
            "seq_len": self.seq_len,
            "params": {
                "dense_total": self.params.dense_total,
                "compressed_total": self.params.compressed_total,
                "dense_breakdown": self.params.dense_breakdown,
                "compressed_breakdown": self.params.compressed_breakdown,
                "reduction_percent": self.params.reduction_percent,
            },
            "inference_flops": self.inference_flops,
            "training_flops": self.training_flops,
            "storage_bytes": self.storage_bytes,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResourceReport":
        payload = json.loads(text)
        params = payload["params"]
        return cls(
            arch=ArchConfig(**payload["arch"]),
            plan=CompressionPlan(**payload["plan"]),
            seq_len=int(payload["seq_len"]),
            params=ParamCensus(
                dense_total=params["dense_total"],
                compressed_total=params["compressed_total"],
                dense_breakdown=params["dense_breakdown"],
                compressed_breakdown=params["compressed_breakdown"],
            ),
            inference_flops=payload["inference_flops"],
            training_flops=payload["training_flops"],
            storage_bytes=payload["storage_bytes"],
        )


def build_report(arch: ArchConfig, plan: CompressionPlan, seq_len: int) -> ResourceReport:
    """Assemble the full resource report for one architecture and plan."""
    census = count_params(arch, plan)
    inference = {mode: flops(arch, plan, seq_len, mode, "inference")
                 for mode in FLOP_MODES}
    training = {mode: flops(arch, plan, seq_len, mode, "training")
                for mode in FLOP_MODES}
    storage_bytes = {
        precision: {
            "dense": storage(census.dense_total, precision),
            "compressed": storage(census.compressed_total, precision),
        }
        for precision in BYTES_PER_PARAM
    }
    return ResourceReport(
        arch=arch,
        plan=plan,
        seq_len=seq_len,
        params=census,
        inference_flops=inference,
        training_flops=training,
        storage_bytes=storage_bytes,
    )


def _fmt_count(value: float, unit: float, digits: int = 2) -> str:
    return f"{value / unit:.{digits}f}"


def render_report(report: ResourceReport) -> str:
    """Aligned text table of the report's headline numbers."""
    census = report.params
    plan = report.plan
    rows: list[tuple[str, str, str, str]] = []

    def add(label, dense, compressed, reduction):
        rows.append((label, dense, compressed, reduction))

    add("Parameters (B)",
        _fmt_count(census.dense_total, 1e9),
        _fmt_count(census.compressed_total, 1e9),
        f"{census.reduction_percent:.1f}%")
    for mode in FLOP_MODES:
        inf = report.inference_flops[mode]
        add(f"Inference GFLOPs [{mode}]",
            _fmt_count(inf["dense_total"], 1e9),
            _fmt_count(inf["compressed_total"], 1e9),
            f"{report.flop_reduction_percent(mode):.1f}%")
        train = report.training_flops[mode]
        add(f"Training TFLOPs [{mode}]",
            _fmt_count(train["dense_total"], 1e12, 3),
            _fmt_count(train["compressed_total"], 1e12, 3),
            f"{report.flop_reduction_percent(mode, 'training'):.1f}%")
    for precision in ("bf16", "int8", "int4"):
        entry = report.storage_bytes[precision]
        reduction = 100.0 * (1.0 - entry["compressed"] / entry["dense"])
        add(f"Storage GB / GiB [{precision}]",
            f"{entry['dense'] / 1e9:.2f} / {entry['dense'] / 2**30:.2f}",
            f"{entry['compressed'] / 1e9:.2f} / {entry['compressed'] / 2**30:.2f}",
            f"{reduction:.1f}%")

    header = ("Quantity", "Dense",
              f"MixT (N_B={plan.n_b}, N_T={plan.n_t}, d={plan.d})", "Reduction")
    table = [header] + rows
    widths = [max(len(row[i]) for row in table) for i in range(4)]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(4)))
    lines.append(f"(sequence length {report.seq_len}; training = 3x inference)")
    return "\n".join(lines) + "\n"
