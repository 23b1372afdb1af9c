"""Depth-sweep driver: train once, then replace/match/recover per depth.

One sweep builds a base model, trains it to a baseline, and then for
every requested depth replaces that many blocks, recovers with an
identical step budget, evaluates on a held-out task sample, and computes
the full metric set against the first depth's similarity reference.

Every artifact except the manifest is a pure function of the resolved
config, so two runs with equal configs produce byte-identical reports;
``analyze_records`` rebuilds the same report from the stored evaluation
records without retraining.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import InvalidConfig
from .metrics import (
    SweepReport,
    assemble_report,
    default_output_pairs,
    entry_from_records,
    write_drift_profile_csv,
    write_metrics_csv,
    write_summary_csv,
)
from .plan import CompressionPlan, normalize_direction
from .toy import (
    OptimizerConfig,
    ToyModelConfig,
    build_model,
    evaluate,
    load_eval_records,
    make_task,
    recover,
    replace_blocks,
    save_eval_records,
    save_loss_curve,
)
from .toy.task import SEQ_LEN, VOCAB_SIZE

__all__ = ["SweepConfig", "run_sweep", "analyze_records", "write_report_files"]


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs, resolved to concrete values."""

    num_blocks: int = 6
    hidden: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    n_t: int = 2
    d: int = 2
    direction: str = "back-to-front"
    n_b_list: tuple[int, ...] | None = None
    budget: int = 500
    baseline_steps: int = 800
    baseline_learning_rate: float = 2e-3
    recover_learning_rate: float = 1e-3
    batch_size: int = 64
    train_size: int = 4096
    eval_size: int = 512
    seed: int = 0
    output_tail: int = 4
    plateau_window: int = 3
    drop_delta: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", normalize_direction(self.direction))
        depths = self.n_b_list
        if depths is None:
            depths = tuple(range(self.num_blocks + 1))
        else:
            depths = tuple(int(n) for n in depths)
        object.__setattr__(self, "n_b_list", depths)
        if len(depths) == 0:
            raise InvalidConfig("n_b_list must be nonempty")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise InvalidConfig("n_b_list must be strictly increasing")
        if depths[0] < 0 or depths[-1] > self.num_blocks:
            raise InvalidConfig("depths must lie in 0..num_blocks")
        for name in ("budget", "baseline_steps", "batch_size", "train_size",
                     "eval_size"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")

    def model_config(self) -> ToyModelConfig:
        return ToyModelConfig(
            num_blocks=self.num_blocks,
            hidden=self.hidden,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            vocab_size=VOCAB_SIZE,
            max_seq_len=SEQ_LEN,
            d=self.d,
            seed=self.seed,
        )

    def settings(self) -> dict:
        """The deterministic settings block recorded in every report."""
        payload = asdict(self)
        payload["n_b_list"] = list(self.n_b_list)
        payload["reference_depth"] = self.n_b_list[0]
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "SweepConfig":
        known = dict(payload)
        known.pop("reference_depth", None)
        if known.get("n_b_list") is not None:
            known["n_b_list"] = tuple(known["n_b_list"])
        try:
            return cls(**known)
        except TypeError as exc:
            raise InvalidConfig(f"bad sweep config: {exc}") from None


def _records_name(n_b: int) -> str:
    return f"records_nb{n_b}.json"


def write_report_files(out_dir: Path, report: SweepReport) -> dict:
    """Write the report JSON and its three CSV projections."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(report.to_json())
    write_metrics_csv(out_dir / "metrics.csv", report)
    write_drift_profile_csv(out_dir / "drift_profile.csv", report)
    write_summary_csv(out_dir / "drift_summary.csv", report)
    return {
        "report": "report.json",
        "metrics_csv": "metrics.csv",
        "drift_profile_csv": "drift_profile.csv",
        "drift_summary_csv": "drift_summary.csv",
    }


def _write_manifest(out_dir: Path, command: str, config: dict, artifacts: dict) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "created_unix": time.time(),
        "config": config,
        "artifacts": artifacts,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def run_sweep(cfg: SweepConfig, out_dir) -> SweepReport:
    """Execute the full sweep and write all artifacts into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_data = make_task(seed=cfg.seed + 1, size=cfg.train_size)
    eval_data = make_task(seed=cfg.seed + 2, size=cfg.eval_size)
    pairs = default_output_pairs(cfg.num_blocks, tail=cfg.output_tail)

    base = build_model(cfg.model_config())
    _, baseline_curve = recover(
        base, train_data, cfg.baseline_steps,
        OptimizerConfig(learning_rate=cfg.baseline_learning_rate),
        batch_size=cfg.batch_size, seed=cfg.seed + 3,
    )
    save_loss_curve(out_dir / "loss_curve_baseline.csv", baseline_curve)

    artifacts = {"baseline_loss_curve": "loss_curve_baseline.csv", "records": {}}
    entries = []
    reference = None
    for n_b in cfg.n_b_list:
        plan = CompressionPlan(n_b=n_b, n_t=cfg.n_t, d=cfg.d,
                               direction=cfg.direction)
        model = replace_blocks(base, plan)
        _, curve = recover(
            model, train_data, cfg.budget,
            OptimizerConfig(learning_rate=cfg.recover_learning_rate),
            batch_size=cfg.batch_size, seed=cfg.seed + 4 + n_b,
        )
        save_loss_curve(out_dir / f"loss_curve_nb{n_b}.csv", curve)
        _, records = evaluate(model, eval_data, capture_hidden=True)
        save_eval_records(out_dir / _records_name(n_b), records)
        artifacts["records"][str(n_b)] = _records_name(n_b)

        entry = entry_from_records(n_b, records, reference=reference,
                                   output_pairs=pairs)
        if reference is None:
            reference = entry.similarity
        entries.append(entry)

    report = assemble_report(
        entries, pairs, settings=cfg.settings(),
        plateau_window=cfg.plateau_window, drop_delta=cfg.drop_delta,
    )
    artifacts.update(write_report_files(out_dir, report))
    _write_manifest(out_dir, "sweep", cfg.settings(), artifacts)
    return report


def analyze_records(manifest_path, out_dir) -> SweepReport:
    """Recompute the sweep report from stored evaluation records.

    ``manifest_path`` may be the manifest file or the directory holding
    it.  The rebuilt report is byte-identical to the original: metrics
    are pure functions of the records, and the stored JSON floats round
    trip exactly.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    cfg = SweepConfig.from_dict(manifest["config"])
    records_dir = manifest_path.parent

    pairs = default_output_pairs(cfg.num_blocks, tail=cfg.output_tail)
    entries = []
    reference = None
    for n_b in cfg.n_b_list:
        records = load_eval_records(records_dir / _records_name(n_b))
        entry = entry_from_records(n_b, records, reference=reference,
                                   output_pairs=pairs)
        if reference is None:
            reference = entry.similarity
        entries.append(entry)

    report = assemble_report(
        entries, pairs, settings=cfg.settings(),
        plateau_window=cfg.plateau_window, drop_delta=cfg.drop_delta,
    )
    out_dir = Path(out_dir)
    artifacts = write_report_files(out_dir, report)
    _write_manifest(out_dir, "analyze", cfg.settings(), artifacts)
    return report
