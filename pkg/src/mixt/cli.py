"""Command-line surface: sweep, profile, match, gradcheck, analyze.

Every command resolves its configuration from an optional JSON file plus
flag overrides, runs the corresponding library operation, and writes its
artifacts (including a manifest with the resolved config) into ``--out``.

Exit codes: 0 on success, 2 for validation problems (bad flags, bad
config, missing files), 3 for numerical failures (non-finite loss,
degenerate fits, undefined similarities).
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
import time
from pathlib import Path

from . import __version__
from .errors import (
    DegenerateFit,
    MixtError,
    NonFiniteLoss,
    ZeroVector,
)
from .matching import MatchConfig, match_weights, reconstruction_error
from .operator import MixtSpec, save_operator
from .plan import CompressionPlan
from .profiler import (
    ArchConfig,
    BYTES_PER_PARAM,
    FLOP_MODES,
    build_report,
    render_report,
    scaling_curve,
    write_scaling_csv,
)
from .sweep import SweepConfig, analyze_records, run_sweep
from .tensor import load_tensor
from .toy import ToyModelConfig, build_model, grad_check, make_task, replace_blocks
from .toy.training import batch_loss

VALIDATION_EXIT = 2
NUMERICAL_EXIT = 3

_NUMERICAL_ERRORS = (NonFiniteLoss, DegenerateFit, ZeroVector)


def _load_config(path: str | None) -> dict:
    """Read a JSON config from a path or from the bundled config set."""
    if path is None:
        return {}
    candidate = Path(path)
    if candidate.exists():
        text = candidate.read_text()
    else:
        bundled = importlib.resources.files("mixt") / "configs" / candidate.name
        if candidate.name != path or not bundled.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        text = bundled.read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MixtError(f"config is not valid JSON: {path}: {exc}") from None
    if not isinstance(payload, dict):
        raise MixtError(f"config must be a JSON object: {path}")
    return payload


def _write_manifest(out_dir: Path, command: str, config: dict,
                    artifacts: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "created_unix": time.time(),
        "config": config,
        "artifacts": artifacts,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True)
    )


def _apply_overrides(config: dict, args: argparse.Namespace,
                     mapping: dict[str, str]) -> dict:
    resolved = dict(config)
    for flag, key in mapping.items():
        value = getattr(args, flag)
        if value is not None:
            resolved[key] = value
    return resolved


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    overrides = _apply_overrides(config, args, {
        "seed": "seed", "nt": "n_t", "d": "d", "direction": "direction",
        "budget": "budget",
    })
    if args.nb_list is not None:
        overrides["n_b_list"] = [int(tok) for tok in args.nb_list.split(",")]
    cfg = SweepConfig.from_dict(overrides)
    report = run_sweep(cfg, args.out)
    accs = ", ".join(f"{e.n_b}:{e.accuracy:.3f}" for e in report.entries)
    print(f"sweep complete: accuracy per depth {{{accs}}}")
    print(f"threshold: {report.threshold}")
    print(f"artifacts in {args.out}")
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    arch_payload = config.get("arch", config if "hidden" in config else None)
    if arch_payload is None:
        raise MixtError("profile config must carry ArchConfig fields"
                        ' (either at top level or under "arch")')
    try:
        arch = ArchConfig(**{k: v for k, v in arch_payload.items()
                             if k != "plan"})
    except TypeError as exc:
        raise MixtError(f"bad architecture config: {exc}") from None
    plan_payload = dict(config.get("plan", {"n_b": 0, "n_t": 2}))
    plan_overrides = _apply_overrides(plan_payload, args, {
        "nt": "n_t", "d": "d", "direction": "direction",
    })
    if args.nb_list is not None:
        raise MixtError("profile takes a single plan, not --nb-list")
    try:
        plan = CompressionPlan(**plan_overrides)
    except TypeError as exc:
        raise MixtError(f"bad plan config: {exc}") from None
    seq_len = args.seq_len if args.seq_len is not None else 54

    report = build_report(arch, plan, seq_len)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resource_report.json").write_text(report.to_json())
    text = render_report(report)
    (out_dir / "resource_report.txt").write_text(text)
    widths = [2 ** k for k in range(4, 13)]
    write_scaling_csv(out_dir / "scaling.csv",
                      scaling_curve(widths, [2, 3, 4], d=plan.d))
    _write_manifest(out_dir, "profile", {
        "arch": json.loads(arch.to_json()),
        "plan": {"n_b": plan.n_b, "n_t": plan.n_t, "d": plan.d,
                 "direction": plan.direction},
        "seq_len": seq_len,
        "flop_mode": args.flop_mode,
        "precision": args.precision,
    }, {
        "report": "resource_report.json",
        "table": "resource_report.txt",
        "scaling_csv": "scaling.csv",
    })
    if args.flop_mode is not None or args.precision is not None:
        wanted_mode = args.flop_mode
        wanted_precision = args.precision
        for line in text.splitlines():
            mode_tagged = any(f"[{m}]" in line for m in FLOP_MODES)
            precision_tagged = any(f"[{p}]" in line for p in BYTES_PER_PARAM)
            if mode_tagged and wanted_mode is not None and f"[{wanted_mode}]" not in line:
                continue
            if precision_tagged and wanted_precision is not None \
                    and f"[{wanted_precision}]" not in line:
                continue
            print(line)
    else:
        print(text, end="")
    return 0


def _cmd_match(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    if "matrix" not in config:
        raise MixtError('match config must name a "matrix" tensor file')
    matrix_path = Path(config["matrix"])
    if not matrix_path.is_absolute() and args.config is not None \
            and Path(args.config).exists():
        matrix_path = Path(args.config).parent / matrix_path
    matrix = load_tensor(matrix_path).data
    if matrix.ndim != 2:
        raise MixtError(f"matching needs a matrix, got shape {matrix.shape}")

    overrides = _apply_overrides({}, args, {"nt": "n_t", "d": "d"})
    n_t = int(overrides.get("n_t", config.get("n_t", 2)))
    d = int(overrides.get("d", config.get("d", 2)))
    match_cfg = MatchConfig(
        max_sweeps=int(config.get("max_sweeps", 100)),
        rel_tol=float(config.get("rel_tol", 1e-7)),
        init_scheme=config.get("init_scheme", "zeros-except-first"),
        seed=args.seed if args.seed is not None else int(config.get("seed", 0)),
    )
    spec = MixtSpec.for_dims(d, matrix.shape[1], matrix.shape[0], n_t)
    operator, history = match_weights(matrix, spec, match_cfg)
    residual = reconstruction_error(matrix, operator)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_operator(out_dir / "operator.mixt", operator)
    report = {
        "matrix_shape": list(matrix.shape),
        "spec": {"d": spec.d, "n": spec.n, "m": spec.m, "n_t": spec.n_t},
        "sweeps": len(history) - 1,
        "residual_history": history,
        "final_residual": float(residual),
        "residual_is_absolute": residual.absolute,
    }
    (out_dir / "match_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True)
    )
    _write_manifest(out_dir, "match", {
        "matrix": str(config["matrix"]), "n_t": n_t, "d": d,
        "max_sweeps": match_cfg.max_sweeps, "rel_tol": match_cfg.rel_tol,
        "init_scheme": match_cfg.init_scheme, "seed": match_cfg.seed,
    }, {"operator": "operator.mixt", "report": "match_report.json"})
    print(f"matched in {report['sweeps']} sweeps, residual {report['final_residual']:.3e}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    model_cfg = ToyModelConfig(
        num_blocks=int(config.get("num_blocks", 2)),
        hidden=int(config.get("hidden", 16)),
        num_heads=int(config.get("num_heads", 2)),
        ffn_dim=int(config.get("ffn_dim", 32)),
        vocab_size=int(config.get("vocab_size", 13)),
        max_seq_len=int(config.get("max_seq_len", 8)),
        seed=seed,
    )
    plan = CompressionPlan(
        n_b=int(config.get("n_b", 1)),
        n_t=args.nt if args.nt is not None else int(config.get("n_t", 2)),
        d=args.d if args.d is not None else int(config.get("d", 2)),
        direction=args.direction or config.get("direction", "back-to-front"),
    )
    model = replace_blocks(build_model(model_cfg), plan)
    data = make_task(seed=seed + 1, size=int(config.get("batch", 16)))
    loss_fn = batch_loss(data.tokens, data.label_tokens)
    probes = int(config.get("probes", 64))
    epsilon = float(config.get("epsilon", 1e-4))
    max_err = grad_check(model, loss_fn, probe_count=probes, epsilon=epsilon,
                         seed=seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "max_relative_error": max_err,
        "probes": probes,
        "epsilon": epsilon,
        "replaced_blocks": plan.n_b,
        "passed": bool(max_err <= 1e-4),
    }
    (out_dir / "gradcheck_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True)
    )
    _write_manifest(out_dir, "gradcheck", {
        **{k: getattr(model_cfg, k) for k in
           ("num_blocks", "hidden", "num_heads", "ffn_dim", "vocab_size",
            "max_seq_len")},
        "n_b": plan.n_b, "n_t": plan.n_t, "d": plan.d, "seed": seed,
        "probes": probes, "epsilon": epsilon,
    }, {"report": "gradcheck_report.json"})
    print(f"gradcheck max relative error {max_err:.3e} over {probes} probes")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    if args.config is None:
        raise MixtError("analyze needs --config pointing at a sweep manifest or directory")
    report = analyze_records(args.config, args.out)
    print(f"recomputed metrics for {len(report.entries)} depths into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixt",
        description="Tensor-mixture compression: sweeps, profiling, matching,"
                    " gradient checks, and offline analysis.",
    )
    parser.add_argument("--version", action="version", version=f"mixt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (or bundled name)")
        p.add_argument("--seed", type=int, help="run seed override")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--nb-list", help="comma-separated depths, e.g. 0,1,2")
        p.add_argument("--nt", type=int, help="branch count N_T")
        p.add_argument("--d", type=int, help="bond dimension")
        p.add_argument("--direction", choices=["b2f", "f2b"],
                       help="replacement order")
        p.add_argument("--budget", type=int, help="recovery steps per depth")
        p.add_argument("--flop-mode", choices=list(FLOP_MODES),
                       help="FLOP accounting mode")
        p.add_argument("--seq-len", type=int, help="sequence length for FLOPs")
        p.add_argument("--precision", choices=sorted(BYTES_PER_PARAM),
                       help="storage precision to highlight")

    handlers = {
        "sweep": (_cmd_sweep, "train once, then replace/match/recover per depth"),
        "profile": (_cmd_profile, "analytic parameter/FLOP/storage accounting"),
        "match": (_cmd_match, "fit a mixture operator to a stored matrix"),
        "gradcheck": (_cmd_gradcheck, "finite-difference check of the toy model"),
        "analyze": (_cmd_analyze, "recompute sweep metrics from stored records"),
    }
    for name, (handler, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        p.set_defaults(handler=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return NUMERICAL_EXIT
    except (MixtError, FileNotFoundError, ValueError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
