"""Decoder-style toy transformer with swappable per-block linear maps.

Each of the ``num_blocks`` pre-norm blocks contains seven linear maps —
Q, K, V, O in attention and Gate, Up, Down in the gated feed-forward —
any of which can be replaced by a tensor-mixture operator fitted to the
current dense weights. The residual topology never changes; a replaced
map is executed natively through its branch contractions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidConfig, PlanInvalid
from ..matching import MatchConfig, match_weights
from ..operator import MixtSpec, minimal_order
from ..plan import CompressionPlan
from ..tensor import DenseTensor, load_tensor, save_tensor
from . import autograd as ag

MAP_NAMES = ("q", "k", "v", "o", "gate", "up", "down")

CHECKPOINT_FORMAT = "mixt-toy-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ToyModelConfig:
    num_blocks: int
    hidden: int
    num_heads: int
    ffn_dim: int
    vocab_size: int
    max_seq_len: int
    d: int = 2
    seed: int = 0

    def __post_init__(self):
        if min(self.num_blocks, self.hidden, self.num_heads, self.ffn_dim,
               self.vocab_size, self.max_seq_len) < 1:
            raise InvalidConfig("all model dimensions must be >= 1")
        if self.num_blocks < 2:
            raise InvalidConfig(f"num_blocks must be >= 2, got {self.num_blocks}")
        if self.hidden % self.num_heads != 0:
            raise InvalidConfig(
                f"hidden {self.hidden} not divisible by num_heads {self.num_heads}"
            )
        if self.d ** minimal_order(self.d, self.hidden) != self.hidden:
            raise InvalidConfig(
                f"hidden {self.hidden} is not a power of the bond dimension {self.d}"
            )


class LinearMap:
    """One weight matrix, stored dense or as tensor-mixture branches."""

    __slots__ = ("out_dim", "in_dim", "weight", "spec", "branches")

    def __init__(self, out_dim, in_dim, weight=None, spec=None, branches=None):
        self.out_dim = out_dim
        self.in_dim = in_dim
        self.weight = weight
        self.spec = spec
        self.branches = branches

    @property
    def kind(self) -> str:
        return "dense" if self.weight is not None else "mixt"

    @classmethod
    def dense(cls, weight: np.ndarray) -> "LinearMap":
        out_dim, in_dim = weight.shape
        return cls(out_dim, in_dim, weight=weight)

    @classmethod
    def mixt(cls, spec: MixtSpec, branches: list[np.ndarray]) -> "LinearMap":
        return cls(spec.out_dim_raw, spec.in_dim_raw, spec=spec, branches=branches)

    def param_items(self, prefix: str):
        if self.kind == "dense":
            yield prefix, self.weight
        else:
            for k, br in enumerate(self.branches):
                yield f"{prefix}.branch{k}", br

    def copy(self) -> "LinearMap":
        if self.kind == "dense":
            return LinearMap.dense(self.weight.copy())
        return LinearMap.mixt(self.spec, [br.copy() for br in self.branches])

    def apply(self, x: ag.Node, nodes: dict[str, ag.Node], prefix: str) -> ag.Node:
        if self.kind == "dense":
            return ag.linear(x, nodes[prefix])
        spec = self.spec
        lead_shape = x.shape[:-1]
        h = ag.pad_last(x, spec.in_dim)
        h = ag.reshape(h, lead_shape + (spec.d,) * spec.n)
        total = None
        for k in range(spec.n_t):
            part = ag.mixt_branch(h, nodes[f"{prefix}.branch{k}"], spec, k)
            total = part if total is None else ag.add(total, part)
        total = ag.scale(total, 1.0 / spec.n_t)
        total = ag.reshape(total, lead_shape + (spec.out_dim,))
        return ag.slice_last(total, spec.out_dim_raw)


@dataclass
class Block:
    attn_norm: np.ndarray
    q: LinearMap
    k: LinearMap
    v: LinearMap
    o: LinearMap
    ffn_norm: np.ndarray
    gate: LinearMap
    up: LinearMap
    down: LinearMap

    def maps(self):
        for name in MAP_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "Block":
        return Block(
            attn_norm=self.attn_norm.copy(),
            ffn_norm=self.ffn_norm.copy(),
            **{name: m.copy() for name, m in self.maps()},
        )


@dataclass
class ForwardResult:
    logits: ag.Node
    hidden: list[ag.Node]
    params: dict[str, ag.Node]


class ToyModel:
    """Parameter container plus the forward graph builder."""

    def __init__(self, config: ToyModelConfig, embed, pos, blocks, final_norm, head,
                 plan: CompressionPlan | None = None):
        self.config = config
        self.embed = embed
        self.pos = pos
        self.blocks = blocks
        self.final_norm = final_norm
        self.head = head
        self.plan = plan
        self.step_count = 0
        self.match_residuals: dict[str, list[float]] = {}

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Name → live parameter array, in a fixed deterministic order."""
        items: dict[str, np.ndarray] = {"embed": self.embed, "pos": self.pos}
        for i, block in enumerate(self.blocks):
            items[f"block{i}.attn_norm"] = block.attn_norm
            for name, m in block.maps():
                if name == "gate":
                    items[f"block{i}.ffn_norm"] = block.ffn_norm
                for pname, arr in m.param_items(f"block{i}.{name}"):
                    items[pname] = arr
        items["final_norm"] = self.final_norm
        items["head"] = self.head
        return items

    def param_count(self) -> int:
        return sum(arr.size for arr in self.param_arrays().values())

    def copy(self) -> "ToyModel":
        out = ToyModel(
            config=self.config,
            embed=self.embed.copy(),
            pos=self.pos.copy(),
            blocks=[b.copy() for b in self.blocks],
            final_norm=self.final_norm.copy(),
            head=self.head.copy(),
            plan=self.plan,
        )
        out.step_count = self.step_count
        out.match_residuals = dict(self.match_residuals)
        return out

    def forward(self, tokens: np.ndarray) -> ForwardResult:
        """Build the compute graph for a [T] or [batch, T] token array.

        ``hidden`` holds each block's output (post-residual) so callers
        can read per-layer states; logits cover every position.
        """
        cfg = self.config
        tokens = np.asarray(tokens)
        squeeze = tokens.ndim == 1
        if squeeze:
            tokens = tokens[None, :]
        n_batch, seq = tokens.shape
        if seq > cfg.max_seq_len:
            raise InvalidConfig(f"sequence length {seq} exceeds max {cfg.max_seq_len}")
        if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
            raise InvalidConfig("token id out of vocabulary range")

        nodes = {name: ag.parameter(arr) for name, arr in self.param_arrays().items()}
        heads, dh = cfg.num_heads, cfg.hidden // cfg.num_heads
        mask = np.triu(np.full((seq, seq), -1e30), k=1)

        x = ag.add(ag.lookup(nodes["embed"], tokens),
                   ag.lookup(nodes["pos"], np.arange(seq)))
        hidden: list[ag.Node] = []
        for i, block in enumerate(self.blocks):
            pre = f"block{i}"
            xn = ag.rmsnorm(x, nodes[f"{pre}.attn_norm"])
            q = block.q.apply(xn, nodes, f"{pre}.q")
            k = block.k.apply(xn, nodes, f"{pre}.k")
            v = block.v.apply(xn, nodes, f"{pre}.v")
            # [batch, T, H] -> [batch, heads, T, dh]
            q = ag.moveaxis(ag.reshape(q, (n_batch, seq, heads, dh)), 2, 1)
            k = ag.moveaxis(ag.reshape(k, (n_batch, seq, heads, dh)), 2, 1)
            v = ag.moveaxis(ag.reshape(v, (n_batch, seq, heads, dh)), 2, 1)
            scores = ag.scale(ag.bmm(q, ag.swap_last(k)), 1.0 / np.sqrt(dh))
            attn = ag.softmax(ag.add_const(scores, mask))
            ctx = ag.bmm(attn, v)
            ctx = ag.reshape(ag.moveaxis(ctx, 1, 2), (n_batch, seq, cfg.hidden))
            x = ag.add(x, block.o.apply(ctx, nodes, f"{pre}.o"))

            xn = ag.rmsnorm(x, nodes[f"{pre}.ffn_norm"])
            gated = ag.mul(ag.silu(block.gate.apply(xn, nodes, f"{pre}.gate")),
                           block.up.apply(xn, nodes, f"{pre}.up"))
            x = ag.add(x, block.down.apply(gated, nodes, f"{pre}.down"))
            hidden.append(x)

        final = ag.rmsnorm(x, nodes["final_norm"])
        logits = ag.linear(final, nodes["head"])
        if squeeze:
            logits = ag.reshape(logits, (seq, cfg.vocab_size))
            hidden = [ag.reshape(h, (seq, cfg.hidden)) for h in hidden]
        return ForwardResult(logits=logits, hidden=hidden, params=nodes)

    def logits(self, tokens: np.ndarray) -> np.ndarray:
        return self.forward(tokens).logits.value


def build_model(cfg: ToyModelConfig) -> ToyModel:
    """Deterministically initialized dense model."""
    rng = np.random.default_rng(cfg.seed)
    h, ffn, vocab = cfg.hidden, cfg.ffn_dim, cfg.vocab_size

    def lin(out_dim, in_dim):
        return LinearMap.dense(rng.normal(0.0, 1.0 / np.sqrt(in_dim), (out_dim, in_dim)))

    embed = rng.normal(0.0, 0.02, (vocab, h))
    pos = rng.normal(0.0, 0.02, (cfg.max_seq_len, h))
    blocks = []
    for _ in range(cfg.num_blocks):
        blocks.append(Block(
            attn_norm=np.ones(h),
            q=lin(h, h), k=lin(h, h), v=lin(h, h), o=lin(h, h),
            ffn_norm=np.ones(h),
            gate=lin(ffn, h), up=lin(ffn, h), down=lin(h, ffn),
        ))
    final_norm = np.ones(h)
    head = rng.normal(0.0, 1.0 / np.sqrt(h), (vocab, h))
    return ToyModel(cfg, embed, pos, blocks, final_norm, head)


def replace_blocks(
    model: ToyModel,
    plan: CompressionPlan,
    match_cfg: MatchConfig | None = None,
) -> ToyModel:
    """Copy of ``model`` with the planned blocks' seven maps replaced.

    Each replacement operator is fitted to the block's current dense
    weights; per-map residual histories are recorded on the returned
    model under ``match_residuals``.
    """
    out = model.copy()
    out.plan = plan
    for idx in plan.blocks_to_replace(model.config.num_blocks):
        block = out.blocks[idx]
        for name, lin_map in block.maps():
            if lin_map.kind != "dense":
                raise PlanInvalid(f"block {idx} map {name} is already replaced")
            try:
                spec = MixtSpec.for_dims(
                    d=plan.d, in_dim_raw=lin_map.in_dim,
                    out_dim_raw=lin_map.out_dim, n_t=plan.n_t,
                )
            except InvalidConfig as exc:
                raise PlanInvalid(f"block {idx} map {name}: {exc}") from exc
            op, history = match_weights(lin_map.weight, spec, match_cfg)
            branches = [np.array(br.data) for br in op.branches]
            setattr(block, name, LinearMap.mixt(spec, branches))
            out.match_residuals[f"block{idx}.{name}"] = [float(r) for r in history]
    return out


def _tensor_filename(param_name: str) -> str:
    return param_name.replace(".", "_") + ".mixt"


def save_checkpoint(directory, model: ToyModel, name: str = "checkpoint") -> Path:
    """Write manifest JSON plus one tensor file per parameter array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for pname, arr in model.param_arrays().items():
        fname = _tensor_filename(pname)
        save_tensor(directory / fname, DenseTensor.from_array(arr))
        tensors[pname] = fname
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "plan": asdict(model.plan) if model.plan else None,
        "step_count": model.step_count,
        "match_residuals": model.match_residuals,
        "tensors": tensors,
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(manifest_path) -> ToyModel:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise InvalidConfig(f"not a toy checkpoint manifest: {manifest_path}")
    cfg = ToyModelConfig(**manifest["config"])
    model = build_model(cfg)
    plan = CompressionPlan(**manifest["plan"]) if manifest["plan"] else None
    if plan is not None:
        # recreate the mixture structure with placeholder branches, then load
        for idx in plan.blocks_to_replace(cfg.num_blocks):
            block = model.blocks[idx]
            for name, lin_map in block.maps():
                spec = MixtSpec.for_dims(
                    d=plan.d, in_dim_raw=lin_map.in_dim,
                    out_dim_raw=lin_map.out_dim, n_t=plan.n_t,
                )
                zeros = [np.zeros(spec.branch_shape) for _ in range(spec.n_t)]
                setattr(block, name, LinearMap.mixt(spec, zeros))
        model.plan = plan
    params = model.param_arrays()
    if set(params) != set(manifest["tensors"]):
        raise InvalidConfig("checkpoint tensor list does not match model structure")
    for pname, fname in manifest["tensors"].items():
        loaded = load_tensor(manifest_path.parent / fname)
        if loaded.shape != params[pname].shape:
            raise InvalidConfig(f"checkpoint tensor {pname} has shape {loaded.shape}")
        params[pname][...] = loaded.data
    model.step_count = int(manifest["step_count"])
    model.match_residuals = {
        key: list(map(float, vals))
        for key, vals in manifest.get("match_residuals", {}).items()
    }
    return model
