"""Fixed-budget training and gradient verification."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidConfig, NonFiniteLoss
from . import autograd as ag
from .model import ToyModel
from .task import TaskData


@dataclass(frozen=True)
class OptimizerConfig:
    """Adaptive-moment optimizer with a fixed step size, no schedule."""

    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def batch_loss(tokens: np.ndarray, targets: np.ndarray):
    """Loss closure: mean cross-entropy of final-position logits."""

    def loss_fn(model: ToyModel):
        result = model.forward(tokens)
        final = ag.position(result.logits, -1)
        return ag.cross_entropy(final, targets), result.params

    return loss_fn


def recover(
    model: ToyModel,
    data: TaskData,
    budget_steps: int,
    opt_cfg: OptimizerConfig | None = None,
    *,
    batch_size: int = 64,
    seed: int = 0,
    freeze_dense: bool = False,
) -> tuple[ToyModel, list[float]]:
    """Train the model in place for exactly ``budget_steps`` steps.

    All parameters are trained by default; ``freeze_dense=True`` limits
    updates to mixture branch tensors. Returns the model and the per-step
    loss curve. Aborts with :class:`NonFiniteLoss` if the loss leaves the
    finite range.
    """
    if budget_steps < 1:
        raise InvalidConfig(f"budget_steps must be >= 1, got {budget_steps}")
    opt_cfg = opt_cfg or OptimizerConfig()
    rng = np.random.default_rng(seed)
    params = model.param_arrays()
    trainable = [
        name for name in params
        if not freeze_dense or ".branch" in name
    ]
    moment1 = {name: np.zeros_like(params[name]) for name in trainable}
    moment2 = {name: np.zeros_like(params[name]) for name in trainable}
    label_tokens = data.label_tokens
    curve: list[float] = []
    batch = min(batch_size, data.size)
    for step in range(1, budget_steps + 1):
        idx = rng.integers(0, data.size, size=batch)
        loss_fn = batch_loss(data.tokens[idx], label_tokens[idx])
        loss, nodes = loss_fn(model)
        value = float(loss.value)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss became non-finite at step {step}: {value}")
        ag.backward(loss)
        bias1 = 1.0 - opt_cfg.beta1**step
        bias2 = 1.0 - opt_cfg.beta2**step
        for name in trainable:
            grad = nodes[name].grad
            if grad is None:
                continue
            m = moment1[name]
            v = moment2[name]
            m *= opt_cfg.beta1
            m += (1.0 - opt_cfg.beta1) * grad
            v *= opt_cfg.beta2
            v += (1.0 - opt_cfg.beta2) * grad * grad
            params[name] -= opt_cfg.learning_rate * (m / bias1) / (
                np.sqrt(v / bias2) + opt_cfg.eps
            )
        curve.append(value)
    model.step_count += budget_steps
    return model, curve


def save_loss_curve(path, curve: list[float]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(curve, start=1):
            writer.writerow([step, repr(loss)])
    return path


def grad_check(
    model: ToyModel,
    loss_fn,
    probe_count: int = 64,
    epsilon: float = 1e-4,
    *,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(model) -> (scalar Node, param node map)``. Probes are drawn
    at random over all parameter entries, with one probe guaranteed in
    every mixture branch tensor; relative error is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if epsilon <= 0:
        raise InvalidConfig(f"epsilon must be > 0, got {epsilon}")
    loss, nodes = loss_fn(model)
    ag.backward(loss)
    analytic = {
        name: (node.grad.copy() if node.grad is not None else np.zeros_like(node.value))
        for name, node in nodes.items()
    }
    params = model.param_arrays()
    names = list(params)
    rng = np.random.default_rng(seed)
    probes = [
        (name, int(rng.integers(params[name].size)))
        for name in names
        if ".branch" in name
    ]
    while len(probes) < probe_count:
        name = names[int(rng.integers(len(names)))]
        probes.append((name, int(rng.integers(params[name].size))))

    worst = 0.0
    for name, flat in probes:
        arr = params[name]
        original = arr.flat[flat]
        arr.flat[flat] = original + epsilon
        plus = float(loss_fn(model)[0].value)
        arr.flat[flat] = original - epsilon
        minus = float(loss_fn(model)[0].value)
        arr.flat[flat] = original
        numeric = (plus - minus) / (2.0 * epsilon)
        err = abs(analytic[name].flat[flat] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
