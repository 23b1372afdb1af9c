"""Desk-scale differentiable transformer with swappable linear maps.

Everything here runs on numpy float64 through a small reverse-mode
autodiff (:mod:`mixt.toy.autograd`), so compressed and dense models train
and evaluate identically and deterministically on CPU.
"""

from .autograd import Node, backward
from .evaluation import EvalRecord, evaluate, load_eval_records, save_eval_records
from .model import (
    ToyModel,
    ToyModelConfig,
    build_model,
    load_checkpoint,
    replace_blocks,
    save_checkpoint,
)
from .task import TaskData, gold_label, make_task
from .training import OptimizerConfig, grad_check, recover, save_loss_curve

__all__ = [
    "Node",
    "backward",
    "EvalRecord",
    "evaluate",
    "load_eval_records",
    "save_eval_records",
    "ToyModel",
    "ToyModelConfig",
    "build_model",
    "load_checkpoint",
    "replace_blocks",
    "save_checkpoint",
    "TaskData",
    "gold_label",
    "make_task",
    "OptimizerConfig",
    "grad_check",
    "recover",
    "save_loss_curve",
]
