"""Least-squares initialization of a tensor-mixture operator from a dense
weight matrix.

Given a matrix W, find branch tensors minimizing the Frobenius distance
between W (zero-padded to the operator's padded shape) and the operator's
dense expansion. Because each branch enters the expansion linearly and the
Kronecker sandwich ``I_a (x) M (x) I_b`` satisfies
``<I(x)M(x)I, I(x)M'(x)I> = a*b*<M, M'>``, the per-branch subproblem has the
closed-form solution

    M[u, v] = (n_t / (a*b)) * sum_{p<a, q<b} R[(p,u,q), (p,v,q)]

— a block partial trace of the current residual over the pass-through
indices. Cycling this update over branches is alternating least squares on
a jointly convex quadratic, so the residual is non-increasing and converges
to the global minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, InvalidPermutation
from .operator import MixtOperator, MixtSpec, branch_expansion, expand_to_dense
from .tensor import DenseTensor

_INIT_SCHEMES = ("zeros-except-first", "scaled-random")


@dataclass(frozen=True)
class MatchConfig:
    """Free choices of the matching procedure.

    ``rel_tol`` stops the sweep loop once the per-sweep residual
    improvement, relative to the starting residual, falls below it.
    """

    max_sweeps: int = 100
    rel_tol: float = 1e-7
    init_scheme: str = "zeros-except-first"
    seed: int = 0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise InvalidConfig(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if not self.rel_tol > 0:
            raise InvalidConfig(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.init_scheme not in _INIT_SCHEMES:
            raise InvalidConfig(
                f"init_scheme must be one of {_INIT_SCHEMES}, got {self.init_scheme!r}"
            )


class ReconstructionError(float):
    """Relative Frobenius reconstruction error.

    For a zero reference matrix the relative error is undefined, so the
    absolute expansion norm is returned instead and ``absolute`` is True.
    """

    absolute: bool

    def __new__(cls, value: float, absolute: bool = False):
        obj = super().__new__(cls, value)
        obj.absolute = absolute
        return obj


def branch_update(r: np.ndarray, k: int, spec: MixtSpec) -> DenseTensor:
    """Optimal branch ``k`` against residual ``r`` (full padded shape).

    Returns argmin over M of ``||r - (1/n_t) * I_a (x) M (x) I_b||_F``
    via the block partial trace over the ``a = d**k`` leading and
    ``b = d**(n_t-1-k)`` trailing pass-through indices.
    """
    a = spec.d**k
    b = spec.d ** (spec.n_t - 1 - k)
    p = spec.d**spec.branch_out_order
    q = spec.d**spec.branch_in_order
    r6 = np.asarray(r, dtype=np.float64).reshape(a, p, b, a, q, b)
    mat = np.einsum("aubavb->uv", r6) * (spec.n_t / (a * b))
    return DenseTensor.from_array(mat.reshape(spec.branch_shape))


def _pad_matrix(w: np.ndarray, spec: MixtSpec) -> np.ndarray:
    w_pad = np.zeros((spec.out_dim, spec.in_dim))
    w_pad[: spec.out_dim_raw, : spec.in_dim_raw] = w
    return w_pad


def _initial_matrices(w_pad: np.ndarray, spec: MixtSpec, cfg: MatchConfig) -> list[np.ndarray]:
    p = spec.d**spec.branch_out_order
    q = spec.d**spec.branch_in_order
    if cfg.init_scheme == "zeros-except-first":
        mats = [np.zeros((p, q)) for _ in range(spec.n_t)]
        mats[0] = branch_update(w_pad, 0, spec).data.reshape(p, q)
        return mats
    # scaled-random: entry scale chosen so the averaged expansion has
    # Frobenius norm comparable to the target.
    rng = np.random.default_rng(cfg.seed)
    w_norm = float(np.linalg.norm(w_pad))
    sigma = w_norm * np.sqrt(spec.n_t / spec.d ** (spec.m + spec.n - spec.n_t + 1))
    return [rng.normal(scale=sigma or 1.0, size=(p, q)) for _ in range(spec.n_t)]


def match_weights(
    w: np.ndarray,
    spec: MixtSpec,
    cfg: MatchConfig | None = None,
    *,
    update_order: Sequence[int] | None = None,
) -> tuple[MixtOperator, list[float]]:
    """Fit an operator to the dense matrix ``w`` by alternating least squares.

    ``w`` must have the spec's raw shape; it is zero-padded internally.
    Returns the fitted operator and the residual history: the relative
    Frobenius residual after initialization and after every sweep (the
    absolute residual when ``w`` is zero). Branches are updated cyclically
    in ``update_order`` (default ``0..n_t-1``).
    """
    cfg = cfg or MatchConfig()
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (spec.out_dim_raw, spec.in_dim_raw):
        raise DimensionMismatch(
            f"weight matrix {w.shape} does not match raw dims "
            f"({spec.out_dim_raw}, {spec.in_dim_raw})"
        )
    if update_order is None:
        order = list(range(spec.n_t))
    else:
        order = list(update_order)
        if sorted(order) != list(range(spec.n_t)):
            raise InvalidPermutation(
                f"update order {order} is not a permutation of 0..{spec.n_t - 1}"
            )

    w_pad = _pad_matrix(w, spec)
    w_norm = float(np.linalg.norm(w_pad))
    mats = _initial_matrices(w_pad, spec, cfg)
    expanded = [branch_expansion(spec, k, mats[k]) for k in range(spec.n_t)]
    total = np.sum(expanded, axis=0)

    def residual() -> float:
        res = float(np.linalg.norm(w_pad - total / spec.n_t))
        return res / w_norm if w_norm > 0 else res

    history = [residual()]
    for _ in range(cfg.max_sweeps):
        for k in order:
            r = w_pad - (total - expanded[k]) / spec.n_t
            mats[k] = branch_update(r, k, spec).data.reshape(mats[k].shape)
            new_expansion = branch_expansion(spec, k, mats[k])
            total += new_expansion - expanded[k]
            expanded[k] = new_expansion
        history.append(residual())
        if (history[-2] - history[-1]) / max(history[0], 1e-30) < cfg.rel_tol:
            break

    branches = [
        DenseTensor.from_array(m.reshape(spec.branch_shape)) for m in mats
    ]
    return MixtOperator(spec, branches, average=True), history


def reconstruction_error(w: np.ndarray, op: MixtOperator) -> ReconstructionError:
    """Relative Frobenius distance between ``w`` and the operator's expansion."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (op.spec.out_dim_raw, op.spec.in_dim_raw):
        raise DimensionMismatch(
            f"weight matrix {w.shape} does not match raw dims "
            f"({op.spec.out_dim_raw}, {op.spec.in_dim_raw})"
        )
    diff_norm = float(np.linalg.norm(w - expand_to_dense(op)))
    w_norm = float(np.linalg.norm(w))
    if w_norm == 0.0:
        return ReconstructionError(diff_norm, absolute=True)
    return ReconstructionError(diff_norm / w_norm)
