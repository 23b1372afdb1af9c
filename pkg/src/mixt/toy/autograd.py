"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Node` wraps a float64 array together with a gradient
accumulator, its parent nodes, and the backward rule that pushes an
incoming gradient to those parents. :func:`backward` runs the reverse
sweep from a scalar loss in topological order.

Only the primitives the toy transformer needs are provided; each backward
rule is hand-derived and checked against central finite differences in
the test suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..operator import MixtSpec


class Node:
    """One value in the compute graph."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
        requires_grad: bool = True,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def accumulate(self, g: np.ndarray) -> None:
        """Add ``g`` to the gradient; ``g`` may alias caller memory."""
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def accumulate_owned(self, g: np.ndarray) -> None:
        """Add a freshly allocated gradient that this node may keep."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g


def parameter(value: np.ndarray) -> Node:
    """Leaf node holding a trainable array (shares storage with it)."""
    arr = np.asarray(value)
    if arr.dtype != np.float64:
        raise TypeError(f"parameters must be float64, got {arr.dtype}")
    node = Node.__new__(Node)
    node.value = arr
    node.grad = None
    node.parents = ()
    node.backward_fn = None
    node.requires_grad = True
    return node


def constant(value: np.ndarray) -> Node:
    return Node(np.asarray(value, dtype=np.float64), requires_grad=False)


def backward(loss: Node) -> None:
    """Reverse sweep from a scalar loss; fills ``grad`` on every node."""
    if loss.value.shape != ():
        raise ValueError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Node, b: Node) -> Node:
    out_value = a.value + b.value

    def bw(g):
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(g, b.value.shape))

    return Node(out_value, (a, b), bw)


def add_const(a: Node, c: np.ndarray) -> Node:
    def bw(g):
        a.accumulate(_unbroadcast(g, a.value.shape))

    return Node(a.value + c, (a,), bw)


def mul(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ValueError(f"mul expects equal shapes, got {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value

    def bw(g):
        a.accumulate_owned(g * bv)
        b.accumulate_owned(g * av)

    return Node(av * bv, (a, b), bw)


def scale(a: Node, s: float) -> Node:
    def bw(g):
        a.accumulate_owned(g * s)

    return Node(a.value * s, (a,), bw)


def linear(x: Node, w: Node) -> Node:
    """Apply the matrix ``w`` (shape [out, in]) to the last axis of ``x``."""
    xv, wv = x.value, w.value
    out_value = xv @ wv.T

    def bw(g):
        x.accumulate_owned(g @ wv)
        g2 = np.ascontiguousarray(g).reshape(-1, g.shape[-1])
        x2 = xv.reshape(-1, xv.shape[-1])
        w.accumulate_owned(g2.T @ x2)

    return Node(out_value, (x, w), bw)


def bmm(a: Node, b: Node) -> Node:
    """Batched matmul: [..., i, j] @ [..., j, k] with equal leading dims."""
    av, bv = a.value, b.value

    def bw(g):
        a.accumulate_owned(g @ np.swapaxes(bv, -1, -2))
        b.accumulate_owned(np.swapaxes(av, -1, -2) @ g)

    return Node(av @ bv, (a, b), bw)


def swap_last(a: Node) -> Node:
    def bw(g):
        a.accumulate(np.swapaxes(g, -1, -2))

    return Node(np.swapaxes(a.value, -1, -2), (a,), bw)


def reshape(a: Node, shape: Sequence[int]) -> Node:
    old = a.value.shape

    def bw(g):
        a.accumulate(g.reshape(old))

    return Node(a.value.reshape(tuple(shape)), (a,), bw)


def moveaxis(a: Node, source, destination) -> Node:
    def bw(g):
        a.accumulate(np.moveaxis(g, destination, source))

    return Node(np.moveaxis(a.value, source, destination), (a,), bw)


def lookup(table: Node, ids: np.ndarray) -> Node:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        np.add.at(table.grad, ids, g)

    return Node(table.value[ids], (table,), bw)


def silu(a: Node) -> Node:
    sig = 1.0 / (1.0 + np.exp(-a.value))
    out_value = a.value * sig

    def bw(g):
        a.accumulate_owned(g * sig * (1.0 + a.value * (1.0 - sig)))

    return Node(out_value, (a,), bw)


def rmsnorm(x: Node, gain: Node, eps: float = 1e-6) -> Node:
    """Root-mean-square normalization over the last axis, with gain."""
    xv = x.value
    width = xv.shape[-1]
    inv_rms = 1.0 / np.sqrt(np.mean(xv * xv, axis=-1, keepdims=True) + eps)
    out_value = xv * inv_rms * gain.value

    def bw(g):
        gg = g * gain.value
        inner = np.sum(gg * xv, axis=-1, keepdims=True)
        x.accumulate_owned(gg * inv_rms - (inv_rms**3 / width) * xv * inner)
        batch_axes = tuple(range(g.ndim - 1))
        gain.accumulate_owned(np.sum(g * xv * inv_rms, axis=batch_axes))

    return Node(out_value, (x, gain), bw)


def softmax(a: Node) -> Node:
    """Softmax over the last axis (shift-stabilized)."""
    shifted = a.value - np.max(a.value, axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / np.sum(e, axis=-1, keepdims=True)

    def bw(g):
        a.accumulate_owned(p * (g - np.sum(g * p, axis=-1, keepdims=True)))

    return Node(p, (a,), bw)


def pad_last(a: Node, width: int) -> Node:
    """Zero-pad the last axis up to ``width``."""
    current = a.value.shape[-1]
    if width < current:
        raise ValueError(f"pad target {width} smaller than current {current}")
    if width == current:
        return a
    pads = [(0, 0)] * (a.value.ndim - 1) + [(0, width - current)]

    def bw(g):
        a.accumulate(g[..., :current])

    return Node(np.pad(a.value, pads), (a,), bw)


def slice_last(a: Node, width: int) -> Node:
    """Keep the first ``width`` entries of the last axis."""
    current = a.value.shape[-1]
    if width > current:
        raise ValueError(f"slice target {width} larger than current {current}")
    if width == current:
        return a

    def bw(g):
        full = np.zeros_like(a.value)
        full[..., :width] = g
        a.accumulate_owned(full)

    return Node(np.ascontiguousarray(a.value[..., :width]), (a,), bw)


def position(a: Node, t: int) -> Node:
    """Select one index along axis 1 (sequence axis): out = a[:, t]."""
    idx = range(a.value.shape[1])[t]

    def bw(g):
        full = np.zeros_like(a.value)
        full[:, idx] = g
        a.accumulate_owned(full)

    return Node(a.value[:, idx], (a,), bw)


def mixt_branch(xb: Node, branch: Node, spec: MixtSpec, k: int) -> Node:
    """Apply branch ``k`` of a tensor-mixture operator to bond-shaped input.

    ``xb`` has any number of leading batch axes followed by ``n`` bond
    axes of length ``d``; the branch tensor contracts the contiguous
    input-bond window starting at ``k`` and emits its output bonds in
    place, passing all other bonds through.
    """
    nb = xb.value.ndim - spec.n
    w_in = spec.branch_in_order
    w_out = spec.branch_out_order
    in_window = tuple(range(nb + k, nb + k + w_in))
    out_window = tuple(range(nb + k, nb + k + w_out))

    t = np.tensordot(branch.value, xb.value, axes=(tuple(range(w_out, w_out + w_in)), in_window))
    out_value = np.moveaxis(t, tuple(range(w_out)), out_window)

    def bw(g):
        # branch gradient: contract the incoming gradient with the input
        # over every non-window axis, leaving [out-window, in-window]
        g_rest = tuple(range(nb + k)) + tuple(range(nb + k + w_out, g.ndim))
        x_rest = tuple(range(nb + k)) + tuple(range(nb + k + w_in, xb.value.ndim))
        branch.accumulate_owned(np.tensordot(g, xb.value, axes=(g_rest, x_rest)))
        # input gradient: the transposed branch applied to the gradient
        t2 = np.tensordot(
            branch.value, g, axes=(tuple(range(w_out)), out_window)
        )
        xb.accumulate_owned(np.moveaxis(t2, tuple(range(w_in)), in_window))

    return Node(out_value, (xb, branch), bw)


def cross_entropy(logits: Node, targets: np.ndarray) -> Node:
    """Mean cross-entropy of [N, V] logits against integer targets [N]."""
    targets = np.asarray(targets)
    z = logits.value
    zmax = np.max(z, axis=-1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(z - zmax), axis=-1))
    n = z.shape[0]
    picked = z[np.arange(n), targets]
    loss_value = np.mean(lse - picked)

    def bw(g):
        p = np.exp(z - zmax)
        p /= np.sum(p, axis=-1, keepdims=True)
        p[np.arange(n), targets] -= 1.0
        logits.accumulate_owned(g * p / n)

    return Node(np.asarray(loss_value), (logits,), bw)
