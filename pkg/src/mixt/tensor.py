"""Dense multi-dimensional arrays plus the handful of structural ops the
rest of the package is built on: reshape, axis permutation, contraction,
tail padding/slicing, and the Frobenius norm.

All tensors are 64-bit real, row-major (last axis fastest), and immutable
by convention: every operation returns a new tensor and never aliases
writable views of its inputs. Non-finite entries are rejected at
construction, so NaN/Inf cannot propagate silently.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

from .errors import (
    AxisLengthMismatch,
    AxisOutOfRange,
    InvalidLength,
    InvalidPermutation,
    MixtError,
    ShapeMismatch,
)

Shape = tuple[int, ...]

# Binary tensor file layout: magic, format version u32, rank u32,
# dims u64 little-endian, then the raw float64 row-major payload.
_MAGIC = b"MIXT"
_FORMAT_VERSION = 1


def _check_shape(dims: Sequence[int]) -> Shape:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ShapeMismatch(f"axis lengths must be >= 1, got {dims}")
    return dims


class DenseTensor:
    """A dense float64 tensor with explicit shape.

    ``data`` is a C-contiguous, read-only ndarray; ``shape`` is the axis
    tuple. Use :meth:`from_array` for the common case of wrapping an
    existing numpy array.
    """

    __slots__ = ("data", "shape")

    def __init__(self, data: np.ndarray, shape: Sequence[int] | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if shape is not None:
            shape = _check_shape(shape)
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise ShapeMismatch(
                    f"data has {arr.size} elements, shape {shape} needs "
                    f"{int(np.prod(shape, dtype=np.int64))}"
                )
            arr = arr.reshape(shape)
        elif arr.ndim == 0:
            arr = arr.reshape(1)
        if not np.all(np.isfinite(arr)):
            raise MixtError("tensor contains non-finite entries")
        if arr is data or arr.base is not None:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "shape", tuple(arr.shape))

    def __setattr__(self, name, value):
        raise AttributeError("DenseTensor is immutable")

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        return cls(np.asarray(arr, dtype=np.float64))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "DenseTensor":
        return cls(np.zeros(_check_shape(shape)))

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    def item(self, *multi_index: int) -> float:
        return float(self.data[multi_index])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DenseTensor)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape})"


def reshape(t: DenseTensor, new_shape: Sequence[int]) -> DenseTensor:
    """Reinterpret the flat data under a new shape (row-major order kept)."""
    new_shape = _check_shape(new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ShapeMismatch(
            f"cannot reshape {t.shape} ({t.size} elements) to {new_shape}"
        )
    return DenseTensor(t.data.reshape(new_shape))


def permute(t: DenseTensor, perm: Sequence[int]) -> DenseTensor:
    """Permute axes so output[sigma(i)] = input[i].

    ``perm[j]`` names the input axis that becomes output axis ``j``
    (numpy transpose convention).
    """
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(t.rank)):
        raise InvalidPermutation(f"{perm} is not a permutation of 0..{t.rank - 1}")
    return DenseTensor(np.transpose(t.data, perm))


def _check_axes(rank: int, axes: Sequence[int], side: str) -> tuple[int, ...]:
    axes = tuple(int(a) for a in axes)
    for a in axes:
        if not 0 <= a < rank:
            raise AxisOutOfRange(f"axis {a} out of range for rank-{rank} operand {side}")
    if len(set(axes)) != len(axes):
        raise AxisOutOfRange(f"duplicate contraction axes {axes} on operand {side}")
    return axes


def contract(
    a: DenseTensor,
    b: DenseTensor,
    axes_a: Sequence[int],
    axes_b: Sequence[int],
) -> DenseTensor:
    """Generalized tensor contraction over paired axes.

    Output axes are the remaining axes of ``a`` (in order) followed by
    the remaining axes of ``b``. Contracting away every axis yields a
    single-element rank-1 tensor.
    """
    axes_a = _check_axes(a.rank, axes_a, "a")
    axes_b = _check_axes(b.rank, axes_b, "b")
    if len(axes_a) != len(axes_b):
        raise AxisLengthMismatch(
            f"{len(axes_a)} axes paired with {len(axes_b)} axes"
        )
    for ax_a, ax_b in zip(axes_a, axes_b):
        if a.shape[ax_a] != b.shape[ax_b]:
            raise AxisLengthMismatch(
                f"axis {ax_a} of a has length {a.shape[ax_a]}, "
                f"axis {ax_b} of b has length {b.shape[ax_b]}"
            )
    out = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    return DenseTensor(out)


def pad_axis(t: DenseTensor, axis: int, new_len: int) -> DenseTensor:
    """Append zeros at the tail of one axis until it has ``new_len`` entries."""
    if not 0 <= axis < t.rank:
        raise AxisOutOfRange(f"axis {axis} out of range for rank {t.rank}")
    old = t.shape[axis]
    if new_len < old:
        raise InvalidLength(f"pad target {new_len} < current length {old}")
    if new_len == old:
        return t
    widths = [(0, 0)] * t.rank
    widths[axis] = (0, new_len - old)
    return DenseTensor(np.pad(t.data, widths))


def slice_axis(t: DenseTensor, axis: int, length: int) -> DenseTensor:
    """Keep the leading ``length`` entries of one axis."""
    if not 0 <= axis < t.rank:
        raise AxisOutOfRange(f"axis {axis} out of range for rank {t.rank}")
    if not 1 <= length <= t.shape[axis]:
        raise InvalidLength(f"slice length {length} invalid for axis of {t.shape[axis]}")
    index = [slice(None)] * t.rank
    index[axis] = slice(0, length)
    return DenseTensor(t.data[tuple(index)])


def frobenius_norm(t: DenseTensor) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.linalg.norm(t.flat()))


def save_tensor(path, t: DenseTensor) -> None:
    """Write a tensor in the binary interchange format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<I", t.rank))
        fh.write(struct.pack(f"<{t.rank}Q", *t.shape))
        fh.write(t.flat().astype("<f8").tobytes())


def load_tensor(path) -> DenseTensor:
    """Read a tensor written by :func:`save_tensor`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise MixtError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise MixtError(f"{path}: unsupported format version {version}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise MixtError(f"{path}: truncated payload")
        data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return DenseTensor(data, dims)
