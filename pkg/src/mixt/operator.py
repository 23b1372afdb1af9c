"""The tensor-mixture linear operator.

A dense map of width ``in_dim_raw -> out_dim_raw`` is replaced by ``n_t``
parallel branches acting on a tensorized input: the input vector is
zero-padded to ``d**n``, reshaped into ``n`` bonds of dimension ``d``, and
branch ``k`` applies one local tensor to the contiguous bond window
starting at position ``k`` while passing every other bond through
unchanged. Branch outputs are summed, averaged by ``1/n_t``, reshaped
back to ``d**m``, and sliced to the raw output width.

The operator is executed natively by per-branch contractions;
:func:`expand_to_dense` reconstructs the equivalent dense matrix and
exists for testing and weight matching only.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, MixtError
from .tensor import DenseTensor, load_tensor, save_tensor


def minimal_order(d: int, width: int) -> int:
    """Smallest n with d**n >= width (number of bonds covering a width)."""
    if width < 1:
        raise InvalidConfig(f"width must be >= 1, got {width}")
    n, cap = 0, 1
    while cap < width:
        n += 1
        cap *= d
    return n


@dataclass(frozen=True)
class MixtSpec:
    """Structural description of one tensor-mixture operator.

    ``d``: bond dimension; ``n``/``m``: input/output bond counts covering
    the padded widths ``d**n``/``d**m``; ``n_t``: branch count;
    ``in_dim_raw``/``out_dim_raw``: the original (unpadded) matrix dims.
    """

    d: int
    n: int
    m: int
    n_t: int
    in_dim_raw: int
    out_dim_raw: int

    def __post_init__(self):
        if self.d < 2:
            raise InvalidConfig(f"bond dimension must be >= 2, got {self.d}")
        if self.n < 1 or self.m < 1:
            raise InvalidConfig("bond counts must be >= 1")
        if not (self.d**self.n >= self.in_dim_raw > self.d ** (self.n - 1)):
            raise InvalidConfig(
                f"in_dim_raw={self.in_dim_raw} not covered minimally by "
                f"{self.n} bonds of dimension {self.d}"
            )
        if not (self.d**self.m >= self.out_dim_raw > self.d ** (self.m - 1)):
            raise InvalidConfig(
                f"out_dim_raw={self.out_dim_raw} not covered minimally by "
                f"{self.m} bonds of dimension {self.d}"
            )
        if not 1 <= self.n_t <= min(self.n, self.m):
            raise InvalidConfig(
                f"branch count {self.n_t} outside 1..min(n={self.n}, m={self.m})"
            )

    @classmethod
    def for_dims(cls, d: int, in_dim_raw: int, out_dim_raw: int, n_t: int) -> "MixtSpec":
        """Spec with minimal padding for the given raw matrix dims."""
        return cls(
            d=d,
            n=minimal_order(d, in_dim_raw),
            m=minimal_order(d, out_dim_raw),
            n_t=n_t,
            in_dim_raw=in_dim_raw,
            out_dim_raw=out_dim_raw,
        )

    @property
    def in_dim(self) -> int:
        """Padded input width d**n."""
        return self.d**self.n

    @property
    def out_dim(self) -> int:
        """Padded output width d**m."""
        return self.d**self.m

    @property
    def branch_in_order(self) -> int:
        return self.n - self.n_t + 1

    @property
    def branch_out_order(self) -> int:
        return self.m - self.n_t + 1

    @property
    def branch_shape(self) -> tuple[int, ...]:
        """Output bonds first, then input bonds."""
        return (self.d,) * self.branch_out_order + (self.d,) * self.branch_in_order


def param_count(spec: MixtSpec) -> int:
    """Total stored parameters: n_t branches of d**(m+n+2-2*n_t) each."""
    return spec.n_t * spec.d ** (spec.m + spec.n + 2 - 2 * spec.n_t)


def remaining_ratio(spec: MixtSpec) -> float:
    """Parameter count relative to the padded dense map, n_t / d**(2*n_t-2)."""
    return param_count(spec) / spec.d ** (spec.m + spec.n)


def flop_count(spec: MixtSpec, mode: str = "paper") -> int:
    """Multiply-add pairs per input vector.

    ``paper`` scales the dense cost d**(m+n) by the remaining ratio r,
    so it coincides with the parameter count. ``contraction`` is the
    exact cost of executing each branch as its local matricized map
    across all d**(n_t-1) pass-through slices, which carries an extra
    d**(n_t-1) factor.
    """
    if mode == "paper":
        return param_count(spec)
    if mode == "contraction":
        return spec.n_t * spec.d ** (spec.m + spec.n + 1 - spec.n_t)
    raise InvalidConfig(f"unknown FLOP mode {mode!r}")


class MixtOperator:
    """Executable mixture of ``n_t`` local tensor branches.

    ``branches[k]`` has shape ``spec.branch_shape`` (output bonds then
    input bonds) and acts on the input-bond window ``k..k+n-n_t``.
    ``average=False`` drops the 1/n_t prefactor (plain branch sum); the
    averaged form is the default everywhere.
    """

    __slots__ = ("spec", "branches", "average")

    def __init__(self, spec: MixtSpec, branches: Sequence[DenseTensor], average: bool = True):
        branches = list(branches)
        if len(branches) != spec.n_t:
            raise InvalidConfig(f"expected {spec.n_t} branches, got {len(branches)}")
        for k, br in enumerate(branches):
            if br.shape != spec.branch_shape:
                raise InvalidConfig(
                    f"branch {k} has shape {br.shape}, expected {spec.branch_shape}"
                )
        self.spec = spec
        self.branches = branches
        self.average = bool(average)

    @classmethod
    def zeros(cls, spec: MixtSpec, average: bool = True) -> "MixtOperator":
        return cls(spec, [DenseTensor.zeros(spec.branch_shape) for _ in range(spec.n_t)], average)

    @classmethod
    def random(cls, spec: MixtSpec, rng: np.random.Generator, scale: float = 1.0) -> "MixtOperator":
        branches = [
            DenseTensor.from_array(scale * rng.normal(size=spec.branch_shape))
            for _ in range(spec.n_t)
        ]
        return cls(spec, branches)

    @property
    def scale(self) -> float:
        return 1.0 / self.spec.n_t if self.average else 1.0

    def param_count(self) -> int:
        return sum(br.size for br in self.branches)

    def forward(self, x) -> np.ndarray:
        """Apply the operator to a vector or a batch of row vectors."""
        return mixt_forward(
            np.asarray(x, dtype=np.float64),
            self.spec,
            [br.data for br in self.branches],
            self.average,
        )

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)


def mixt_forward(
    x: np.ndarray,
    spec: MixtSpec,
    branches: Sequence[np.ndarray],
    average: bool = True,
) -> np.ndarray:
    """Branch-sum forward pass on raw (unpadded) inputs.

    Accepts shape ``[in_dim_raw]`` or ``[batch, in_dim_raw]``; returns the
    matching output shape with raw output width.
    """
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != spec.in_dim_raw:
        raise DimensionMismatch(
            f"input width {x.shape} incompatible with in_dim_raw={spec.in_dim_raw}"
        )
    batch = xb.shape[0]
    if spec.in_dim > spec.in_dim_raw:
        xb = np.pad(xb, ((0, 0), (0, spec.in_dim - spec.in_dim_raw)))
    bonds = xb.reshape((batch,) + (spec.d,) * spec.n)

    w_out = spec.branch_out_order
    w_in = spec.branch_in_order
    acc = np.zeros((batch,) + (spec.d,) * spec.m)
    for k, branch in enumerate(branches):
        # contract branch input bonds against x's window k..k+w_in-1
        window = tuple(range(1 + k, 1 + k + w_in))
        res = np.tensordot(branch, bonds, axes=(tuple(range(w_out, w_out + w_in)), window))
        # res axes: [out-window bonds, batch, lead bonds, trail bonds]
        res = np.moveaxis(res, range(w_out), range(1 + k, 1 + k + w_out))
        acc += res
    if average:
        acc /= spec.n_t
    out = acc.reshape(batch, spec.out_dim)[:, : spec.out_dim_raw]
    return out[0] if single else out


def branch_expansion(spec: MixtSpec, k: int, mat: np.ndarray) -> np.ndarray:
    """Unscaled dense matrix of branch ``k``: identity on the ``k`` leading
    and ``n_t - 1 - k`` trailing pass-through bonds, ``mat`` on the window.

    ``mat`` is the branch tensor matricized to
    ``d**branch_out_order x d**branch_in_order``; the result has the full
    padded shape ``d**m x d**n``.
    """
    lead = np.eye(spec.d**k)
    trail = np.eye(spec.d ** (spec.n_t - 1 - k))
    return np.kron(np.kron(lead, mat), trail)


def expand_to_dense(op: MixtOperator) -> np.ndarray:
    """Equivalent dense matrix of shape ``out_dim_raw x in_dim_raw``.

    Testing/matching oracle only; execution never reconstructs this.
    """
    spec = op.spec
    total = np.zeros((spec.out_dim, spec.in_dim))
    for k, branch in enumerate(op.branches):
        mat = branch.data.reshape(
            spec.d**spec.branch_out_order, spec.d**spec.branch_in_order
        )
        total += branch_expansion(spec, k, mat)
    total *= op.scale
    return total[: spec.out_dim_raw, : spec.in_dim_raw]


def save_operator(directory, op: MixtOperator, name: str = "operator") -> Path:
    """Write the operator manifest plus one tensor file per branch.

    Returns the manifest path. Branch files sit next to the manifest and
    are referenced by relative name.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    branch_files = []
    for k, br in enumerate(op.branches):
        fname = f"{name}_branch_{k}.mixt"
        save_tensor(directory / fname, br)
        branch_files.append(fname)
    manifest = {
        "format": "mixt-operator",
        "version": 1,
        "spec": asdict(op.spec),
        "average": op.average,
        "branches": branch_files,
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_operator(manifest_path) -> MixtOperator:
    """Read an operator written by :func:`save_operator`."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "mixt-operator":
        raise MixtError(f"{manifest_path}: not an operator manifest")
    spec = MixtSpec(**manifest["spec"])
    branches = [load_tensor(manifest_path.parent / f) for f in manifest["branches"]]
    return MixtOperator(spec, branches, average=manifest.get("average", True))
