"""Tensor-mixture operators from first principles.

A dense D_out x D_in matrix is replaced by a handful of small local
tensors: the input is zero-padded to a power of d, reshaped into n
bonds of dimension d, and each branch contracts its own sliding window
of bonds while leaving the rest untouched.  The branch outputs are
averaged.  This script builds one operator, checks it against its own
dense expansion, and walks the parameter arithmetic.
"""

import numpy as np

from mixt import (
    MixtOperator,
    MixtSpec,
    expand_to_dense,
    flop_count,
    param_count,
    remaining_ratio,
)


def main():
    rng = np.random.default_rng(0)

    # ------------------------------------------------------------------
    # 1. Shape bookkeeping: a 48 -> 20 map with bond dimension 2.
    #    Widths that are not powers of d are padded minimally: 48 needs
    #    six input bonds (2**6 = 64), 20 needs five output bonds.
    # ------------------------------------------------------------------
    spec = MixtSpec.for_dims(d=2, in_dim_raw=48, out_dim_raw=20, n_t=3)
    print("spec:", spec)
    print(f"  input  {spec.in_dim_raw:>4} padded to d^n = {spec.in_dim} (n = {spec.n})")
    print(f"  output {spec.out_dim_raw:>4} padded to d^m = {spec.out_dim} (m = {spec.m})")
    print(f"  branches: {spec.n_t}, each shaped {spec.branch_shape}")

    # ------------------------------------------------------------------
    # 2. Parameter arithmetic.  Every branch stores d^(m+n+2-2*n_t)
    #    entries, so the operator keeps a fraction
    #    r = n_t / d^(2*n_t - 2) of a dense map over the padded widths.
    # ------------------------------------------------------------------
    dense_padded = spec.in_dim * spec.out_dim
    print(f"\ndense parameters (padded widths): {dense_padded}")
    print(f"mixture parameters:               {param_count(spec)}")
    print(f"remaining ratio r:                {remaining_ratio(spec):.4f}")
    assert param_count(spec) == round(dense_padded * remaining_ratio(spec))

    # FLOP accounting has two conventions: 'paper' ties multiply-adds to
    # the parameter count, 'contraction' counts the einsum as executed.
    for mode in ("paper", "contraction"):
        print(f"flops per application ({mode}): {flop_count(spec, mode)}")

    # ------------------------------------------------------------------
    # 3. The operator is linear, so it has an exact dense expansion.
    #    Applying the operator must match multiplying by that matrix.
    # ------------------------------------------------------------------
    op = MixtOperator.random(spec, rng)
    w = expand_to_dense(op)          # shape (out_dim_raw, in_dim_raw)
    x = rng.normal(size=(8, 48))
    gap = np.max(np.abs(op.forward(x) - x @ w.T))
    print(f"\nexpansion shape: {w.shape}")
    print(f"max |forward - dense @ x| over 8 inputs: {gap:.3e}")
    assert gap <= 1e-10

    # ------------------------------------------------------------------
    # 4. The headline regime: a 4096 x 4096 map with four branches keeps
    #    1/16 of the dense parameters.
    # ------------------------------------------------------------------
    big = MixtSpec.for_dims(d=2, in_dim_raw=4096, out_dim_raw=4096, n_t=4)
    print(f"\n4096 x 4096, four branches:")
    print(f"  dense   {4096 * 4096:>10}")
    print(f"  mixture {param_count(big):>10}  (ratio {remaining_ratio(big):.4f})")


if __name__ == "__main__":
    main()
