"""Parameter, FLOP, and storage accounting for a 7B-class model.

Given an architecture description and a replacement plan, the profiler
enumerates every weight matrix, swaps the planned blocks' seven maps
for their tensor-mixture counterparts, and reports exact parameter
counts, inference/training FLOPs, and storage at several precisions.
No weights are instantiated -- this is pure arithmetic, so it runs in
milliseconds at any scale.
"""

from mixt import (
    ArchConfig,
    CompressionPlan,
    build_report,
    count_params,
    render_report,
    scaling_curve,
)

LLAMA_7B_CLASS = ArchConfig(
    num_layers=32,
    hidden=4096,
    intermediate=11008,
    vocab=32000,
    heads=32,
    kv_heads=32,
)


def main():
    # ------------------------------------------------------------------
    # 1. Replace the last 17 of 32 blocks with four-branch mixtures.
    # ------------------------------------------------------------------
    plan = CompressionPlan(n_b=17, n_t=4, d=2, direction="back-to-front")
    census = count_params(LLAMA_7B_CLASS, plan)
    print(f"dense parameters:      {census.dense_total:>14,}")
    print(f"compressed parameters: {census.compressed_total:>14,}")
    print(f"reduction:             {census.reduction_percent:.1f}%")

    print("\nwhere the compressed parameters live:")
    for part, n in census.compressed_breakdown.items():
        print(f"  {part:<12} {n:>14,}")

    # ------------------------------------------------------------------
    # 2. The full report adds FLOPs (both accounting modes) and storage.
    # ------------------------------------------------------------------
    report = build_report(LLAMA_7B_CLASS, plan, seq_len=54)
    print()
    print(render_report(report))

    # ------------------------------------------------------------------
    # 3. How the gap scales with width: dense grows as H^2 while a
    #    four-branch mixture keeps exactly 1/16 of it at powers of two.
    # ------------------------------------------------------------------
    print("width scaling (d = 2, four branches):")
    print(f"  {'H':>6} {'dense':>12} {'mixture':>10} {'ratio':>7}")
    for h, _, dense, mixt in scaling_curve([256, 1024, 4096, 16384], [4]):
        print(f"  {h:>6} {dense:>12,} {mixt:>10,} {dense // mixt:>6}x")


if __name__ == "__main__":
    main()
