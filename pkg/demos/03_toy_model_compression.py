"""Compressing a small transformer and recovering its accuracy.

The toy model is a decoder-only transformer on a synthetic 4-choice
task: each sequence shuffles four key tokens among three distractors,
and the answer is the sum of the key values mod 4.  We train a dense
baseline, swap every block's seven weight matrices for two-branch
tensor mixtures (initialized by weight matching against the trained
values), watch the damage, and repair it with a short recovery run.
"""

from mixt import CompressionPlan
from mixt.toy import (
    OptimizerConfig,
    ToyModelConfig,
    build_model,
    evaluate,
    make_task,
    recover,
    replace_blocks,
)
from mixt.toy.task import SEQ_LEN, VOCAB_SIZE

CFG = ToyModelConfig(
    num_blocks=6,
    hidden=64,
    num_heads=4,
    ffn_dim=128,
    vocab_size=VOCAB_SIZE,
    max_seq_len=SEQ_LEN,
    seed=0,
)


def main():
    train = make_task(seed=1, size=4096)
    held_out = make_task(seed=2, size=256)

    # ------------------------------------------------------------------
    # 1. Dense baseline.  1200 steps bring this six-block model to high
    #    held-out accuracy; expect a couple of minutes of CPU for the
    #    whole script.
    # ------------------------------------------------------------------
    model = build_model(CFG)
    model, curve = recover(
        model, train, budget_steps=1200,
        opt_cfg=OptimizerConfig(learning_rate=2e-3), seed=3,
    )
    acc, _ = evaluate(model, held_out, capture_hidden=False)
    print(f"baseline: loss {curve[0]:.3f} -> {curve[-1]:.3f}, "
          f"held-out accuracy {acc:.3f}")

    # ------------------------------------------------------------------
    # 2. Replace all six blocks.  Each of their seven weight matrices
    #    becomes a two-branch mixture fitted to the trained weights,
    #    keeping half of every map's dense parameters; accuracy takes a
    #    serious hit because the fits are only approximate.
    # ------------------------------------------------------------------
    plan = CompressionPlan(n_b=6, n_t=2, d=2, direction="back-to-front")
    compressed = replace_blocks(model, plan)
    print(f"\nparameters: dense {model.param_count()} -> "
          f"mixture {compressed.param_count()}")
    acc_drop, _ = evaluate(compressed, held_out, capture_hidden=False)
    print(f"accuracy right after replacement: {acc_drop:.3f}")

    # ------------------------------------------------------------------
    # 3. Recovery: a short retraining run on the compressed model wins
    #    most of the accuracy back at half the parameter budget.
    # ------------------------------------------------------------------
    compressed, curve = recover(
        compressed, train, budget_steps=200,
        opt_cfg=OptimizerConfig(learning_rate=1e-3), seed=4,
    )
    acc_rec, _ = evaluate(compressed, held_out, capture_hidden=False)
    print(f"after {len(curve)} recovery steps: accuracy {acc_rec:.3f} "
          f"(loss {curve[0]:.3f} -> {curve[-1]:.3f})")

    # ------------------------------------------------------------------
    # 4. The same budget can be spent on the branches alone, leaving
    #    the embeddings, norms, and head frozen at their trained values.
    # ------------------------------------------------------------------
    frozen = replace_blocks(model, plan)
    frozen, _ = recover(
        frozen, train, budget_steps=200,
        opt_cfg=OptimizerConfig(learning_rate=1e-3), seed=4, freeze_dense=True,
    )
    acc_frozen, _ = evaluate(frozen, held_out, capture_hidden=False)
    print(f"branch-only recovery for comparison:  {acc_frozen:.3f}")


if __name__ == "__main__":
    main()
