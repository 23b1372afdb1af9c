"""The measurement toolkit behind the compression-depth sweeps.

Four families of metrics, each shown on hand-built data so the
expected values are obvious:

  * answer-distribution entropies (how uncertain, how collapsed),
  * inter-layer representation similarity and its drift,
  * segmented linear fits for two-regime scaling curves,
  * the transition threshold on an accuracy-versus-depth series.
"""

import numpy as np

from mixt import (
    AnswerDistBatch,
    default_output_pairs,
    drift_summaries,
    geometry_drift,
    interlayer_similarity,
    output_entropy,
    prediction_entropy,
    segmented_fit,
    transformed_pe,
    transition_threshold,
)


def main():
    rng = np.random.default_rng(5)

    # ------------------------------------------------------------------
    # 1. Entropies over the four answer options, normalized to [0, 1].
    #    OE averages the per-question output distribution's entropy; PE
    #    is the entropy of the predicted-label frequencies.
    # ------------------------------------------------------------------
    confident = AnswerDistBatch(
        probs=np.tile([0.97, 0.01, 0.01, 0.01], (8, 1)),
        gold=np.arange(8) % 4,
        predicted=np.zeros(8, dtype=int),
    )
    guessing = AnswerDistBatch(
        probs=np.full((8, 4), 0.25),
        gold=np.zeros(8, dtype=int),
        predicted=np.arange(8) % 4,   # cycling picks: chance-level accuracy
    )
    for name, batch in [("confident-but-fixated", confident),
                        ("uniform guessing", guessing)]:
        pe = prediction_entropy(batch)
        print(f"{name:<22} OE {output_entropy(batch):.3f}  "
              f"PE {pe:.3f}  tPE {transformed_pe(pe):6.2f}  "
              f"acc {batch.accuracy:.3f}")

    # ------------------------------------------------------------------
    # 2. Representation geometry.  States are [prompt, layer, hidden];
    #    similarity is the mean cosine between every pair of layers,
    #    and drift is the elementwise gap to a reference map.
    # ------------------------------------------------------------------
    states = rng.normal(size=(32, 6, 16))          # 32 prompts, 6 layers
    states[:, 4] = states[:, 3]                    # layer 4 copies layer 3
    sim = interlayer_similarity(states)
    print(f"\ncos(layer 3, layer 4) = {sim.pair(3, 4):.3f}   "
          f"cos(layer 0, layer 5) = {sim.pair(0, 5):.3f}")

    nudged = states + 0.3 * rng.normal(size=states.shape)
    drift = geometry_drift(interlayer_similarity(nudged), sim)
    pairs = default_output_pairs(layer_count=6)    # pairs ending near the top
    out_mean, global_mean = drift_summaries(drift, pairs)
    print(f"after nudging the states: output-side drift {out_mean:.3f}, "
          f"global drift {global_mean:.3f}")

    # ------------------------------------------------------------------
    # 3. Two-regime scaling: a segmented fit finds the slope change.
    # ------------------------------------------------------------------
    xs = np.arange(10.0, 25.0)
    ys = 0.05 + 0.006 * np.minimum(xs, 17) + 0.016 * np.maximum(0, xs - 17)
    ys += 1e-4 * rng.normal(size=xs.size)
    fit = segmented_fit(list(zip(xs, ys)))
    print(f"\nsegmented fit: slopes {fit.pre_slope:.4f} -> {fit.post_slope:.4f} "
          f"with breakpoint at x = {fit.breakpoint:.2f}")

    # ------------------------------------------------------------------
    # 4. Transition depth: the first replacement depth whose accuracy
    #    falls below the plateau by more than the tolerated drop, with
    #    every deeper replacement staying below as well.
    # ------------------------------------------------------------------
    series = list(zip(range(8), [0.95, 0.94, 0.95, 0.93, 0.91, 0.55, 0.40, 0.32]))
    depth = transition_threshold(series)
    print(f"accuracy series {[a for _, a in series]}")
    print(f"transition depth: {depth}")


if __name__ == "__main__":
    main()
