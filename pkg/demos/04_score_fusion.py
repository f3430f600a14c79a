"""Learning how to combine global and local similarity.

The re-ranker needs one number per candidate. The transparent option is a
linear blend alpha*global + (1-alpha)*local; the learned option is a tiny
2 -> 8 -> 1 network trained on binary relevance. Here the two are compared
on a score distribution where relevance follows the *local* score, so the
network has something real to discover.

Run:  python demos/04_score_fusion.py
"""

import numpy as np

from patchrank import LinearFusion, fuse, train_fusion
from patchrank.fusion import FusionTrainConfig, fuse_many

rng = np.random.default_rng(4)

# Candidates whose global score is pure noise and whose local score
# carries the truth: relevant iff local > 0.5.
samples = []
for _ in range(400):
    global_score = rng.uniform(-1, 1)
    local_score = rng.uniform(-1, 1)
    samples.append((global_score, local_score, local_score > 0.5))

model, final_loss = train_fusion(samples, FusionTrainConfig(epochs=500, seed=0))
print(f"trained 2->8->1 fusion net, final BCE loss {final_loss:.4f}")

g = np.array([s[0] for s in samples])
l = np.array([s[1] for s in samples])
y = np.array([s[2] for s in samples])

for name, scores in [
    ("global only (alpha=1)", fuse_many(g, l, LinearFusion(1.0))),
    ("equal blend (alpha=.5)", fuse_many(g, l, LinearFusion(0.5))),
    ("local only (alpha=0)", fuse_many(g, l, LinearFusion(0.0))),
    ("trained fusion net", fuse_many(g, l, model)),
]:
    # rank-quality proxy: how well does the fused score order relevance?
    order = np.argsort(-scores)
    hits = np.cumsum(y[order])
    precision_at = hits / np.arange(1, len(y) + 1)
    ap = float(np.sum(precision_at * y[order]) / y.sum())
    print(f"  {name:24s} AP={ap:.3f}")

print("\nspot checks (global, local) -> fused:")
for g_val, l_val in [(0.9, 0.1), (0.1, 0.9), (-0.5, 0.8), (0.8, -0.5)]:
    print(f"  ({g_val:+.1f}, {l_val:+.1f}) -> {fuse(g_val, l_val, model):.3f}")
