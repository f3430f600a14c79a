"""From a backbone feature map to searchable descriptors.

Walks the basic data path: an H x W x C activation tensor becomes one
pooled global descriptor (for stage-1 search) and H*W unit-norm patch
vectors (for stage-2 matching), and feature maps round-trip losslessly
through the binary file format.

Run:  python demos/01_features_and_stores.py
"""

import tempfile
from pathlib import Path

import numpy as np

from patchrank import (
    FeatureMap,
    average_pool,
    extract_patches,
    l2_normalize,
    read_feature_file,
    write_feature_file,
)

rng = np.random.default_rng(0)

# A toy "backbone output": 7 x 7 positions, 32 channels.
fmap = FeatureMap("demo-image", rng.uniform(0.0, 2.0, size=(7, 7, 32)).astype(np.float32))
print(f"feature map: {fmap.height} x {fmap.width} x {fmap.channels}")

# Stage-1 descriptor: average over all positions, then unit-normalize so
# cosine similarity against a store reduces to a dot product.
pooled = average_pool(fmap)
descriptor = l2_normalize(pooled.vector)
print(f"pooled descriptor: dim={pooled.vector.size}, |v|={np.linalg.norm(descriptor):.6f}")

# Pooling ignores *where* activations sit: permuting positions changes nothing.
perm = rng.permutation(49)
shuffled = FeatureMap("shuffled", fmap.values.reshape(49, 32)[perm].reshape(7, 7, 32))
print("pooled equal after spatial shuffle:", np.allclose(average_pool(shuffled).vector, pooled.vector, atol=1e-6))

# Stage-2 descriptors: one unit vector per spatial position.
patches = extract_patches(fmap)
print(f"patches: {patches.count} x {patches.dim}, norms all 1: "
      f"{np.allclose(np.linalg.norm(patches.patches, axis=1), 1.0, atol=1e-6)}")

# Feature maps persist in a small binary format that round-trips exactly.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.prfm"
    write_feature_file(fmap, path)
    again = read_feature_file(path)
    print(f"file size: {path.stat().st_size} bytes "
          f"(= 18-byte header + 4 * {fmap.values.size})")
    print("round-trip bit-exact:", np.array_equal(again.values, fmap.values))
