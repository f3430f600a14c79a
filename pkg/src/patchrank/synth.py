"""Synthetic retrieval datasets: feature files plus a manifest, no CNN needed.

Each class gets one random prototype map; members are either the prototype
plus Gaussian noise, or (patch-permute mode) spatial permutations of the
prototype's patch vectors plus noise. Permuting positions leaves the
pooled descriptor unchanged, so permuted twins collide in stage-1 search
while remaining perfectly matchable patch-by-patch — the fixture that
makes re-ranking demonstrably useful.

In permute mode the prototypes themselves share one pooled mean: patches
are a common mean vector plus zero-sum per-position offsets, plus a small
class offset scaled like the pooled noise. Globals then nearly tie across
classes (weak, learnable signal), while patch identity stays fully
class-specific. Member noise in this mode is anisotropic across channels
(seeded log-uniform scale profile): raw cosine over-weights the noisy
nuisance channels, which is precisely the miscalibration a trained metric
head can learn to undo, so the fixture genuinely exercises both
re-ranking and metric learning.

Member split policy, per class of n members: member 0 is a query, members
1..n//2 are index documents, the rest are train documents.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .feature_model import FeatureMap
from .feature_store import ManifestEntry, sha256_of, write_feature_file, write_manifest


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 20
    per_class: int = 10
    height: int = 7
    width: int = 7
    channels: int = 64
    noise: float = 0.0
    patch_permute: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.classes < 1 or self.per_class < 1:
            raise ValueError("need at least one class and one member")
        if min(self.height, self.width, self.channels) < 1:
            raise ValueError("dimensions must be positive")
        if self.noise < 0:
            raise ValueError("noise level must be non-negative")


def _split_for(member: int, per_class: int) -> str:
    if member == 0:
        return "query"
    if member <= per_class // 2:
        return "index"
    return "train"


def generate_dataset(config: SynthConfig, out_dir) -> list:
    """Write PRFM files and manifest.tsv under out_dir; returns the entries.

    Fully deterministic for a given config (one rng stream, fixed
    iteration order); rerunning reproduces every file byte for byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    positions = config.height * config.width

    prototypes = []
    channel_noise = np.ones(config.channels)
    if config.patch_permute:
        shared_mean = rng.normal(size=config.channels)
        channel_noise = np.exp(rng.uniform(-1.5, 1.5, size=config.channels))
        offset_scale = config.noise / np.sqrt(positions)
        for _ in range(config.classes):
            class_offset = rng.normal(size=config.channels) * offset_scale
            patch_offsets = rng.normal(size=(positions, config.channels))
            patch_offsets -= patch_offsets.mean(axis=0)  # zero-sum: pooled mean is exact
            prototypes.append(shared_mean + class_offset + patch_offsets)
    else:
        for _ in range(config.classes):
            prototypes.append(rng.normal(size=(positions, config.channels)))

    entries = []
    for c in range(config.classes):
        label = f"L{c:03d}"
        for m in range(config.per_class):
            doc_id = f"c{c:03d}m{m:03d}"
            patches = prototypes[c]
            if config.patch_permute:
                patches = patches[rng.permutation(positions)]
            if config.noise:
                values = patches + config.noise * channel_noise * rng.normal(size=patches.shape)
            else:
                values = patches
            fmap = FeatureMap(doc_id, values.reshape(config.height, config.width, config.channels).astype(np.float32))
            filename = f"{doc_id}.prfm"
            write_feature_file(fmap, out_dir / filename)
            entries.append(
                ManifestEntry(doc_id, label, _split_for(m, config.per_class), filename, sha256_of(out_dir / filename))
            )
    write_manifest(entries, out_dir / "manifest.tsv")
    return entries
