"""Persistent feature-map files, the dataset manifest, and the descriptor store.

File formats (all little-endian):

  feature file  magic "PRFM", version u16 (=1), H u32, W u32, C u32,
                then H*W*C float32 payload in (h, w, c) row-major order.
  store file    magic "PRDS", version u16 (=1), C u32, N u32, then per row
                id and label as u16-length-prefixed UTF-8, then the N x C
                float32 row matrix.

The manifest is UTF-8 tab-separated text, LF line endings, '#' comments:
id, label, split, feature_path, sha256 (optional, may be empty). Split is
one of index / query / train.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    BadSplit,
    ChecksumMismatch,
    DimensionMismatch,
    DuplicateId,
    MalformedLine,
    TruncatedFile,
    NonFiniteValue,
    UnsupportedVersion,
    ZeroVector,
)
from .feature_model import FeatureMap, average_pool, l2_normalize

FEATURE_MAGIC = b"PRFM"
STORE_MAGIC = b"PRDS"
FORMAT_VERSION = 1
SPLITS = ("index", "query", "train")

_HEADER = struct.Struct("<4sHIII")  # magic, version, H, W, C


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    label: str
    split: str
    feature_path: str
    sha256: str = ""


@dataclass
class DescriptorStore:
    """Unit-norm global descriptors for the index set, one row per document.

    Row order matches ingestion (manifest) order; `ids[i]` labels row i of
    `matrix`. Stores are immutable once built and safe to share across
    threads.
    """

    channel_count: int
    ids: list
    matrix: np.ndarray
    label_of: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.channel_count:
            raise ValueError("store matrix shape does not match channel count")
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError("store ids and matrix row count differ")
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-4:
            raise ValueError("store rows must be unit-norm within 1e-4")

    def __len__(self):
        return len(self.ids)


def write_feature_file(fmap: FeatureMap, path) -> None:
    """Serialize a feature map; layout is bit-exact and round-trips losslessly."""
    payload = fmap.flat().astype("<f4").tobytes()
    header = _HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, fmap.height, fmap.width, fmap.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_feature_file(path, doc_id: str | None = None) -> FeatureMap:
    """Inverse of write_feature_file, validating magic, version, and payload.

    The format does not carry the document id; it defaults to the file stem
    and ingestion overrides it with the manifest id.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    if raw[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    _, version, height, width, channels = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(version)
    count = height * width * channels
    expected = _HEADER.size + 4 * count
    if len(raw) != expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    finite = np.isfinite(flat)
    if not finite.all():
        raise NonFiniteValue(int(np.flatnonzero(~finite)[0]))
    return FeatureMap.from_flat(doc_id or path.stem, height, width, channels, flat)


def load_manifest(path) -> list[ManifestEntry]:
    """Parse the tab-separated manifest; order-preserving, '#' lines skipped."""
    entries = []
    seen = set()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\r").split("\t")
        if len(fields) == 4:
            fields.append("")
        if len(fields) != 5:
            raise MalformedLine(line_no, f"{len(fields)} fields")
        doc_id, label, split, feature_path, sha = fields
        if not doc_id or not label or not feature_path:
            raise MalformedLine(line_no, "empty required field")
        if split not in SPLITS:
            raise BadSplit(line_no, split)
        if doc_id in seen:
            raise DuplicateId(doc_id)
        seen.add(doc_id)
        entries.append(ManifestEntry(doc_id, label, split, feature_path, sha))
    return entries


def write_manifest(entries, path) -> None:
    lines = ["# id\tlabel\tsplit\tfeature_path\tsha256"]
    for e in entries:
        lines.append(f"{e.id}\t{e.label}\t{e.split}\t{e.feature_path}\t{e.sha256}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_entry_map(entry: ManifestEntry, root) -> FeatureMap:
    """Read and checksum-verify one manifest entry's feature file."""
    path = Path(root) / entry.feature_path
    if entry.sha256 and sha256_of(path) != entry.sha256:
        raise ChecksumMismatch(entry.id)
    return read_feature_file(path, doc_id=entry.id)


def build_store(entries, root, head=None) -> tuple[DescriptorStore, list[str]]:
    """Pool, project, and normalize every index entry into a DescriptorStore.

    Per entry: read -> average_pool -> (projection head, if given) ->
    l2_normalize -> row. Entries with a degenerate (zero) descriptor are
    skipped, not fatal; the returned list names them. Row order follows
    `entries` order regardless of skips, so ingestion is deterministic.

    Callers pass the entries of one split (ingestion passes the index
    split). File errors propagate with the offending id attached.
    """
    rows = []
    ids = []
    label_of = {}
    skipped = []
    channel_count = None
    for entry in entries:
        try:
            fmap = read_entry_map(entry, root)
        except (OSError, BadMagic, TruncatedFile, UnsupportedVersion, NonFiniteValue) as exc:
            exc.args = (f"{entry.id}: {exc}",)
            raise
        desc = average_pool(fmap)
        if head is not None:
            from .metric_head import project  # local import avoids a cycle

            try:
                desc = project(desc, head)
                row = desc.vector
            except ZeroVector:
                skipped.append(entry.id)
                continue
        else:
            try:
                row = l2_normalize(desc.vector)
            except ZeroVector:
                skipped.append(entry.id)
                continue
        if channel_count is None:
            channel_count = row.size
        elif row.size != channel_count:
            raise DimensionMismatch(f"{entry.id}: descriptor dim {row.size} != store dim {channel_count}")
        rows.append(row)
        ids.append(entry.id)
        label_of[entry.id] = entry.label
    if channel_count is None:
        channel_count = 0
    matrix = np.vstack(rows) if rows else np.zeros((0, channel_count), dtype=np.float32)
    return DescriptorStore(channel_count, ids, matrix, label_of), skipped


def write_store(store: DescriptorStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<HII", FORMAT_VERSION, store.channel_count, len(store)))
        for doc_id in store.ids:
            for text in (doc_id, store.label_of[doc_id]):
                blob = text.encode("utf-8")
                fh.write(struct.pack("<H", len(blob)))
                fh.write(blob)
        fh.write(store.matrix.astype("<f4").tobytes())


def read_store(path) -> DescriptorStore:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != STORE_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 14:
        raise TruncatedFile(f"{path}: truncated store header")
    version, channels, count = struct.unpack_from("<HII", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(version)
    offset = 14
    ids = []
    label_of = {}
    for _ in range(count):
        texts = []
        for _ in range(2):
            if offset + 2 > len(raw):
                raise TruncatedFile(f"{path}: truncated id table")
            (length,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            if offset + length > len(raw):
                raise TruncatedFile(f"{path}: truncated id table")
            texts.append(raw[offset : offset + length].decode("utf-8"))
            offset += length
        ids.append(texts[0])
        label_of[texts[0]] = texts[1]
    expected = offset + 4 * count * channels
    if len(raw) != expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, expected {expected}")
    matrix = np.frombuffer(raw, dtype="<f4", offset=offset).reshape(count, channels)
    return DescriptorStore(channels, ids, matrix.copy(), label_of)
