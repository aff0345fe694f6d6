"""FLB1 dataset container.

Layout: magic ``FLB1``, a little-endian uint32 header length, a UTF-8
JSON header (record count, attribute names, split ranges, training-split
stats, per-record source ids), then fixed-width records of 64 token
bytes followed by one float32 per attribute.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attributes import ATTRIBUTE_NAMES, AttributeStats, AttributeVector, measure
from .tokens import SEQ_LEN

MAGIC = b"FLB1"
FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")


class DatasetError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class DatasetRecord:
    tokens: np.ndarray
    attributes: AttributeVector
    source_id: str


@dataclass(slots=True)
class Dataset:
    tokens: np.ndarray  # (n, 64) uint8
    attributes: np.ndarray  # (n, n_attrs) float32
    source_ids: list[str]
    splits: dict[str, tuple[int, int]]
    stats: dict[str, AttributeStats]
    attribute_names: tuple[str, ...] = ATTRIBUTE_NAMES
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def split_indices(self, split: str) -> np.ndarray:
        lo, hi = self.splits[split]
        return np.arange(lo, hi)

    def split_tokens(self, split: str) -> np.ndarray:
        lo, hi = self.splits[split]
        return self.tokens[lo:hi]

    def split_attributes(self, split: str) -> np.ndarray:
        lo, hi = self.splits[split]
        return self.attributes[lo:hi]

    def attribute_column(self, name: str, split: str | None = None) -> np.ndarray:
        col = self.attribute_names.index(name)
        attrs = self.attributes if split is None else self.split_attributes(split)
        return attrs[:, col]

    def record(self, index: int) -> DatasetRecord:
        vals = {n: float(v) for n, v in zip(self.attribute_names, self.attributes[index])}
        return DatasetRecord(
            tokens=self.tokens[index].astype(np.int16),
            attributes=AttributeVector(**vals),
            source_id=self.source_ids[index],
        )


def build(
    tokens: np.ndarray,
    source_ids: list[str],
    splits: dict[str, tuple[int, int]],
    meta: dict | None = None,
) -> Dataset:
    """Assemble a dataset, computing attributes and training-split stats."""
    tokens = np.asarray(tokens, dtype=np.uint8)
    if tokens.ndim != 2 or tokens.shape[1] != SEQ_LEN:
        raise DatasetError(f"token matrix must be (n, {SEQ_LEN})")
    if tokens.shape[0] == 0:
        raise DatasetError("empty dataset")
    attrs = np.empty((tokens.shape[0], len(ATTRIBUTE_NAMES)), dtype=np.float32)
    for i in range(tokens.shape[0]):
        attrs[i] = measure(tokens[i].astype(np.int16)).as_array()
    lo, hi = splits["train"]
    train = attrs[lo:hi].astype(np.float64)
    stats = {}
    for j, name in enumerate(ATTRIBUTE_NAMES):
        from .attributes import column_stats

        stats[name] = column_stats(train[:, j])
    return Dataset(
        tokens=tokens,
        attributes=attrs,
        source_ids=list(source_ids),
        splits=dict(splits),
        stats=stats,
        meta=meta or {},
    )


def save(dataset: Dataset, path: str | Path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "record_count": len(dataset),
        "attributes": list(dataset.attribute_names),
        "splits": {k: list(v) for k, v in dataset.splits.items()},
        "stats": {k: v.as_dict() for k, v in dataset.stats.items()},
        "source_ids": dataset.source_ids,
        "meta": dataset.meta,
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    attrs = np.ascontiguousarray(dataset.attributes, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for i in range(len(dataset)):
            fh.write(dataset.tokens[i].astype(np.uint8).tobytes())
            fh.write(attrs[i].tobytes())


def load(path: str | Path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise DatasetError(f"{path}: not an FLB1 dataset")
    (header_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + header_len:
        raise DatasetError(f"{path}: truncated header (need {header_len} bytes)")
    header = json.loads(data[8:8 + header_len].decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {header.get('version')}")
    n = header["record_count"]
    names = tuple(header["attributes"])
    record_size = SEQ_LEN + 4 * len(names)
    body = data[8 + header_len:]
    if len(body) != n * record_size:
        raise DatasetError(
            f"{path}: record section is {len(body)} bytes at offset {8 + header_len}, "
            f"expected {n * record_size}"
        )
    raw = np.frombuffer(body, dtype=np.uint8).reshape(n, record_size)
    tokens = raw[:, :SEQ_LEN].copy()
    attrs = raw[:, SEQ_LEN:].copy().view("<f4").reshape(n, len(names))
    return Dataset(
        tokens=tokens,
        attributes=attrs,
        source_ids=list(header["source_ids"]),
        splits={k: (v[0], v[1]) for k, v in header["splits"].items()},
        stats={k: AttributeStats.from_dict(v) for k, v in header["stats"].items()},
        attribute_names=names,
        meta=header.get("meta", {}),
    )
