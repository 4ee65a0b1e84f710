"""Hashed per-field embedding tables."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor, concat, gather_rows, reshape


@dataclass
class FeatureSchema:
    field_names: list[str]
    hash_buckets: list[int]
    embedding_dim: int
    channels: int = 1

    def __post_init__(self):
        self.field_names = list(self.field_names)
        if isinstance(self.hash_buckets, int):
            self.hash_buckets = [self.hash_buckets] * len(self.field_names)
        self.hash_buckets = [int(b) for b in self.hash_buckets]
        if not self.field_names:
            raise ConfigError("schema.fields", "need at least one field")
        if len(self.hash_buckets) != len(self.field_names):
            raise ConfigError("schema.buckets", "one bucket count per field required")
        if any(b < 1 for b in self.hash_buckets):
            raise ConfigError("schema.buckets", "bucket counts must be positive")
        if self.embedding_dim < 1:
            raise ConfigError("schema.embedding_dim", "must be positive")
        if self.channels < 1:
            raise ConfigError("channels.channels", "must be positive")

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    @property
    def table_width(self) -> int:
        return self.channels * self.embedding_dim


def hash_field(field_index: int, raw_value: str, buckets: int) -> int:
    """Stable 64-bit hash of ``(field_index, raw_value)`` reduced mod ``buckets``."""
    key = f"{field_index}\x1f{raw_value}".encode("utf-8")
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return h % buckets


def hash_column(field_index: int, values: np.ndarray, buckets: int) -> np.ndarray:
    """Vectorized :func:`hash_field` over one column; hashes each distinct value once."""
    uniq, inverse = np.unique(np.asarray(values, dtype=str), return_inverse=True)
    mapped = np.fromiter((hash_field(field_index, v, buckets) for v in uniq),
                         dtype=np.int64, count=len(uniq))
    return mapped[inverse.reshape(-1)]


def encode(values: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Raw string matrix ``(rows, N)`` to bucket ids ``(rows, N)``."""
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[1] != schema.n_fields:
        raise ValueError(f"expected (rows, {schema.n_fields}) values, got {values.shape}")
    out = np.empty(values.shape, dtype=np.int64)
    for f, b in enumerate(schema.hash_buckets):
        out[:, f] = hash_column(f, values[:, f], b)
    return out


@dataclass
class EmbeddingTable:
    """One ``buckets_f x (S*E)`` matrix per field."""

    schema: FeatureSchema
    tables: list[Tensor] = field(default_factory=list)

    @classmethod
    def init(cls, schema: FeatureSchema, rng: np.random.Generator, dtype=np.float64):
        width = schema.table_width
        std = 1.0 / np.sqrt(width)
        tables = [Tensor(rng.normal(0.0, std, size=(b, width)), requires_grad=True, dtype=dtype)
                  for b in schema.hash_buckets]
        return cls(schema, tables)

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"embedding.{name}": t for name, t in zip(self.schema.field_names, self.tables)}

    def lookup(self, buckets: np.ndarray) -> Tensor:
        return lookup(buckets, self.tables)


def lookup(buckets: np.ndarray, tables: list[Tensor]) -> Tensor:
    """Bucket ids ``(B, N)`` to token tensor ``(B, N, S*E)``."""
    buckets = np.asarray(buckets)
    if buckets.ndim == 1:
        buckets = buckets[None, :]
    if buckets.shape[1] != len(tables):
        raise ValueError(f"batch has {buckets.shape[1]} fields, tables cover {len(tables)}")
    width = tables[0].shape[1]
    cols = [reshape(gather_rows(t, buckets[:, f]), (buckets.shape[0], 1, width))
            for f, t in enumerate(tables)]
    return concat(cols, axis=1)
