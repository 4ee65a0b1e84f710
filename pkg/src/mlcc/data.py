"""CTR datasets: CSV ingestion, a seeded synthetic generator, and seeded splits."""

from __future__ import annotations

import csv
import io
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MlccError

log = logging.getLogger(__name__)

CHUNK_ROWS = 1 << 16


class DataError(MlccError):
    pass


@dataclass
class Dataset:
    labels: np.ndarray  # (M,) int8 in {0, 1}
    values: np.ndarray  # (M, N) str
    field_names: list[str]
    logits: np.ndarray | None = None  # generator ground truth, when known
    skipped: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.values = np.asarray(self.values, dtype=str)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.field_names):
            raise DataError(f"values {self.values.shape} do not match {len(self.field_names)} fields")
        if self.labels.shape != (self.values.shape[0],):
            raise DataError("one label per row required")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    def take(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.labels[index], self.values[index], list(self.field_names),
                       None if self.logits is None else self.logits[index])

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", *self.field_names])
        for y, row in zip(self.labels.tolist(), self.values.tolist()):
            w.writerow([y, *row])
        return buf.getvalue().encode("utf-8")

    def write_csv(self, path) -> None:
        Path(path).write_bytes(self.to_csv_bytes())


def load_csv(path, field_names: list[str] | None = None) -> Dataset:
    """Parse ``label,f1,...,fN``; malformed rows are skipped and counted by reason."""
    path = Path(path)
    labels, rows = [], []
    skipped: Counter = Counter()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise DataError(f"{path}: missing header 'label,f1,...,fN'")
        names = [h.strip() for h in header[1:]]
        if field_names is not None and names != list(field_names):
            raise DataError(f"{path}: header fields {names} do not match schema {list(field_names)}")
        n = len(names)
        for rec in reader:
            if not rec:
                continue
            if len(rec) != n + 1:
                skipped["field_count"] += 1
                continue
            lab = rec[0].strip()
            if lab not in ("0", "1"):
                skipped["label"] += 1
                continue
            labels.append(int(lab))
            rows.append(rec[1:])
    if skipped:
        log.warning("%s: skipped %d malformed rows %s", path, sum(skipped.values()), dict(skipped))
    if not rows:
        raise DataError(f"{path}: no usable rows")
    return Dataset(np.array(labels, dtype=np.int8), np.array(rows, dtype=str), names, skipped=skipped)


@dataclass
class SyntheticSpec:
    n_fields: int = 16
    vocab: int = 100
    latent_dim: int = 4
    pairs: list[tuple[int, int]] = field(default_factory=list)
    triples: list[tuple[int, int, int]] = field(default_factory=list)
    alpha: float = 1.0
    beta: float = 1.0
    bias: float = 0.0
    noise: float = 0.0
    n_rows: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.n_fields < 1:
            raise ConfigError("synthetic.n_fields", "must be positive")
        if self.vocab < 1:
            raise ConfigError("synthetic.vocab", "must be positive")
        if self.latent_dim < 1:
            raise ConfigError("synthetic.latent_dim", "must be positive")
        if self.n_rows < 1:
            raise ConfigError("synthetic.n_rows", "must be positive")
        if self.noise < 0:
            raise ConfigError("synthetic.noise", "must be >= 0")
        for name, tuples, arity in (("pairs", self.pairs, 2), ("triples", self.triples, 3)):
            for t in tuples:
                if len(t) != arity or len(set(t)) != arity or not all(0 <= f < self.n_fields for f in t):
                    raise ConfigError(f"synthetic.{name}",
                                      f"{tuple(t)} must name {arity} distinct fields in [0, {self.n_fields})")


def default_interactions(n_fields: int, n_pairs: int, n_triples: int, seed: int) -> tuple[list, list]:
    """Seeded choice of distinct pair and triple field sets."""
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n_fields), 2))
    triples = list(itertools.combinations(range(n_fields), 3))
    p = [tuple(int(i) for i in pairs[j]) for j in sorted(rng.choice(len(pairs), n_pairs, replace=False))] if n_pairs else []
    t = [tuple(int(i) for i in triples[j]) for j in sorted(rng.choice(len(triples), n_triples, replace=False))] if n_triples else []
    return p, t


def synthetic_logits(spec: SyntheticSpec, latents: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Noise-free logit for value indices ``idx`` (rows, N)."""
    z = [latents[f][idx[:, f]] for f in range(spec.n_fields)]  # each (rows, d)
    out = np.full(idx.shape[0], float(spec.bias))
    for f, g in spec.pairs:
        out += spec.alpha * np.einsum("rk,rk->r", z[f], z[g])
    for f, g, h in spec.triples:
        out += spec.beta * np.einsum("rk,rk,rk->r", z[f], z[g], z[h])
    return out


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Rows with uniformly drawn field values and labels from planted interactions.

    Latents come from one child seed; each block of ``CHUNK_ROWS`` rows uses its
    own child seed, so blocks are independent and the output is canonical.
    """
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    n_chunks = -(-spec.n_rows // CHUNK_ROWS)
    lat_seed, *chunk_seeds = root.spawn(1 + n_chunks)
    latents = np.random.default_rng(lat_seed).standard_normal((spec.n_fields, spec.vocab, spec.latent_dim))
    idx_parts, lab_parts, logit_parts = [], [], []
    for c, seed in enumerate(chunk_seeds):
        rows = min(CHUNK_ROWS, spec.n_rows - c * CHUNK_ROWS)
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, spec.vocab, size=(rows, spec.n_fields))
        eps = rng.standard_normal(rows)
        u = rng.random(rows)
        logit = synthetic_logits(spec, latents, idx) + spec.noise * eps
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-logit))
        idx_parts.append(idx)
        lab_parts.append((u < p).astype(np.int8))
        logit_parts.append(logit)
    idx = np.concatenate(idx_parts)
    names = [f"f{i + 1}" for i in range(spec.n_fields)]
    return Dataset(np.concatenate(lab_parts), idx.astype(str), names, logits=np.concatenate(logit_parts))


def split(dataset: Dataset, ratios=(0.90, 0.01, 0.09), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded permutation, then contiguous train / valid / test cuts."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError("data.split", "three positive ratios required")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("data.split", "ratios must sum to 1")
    m = len(dataset)
    n_train = int(round(m * ratios[0]))
    n_valid = int(round(m * ratios[1]))
    n_test = m - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise DataError(f"split of {m} rows at {ratios} leaves an empty partition")
    perm = np.random.default_rng(seed).permutation(m)
    cuts = (perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:])
    return tuple(dataset.take(c) for c in cuts)
