"""Closed-form parameter and FLOP accounting.

FLOP convention: one multiply-accumulate = 2 FLOPs; every non-identity
activation and every bias add = 1 FLOP per element; lookups, reshapes and
concatenations are free. Counts are per forward pass at the given batch size.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import FeatureSchema
from .errors import ConfigError
from .interaction import PlcConfig
from .models import ModelConfig, build_model, model_forward
from .tensor import count_flops

PARAM_COMPONENTS = ("embedding", "gc", "lc", "readout")
FLOP_COMPONENTS = ("embedding", "gc", "plc", "lc", "readout")
SWEEP_AXES = ("H", "E", "S")


@dataclass
class CostReport:
    params: dict[str, int]
    flops: dict[str, int]
    batch: int = 1
    config: ModelConfig | None = field(default=None, repr=False)

    @property
    def total_params(self) -> int:
        return sum(self.params.values())

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())

    @property
    def dense_params(self) -> int:
        """Everything except the embedding tables."""
        return self.total_params - self.params["embedding"]

    @property
    def interaction_params(self) -> int:
        return self.params["gc"] + self.params["lc"]

    def rows(self) -> list[tuple[str, int, int]]:
        names = ["embedding", "gc", "plc", "lc", "readout"]
        out = [(n, self.params.get(n, 0), self.flops.get(n, 0)) for n in names]
        out.append(("total", self.total_params, self.total_flops))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "params", "flops"])
        w.writerows(self.rows())
        return buf.getvalue()

    def to_table(self) -> str:
        rows = [("component", "params", "flops")] + [(n, str(p), str(f)) for n, p, f in self.rows()]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}" for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines)


def _act_cost(kind: str) -> int:
    return 0 if kind == "identity" else 1


def param_count(cfg: ModelConfig) -> CostReport:
    s, e, n = cfg.channels, cfg.schema.embedding_dim, cfg.n_fields
    params = dict.fromkeys(PARAM_COMPONENTS, 0)
    params["embedding"] = sum(b * s * e for b in cfg.schema.hash_buckets)
    if cfg.kind != "dnn":
        h = cfg.plc.heads
        params["gc"] = s * n * e * h * cfg.gc_token_dim
        if cfg.refined_dim is not None:
            params["lc"] = n * s * cfg.interwoven_dim * cfg.refined_dim
    ro = cfg.readout
    params["readout"] = sum(a * b + (b if ro.use_bias else 0) for a, b in zip(ro.widths[:-1], ro.widths[1:]))
    report = CostReport(params, dict.fromkeys(FLOP_COMPONENTS, 0), 1, cfg)
    report.flops = flop_breakdown(cfg, 1)
    return report


def flop_breakdown(cfg: ModelConfig, batch: int = 1) -> dict[str, int]:
    if batch < 1:
        raise ConfigError("batch", "must be positive")
    s, e, n = cfg.channels, cfg.schema.embedding_dim, cfg.n_fields
    flops = dict.fromkeys(FLOP_COMPONENTS, 0)
    if cfg.kind != "dnn":
        h = cfg.plc.heads
        flops["gc"] = 2 * s * n * e * h * cfg.gc_token_dim
        if cfg.kind == "mlcc_inner":
            flops["plc"] = 2 * n * e * h
        else:
            w = cfg.plc.widths
            act = _act_cost(cfg.plc.activation)
            flops["plc"] = sum(2 * s * h * n * w[i - 1] * w[i] + act * s * h * n * w[i]
                               for i in range(1, len(w)))
        if cfg.refined_dim is not None:
            flops["lc"] = 2 * s * n * cfg.interwoven_dim * cfg.refined_dim
    ro = cfg.readout
    act = _act_cost(ro.activation)
    layers = list(zip(ro.widths[:-1], ro.widths[1:]))
    total = 0
    for i, (a, b) in enumerate(layers):
        total += 2 * a * b + (b if ro.use_bias else 0)
        if i < len(layers) - 1:
            total += act * b
    flops["readout"] = total
    return {k: v * batch for k, v in flops.items()}


def flop_count(cfg: ModelConfig, batch: int = 1) -> int:
    return sum(flop_breakdown(cfg, batch).values())


def enumerate_params(cfg: ModelConfig) -> dict[str, int]:
    """Brute force: build the model and count the elements of every parameter tensor."""
    model = build_model(cfg, seed=0)
    out = dict.fromkeys(PARAM_COMPONENTS, 0)
    for name, t in model.named_parameters().items():
        out[name.split(".", 1)[0]] += int(np.prod(t.shape))
    return out


def instrumented_flops(cfg: ModelConfig, batch: int = 1, seed: int = 0) -> dict[str, int]:
    """Run one forward pass under the op-level FLOP counter."""
    model = build_model(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    buckets = np.stack([rng.integers(0, b, size=batch) for b in cfg.schema.hash_buckets], axis=1)
    with count_flops() as counter:
        model_forward(model, buckets)
    out = dict.fromkeys(FLOP_COMPONENTS, 0)
    for k, v in counter.by_scope.items():
        out[k] = out.get(k, 0) + v
    return out


def with_axis(cfg: ModelConfig, axis: str, value: int) -> ModelConfig:
    """Copy of ``cfg`` with one scaling axis changed."""
    value = int(value)
    if axis == "H":
        if cfg.plc is None:
            raise ConfigError("sweep.axis", "axis H needs a model with heads")
        return replace(cfg, plc=replace(cfg.plc, heads=value))
    if axis == "E":
        schema = replace(cfg.schema, embedding_dim=value)
        plc = None if cfg.plc is None else replace(cfg.plc, widths=(value,) + cfg.plc.widths[1:])
        return replace(cfg, schema=schema, plc=plc)
    if axis == "S":
        kind = "mc_mlcc" if cfg.kind == "mlcc" else cfg.kind
        if kind == "mlcc_inner":
            raise ConfigError("sweep.axis", "axis S is not defined for mlcc_inner")
        return replace(cfg, kind=kind, schema=replace(cfg.schema, channels=value))
    raise ConfigError("sweep.axis", f"unknown axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(axis: str, values, base: ModelConfig) -> list[tuple[str, int, int, int]]:
    """Rows ``(axis, value, params, flops)`` along one scaling axis."""
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"unknown axis {axis!r}; expected one of {SWEEP_AXES}")
    values = [int(v) for v in values]
    if not values or any(v < 1 for v in values):
        raise ConfigError("sweep.values", "values must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values", "values must be strictly increasing")
    if axis == "H" and base.kind == "dnn":
        raise ConfigError("sweep.axis", "model dnn has no heads")
    rows = []
    for v in values:
        cfg = with_axis(base, axis, v)
        rep = param_count(cfg)
        rows.append((axis, v, rep.total_params, rep.total_flops))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "params", "flops"])
    w.writerows(rows)
    return buf.getvalue()


def matched_channel_config(base: ModelConfig, effective_dim: int, channels: int) -> ModelConfig:
    """Config with ``E * S == effective_dim``; ``S == 1`` gives single-channel MLCC."""
    if effective_dim % channels:
        raise ConfigError("channels.channels", f"{channels} does not divide {effective_dim}")
    cfg = with_axis(base, "E", effective_dim // channels)
    kind = "mlcc" if channels == 1 else "mc_mlcc"
    return replace(cfg, kind=kind, schema=replace(cfg.schema, channels=channels))


def tiny_schema(n_fields: int = 2, embedding_dim: int = 2, buckets: int = 3, channels: int = 1) -> FeatureSchema:
    return FeatureSchema([f"f{i}" for i in range(n_fields)], [buckets] * n_fields, embedding_dim, channels)


def random_config(rng: np.random.Generator, max_extent: int = 4) -> ModelConfig:
    """Random small architecture used by exactness checks."""
    kind = ("dnn", "mlcc", "mc_mlcc", "mlcc_inner")[int(rng.integers(4))]
    n = int(rng.integers(1, max_extent + 1))
    e = int(rng.integers(1, max_extent + 1))
    s = int(rng.integers(1, max_extent + 1)) if kind == "mc_mlcc" else 1
    buckets = [int(rng.integers(1, 6)) for _ in range(n)]
    schema = FeatureSchema([f"f{i}" for i in range(n)], buckets, e, s)
    k = int(rng.integers(1, 4))
    widths = (e,) + tuple(int(rng.integers(1, max_extent + 1)) for _ in range(k))
    act = ("relu", "identity", "gelu")[int(rng.integers(3))]
    plc = PlcConfig(int(rng.integers(1, max_extent + 1)), widths, act, True)
    refined = None if rng.random() < 0.25 else int(rng.integers(1, max_extent + 1))
    hidden = tuple(int(rng.integers(1, 9)) for _ in range(int(rng.integers(0, 3))))
    return ModelConfig(kind, schema, None if kind == "dnn" else plc, refined, hidden,
                       ("relu", "identity", "gelu")[int(rng.integers(3))])
