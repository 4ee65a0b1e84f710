"""Finite-difference verification of every op and every model kind at tiny sizes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import FeatureSchema
from .interaction import PlcConfig, global_compress, inner_product_forward, local_compress, plc_forward
from .models import ModelConfig, build_model, model_forward
from .multichannel import ChannelSpec, mc_forward
from .tensor import (
    GradCheckResult,
    Tensor,
    activation,
    concat,
    concat_last,
    grad_check,
    logistic_loss,
    matmul,
    mul,
    tsum,
)

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class CheckLine:
    label: str
    result: GradCheckResult

    @property
    def ok(self) -> bool:
        return self.result.max_rel_error < TOLERANCE

    def __str__(self):
        r = self.result
        return (f"{'PASS' if self.ok else 'FAIL'}  {self.label:<34s} max_rel_error={r.max_rel_error:.3e} "
                f"worst={r.worst_index} checked={r.n_checked} excluded={len(r.excluded)}")


def _readout_loss(out: Tensor, rng_seed: int) -> Tensor:
    """Random fixed linear readout to a scalar."""
    w = np.random.default_rng(rng_seed).normal(size=out.shape)
    return tsum(mul(out, w))


def op_checks(seed: int = 0) -> list[CheckLine]:
    rng = np.random.default_rng(seed)
    lines = []

    a = rng.normal(size=(3, 4))
    b = Tensor(rng.normal(size=(4, 2)))
    lines.append(CheckLine("matmul[a]", grad_check(lambda t: _readout_loss(matmul(t, b), 1), a, EPS)))
    lines.append(CheckLine("matmul[b]", grad_check(lambda t: _readout_loss(matmul(Tensor(a), t), 1), b.data, EPS)))

    p2 = Tensor(rng.normal(size=(2, 5)))
    lines.append(CheckLine("concat_last", grad_check(
        lambda t: _readout_loss(concat_last([t, p2]), 2), rng.normal(size=(2, 3)), EPS)))
    lines.append(CheckLine("concat[axis0]", grad_check(
        lambda t: _readout_loss(concat([t, p2], axis=0), 2), rng.normal(size=(1, 5)), EPS)))
    for kind in ("relu", "identity", "gelu"):
        lines.append(CheckLine(f"activation[{kind}]", grad_check(
            lambda t, k=kind: _readout_loss(activation(t, k), 3), rng.normal(size=(3, 3)), EPS)))

    n, e, h = 3, 2, 2
    plc = PlcConfig(h, (e, 3, 2), "relu")
    x = rng.normal(size=(2, n, e))
    w_gc = rng.normal(size=(n, e, h, plc.token_dim))
    lines.append(CheckLine("global_compress[x]", grad_check(
        lambda t: _readout_loss(global_compress(t, Tensor(w_gc)), 4), x, EPS)))
    lines.append(CheckLine("global_compress[w]", grad_check(
        lambda t: _readout_loss(global_compress(Tensor(x), t), 4), w_gc, EPS)))
    m = rng.normal(size=(2, h, plc.token_dim))
    lines.append(CheckLine("plc_forward[x]", grad_check(
        lambda t: _readout_loss(plc_forward(t, Tensor(m), plc), 5), x, EPS)))
    lines.append(CheckLine("plc_forward[m]", grad_check(
        lambda t: _readout_loss(plc_forward(Tensor(x), t, plc), 5), m, EPS)))
    c = rng.normal(size=(2, n, plc.out_dim))
    w_lc = rng.normal(size=(n, plc.out_dim, 2))
    lines.append(CheckLine("local_compress[c]", grad_check(
        lambda t: _readout_loss(local_compress(t, Tensor(w_lc)), 6), c, EPS)))
    lines.append(CheckLine("local_compress[w]", grad_check(
        lambda t: _readout_loss(local_compress(Tensor(c), t), 6), w_lc, EPS)))
    m_ip = rng.normal(size=(2, h, e))
    lines.append(CheckLine("inner_product[x]", grad_check(
        lambda t: _readout_loss(inner_product_forward(t, Tensor(m_ip)), 7), x, EPS)))
    lines.append(CheckLine("inner_product[m]", grad_check(
        lambda t: _readout_loss(inner_product_forward(Tensor(x), t), 7), m_ip, EPS)))
    s = 2
    spec = ChannelSpec.init(n, s, plc, 2, rng)
    xw = rng.normal(size=(2, n, s * e))
    lines.append(CheckLine("mc_forward[x]", grad_check(
        lambda t: _readout_loss(mc_forward(t, spec), 8), xw, EPS)))
    return lines


def tiny_configs(activation_kind: str = "relu") -> list[tuple[str, ModelConfig]]:
    def schema(e=2, s=1):
        return FeatureSchema(["a", "b", "c"], [3, 2, 3], e, s)

    plc = PlcConfig(2, (2, 3, 2), activation_kind)
    return [
        ("dnn", ModelConfig("dnn", schema(), None, None, (4,))),
        ("mlcc", ModelConfig("mlcc", schema(), plc, 2, (4,))),
        ("mlcc[w/o LC]", ModelConfig("mlcc", schema(), plc, None, (4,))),
        ("mc_mlcc[S=1]", ModelConfig("mc_mlcc", schema(2, 1), plc, 2, (4,))),
        ("mc_mlcc[S=2]", ModelConfig("mc_mlcc", schema(2, 2), plc, 3, (4,))),
        ("mc_mlcc[S=4]", ModelConfig("mc_mlcc", schema(2, 4), plc, 2, (4,))),
        ("mlcc_inner", ModelConfig("mlcc_inner", schema(), PlcConfig(3, (2, 2), activation_kind), 2, (4,))),
    ]


def model_checks(cfg: ModelConfig, label: str, seed: int = 0, batch: int = 4) -> list[CheckLine]:
    """Check the logistic loss against every parameter tensor of a freshly built model."""
    model = build_model(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    buckets = np.stack([rng.integers(0, b, size=batch) for b in cfg.schema.hash_buckets], axis=1)
    labels = rng.integers(0, 2, size=batch)

    def loss(_):
        return logistic_loss(model_forward(model, buckets), labels)

    lines = []
    for name, p in model.named_parameters().items():
        lines.append(CheckLine(f"{label}:{name}", grad_check(loss, p, EPS)))
    return lines


def run_all(seed: int = 0, activation_kind: str = "relu") -> list[CheckLine]:
    lines = op_checks(seed)
    for label, cfg in tiny_configs(activation_kind):
        lines.extend(model_checks(cfg, label, seed))
    return lines


def worst_by_group(lines: list[CheckLine]) -> dict[str, CheckLine]:
    """Worst line per op / model label (the part before ``:`` or ``[``)."""
    out: dict[str, CheckLine] = {}
    for line in lines:
        key = line.label.split(":")[0]
        if key not in out or line.result.max_rel_error > out[key].result.max_rel_error:
            out[key] = line
    return out

