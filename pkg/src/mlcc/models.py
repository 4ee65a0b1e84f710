"""Model assembly: embedding -> interaction -> flatten -> MLP readout.

Four model kinds share the readout head so that comparisons isolate the
interaction module:

``dnn``         tokens flattened straight into the readout
``mlcc``        GC -> PLC -> LC (single channel)
``mc_mlcc``     S channels of GC -> PLC, shared LC
``mlcc_inner``  GC with W=E -> per-head inner products -> LC
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable, FeatureSchema
from .errors import ConfigError, DimensionError
from .interaction import (
    MlccParams,
    PlcConfig,
    global_compress,
    inner_product_forward,
    local_compress,
    mlcc_forward,
)
from .multichannel import ChannelSpec, mc_forward
from .tensor import ACTIVATIONS, Tensor, activation, add_bias, flop_scope, matmul, reshape

MODEL_KINDS = ("dnn", "mlcc", "mc_mlcc", "mlcc_inner")


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, ...]  # input width first, output width last
    activation: str = "relu"
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ConfigError("readout.widths", "need an input and an output width")
        if any(w < 1 for w in self.widths):
            raise ConfigError("readout.widths", "widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError("readout.activation", f"unknown activation {self.activation!r}")


def init_mlp(cfg: MlpConfig, rng: np.random.Generator, dtype=np.float64) -> list[tuple[Tensor, Tensor | None]]:
    layers = []
    for d_in, d_out in zip(cfg.widths[:-1], cfg.widths[1:]):
        w = Tensor(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)), requires_grad=True, dtype=dtype)
        b = Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype) if cfg.use_bias else None
        layers.append((w, b))
    return layers


def mlp_forward(x: Tensor, cfg: MlpConfig, params) -> Tensor:
    """Affine + activation per hidden layer, final layer affine only."""
    single = x.ndim == 1
    if single:
        x = reshape(x, (1, x.shape[0]))
    if x.shape[-1] != cfg.widths[0]:
        raise DimensionError(f"mlp input width {x.shape[-1]} != first layer width {cfg.widths[0]}")
    h = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        h = matmul(h, w)
        if b is not None:
            h = add_bias(h, b)
        if i < last:
            h = activation(h, cfg.activation)
    return reshape(h, (h.shape[-1],)) if single else h


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one model. ``refined_dim=None`` disables the local compressor."""

    kind: str
    schema: FeatureSchema
    plc: PlcConfig | None = None
    refined_dim: int | None = None
    readout_hidden: tuple[int, ...] = (64,)
    readout_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "readout_hidden", tuple(int(h) for h in self.readout_hidden))
        if self.kind not in MODEL_KINDS:
            raise ConfigError("model.kind", f"unknown model {self.kind!r}; expected one of {MODEL_KINDS}")
        s, e = self.schema.channels, self.schema.embedding_dim
        if self.kind == "mlcc" and s != 1:
            raise ConfigError("channels.channels", "model mlcc is single-channel; use mc_mlcc for S > 1")
        if self.kind == "mlcc_inner" and s != 1:
            raise ConfigError("channels.channels", "model mlcc_inner is single-channel")
        if self.kind != "dnn":
            if self.plc is None:
                raise ConfigError("plc", f"model {self.kind} needs a PLC section")
            if self.plc.in_dim != e:
                raise ConfigError("plc.widths", f"e_0 = {self.plc.in_dim} must equal embedding_dim E = {e}")
        if self.refined_dim is not None and self.refined_dim < 1:
            raise ConfigError("channels.refined_dim", "must be positive")
        if any(h < 1 for h in self.readout_hidden):
            raise ConfigError("readout.hidden", "hidden widths must be positive")

    @property
    def n_fields(self) -> int:
        return self.schema.n_fields

    @property
    def channels(self) -> int:
        return self.schema.channels

    @property
    def gc_token_dim(self) -> int:
        return self.schema.embedding_dim if self.kind == "mlcc_inner" else self.plc.token_dim

    @property
    def interwoven_dim(self) -> int:
        if self.kind == "mlcc_inner":
            return self.schema.embedding_dim + self.plc.heads
        return self.plc.out_dim

    @property
    def n_tokens_out(self) -> int:
        return self.n_fields * self.channels

    @property
    def flat_dim(self) -> int:
        """Width of the vector handed to the readout."""
        if self.kind == "dnn":
            return self.n_fields * self.schema.table_width
        width = self.refined_dim if self.refined_dim is not None else self.interwoven_dim
        return self.n_tokens_out * width

    @property
    def readout(self) -> MlpConfig:
        return MlpConfig((self.flat_dim, *self.readout_hidden, 1), self.readout_activation)


@dataclass
class Model:
    config: ModelConfig
    embedding: EmbeddingTable
    readout: list
    interaction: MlccParams | ChannelSpec | None = None
    inner_gc: Tensor | None = None
    inner_lc: Tensor | None = None
    dtype: type = np.float64

    def named_parameters(self) -> dict[str, Tensor]:
        out = dict(self.embedding.named_parameters())
        inter = self.interaction
        if isinstance(inter, MlccParams):
            out["gc.0"] = inter.w_gc
            if inter.w_lc is not None:
                out["lc"] = inter.w_lc
        elif isinstance(inter, ChannelSpec):
            for i, w in enumerate(inter.w_gc):
                out[f"gc.{i}"] = w
            if inter.w_lc is not None:
                out["lc"] = inter.w_lc
        if self.inner_gc is not None:
            out["gc.0"] = self.inner_gc
        if self.inner_lc is not None:
            out["lc"] = self.inner_lc
        for i, (w, b) in enumerate(self.readout):
            out[f"readout.{i}.weight"] = w
            if b is not None:
                out[f"readout.{i}.bias"] = b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise KeyError(f"state mismatch; missing {missing}, unexpected {extra}")
        for k, t in params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise DimensionError(f"{k}: stored shape {arr.shape} != model shape {t.shape}")
            t.data = np.ascontiguousarray(arr, dtype=t.dtype)

    def tokens(self, buckets: np.ndarray) -> Tensor:
        with flop_scope("embedding"):
            return self.embedding.lookup(buckets)

    def interact(self, x: Tensor) -> Tensor:
        """Token tensor ``(B, N, S*E)`` to the readout's token tensor."""
        kind = self.config.kind
        if kind == "dnn":
            return x
        if kind == "mlcc":
            return mlcc_forward(x, self.interaction)
        if kind == "mc_mlcc":
            return mc_forward(x, self.interaction)
        m = global_compress(x, self.inner_gc)
        c = inner_product_forward(x, m)
        return c if self.inner_lc is None else local_compress(c, self.inner_lc)

    def forward(self, buckets: np.ndarray) -> Tensor:
        """Raw logits ``(B,)`` for a batch of bucket ids ``(B, N)``."""
        return model_forward(self, buckets)

    __call__ = forward


def model_forward(model: Model, buckets: np.ndarray) -> Tensor:
    x = model.tokens(buckets)
    t = model.interact(x)
    b = t.shape[0]
    flat = reshape(t, (b, t.shape[1] * t.shape[2]))
    with flop_scope("readout"):
        logits = mlp_forward(flat, model.config.readout, model.readout)
    return reshape(logits, (b,))


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float64) -> Model:
    """Initialize every parameter from one seeded generator in a fixed order."""
    rng = np.random.default_rng(seed)
    emb = EmbeddingTable.init(cfg.schema, rng, dtype)
    n = cfg.n_fields
    model = Model(cfg, emb, readout=[], dtype=dtype)
    if cfg.kind == "mlcc":
        model.interaction = MlccParams.init(n, cfg.plc, cfg.refined_dim, rng, dtype)
    elif cfg.kind == "mc_mlcc":
        model.interaction = ChannelSpec.init(n, cfg.channels, cfg.plc, cfg.refined_dim, rng, dtype)
    elif cfg.kind == "mlcc_inner":
        e, h = cfg.schema.embedding_dim, cfg.plc.heads
        model.inner_gc = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n * e), size=(n, e, h, e)),
                                requires_grad=True, dtype=dtype)
        if cfg.refined_dim is not None:
            L = cfg.interwoven_dim
            model.inner_lc = Tensor(rng.normal(0.0, 1.0 / np.sqrt(L), size=(n, L, cfg.refined_dim)),
                                    requires_grad=True, dtype=dtype)
    model.readout = init_mlp(cfg.readout, rng, dtype)
    return model
