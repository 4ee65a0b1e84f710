"""MC-MLCC: S independent GC-PLC channels stacked on the token axis, one shared LC."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError
from .interaction import PlcConfig, global_compress, local_compress, plc_forward
from .tensor import Tensor, concat, slice_last


@dataclass
class ChannelSpec:
    w_gc: list[Tensor]  # one (N, E, H, W) tensor per channel
    w_lc: Tensor | None  # shared, (N*S, L, E')
    plc: PlcConfig

    def __post_init__(self):
        if not self.w_gc:
            raise DimensionError("ChannelSpec needs at least one channel")
        ref = self.w_gc[0].shape
        for w in self.w_gc:
            if w.shape != ref:
                raise DimensionError(f"channel GC shapes differ: {ref} vs {w.shape}")
        if ref[1:] != (self.plc.in_dim, self.plc.heads, self.plc.token_dim):
            raise DimensionError(f"w_gc {ref} disagrees with PLC config {self.plc}")
        if self.w_lc is not None and self.w_lc.shape[:2] != (ref[0] * self.channels, self.plc.out_dim):
            raise DimensionError(
                f"shared w_lc {self.w_lc.shape} must start with (N*S={ref[0] * self.channels}, "
                f"L={self.plc.out_dim})")

    @property
    def channels(self) -> int:
        return len(self.w_gc)

    @property
    def n_tokens(self) -> int:
        return self.w_gc[0].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.plc.in_dim

    @property
    def refined_dim(self) -> int | None:
        return None if self.w_lc is None else self.w_lc.shape[2]

    @classmethod
    def init(cls, n_tokens: int, channels: int, plc: PlcConfig, refined_dim: int | None,
             rng: np.random.Generator, dtype=np.float64) -> "ChannelSpec":
        e, h, w = plc.in_dim, plc.heads, plc.token_dim
        gcs = [Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_tokens * e), size=(n_tokens, e, h, w)),
                      requires_grad=True, dtype=dtype) for _ in range(channels)]
        w_lc = None
        if refined_dim is not None:
            L = plc.out_dim
            w_lc = Tensor(rng.normal(0.0, 1.0 / np.sqrt(L), size=(n_tokens * channels, L, refined_dim)),
                          requires_grad=True, dtype=dtype)
        return cls(gcs, w_lc, plc)


def split_channels(x_wide: Tensor, channels: int) -> list[Tensor]:
    """Contiguous split of the last axis into ``channels`` equal slices."""
    width = x_wide.shape[-1]
    if channels < 1 or width % channels:
        raise DimensionError(f"token width {width} is not divisible into {channels} channels")
    if channels == 1:
        return [x_wide]
    e = width // channels
    return [slice_last(x_wide, i * e, (i + 1) * e) for i in range(channels)]


def mc_interwoven(x_wide: Tensor, spec: ChannelSpec) -> Tensor:
    """Channel-major stack of per-channel interwoven tokens: ``(.., N*S, L)``."""
    n = spec.n_tokens
    if x_wide.shape[-2] != n or x_wide.shape[-1] != spec.channels * spec.embedding_dim:
        raise DimensionError(
            f"mc_forward: input {x_wide.shape} vs (N={n}, S*E={spec.channels * spec.embedding_dim})")
    parts = []
    for x_i, w_gc in zip(split_channels(x_wide, spec.channels), spec.w_gc):
        parts.append(plc_forward(x_i, global_compress(x_i, w_gc), spec.plc))
    return concat(parts, axis=-2)


def mc_forward(x_wide: Tensor, spec: ChannelSpec) -> Tensor:
    """Refined tokens ``(.., N*S, E')``; interwoven ``(.., N*S, L)`` when LC is off."""
    c = mc_interwoven(x_wide, spec)
    if spec.w_lc is None:
        return c
    return local_compress(c, spec.w_lc)


def compression_ratio(embedding_dim: int, refined_dim: int, channels: int = 1) -> Fraction:
    """``r = S*E / E'``."""
    if refined_dim <= 0:
        raise ValueError("refined dimension must be positive")
    return Fraction(channels * embedding_dim, refined_dim)

