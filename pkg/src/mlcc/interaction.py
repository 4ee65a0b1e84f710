"""Single-channel MLCC: global compressor, progressive layered crossing, local compressor.

Token tensors are ``(N, E)`` or batched ``(B, N, E)``. Every function here
accepts either form and returns the matching form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import (
    ACTIVATIONS,
    Tensor,
    activation,
    concat_last,
    flop_scope,
    matmul,
    reshape,
    slice_last,
    swap_last,
    transpose,
)


@dataclass(frozen=True)
class PlcConfig:
    heads: int
    widths: tuple[int, ...]  # e_0 .. e_K with e_0 == E
    activation: str = "relu"
    include_original: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.heads < 1:
            raise ConfigError("plc.heads", "must be positive")
        if len(self.widths) < 2:
            raise ConfigError("plc.widths", "need e_0 and at least one layer width (K >= 1)")
        if any(w < 1 for w in self.widths):
            raise ConfigError("plc.widths", "widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError("plc.activation", f"unknown activation {self.activation!r}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def token_dim(self) -> int:
        """W: size of one head's dynamic-MLP weights."""
        e = self.widths
        return sum(e[i - 1] * e[i] for i in range(1, len(e)))

    @property
    def out_dim(self) -> int:
        """L: width of an interwoven token."""
        return (self.in_dim if self.include_original else 0) + self.heads * sum(self.widths[1:])


@dataclass
class MlccParams:
    w_gc: Tensor
    w_lc: Tensor | None
    plc: PlcConfig

    def __post_init__(self):
        n, e, h, w = self.w_gc.shape
        if e != self.plc.in_dim or h != self.plc.heads or w != self.plc.token_dim:
            raise DimensionError(
                f"w_gc {self.w_gc.shape} disagrees with (N, E={self.plc.in_dim}, "
                f"H={self.plc.heads}, W={self.plc.token_dim})")
        if self.w_lc is not None:
            if self.w_lc.shape[:2] != (n, self.plc.out_dim):
                raise DimensionError(
                    f"w_lc {self.w_lc.shape} disagrees with (N={n}, L={self.plc.out_dim}, E')")

    @property
    def refined_dim(self) -> int | None:
        return None if self.w_lc is None else self.w_lc.shape[2]

    @classmethod
    def init(cls, n_tokens: int, plc: PlcConfig, refined_dim: int | None,
             rng: np.random.Generator, dtype=np.float64) -> "MlccParams":
        e, h, w = plc.in_dim, plc.heads, plc.token_dim
        w_gc = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_tokens * e), size=(n_tokens, e, h, w)),
                      requires_grad=True, dtype=dtype)
        w_lc = None
        if refined_dim is not None:
            L = plc.out_dim
            w_lc = Tensor(rng.normal(0.0, 1.0 / np.sqrt(L), size=(n_tokens, L, refined_dim)),
                          requires_grad=True, dtype=dtype)
        return cls(w_gc, w_lc, plc)


def _batched(x: Tensor, rank: int) -> tuple[Tensor, bool]:
    if x.ndim == rank:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == rank + 1:
        return x, False
    raise DimensionError(f"expected rank {rank} or {rank + 1}, got shape {x.shape}")


def global_compress(x: Tensor, w_gc: Tensor) -> Tensor:
    """``m[k, l] = sum_ij x[i, j] * w_gc[i, j, k, l]``."""
    xb, single = _batched(x, 2)
    b, n, e = xb.shape
    if w_gc.ndim != 4 or w_gc.shape[:2] != (n, e):
        raise DimensionError(f"global_compress: x {x.shape} vs w_gc {w_gc.shape}")
    _, _, h, w = w_gc.shape
    with flop_scope("gc"):
        m = matmul(reshape(xb, (b, n * e)), reshape(w_gc, (n * e, h * w)))
    m = reshape(m, (h, w) if single else (b, h, w))
    return m


def plc_split(m_head: Tensor, widths) -> list[Tensor]:
    """Cut the trailing axis of ``m_head`` into row-major ``e_{i-1} x e_i`` blocks."""
    widths = tuple(widths)
    need = sum(widths[i - 1] * widths[i] for i in range(1, len(widths)))
    if m_head.shape[-1] != need:
        raise DimensionError(
            f"plc_split: token width {m_head.shape[-1]} != sum e_(i-1)*e_i = {need} for {widths}")
    lead = m_head.shape[:-1]
    blocks, start = [], 0
    for i in range(1, len(widths)):
        size = widths[i - 1] * widths[i]
        piece = m_head if len(widths) == 2 else slice_last(m_head, start, start + size)
        blocks.append(reshape(piece, lead + (widths[i - 1], widths[i])))
        start += size
    return blocks


def plc_forward(x: Tensor, m: Tensor, cfg: PlcConfig) -> Tensor:
    """Per-head dynamic MLP over all tokens; output ``(.., N, L)``.

    Column order: original tokens (if kept), then head 1 layers 1..K, head 2, ...
    """
    xb, single = _batched(x, 2)
    mb, m_single = _batched(m, 2)
    if single != m_single:
        raise DimensionError(f"plc_forward: batching of x {x.shape} and m {m.shape} differs")
    b, n, e = xb.shape
    if e != cfg.in_dim:
        raise DimensionError(f"plc_forward: token width {e} != e_0 = {cfg.in_dim}")
    if mb.shape[1:] != (cfg.heads, cfg.token_dim) or mb.shape[0] != b:
        raise DimensionError(
            f"plc_forward: m {m.shape} vs expected (H={cfg.heads}, W={cfg.token_dim})")
    if cfg.activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {cfg.activation!r}")

    blocks = plc_split(mb, cfg.widths)  # each (B, H, e_{i-1}, e_i)
    o = reshape(xb, (b, 1, n, e))
    levels = []
    with flop_scope("plc"):
        for d in blocks:
            o = activation(matmul(o, d), cfg.activation)  # (B, H, N, e_i)
            levels.append(o)
    per_head = concat_last(levels)  # (B, H, N, sum e)
    width = per_head.shape[-1]
    mixed = reshape(transpose(per_head, (0, 2, 1, 3)), (b, n, cfg.heads * width))
    c = concat_last([xb, mixed]) if cfg.include_original else mixed
    return reshape(c, (n, c.shape[-1])) if single else c


def local_compress(c: Tensor, w_lc: Tensor) -> Tensor:
    """Token-wise projection: ``x'[k, j] = sum_i c[k, i] * w_lc[k, i, j]``."""
    cb, single = _batched(c, 2)
    b, n, l = cb.shape
    if w_lc.ndim != 3 or w_lc.shape[:2] != (n, l):
        raise DimensionError(f"local_compress: c {c.shape} vs w_lc {w_lc.shape}")
    e_out = w_lc.shape[2]
    with flop_scope("lc"):
        out = matmul(transpose(cb, (1, 0, 2)), w_lc)  # (N, B, E')
    out = transpose(out, (1, 0, 2))
    return reshape(out, (n, e_out)) if single else out


def mlcc_forward(x: Tensor, params: MlccParams) -> Tensor:
    """GC -> PLC -> LC. Without LC the interwoven tokens are returned."""
    m = global_compress(x, params.w_gc)
    c = plc_forward(x, m, params.plc)
    if params.w_lc is None:
        return c
    return local_compress(c, params.w_lc)


def inner_product_forward(x: Tensor, m: Tensor) -> Tensor:
    """Append per-head scores ``<x_i, m_h>`` to the original tokens: ``(.., N, E + H)``."""
    xb, single = _batched(x, 2)
    mb, m_single = _batched(m, 2)
    if single != m_single or mb.shape[0] != xb.shape[0]:
        raise DimensionError(f"inner_product_forward: batching of x {x.shape} and m {m.shape} differs")
    if mb.shape[-1] != xb.shape[-1]:
        raise DimensionError(
            f"inner_product_forward: global token width {mb.shape[-1]} != token width {xb.shape[-1]}")
    with flop_scope("plc"):
        s = matmul(xb, swap_last(mb))  # (B, N, H)
    c = concat_last([xb, s])
    return reshape(c, c.shape[1:]) if single else c
