"""The five numeric kernels every layer of the network is built from.

conv2d uses an im2col + matmul formulation with float64 accumulation;
outputs are float32. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GeometryError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class ConvParams:
    """Weights and geometry for one convolution.

    weights has shape (out_channels, in_channels, kh, kw); bias has shape
    (out_channels,) and is all-zero when has_bias is false.
    """

    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    pad: int = 0
    has_bias: bool = True
    weights: np.ndarray = field(default=None, repr=False)
    bias: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        kh, kw = self.kernel
        if self.out_channels < 1 or kh < 1 or kw < 1 or self.stride < 1 or self.pad < 0:
            raise ShapeError(f"invalid conv geometry: {self}")
        if self.weights is None:
            raise ShapeError("conv weights are required")
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        if w.ndim != 4 or w.shape[0] != self.out_channels or w.shape[2:] != (kh, kw):
            raise ShapeError(
                f"conv weights shape {w.shape} inconsistent with "
                f"{self.out_channels} filters of {kh}x{kw}"
            )
        if self.bias is None:
            b = np.zeros(self.out_channels, dtype=np.float32)
        else:
            b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if b.shape != (self.out_channels,):
            raise ShapeError(f"conv bias shape {b.shape}, expected ({self.out_channels},)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class PoolParams:
    """Max-pooling geometry. rounding selects the output-size rule."""

    kernel: tuple[int, int]
    stride: int = 1
    rounding: str = "ceil"

    def __post_init__(self):
        kh, kw = self.kernel
        if kh < 1 or kw < 1 or self.stride < 1:
            raise ShapeError(f"invalid pool geometry: {self}")
        if self.rounding not in ("ceil", "floor"):
            raise ShapeError(f"pool rounding must be 'ceil' or 'floor', got {self.rounding!r}")


def conv_out_extent(in_extent: int, kernel: int, stride: int, pad: int) -> int:
    """Floor-mode output extent of a convolution along one axis."""
    return (in_extent + 2 * pad - kernel) // stride + 1


def pool_out_extent(in_extent: int, kernel: int, stride: int, rounding: str) -> int:
    """Output extent of a pooling window sweep; ceil mode clips border windows.

    A ceil-mode window must still start inside the input, otherwise it would
    be empty; the count is reduced when the rounded-up formula overshoots.
    """
    if rounding == "ceil":
        out = -((-(in_extent - kernel)) // stride) + 1
        if out > 1 and (out - 1) * stride >= in_extent:
            out -= 1
        return out
    return (in_extent - kernel) // stride + 1


def conv2d(x: Tensor, p: ConvParams, layer: str = "conv") -> Tensor:
    """Cross-correlate x with p's filters over a zero-padded input."""
    n, c, h, w = x.shape
    kh, kw = p.kernel
    if c != p.in_channels:
        raise ShapeError(f"{layer}: input has {c} channels, weights expect {p.in_channels}")
    out_h = conv_out_extent(h, kh, p.stride, p.pad)
    out_w = conv_out_extent(w, kw, p.stride, p.pad)
    if out_h < 1 or out_w < 1:
        raise GeometryError(
            f"{layer}: kernel {kh}x{kw} stride {p.stride} pad {p.pad} on {h}x{w} input "
            f"gives non-positive output {out_h}x{out_w}"
        )

    data = x.data.astype(np.float64)
    if p.pad:
        data = np.pad(data, ((0, 0), (0, 0), (p.pad, p.pad), (p.pad, p.pad)))
    windows = sliding_window_view(data, (kh, kw), axis=(2, 3))[:, :, :: p.stride, :: p.stride]
    # (n, c, oh, ow, kh, kw) -> (n, c*kh*kw, oh*ow)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, out_h * out_w)
    filt = p.weights.reshape(p.out_channels, c * kh * kw).astype(np.float64)
    out = np.matmul(filt, cols).reshape(n, p.out_channels, out_h, out_w)
    out += p.bias.astype(np.float64)[:, None, None]
    return Tensor(out.astype(np.float32))


def maxpool2d(x: Tensor, p: PoolParams, layer: str = "pool") -> Tensor:
    """Max over each (possibly border-clipped) pooling window."""
    n, c, h, w = x.shape
    kh, kw = p.kernel
    out_h = pool_out_extent(h, kh, p.stride, p.rounding)
    out_w = pool_out_extent(w, kw, p.stride, p.rounding)
    if out_h < 1 or out_w < 1:
        raise GeometryError(
            f"{layer}: kernel {kh}x{kw} stride {p.stride} on {h}x{w} input "
            f"gives non-positive output {out_h}x{out_w}"
        )
    out = np.empty((n, c, out_h, out_w), dtype=np.float32)
    for i in range(out_h):
        y0 = i * p.stride
        y1 = min(y0 + kh, h)
        for j in range(out_w):
            x0 = j * p.stride
            x1 = min(x0 + kw, w)
            out[:, :, i, j] = x.data[:, :, y0:y1, x0:x1].max(axis=(2, 3))
    return Tensor(out)


def concat_channels(parts: list[Tensor], layer: str = "concat") -> Tensor:
    """Concatenate tensors along the channel axis; parts appear in argument order."""
    if not parts:
        raise ShapeError(f"{layer}: nothing to concatenate")
    first = parts[0]
    for i, part in enumerate(parts[1:], start=1):
        if part.n != first.n or part.h != first.h or part.w != first.w:
            raise ShapeError(
                f"{layer}: part {i} has shape {part.shape}, "
                f"incompatible with part 0 shape {first.shape}"
            )
    if len(parts) == 1:
        return first
    return Tensor(np.concatenate([part.data for part in parts], axis=1))


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0.0))


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a (rows, classes) score array, max-shifted for stability."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D array, got rank {s.ndim}")
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
