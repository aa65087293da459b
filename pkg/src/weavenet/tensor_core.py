"""Dense CHW tensors and the five neural primitives the fusion network needs.

Everything here is pure and deterministic: float64 throughout, and conv3x3
accumulates its terms in a fixed (channel, then kernel row, then kernel
column) order so that downstream equivalence checks can use tight
tolerances. Tensors are immutable after construction.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError


class Tensor:
    """A rank-3 feature map (channels x height x width) of finite float64."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(f"tensor must be rank 3 (CHW), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError(f"tensor dimensions must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("tensor contains non-finite values")
        if arr is data:
            arr = arr.copy()
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def from_flat(cls, channels: int, height: int, width: int, values: Sequence[float]) -> "Tensor":
        flat = np.asarray(values, dtype=np.float64)
        if flat.size != channels * height * width:
            raise ValidationError(
                f"expected {channels * height * width} values for shape "
                f"({channels},{height},{width}), got {flat.size}"
            )
        return cls(flat.reshape(channels, height, width))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(channels={self.channels}, height={self.height}, width={self.width})"


class ConvKernel:
    """3x3 convolution weights (out x in x 3 x 3) with a per-output bias."""

    __slots__ = ("weights", "bias")

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        b = np.ascontiguousarray(bias, dtype=np.float64)
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ValidationError(f"kernel weights must be (out, in, 3, 3), got {w.shape}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValidationError(f"kernel channel counts must be positive, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValidationError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("kernel contains non-finite values")
        if w is weights:
            w = w.copy()
        if b is bias:
            b = b.copy()
        w.flags.writeable = False
        b.flags.writeable = False
        self.weights = w
        self.bias = b

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    def __repr__(self) -> str:
        return f"ConvKernel(out={self.out_channels}, in={self.in_channels})"


def conv3x3(x: Tensor, kernel: ConvKernel) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    Each output channel accumulates bias first, then the weighted input
    windows in (channel, kernel row, kernel column) order. Output channels
    are computed independently of one another, so stacking kernels along
    the output axis is bit-exact with concatenating separate results.
    """
    if x.channels != kernel.in_channels:
        raise ValidationError(
            f"input has {x.channels} channels but kernel expects {kernel.in_channels}"
        )
    cin, h, w = x.shape
    cout = kernel.out_channels
    padded = np.zeros((cin, h + 2, w + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = x.data

    acc = np.empty((cout, h, w), dtype=np.float64)
    acc[:] = kernel.bias[:, None, None]
    term = np.empty_like(acc)
    weights = kernel.weights
    for c in range(cin):
        plane = padded[c]
        for dy in range(3):
            rows = plane[dy : dy + h]
            for dx in range(3):
                window = rows[:, dx : dx + w]
                np.multiply(weights[:, c, dy, dx, None, None], window, out=term)
                np.add(acc, term, out=acc)
    return Tensor(acc)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    return Tensor(np.maximum(x.data, 0.0))


def upsample_bilinear_x2(x: Tensor) -> Tensor:
    """Factor-2 bilinear upsampling as a fixed transposed convolution.

    Per channel: stride-2, padding-1 transposed convolution with the
    separable kernel outer([0.25, 0.75, 0.75, 0.25]). Output is (C, 2H, 2W);
    interior outputs of a constant map stay exactly constant.
    """
    c, h, w = x.shape
    data = x.data

    rows = np.zeros((c, 2 * h, w), dtype=np.float64)
    rows[:, 0::2, :] = 0.75 * data
    rows[:, 0::2, :][:, 1:, :] += 0.25 * data[:, :-1, :]
    rows[:, 1::2, :] = 0.75 * data
    rows[:, 1::2, :][:, :-1, :] += 0.25 * data[:, 1:, :]

    out = np.zeros((c, 2 * h, 2 * w), dtype=np.float64)
    out[:, :, 0::2] = 0.75 * rows
    out[:, :, 0::2][:, :, 1:] += 0.25 * rows[:, :, :-1]
    out[:, :, 1::2] = 0.75 * rows
    out[:, :, 1::2][:, :, :-1] += 0.25 * rows[:, :, 1:]
    return Tensor(out)


def maxpool_2x2_s2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; odd trailing row/column is dropped."""
    c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValidationError(f"maxpool needs at least 2x2 input, got {h}x{w}")
    oh, ow = h // 2, w // 2
    cropped = x.data[:, : 2 * oh, : 2 * ow]
    blocks = cropped.reshape(c, oh, 2, ow, 2)
    return Tensor(blocks.max(axis=(2, 4)))


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the channel axis, preserving list order."""
    if not parts:
        raise ValidationError("concat_channels needs a non-empty list")
    h, w = parts[0].height, parts[0].width
    for p in parts[1:]:
        if (p.height, p.width) != (h, w):
            raise ValidationError(
                f"spatial mismatch in concat: {p.height}x{p.width} vs {h}x{w}"
            )
    if len(parts) == 1:
        return parts[0]
    return Tensor(np.concatenate([p.data for p in parts], axis=0))


def split_channels(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Split along the channel axis into chunks of the given sizes."""
    if any(s < 1 for s in sizes):
        raise ValidationError(f"split sizes must be positive, got {list(sizes)}")
    if sum(sizes) != x.channels:
        raise ValidationError(
            f"split sizes sum to {sum(sizes)} but tensor has {x.channels} channels"
        )
    out = []
    start = 0
    for s in sizes:
        out.append(Tensor(x.data[start : start + s]))
        start += s
    return out
