"""Iterative adjacent-scale feature weaving.

Per-scale states grow by concatenation as fixed-width messages are
exchanged between neighboring pyramid levels. Each block can run two ways
with matching results: the naive path convolves the full concatenated
state; the simplified path convolves only the accumulated message channels
and adds a precomputed contribution of the raw features, which is a single
grouped convolution shared across iterations.

State channel layout of scale i after t iterations (canonical order):

    [up-msg from i-1 at t, ..., up-msg at 1, raw features,
     down-msg from i+1 at 1, ..., down-msg at t]

Newest up-messages are prepended, newest down-messages appended, and
directions a scale never receives contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MismatchLocation, ValidationError
from .tensor_core import (
    ConvKernel,
    Tensor,
    concat_channels,
    conv3x3,
    maxpool_2x2_s2,
    relu,
    split_channels,
    upsample_bilinear_x2,
)

MODES = ("naive", "simplified")

DEFAULT_PYRAMID_SIZES = (40, 20, 10, 5, 3, 1)
DEFAULT_WOVEN_SCALES = (0, 1, 2, 3)


@dataclass(frozen=True)
class WeaveConfig:
    """Architecture hyperparameters. k is the per-direction message width."""

    k: int = 16
    iterations: int = 1
    woven_scales: tuple[int, ...] = DEFAULT_WOVEN_SCALES
    raw_channels: tuple[int, ...] = (32,) * 6
    pyramid_sizes: tuple[int, ...] = DEFAULT_PYRAMID_SIZES
    enable_top_down: bool = True
    enable_bottom_up: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be positive, got {self.k}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        if len(self.raw_channels) != len(self.pyramid_sizes):
            raise ValidationError("raw_channels and pyramid_sizes lengths differ")
        if any(c < 1 for c in self.raw_channels):
            raise ValidationError("raw channel counts must be positive")
        if any(s < 1 for s in self.pyramid_sizes):
            raise ValidationError("pyramid sizes must be positive")
        if not self.woven_scales:
            raise ValidationError("woven_scales must be non-empty")
        ws = self.woven_scales
        if list(ws) != list(range(ws[0], ws[-1] + 1)):
            raise ValidationError(f"woven_scales must be consecutive indices, got {ws}")
        if ws[0] < 0 or ws[-1] >= len(self.pyramid_sizes):
            raise ValidationError(f"woven_scales {ws} outside pyramid of {len(self.pyramid_sizes)} scales")
        for i in ws[:-1]:
            if self.pyramid_sizes[i] != 2 * self.pyramid_sizes[i + 1]:
                raise ValidationError(
                    f"woven scales {i} and {i + 1} must differ spatially by a factor of 2, "
                    f"got sizes {self.pyramid_sizes[i]} and {self.pyramid_sizes[i + 1]}"
                )

    def is_woven(self, scale: int) -> bool:
        return scale in self.woven_scales

    def receives_up(self, scale: int) -> bool:
        """Scale receives pooled messages from the finer scale below it."""
        return self.enable_bottom_up and self.is_woven(scale) and self.is_woven(scale - 1)

    def receives_down(self, scale: int) -> bool:
        """Scale receives upsampled messages from the coarser scale above it."""
        return self.enable_top_down and self.is_woven(scale) and self.is_woven(scale + 1)

    def emits_up(self, scale: int) -> bool:
        return self.enable_bottom_up and self.is_woven(scale) and self.is_woven(scale + 1)

    def emits_down(self, scale: int) -> bool:
        return self.enable_top_down and self.is_woven(scale) and self.is_woven(scale - 1)

    def received_directions(self, scale: int) -> int:
        return int(self.receives_up(scale)) + int(self.receives_down(scale))

    def emitted_directions(self, scale: int) -> int:
        return int(self.emits_up(scale)) + int(self.emits_down(scale))

    def state_channels(self, scale: int, t: int) -> int:
        """Channel count of scale's state after t iterations."""
        return self.raw_channels[scale] + self.k * self.received_directions(scale) * t


@dataclass(frozen=True)
class BlockParams:
    """Grouped per-iteration kernels of one scale's block.

    kernels[t-1] holds the stacked kernel of iteration t: down-message rows
    first, then up-message rows; columns follow the canonical state layout
    at t-1, which defines the message-column/raw-column partition used by
    the simplified path.
    """

    scale: int
    k: int
    raw_channels: int
    receives_up: bool
    receives_down: bool
    emits_down: bool
    emits_up: bool
    kernels: tuple[ConvKernel, ...]

    @property
    def out_channels(self) -> int:
        return self.k * (int(self.emits_down) + int(self.emits_up))

    def state_layout(self, t: int) -> tuple[int, int, int]:
        """(up columns, raw columns, down columns) of the state after t iterations."""
        up = self.k * t if self.receives_up else 0
        down = self.k * t if self.receives_down else 0
        return up, self.raw_channels, down

    def kernel_for(self, t: int) -> ConvKernel:
        if not 1 <= t <= len(self.kernels):
            raise ValidationError(f"no kernel for iteration {t} (have {len(self.kernels)})")
        return self.kernels[t - 1]

    def split_columns(self, t: int, corrupt: bool = False) -> tuple[np.ndarray | None, np.ndarray]:
        """Partition iteration t's kernel columns into (message slice, raw slice).

        The message slice concatenates the up-message and down-message column
        groups with the raw group removed; shapes follow state_layout(t - 1).
        With corrupt=True the partition boundary is shifted by one channel,
        which is only possible when message columns exist (t >= 2).
        """
        kernel = self.kernel_for(t)
        up, raw, down = self.state_layout(t - 1)
        shift = 0
        if corrupt:
            if down >= 1:
                shift = 1
            elif up >= 1:
                shift = -1
            else:
                raise ValidationError(
                    f"cannot corrupt partition of scale {self.scale} iteration {t}: no message columns"
                )
        w = kernel.weights
        lo, hi = up + shift, up + raw + shift
        raw_cols = w[:, lo:hi]
        if up + down == 0:
            return None, raw_cols
        msg_cols = np.concatenate([w[:, :lo], w[:, hi:]], axis=1)
        return msg_cols, raw_cols


@dataclass(frozen=True)
class ScaleState:
    """The growing concatenated state of one scale.

    up_received holds pooled messages from the scale below, newest first;
    down_received holds upsampled messages from the scale above, oldest
    first, matching the canonical channel order of full().
    """

    scale: int
    t: int
    raw: Tensor
    up_received: tuple[Tensor, ...] = ()
    down_received: tuple[Tensor, ...] = ()

    @property
    def channels(self) -> int:
        return (
            sum(m.channels for m in self.up_received)
            + self.raw.channels
            + sum(m.channels for m in self.down_received)
        )

    def full(self) -> Tensor:
        return concat_channels(list(self.up_received) + [self.raw] + list(self.down_received))

    def messages(self) -> Tensor | None:
        parts = list(self.up_received) + list(self.down_received)
        return concat_channels(parts) if parts else None


def init_params(config: WeaveConfig) -> dict[int, BlockParams]:
    """Sample deterministic block parameters for every emitting woven scale.

    Weights and biases are uniform in [-s, s] with s = 1/sqrt(9 * in_channels),
    drawn in a fixed order (scales ascending, iterations ascending) from
    config.seed.
    """
    rng = np.random.default_rng([config.seed, 0])
    params: dict[int, BlockParams] = {}
    for scale in config.woven_scales:
        emitted = config.emitted_directions(scale)
        if emitted == 0:
            continue
        out_channels = config.k * emitted
        kernels = []
        for t in range(1, config.iterations + 1):
            in_channels = config.state_channels(scale, t - 1)
            s = 1.0 / np.sqrt(in_channels * 9)
            weights = rng.uniform(-s, s, size=(out_channels, in_channels, 3, 3))
            bias = rng.uniform(-s, s, size=out_channels)
            kernels.append(ConvKernel(weights, bias))
        params[scale] = BlockParams(
            scale=scale,
            k=config.k,
            raw_channels=config.raw_channels[scale],
            receives_up=config.receives_up(scale),
            receives_down=config.receives_down(scale),
            emits_down=config.emits_down(scale),
            emits_up=config.emits_up(scale),
            kernels=tuple(kernels),
        )
    return params


def _split_messages(out: Tensor, params: BlockParams) -> tuple[Tensor | None, Tensor | None]:
    """Split block output rows into (down-message, up-message)."""
    if params.emits_down and params.emits_up:
        down, up = split_channels(out, [params.k, params.k])
        return down, up
    if params.emits_down:
        return out, None
    return None, out


def block_naive(state: ScaleState, params: BlockParams, t: int) -> tuple[Tensor | None, Tensor | None]:
    """One block step over the full concatenated state (two conv paths grouped)."""
    kernel = params.kernel_for(t)
    if state.channels != kernel.in_channels:
        raise ValidationError(
            f"scale {params.scale} iteration {t}: state has {state.channels} channels, "
            f"kernel expects {kernel.in_channels}"
        )
    out = relu(conv3x3(state.full(), kernel))
    return _split_messages(out, params)


def block_simplified(
    messages: Tensor | None,
    source_slice: Tensor,
    params: BlockParams,
    t: int,
    corrupt: bool = False,
) -> tuple[Tensor | None, Tensor | None]:
    """One block step from message channels plus the precomputed raw source.

    Computes relu(messages * message_columns + bias + source_slice); at t=1
    the message set is empty and the result is relu(bias + source_slice).
    """
    kernel = params.kernel_for(t)
    up, _, down = params.state_layout(t - 1)
    expected = up + down
    have = messages.channels if messages is not None else 0
    if have != expected:
        raise ValidationError(
            f"scale {params.scale} iteration {t}: expected {expected} message channels, got {have}"
        )
    if source_slice.channels != params.out_channels:
        raise ValidationError(
            f"scale {params.scale} iteration {t}: source slice has {source_slice.channels} "
            f"channels, block emits {params.out_channels}"
        )
    msg_cols, _ = params.split_columns(t, corrupt=corrupt)
    if messages is None or msg_cols is None or msg_cols.shape[1] == 0:
        pre = kernel.bias[:, None, None] + source_slice.data
    else:
        partial = conv3x3(messages, ConvKernel(msg_cols, kernel.bias))
        pre = partial.data + source_slice.data
    out = relu(Tensor(pre))
    return _split_messages(out, params)


def precompute_sources(
    raw: dict[int, Tensor],
    params: dict[int, BlockParams],
    iterations: int,
    corrupt_block: tuple[int, int] | None = None,
) -> dict[int, Tensor]:
    """Grouped raw-feature products, one convolution per scale.

    The result for a scale stacks the per-iteration raw-column products
    along the channel axis: slice t (of width out_channels) equals the raw
    features convolved with iteration t's raw-column kernel, bias excluded.
    """
    sources: dict[int, Tensor] = {}
    for scale, p in params.items():
        if iterations == 0:
            continue
        slices = []
        for t in range(1, iterations + 1):
            corrupt = corrupt_block == (scale, t)
            _, raw_cols = p.split_columns(t, corrupt=corrupt)
            slices.append(raw_cols)
        stacked = np.concatenate(slices, axis=0)
        if stacked.shape[1] != raw[scale].channels:
            raise ValidationError(
                f"scale {scale}: raw features have {raw[scale].channels} channels, "
                f"raw-column kernels expect {stacked.shape[1]}"
            )
        grouped = ConvKernel(stacked, np.zeros(stacked.shape[0]))
        sources[scale] = conv3x3(raw[scale], grouped)
    return sources


def source_slice(sources: dict[int, Tensor], scale: int, t: int, params: BlockParams) -> Tensor:
    """Extract iteration t's slice from a scale's stacked source tensor."""
    width = params.out_channels
    data = sources[scale].data[(t - 1) * width : t * width]
    return Tensor(data)


def _validate_pyramid(pyramid: list[Tensor], config: WeaveConfig) -> None:
    if len(pyramid) != len(config.pyramid_sizes):
        raise ValidationError(
            f"pyramid has {len(pyramid)} scales, config expects {len(config.pyramid_sizes)}"
        )
    for i, tensor in enumerate(pyramid):
        size = config.pyramid_sizes[i]
        if (tensor.height, tensor.width) != (size, size):
            raise ValidationError(
                f"scale {i}: expected {size}x{size} features, got {tensor.height}x{tensor.width}"
            )
        if tensor.channels != config.raw_channels[i]:
            raise ValidationError(
                f"scale {i}: expected {config.raw_channels[i]} channels, got {tensor.channels}"
            )


def weave_states(
    pyramid: list[Tensor],
    config: WeaveConfig,
    params: dict[int, BlockParams],
    mode: str = "simplified",
    corrupt_block: tuple[int, int] | None = None,
) -> list[dict[int, ScaleState]]:
    """Run the forward pass, returning woven-scale states after each iteration.

    Within an iteration every block reads states of the previous iteration
    (synchronous schedule); messages are resampled once, at receipt. The
    returned list has one entry per iteration 1..T.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    _validate_pyramid(pyramid, config)

    states = {i: ScaleState(scale=i, t=0, raw=pyramid[i]) for i in config.woven_scales}
    sources = None
    if mode == "simplified":
        raw = {i: pyramid[i] for i in params}
        sources = precompute_sources(raw, params, config.iterations, corrupt_block=corrupt_block)

    history: list[dict[int, ScaleState]] = []
    for t in range(1, config.iterations + 1):
        msg_down: dict[int, Tensor] = {}
        msg_up: dict[int, Tensor] = {}
        for i, p in params.items():
            if mode == "naive":
                down, up = block_naive(states[i], p, t)
            else:
                corrupt = corrupt_block == (i, t)
                down, up = block_simplified(
                    states[i].messages(), source_slice(sources, i, t, p), p, t, corrupt=corrupt
                )
            if down is not None:
                msg_down[i] = down
            if up is not None:
                msg_up[i] = up

        new_states = {}
        for i in config.woven_scales:
            s = states[i]
            up_received = s.up_received
            down_received = s.down_received
            if config.receives_up(i):
                up_received = (maxpool_2x2_s2(msg_up[i - 1]),) + up_received
            if config.receives_down(i):
                down_received = down_received + (upsample_bilinear_x2(msg_down[i + 1]),)
            new_states[i] = ScaleState(
                scale=i, t=t, raw=s.raw, up_received=up_received, down_received=down_received
            )
        states = new_states
        history.append(states)
    return history


def weave_forward(
    pyramid: list[Tensor],
    config: WeaveConfig,
    params: dict[int, BlockParams],
    mode: str = "simplified",
    corrupt_block: tuple[int, int] | None = None,
) -> list[Tensor]:
    """Final per-scale feature maps; unwoven scales pass through unchanged."""
    history = weave_states(pyramid, config, params, mode, corrupt_block=corrupt_block)
    final = history[-1] if history else {i: ScaleState(scale=i, t=0, raw=pyramid[i]) for i in config.woven_scales}
    return [final[i].full() if i in final else pyramid[i] for i in range(len(pyramid))]


def compare_outputs(a: list[Tensor], b: list[Tensor]) -> MismatchLocation:
    """Worst absolute per-element deviation between two per-scale output lists."""
    if len(a) != len(b):
        raise ValidationError("output lists have different scale counts")
    worst = MismatchLocation(scale=-1, channel=0, y=0, x=0, deviation=0.0)
    for scale, (ta, tb) in enumerate(zip(a, b)):
        if ta.shape != tb.shape:
            raise ValidationError(f"scale {scale}: shape mismatch {ta.shape} vs {tb.shape}")
        diff = np.abs(ta.data - tb.data)
        dev = float(diff.max())
        if dev > worst.deviation or worst.scale < 0:
            c, y, x = np.unravel_index(int(diff.argmax()), diff.shape)
            worst = MismatchLocation(scale=scale, channel=int(c), y=int(y), x=int(x), deviation=dev)
    return worst


# --- analytic FLOP accounting -------------------------------------------------

def conv_flops(cin: int, cout: int, height: int, width: int) -> int:
    """Multiply-add count of a 3x3 same-size convolution: 2*Cin*Cout*9*H*W."""
    return 2 * cin * cout * 9 * height * width


@dataclass(frozen=True)
class WeaveFlops:
    """Exact analytic FLOP figures of one forward pass."""

    mode: str
    per_iteration: tuple[int, ...]
    precompute: int

    @property
    def total(self) -> int:
        return self.precompute + sum(self.per_iteration)


def flops_weave(config: WeaveConfig, mode: str) -> WeaveFlops:
    """Analytic cost of one forward pass in the given mode.

    Naive mode charges the full-state convolution at every iteration. The
    simplified mode charges only the message-column convolutions per
    iteration, plus the raw-column work once per scale: the precomputed
    source hoists the raw contribution out of the iteration loop, so its
    columns are not re-charged for every t.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    per_iteration = []
    for t in range(1, config.iterations + 1):
        flops = 0
        for i in config.woven_scales:
            e = config.emitted_directions(i)
            if e == 0:
                continue
            size = config.pyramid_sizes[i]
            cout = config.k * e
            if mode == "naive":
                cin = config.state_channels(i, t - 1)
            else:
                cin = config.k * config.received_directions(i) * (t - 1)
            flops += conv_flops(cin, cout, size, size)
        per_iteration.append(flops)

    precompute = 0
    if mode == "simplified" and config.iterations > 0:
        for i in config.woven_scales:
            e = config.emitted_directions(i)
            if e == 0:
                continue
            size = config.pyramid_sizes[i]
            precompute += conv_flops(config.raw_channels[i], config.k * e, size, size)

    return WeaveFlops(mode=mode, per_iteration=tuple(per_iteration), precompute=precompute)
