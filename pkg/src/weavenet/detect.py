"""Single-shot detection heads and box post-processing.

Covers anchor generation over the feature pyramid, the per-scale 3x3
prediction convolutions, center-size box decoding, greedy NMS, and the
score-weighted box refinement step applied after suppression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensor_core import ConvKernel, Tensor, conv3x3

DEFAULT_SCALE_FRACTIONS = (0.1, 0.2, 0.375, 0.55, 0.725, 0.9)
BOX_VARIANCES = (0.1, 0.1, 0.2, 0.2)
ANCHOR_MODES = ("A", "B")

# three ratios on the outermost scales, five on the middle ones
_MODE_A_SHORT = (1.0, 2.0, 0.5)
_MODE_A_LONG = (1.0, 2.0, 0.5, 3.0, 1.0 / 3.0)
_MODE_B_RATIOS = (1.0 / 3.0, 0.5, 1.0, 2.0, 3.0)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in input-image coordinates."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"box coordinates must be finite, got {coords}")
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValidationError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0

    def coords(self) -> tuple[float, float, float, float]:
        return self.xmin, self.ymin, self.xmax, self.ymax


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    class_id: int

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"detection score must be finite, got {self.score}")
        if self.class_id < 0:
            raise ValidationError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class AnchorSpec:
    """Per-scale anchor shape configuration.

    Mode A uses three aspect ratios on the outer scales and five on the
    middle ones; mode B uses the same five ratios at every scale. Both add
    one extra square anchor at the geometric mean of adjacent scale
    fractions (the last scale pairs with 1.0).
    """

    mode: str
    scale_fractions: tuple[float, ...]
    ratios: tuple[tuple[float, ...], ...]
    extra_geometric_mean_box: bool = True

    def __post_init__(self):
        if self.mode not in ANCHOR_MODES:
            raise ValidationError(f"anchor mode must be one of {ANCHOR_MODES}, got {self.mode!r}")
        if len(self.scale_fractions) != len(self.ratios):
            raise ValidationError("scale_fractions and ratios lengths differ")
        if any(s <= 0 for s in self.scale_fractions):
            raise ValidationError("scale fractions must be positive")
        for a, b in zip(self.scale_fractions, self.scale_fractions[1:]):
            if b <= a:
                raise ValidationError("scale fractions must increase across levels")
        for rs in self.ratios:
            if not rs or any(r <= 0 for r in rs):
                raise ValidationError("aspect ratios must be positive and non-empty")

    @classmethod
    def for_mode(cls, mode: str, num_scales: int = 6) -> AnchorSpec:
        fractions = DEFAULT_SCALE_FRACTIONS[:num_scales]
        if len(fractions) != num_scales:
            raise ValidationError(f"no default scale fractions for {num_scales} scales")
        if mode == "A":
            ratios = tuple(
                _MODE_A_LONG if 0 < i < num_scales - 2 else _MODE_A_SHORT
                for i in range(num_scales)
            )
        elif mode == "B":
            ratios = (_MODE_B_RATIOS,) * num_scales
        else:
            raise ValidationError(f"anchor mode must be one of {ANCHOR_MODES}, got {mode!r}")
        return cls(mode=mode, scale_fractions=fractions, ratios=ratios)

    def anchors_per_cell(self, scale: int) -> int:
        return len(self.ratios[scale]) + int(self.extra_geometric_mean_box)


def generate_anchors(spec: AnchorSpec, pyramid_sizes: tuple[int, ...], input_size: int) -> list[BBox]:
    """All anchors, ordered scale-major, then row-major over cells, then ratio.

    Each cell's anchors are the listed ratios in order followed by the extra
    geometric-mean square box; anchors are centered at cell centers and are
    not clipped.
    """
    if len(pyramid_sizes) != len(spec.scale_fractions):
        raise ValidationError("pyramid_sizes and anchor spec scale counts differ")
    anchors: list[BBox] = []
    fractions = spec.scale_fractions
    for scale, fm in enumerate(pyramid_sizes):
        s = fractions[scale]
        s_next = fractions[scale + 1] if scale + 1 < len(fractions) else 1.0
        shapes = [
            (s * input_size * math.sqrt(r), s * input_size / math.sqrt(r))
            for r in spec.ratios[scale]
        ]
        if spec.extra_geometric_mean_box:
            side = math.sqrt(s * s_next) * input_size
            shapes.append((side, side))
        for y in range(fm):
            cy = (y + 0.5) / fm * input_size
            for x in range(fm):
                cx = (x + 0.5) / fm * input_size
                for w, h in shapes:
                    anchors.append(BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
    return anchors


def init_head_params(
    state_channels: list[int],
    anchors_per_cell: list[int],
    num_classes: int,
    seed: int,
) -> list[tuple[ConvKernel, ConvKernel]]:
    """Seeded per-scale (location, confidence) prediction kernels.

    Same uniform fan-in rule as the fusion blocks; drawn scales ascending,
    location kernel before confidence kernel.
    """
    if len(state_channels) != len(anchors_per_cell):
        raise ValidationError("state_channels and anchors_per_cell lengths differ")
    if num_classes < 1:
        raise ValidationError(f"num_classes must be positive, got {num_classes}")
    rng = np.random.default_rng([seed, 2])
    kernels = []
    for cin, a in zip(state_channels, anchors_per_cell):
        s = 1.0 / np.sqrt(cin * 9)
        loc = ConvKernel(
            rng.uniform(-s, s, size=(4 * a, cin, 3, 3)), rng.uniform(-s, s, size=4 * a)
        )
        conf_out = (num_classes + 1) * a
        conf = ConvKernel(
            rng.uniform(-s, s, size=(conf_out, cin, 3, 3)), rng.uniform(-s, s, size=conf_out)
        )
        kernels.append((loc, conf))
    return kernels


def head_forward(
    state: Tensor,
    loc_kernel: ConvKernel,
    conf_kernel: ConvKernel,
    anchors_per_cell: int,
    num_classes: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Predict per-anchor offsets and class scores for one scale.

    Returns (offsets of shape (H*W*A, 4), scores of shape (H*W*A, C+1));
    rows are ordered row-major over cells then by anchor, matching
    generate_anchors within the scale. Scores are the normalized
    exponential of the confidence logits per anchor.
    """
    a, c = anchors_per_cell, num_classes + 1
    if loc_kernel.out_channels != 4 * a:
        raise ValidationError(
            f"location kernel emits {loc_kernel.out_channels} channels, expected {4 * a}"
        )
    if conf_kernel.out_channels != c * a:
        raise ValidationError(
            f"confidence kernel emits {conf_kernel.out_channels} channels, expected {c * a}"
        )
    h, w = state.height, state.width
    loc = conv3x3(state, loc_kernel).data
    conf = conv3x3(state, conf_kernel).data
    # channels are anchor-major: anchor i owns channels [i*4, i*4+4) / [i*c, i*c+c)
    offsets = loc.reshape(a, 4, h, w).transpose(2, 3, 0, 1).reshape(-1, 4)
    logits = conf.reshape(a, c, h, w).transpose(2, 3, 0, 1).reshape(-1, c)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    scores = e / e.sum(axis=1, keepdims=True)
    return offsets, scores


def decode_box(anchor: BBox, offsets, input_size: int) -> BBox:
    """Center-size decoding against an anchor, clipped to the image square."""
    dx, dy, dw, dh = (float(v) for v in offsets)
    if not all(math.isfinite(v) for v in (dx, dy, dw, dh)):
        raise ValidationError(f"offsets must be finite, got {(dx, dy, dw, dh)}")
    vx, vy, vw, vh = BOX_VARIANCES
    acx, acy = anchor.center
    aw, ah = anchor.width, anchor.height
    cx = acx + dx * vx * aw
    cy = acy + dy * vy * ah
    w = aw * math.exp(dw * vw)
    h = ah * math.exp(dh * vh)

    def clip(v: float) -> float:
        return min(max(v, 0.0), float(input_size))

    return BBox(clip(cx - w / 2), clip(cy - h / 2), clip(cx + w / 2), clip(cy + h / 2))


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 when the union is empty."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _nms_order(dets: list[Detection]) -> list[int]:
    return sorted(
        range(len(dets)),
        key=lambda i: (-dets[i].score, dets[i].box.xmin, dets[i].box.ymin, i),
    )


def nms_greedy(dets: list[Detection], iou_threshold: float = 0.45, per_class: bool = True) -> list[Detection]:
    """Greedy suppression: keep the best remaining detection, drop overlaps.

    A detection is suppressed when its overlap with an already-kept
    detection (of the same class when per_class is set) strictly exceeds
    the threshold. Ties are broken by (score desc, xmin asc, ymin asc,
    input index asc).
    """
    order = _nms_order(dets)
    suppressed = [False] * len(dets)
    kept: list[Detection] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        d = dets[i]
        kept.append(d)
        for j in order[pos + 1 :]:
            if suppressed[j]:
                continue
            other = dets[j]
            if per_class and other.class_id != d.class_id:
                continue
            if iou(d.box, other.box) > iou_threshold:
                suppressed[j] = True
    return kept


def refine_boxes(
    kept: list[Detection], candidates: list[Detection], iou_threshold: float = 0.6
) -> list[Detection]:
    """Score-weighted coordinate averaging over each kept box's neighborhood.

    The neighborhood of a kept detection b is every same-class candidate
    whose overlap with b strictly exceeds the threshold, plus b itself
    (counted once). Scores and classes are unchanged.
    """
    if not candidates:
        raise ValidationError("refinement requires a non-empty candidate pool")
    refined: list[Detection] = []
    for b in kept:
        total = np.array(b.box.coords()) * b.score
        weight = b.score
        neighbors = 0
        for c in candidates:
            if c is b or c.class_id != b.class_id:
                continue
            if iou(c.box, b.box) > iou_threshold:
                total += np.array(c.box.coords()) * c.score
                weight += c.score
                neighbors += 1
        if neighbors == 0 or weight <= 0.0:
            refined.append(b)
            continue
        coords = total / weight
        refined.append(Detection(box=BBox(*coords), score=b.score, class_id=b.class_id))
    return refined
