"""Command-line surface: verify, demo, eval, bench, fixtures.

Exit codes: 0 success, 1 validation or verification failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import bench as bench_mod
from .config import RunConfig, apply_overrides, load_config
from .detect import (
    AnchorSpec,
    Detection,
    decode_box,
    generate_anchors,
    head_forward,
    init_head_params,
    nms_greedy,
    refine_boxes,
)
from .errors import EquivalenceError, ValidationError
from .evaluation import ALL_STRATA, DetectionRecord, evaluate
from .fixtures import make_raw_pyramid, write_fixtures
from .formats import (
    format_table,
    read_detections,
    read_ground_truth,
    write_csv,
    write_detections,
)
from .weave import compare_outputs, init_params, weave_forward

SWEEP_K = (16, 32, 64)
SWEEP_T = (1, 3, 5)
SWEEP_MASKS = ("both", "top-down-only", "bottom-up-only")
BENCH_SWEEP_K = (16, 32)

BASELINE_CHANNELS = 256
BASELINE_SIZE = 40


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation failures, not I/O
        raise ValidationError(message)


def _mask_flags(masks: str) -> tuple[bool, bool]:
    return masks != "bottom-up-only", masks != "top-down-only"


def _load(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        config,
        seed=args.seed,
        anchors=getattr(args, "anchors", None),
        top_down_only=getattr(args, "top_down_only", False),
        bottom_up_only=getattr(args, "bottom_up_only", False),
    )


def cmd_verify(args) -> int:
    config = _load(args)
    base = config.weave_config()
    pyramid = make_raw_pyramid(config)
    tol = bench_mod.EQUIVALENCE_TOL

    combos = [
        ("config", base.k, base.iterations, bench_mod.masks_label(base),
         base.enable_top_down, base.enable_bottom_up)
    ]
    for k in SWEEP_K:
        for t in SWEEP_T:
            for masks in SWEEP_MASKS:
                td, bu = _mask_flags(masks)
                combos.append(("sweep", k, t, masks, td, bu))

    print(f"equivalence check: naive vs simplified, tolerance {tol:.1e}")
    failures = 0
    rows = []
    for origin, k, t, masks, td, bu in combos:
        cfg = replace(base, k=k, iterations=t, enable_top_down=td, enable_bottom_up=bu)
        params = init_params(cfg)
        naive = weave_forward(pyramid, cfg, params, "naive")
        simplified = weave_forward(
            pyramid, cfg, params, "simplified", corrupt_block=config.corrupt_block
        )
        worst = compare_outputs(naive, simplified)
        ok = worst.deviation <= tol
        failures += 0 if ok else 1
        status = "PASS" if ok else "FAIL"
        detail = ""
        if not ok:
            detail = (
                f"  (scale {worst.scale}, channel {worst.channel},"
                f" y {worst.y}, x {worst.x})"
            )
        print(
            f"  [{origin}] k={k:<3d} T={t} masks={masks:<15s}"
            f" worst={worst.deviation:.3e}  {status}{detail}"
        )
        rows.append([origin, str(k), str(t), masks, f"{worst.deviation:.3e}", status])
    total = len(combos)
    print(f"{total - failures}/{total} combinations within tolerance")
    if failures and config.corrupt_block is not None:
        scale, t = config.corrupt_block
        print(f"note: kernel partition corrupted at scale {scale}, iteration {t}")
    if args.out:
        write_csv(args.out, ["origin", "k", "iterations", "masks", "worst_deviation", "status"], rows)
        print(f"wrote {args.out}")
    return 0 if failures == 0 else 1


def _run_demo_pipeline(
    config: RunConfig, refine: bool, mode: str = "simplified"
) -> list[DetectionRecord]:
    weave_cfg = config.weave_config()
    params = init_params(weave_cfg)
    pyramid = make_raw_pyramid(config)
    states = weave_forward(pyramid, weave_cfg, params, mode, corrupt_block=config.corrupt_block)

    spec = AnchorSpec.for_mode(config.anchor_mode, num_scales=len(config.pyramid_sizes))
    anchors = generate_anchors(spec, config.pyramid_sizes, config.input_size)
    per_cell = [spec.anchors_per_cell(i) for i in range(len(config.pyramid_sizes))]
    state_channels = [
        weave_cfg.state_channels(i, config.iterations) for i in range(len(config.pyramid_sizes))
    ]
    heads = init_head_params(state_channels, per_cell, config.num_classes, config.seed)

    offset_blocks = []
    score_blocks = []
    for i, state in enumerate(states):
        loc_kernel, conf_kernel = heads[i]
        offsets, scores = head_forward(state, loc_kernel, conf_kernel, per_cell[i], config.num_classes)
        offset_blocks.append(offsets)
        score_blocks.append(scores)
    all_offsets = np.vstack(offset_blocks)
    all_scores = np.vstack(score_blocks)
    if all_offsets.shape[0] != len(anchors):
        raise ValidationError(
            f"head rows ({all_offsets.shape[0]}) disagree with anchor count ({len(anchors)})"
        )

    decoded: dict[int, object] = {}

    def box_for(n: int):
        if n not in decoded:
            decoded[n] = decode_box(anchors[n], all_offsets[n], config.input_size)
        return decoded[n]

    kept_all: list[Detection] = []
    pool: list[Detection] = []
    for cls in range(config.num_classes):
        col = all_scores[:, cls + 1]
        candidate_idx = np.nonzero(col > config.score_floor)[0]
        candidates = [
            Detection(box=box_for(int(n)), score=float(col[n]), class_id=cls)
            for n in candidate_idx
        ]
        candidates.sort(key=lambda d: (-d.score, d.box.xmin, d.box.ymin))
        candidates = candidates[: config.pre_nms_top_k]
        pool.extend(candidates)
        kept_all.extend(nms_greedy(candidates, config.nms_iou_threshold))

    kept_all.sort(key=lambda d: (-d.score, d.class_id, d.box.xmin, d.box.ymin))
    kept_all = kept_all[: config.keep_top_k]
    if refine and kept_all:
        kept_all = refine_boxes(kept_all, pool, config.refine_iou_threshold)

    return [
        DetectionRecord(image_id="synthetic-0", box=d.box, score=d.score, class_id=d.class_id)
        for d in kept_all
    ]


def cmd_demo(args) -> int:
    config = _load(args)
    mode = args.mode or "simplified"
    records = _run_demo_pipeline(config, refine=not args.no_refine, mode=mode)
    write_detections(args.out, records)
    by_class: dict[int, int] = {}
    for r in records:
        by_class[r.class_id] = by_class.get(r.class_id, 0) + 1
    counts = ", ".join(f"class {c}: {n}" for c, n in sorted(by_class.items())) or "none"
    print(f"demo: {len(records)} detections ({counts})")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    dets = read_detections(args.dets)
    gts = read_ground_truth(args.gt)
    report = evaluate(dets, gts)

    classes = report.classes()
    rows = []
    for stratum in ALL_STRATA:
        for cls in classes:
            ap = report.ap[stratum][cls]
            rows.append(
                [
                    stratum,
                    str(cls),
                    "" if ap is None else f"{ap:.6f}",
                    str(report.positives[stratum][cls]),
                ]
            )
    if args.out:
        write_csv(args.out, ["stratum", "class_id", "ap", "positives"], rows)

    summary = [
        [stratum, f"{report.mean_ap[stratum]:.6f}", str(sum(report.positives[stratum].values()))]
        for stratum in ALL_STRATA
    ]
    print(format_table(["stratum", "mAP", "positives"], summary))
    print(f"ground truth: {report.gt_count} boxes, detections: {report.det_count}")
    for note in report.notes:
        print(f"note: {note}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    config = _load(args)
    base = config.weave_config()
    data_rows = []
    timing_rows = []
    for k in BENCH_SWEEP_K:
        for t in SWEEP_T:
            cfg = replace(base, k=k, iterations=t)
            cmp = bench_mod.compare_modes(
                cfg,
                warmup=args.warmup,
                reps=args.reps,
                batch=args.batch,
                corrupt_block=config.corrupt_block,
            )
            for report, ratio in (
                (cmp.naive, 1.0),
                (cmp.simplified, cmp.flop_ratio),
            ):
                data_rows.append(bench_mod.data_row(report, ratio, cmp.worst_deviation))
                timing_rows.append(bench_mod.timing_row(report))

    baseline_flops = 2 * BASELINE_CHANNELS * BASELINE_CHANNELS * 9 * BASELINE_SIZE * BASELINE_SIZE
    data_rows.append(
        [
            "baseline-3x3-256",
            str(BASELINE_CHANNELS),
            "1",
            "-",
            "0",
            str(baseline_flops),
            str(baseline_flops),
            "",
            "",
        ]
    )

    print(format_table(list(bench_mod.DATA_COLUMNS), data_rows))
    print()
    print(format_table(list(bench_mod.TIMING_COLUMNS), timing_rows))
    if args.out:
        write_csv(args.out, bench_mod.DATA_COLUMNS, data_rows)
        print(f"wrote {args.out}")
    if args.timing_out:
        write_csv(args.timing_out, bench_mod.TIMING_COLUMNS, timing_rows)
        print(f"wrote {args.timing_out}")
    return 0


def cmd_fixtures(args) -> int:
    config = _load(args)
    paths = write_fixtures(config.seed, args.out, config)
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weavenet", description="Multi-scale feature weaving inference tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, with_masks=True, with_anchors=False):
        sp.add_argument("--config", help="JSON config file (defaults used when omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        if with_masks:
            sp.add_argument("--top-down-only", action="store_true", help="disable bottom-up messages")
            sp.add_argument("--bottom-up-only", action="store_true", help="disable top-down messages")
        if with_anchors:
            sp.add_argument("--anchors", choices=("A", "B"), help="anchor configuration")

    verify = sub.add_parser("verify", help="check naive/simplified agreement over a sweep")
    add_common(verify)
    verify.add_argument("--out", help="optional CSV of per-combination results")
    verify.set_defaults(func=cmd_verify)

    demo = sub.add_parser("demo", help="run the synthetic end-to-end detection pipeline")
    add_common(demo, with_anchors=True)
    demo.add_argument("--out", default="detections.jsonl", help="detections output path")
    demo.add_argument("--mode", choices=("naive", "simplified"), help="fusion mode (default simplified)")
    demo.add_argument("--no-refine", action="store_true", help="skip box refinement")
    demo.set_defaults(func=cmd_demo)

    ev = sub.add_parser("eval", help="score a detections file against ground truth")
    ev.add_argument("dets", help="detections JSONL path")
    ev.add_argument("gt", help="ground-truth JSONL path")
    ev.add_argument("--out", help="optional per-class/per-stratum CSV path")
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="FLOP accounting and wall-clock mode comparison")
    add_common(bench)
    bench.add_argument("--out", help="optional CSV of deterministic FLOP rows")
    bench.add_argument("--timing-out", help="optional CSV of wall-clock rows")
    bench.add_argument("--warmup", type=int, default=3, help="unmeasured passes per mode")
    bench.add_argument("--reps", type=int, default=20, help="measured repetitions per mode")
    bench.add_argument("--batch", type=int, default=1, help="forward passes per repetition")
    bench.set_defaults(func=cmd_bench)

    fixtures = sub.add_parser("fixtures", help="write seeded synthetic input files")
    fixtures.add_argument("--config", help="JSON config file (defaults used when omitted)")
    fixtures.add_argument("--seed", type=int, help="override the config seed")
    fixtures.add_argument("--out", default="fixtures", help="output directory")
    fixtures.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except EquivalenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
