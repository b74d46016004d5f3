"""Command-line interface: run, eval, synth, ablate."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import kernels
from .formats import FormatError
from .manifest import (ManifestError, iter_frames, load_gt, read_manifest,
                       read_result_masks, write_results)
from .metrics import evaluate_sequence
from .pipeline import EngineConfig, PipelineError, run_video
from .synth import SynthSpec, generate

ABLATION_VARIANTS = [
    # name, use_motion, use_spatial, use_temporal
    ("greedy", False, False, False),
    ("motion", True, False, False),
    ("spatial", True, True, False),
    ("full", True, True, True),
]


def _parse_key_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return (v, v)
        if len(parts) == 2:
            return (int(parts[0]), int(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"key size must look like '32' or '32x48', got {text!r}")


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    d = EngineConfig()
    p.add_argument("--alpha", type=float, default=d.alpha, help="feature similarity weight in graph edges")
    p.add_argument("--beta", type=float, default=d.beta, help="box overlap weight in graph edges")
    p.add_argument("--lambda1", type=float, default=d.lambda1,
                   help="box term weight in selection (mask term gets 1 - lambda1)")
    p.add_argument("--iters", type=int, default=d.iters, help="graph update rounds (1..3)")
    p.add_argument("--thr", type=float, default=d.thr, help="binarization threshold")
    p.add_argument("--history-n", type=int, default=d.history_n, help="motion history window")
    p.add_argument("--margin", type=float, default=d.margin, help="crop expansion ratio")
    p.add_argument("--key-size", type=_parse_key_size, default=d.key_size,
                   help="memory crop grid, e.g. 32 or 32x48")
    p.add_argument("--tau-assign", type=float, default=d.tau_assign,
                   help="minimum IoU for proposal assignment")
    p.add_argument("--seed", type=int, default=d.seed, help="echoed into the report")
    p.add_argument("--threads", type=int, default=d.threads, help="parallel objects per frame")


def _config_from_args(args, use_motion=True, use_spatial=True, use_temporal=True) -> EngineConfig:
    return EngineConfig(
        alpha=args.alpha, beta=args.beta,
        lambda1=args.lambda1, lambda2=1.0 - args.lambda1,
        iters=args.iters, thr=args.thr, history_n=args.history_n,
        margin=args.margin, key_size=tuple(args.key_size),
        tau_assign=args.tau_assign, seed=args.seed, threads=args.threads,
        use_motion=use_motion, use_spatial=use_spatial, use_temporal=use_temporal)


def _cmd_run(args) -> int:
    man = read_manifest(args.manifest)
    config = _config_from_args(
        args,
        use_motion=not args.no_motion,
        use_spatial=not args.no_spatial,
        use_temporal=not args.no_temporal)
    results = run_video(iter_frames(man), config)
    report = write_results(args.out, man, results, config, kernels.backend_name())
    fallbacks = sum(sum(r.fallback.values()) for r in results)
    total_ms = sum(r.elapsed for r in results) * 1000.0
    print(f"{man.video}: {len(results)} frames, {len(man.object_ids)} objects, "
          f"{fallbacks} fallbacks, {total_ms:.0f} ms ({kernels.backend_name()} kernels)")
    print(f"report: {report}")
    return 0


def _cmd_eval(args) -> int:
    man = read_manifest(args.manifest)
    gts = load_gt(man)
    preds = read_result_masks(args.pred, man)
    score = evaluate_sequence(preds, gts)
    print(f"{man.video}: {score.frames_scored} scored frames")
    for oid in sorted(score.per_object_j):
        print(f"  object {oid}:  J {score.per_object_j[oid]:.4f}  F {score.per_object_f[oid]:.4f}")
    print(f"  mean:      J {score.j_mean:.4f}  F {score.f_mean:.4f}  G {score.g_mean:.4f}")
    out = {
        "video": man.video,
        "per_object": {str(k): {"j": score.per_object_j[k], "f": score.per_object_f[k]}
                       for k in sorted(score.per_object_j)},
        "j_mean": score.j_mean, "f_mean": score.f_mean, "g_mean": score.g_mean,
    }
    path = Path(args.pred) / "eval.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json(Path(args.spec).read_text())
    man_path = generate(spec, args.out)
    print(f"generated {spec.frames} frames, {spec.num_objects} objects -> {man_path}")
    return 0


def _cmd_ablate(args) -> int:
    man = read_manifest(args.manifest)
    gts = load_gt(man)
    base = _config_from_args(args)
    out_root = Path(args.out)
    rows = []
    for name, mo, sg, tg in ABLATION_VARIANTS:
        config = replace(base, use_motion=mo, use_spatial=sg, use_temporal=tg)
        results = run_video(iter_frames(man), config)
        var_dir = out_root / name
        write_results(var_dir, man, results, config, kernels.backend_name())
        preds = read_result_masks(var_dir, man)
        score = evaluate_sequence(preds, gts)
        rows.append((name, mo, sg, tg, score))
    print(f"{man.video}: ablation over {len(man) - 1} scored frames")
    print(f"  {'variant':<10} {'Mo':>3} {'SG':>3} {'TG':>3} {'J':>8} {'F':>8} {'G':>8}")
    for name, mo, sg, tg, score in rows:
        flag = lambda b: "x" if b else "-"
        print(f"  {name:<10} {flag(mo):>3} {flag(sg):>3} {flag(tg):>3} "
              f"{score.j_mean:>8.4f} {score.f_mean:>8.4f} {score.g_mean:>8.4f}")
    out = {
        "video": man.video,
        "variants": {name: {"motion": mo, "spatial": sg, "temporal": tg,
                            "j_mean": s.j_mean, "f_mean": s.f_mean, "g_mean": s.g_mean}
                     for name, mo, sg, tg, s in rows},
    }
    path = out_root / "ablation.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskfuse",
        description="Deterministic proposal-mask fusion for video object segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="fuse proposals over a video manifest")
    p_run.add_argument("--manifest", required=True, help="manifest JSON path")
    p_run.add_argument("--out", required=True, help="output directory")
    _add_engine_flags(p_run)
    p_run.add_argument("--no-spatial", action="store_true", help="disable the proposal graph")
    p_run.add_argument("--no-temporal", action="store_true", help="disable memory refinement")
    p_run.add_argument("--no-motion", action="store_true",
                       help="use the previous box instead of motion extrapolation")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="score run outputs against manifest ground truth")
    p_eval.add_argument("--pred", required=True, help="directory a run wrote")
    p_eval.add_argument("--manifest", required=True, help="manifest JSON path")
    p_eval.set_defaults(func=_cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--spec", required=True, help="generator spec JSON path")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=_cmd_synth)

    p_abl = sub.add_parser("ablate", help="run the stage-toggle grid and score each variant")
    p_abl.add_argument("--manifest", required=True, help="manifest JSON path (needs gt)")
    p_abl.add_argument("--out", required=True, help="output directory")
    _add_engine_flags(p_abl)
    p_abl.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, FormatError, PipelineError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
