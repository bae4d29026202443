"""CLI entry point for the disparity refinement toolkit."""

import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

import config as config_module
from artifacts import display_artifacts
from config import apply_overrides, load_config, save_config
from errors import ConfigError, FormatError, InvalidInputError
from evalkit import MaskMode, evaluate_disparity, summarize_reports
from image_io import read_disparity, read_json, read_mask, read_pfm, write_json
from pipeline import (
    PipelineConfig,
    PipelinePaths,
    export_synthetic_dataset,
    load_manifest,
    run_batch,
    run_pipeline,
)
from synth import CorruptionSpec, SceneSpec, corrupt_disparity_with_mask, gen_scene

load_dotenv()

console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


def setup_logging(verbose: bool = False):
    """Log to CONFIG_DIR/disprefine.log, and to stderr through rich when verbose."""
    config_module.CONFIG_DIR.mkdir(parents=True, exist_ok=True)
    handlers: list[logging.Handler] = [logging.FileHandler(config_module.CONFIG_DIR / "disprefine.log")]
    if verbose:
        handlers.append(RichHandler(console=Console(stderr=True), show_path=False))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def add_override_args(parser: argparse.ArgumentParser):
    """Flat parameter flags; every default is None so config values win unless given."""
    group = parser.add_argument_group("parameter overrides")
    group.add_argument("--config", help="JSON config file merged over the defaults")
    group.add_argument("--stage", choices=["ldr", "gdr", "full"])
    group.add_argument("--sign", dest="disparity_sign", choices=["as-stored", "negate"])
    group.add_argument("--half-resolution", action="store_const", const=True, default=None)
    group.add_argument(
        "--eval-working-res", dest="eval_full_res", action="store_const", const=False, default=None,
        help="Score half-resolution runs at the working resolution",
    )
    group.add_argument("--alpha-s", type=float)
    group.add_argument("--alpha-p", type=float)
    group.add_argument("--th-f", type=float)
    group.add_argument("--th-s", type=float)
    group.add_argument("--window", type=int)
    group.add_argument("--specular-channel", choices=["saturation", "value"])
    group.add_argument("--lambda", dest="lam", type=float)
    group.add_argument("--eps-huber", type=float)
    group.add_argument("--warps", type=int)
    group.add_argument("--levels", type=int)
    group.add_argument("--inner-iters", type=int)
    group.add_argument("--focal-px", type=float)
    group.add_argument("--baseline-mm", type=float)


def resolve_config(args) -> dict:
    return apply_overrides(load_config(args.config), vars(args))


def display_run_report(report):
    """Print evaluation rows and stage timings."""
    if report.evaluations:
        table = Table(title="Evaluation")
        table.add_column("Stage", style="cyan")
        table.add_column("Mask")
        table.add_column("RMSE (px)", justify="right")
        table.add_column("RMSE (mm)", justify="right")
        table.add_column("Pixels", style="dim", justify="right")
        for stage, reports in report.evaluations.items():
            for r in reports:
                depth = f"{r.rmse_depth_mm:.3f}" if r.rmse_depth_mm is not None else "-"
                table.add_row(
                    stage, MaskMode(r.mask_mode).value, f"{r.rmse_disparity_px:.4f}", depth,
                    str(r.valid_pixel_count),
                )
        console.print(table)
    timings = ", ".join(f"{k} {v:.3f}s" for k, v in report.timings.items())
    console.print(f"[dim]Timings: {timings}[/dim]")


def cmd_refine(args) -> int:
    cfg = PipelineConfig.from_config(
        resolve_config(args),
        PipelinePaths(
            left=args.left,
            right=args.right,
            output=args.output,
            init_disparity=args.init,
            gt_disparity=args.gt,
            gt_depth=args.gt_depth,
            occlusion_mask=args.occlusion,
        ),
    )
    report = run_pipeline(cfg)
    display_run_report(report)
    console.print(f"[green]Wrote {args.output}[/green]")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    sign = cfg["disparity_sign"]
    pred = read_disparity(args.pred)
    gt = read_disparity(args.gt)
    if sign == "negate":
        pred, gt = -pred, -gt
    occlusion = read_mask(args.occlusion) if args.occlusion else None
    gt_depth = read_pfm(args.gt_depth, channels=1) if args.gt_depth else None
    rig = config_module.build_rig(cfg)
    reports = evaluate_disparity(pred, gt, occlusion, rig, gt_depth)

    table = Table(title=f"Evaluation of {Path(args.pred).name}")
    table.add_column("Mask", style="cyan")
    table.add_column("RMSE (px)", justify="right")
    table.add_column("RMSE (mm)", justify="right")
    table.add_column("Pixels", style="dim", justify="right")
    for r in reports:
        depth = f"{r.rmse_depth_mm:.3f}" if r.rmse_depth_mm is not None else "-"
        table.add_row(MaskMode(r.mask_mode).value, f"{r.rmse_disparity_px:.4f}", depth, str(r.valid_pixel_count))
    console.print(table)
    if args.json:
        write_json(args.json, [r.to_dict() for r in reports])
    return EXIT_OK


def cmd_synth(args) -> int:
    scene_data = read_json(args.scene) if args.scene else {}
    if args.seed is not None:
        scene_data["seed"] = args.seed
    spec = SceneSpec.from_dict(scene_data)
    scene = gen_scene(spec)

    init = mask = None
    corruption = None
    if args.corruption:
        corruption = CorruptionSpec.from_dict(read_json(args.corruption))
        init, mask = corrupt_disparity_with_mask(scene.gt_disp, corruption)

    written = export_synthetic_dataset(args.out, scene, init, mask)
    spec_doc = {"scene": spec.to_dict()}
    if corruption is not None:
        spec_doc["corruption"] = corruption.to_dict()
    write_json(Path(args.out) / "scene.json", spec_doc)
    console.print(f"[green]Wrote {len(written) + 1} files to {args.out}[/green]")
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = resolve_config(args)
    configs = load_manifest(args.manifest, cfg, args.output_dir)
    reports = run_batch(configs, args.threads)

    evaluated = []
    for report in reports:
        final = next((s for s in ("gdr", "ldr") if s in report.evaluations), None)
        if final is not None:
            evaluated.extend(report.evaluations[final])
    summary = summarize_reports(evaluated)

    table = Table(title=f"Batch summary ({len(reports)} samples)")
    table.add_column("Mask", style="cyan")
    table.add_column("N", justify="right")
    table.add_column("RMSE (px)", justify="right")
    table.add_column("RMSE (mm)", justify="right")
    for mode, entry in summary.items():
        depth = "-"
        if "rmse_depth_mm_mean" in entry:
            depth = f"{entry['rmse_depth_mm_mean']:.3f} ± {entry['rmse_depth_mm_std']:.3f}"
        table.add_row(
            mode, str(entry["count"]),
            f"{entry['rmse_disparity_px_mean']:.4f} ± {entry['rmse_disparity_px_std']:.4f}", depth,
        )
    console.print(table)

    out_dir = configs[0].paths.output.parent
    write_json(out_dir / "batch_summary.json", {
        "summary": summary,
        "samples": [r.to_dict() for r in reports],
    })
    return EXIT_OK


def cmd_config(args) -> int:
    cfg = resolve_config(args)
    if args.write:
        path = save_config(cfg, args.write if args.write != "-" else None)
        console.print(f"[green]Saved to {path}[/green]")
    else:
        console.print_json(data=cfg)
    return EXIT_OK


def cmd_artifacts(args) -> int:
    display_artifacts(args.directory)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Stereo disparity refinement (local + global)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log to the terminal too")
    sub = parser.add_subparsers(dest="command", required=True)

    refine = sub.add_parser("refine", help="Refine one initial disparity map")
    refine.add_argument("--left", required=True)
    refine.add_argument("--right", required=True)
    refine.add_argument("--init", help="Initial disparity (PFM or 16-bit PNG)")
    refine.add_argument("--output", "-o", required=True, help="Refined disparity PFM")
    refine.add_argument("--gt", help="Ground-truth disparity")
    refine.add_argument("--gt-depth", help="Ground-truth depth PFM (mm)")
    refine.add_argument("--occlusion", help="Occlusion mask PNG (nonzero = occluded)")
    add_override_args(refine)
    refine.set_defaults(func=cmd_refine)

    evaluate = sub.add_parser("eval", help="Score a disparity map against ground truth")
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--gt", required=True)
    evaluate.add_argument("--occlusion")
    evaluate.add_argument("--gt-depth")
    evaluate.add_argument("--json", help="Write the reports to this JSON file")
    add_override_args(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="Generate a synthetic stereo sample")
    synth.add_argument("--scene", help="Scene JSON (SceneSpec fields)")
    synth.add_argument("--corruption", help="Corruption JSON (CorruptionSpec fields)")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out", required=True, help="Output directory")
    synth.set_defaults(func=cmd_synth)

    batch = sub.add_parser("batch", help="Refine every sample of a JSON manifest")
    batch.add_argument("manifest")
    batch.add_argument("--output-dir")
    batch.add_argument("--threads", type=int, help="Overrides DISPREFINE_THREADS")
    add_override_args(batch)
    batch.set_defaults(func=cmd_batch)

    cfg = sub.add_parser("config", help="Show or save the merged configuration")
    cfg.add_argument("--write", nargs="?", const="-", help="Save to FILE (default: user config)")
    add_override_args(cfg)
    cfg.set_defaults(func=cmd_config)

    arts = sub.add_parser("artifacts", help="List refinement outputs in a directory")
    arts.add_argument("directory")
    arts.set_defaults(func=cmd_artifacts)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        console.print(f"[red]Configuration error: {e}[/red]")
        return EXIT_CONFIG
    except (InvalidInputError, FormatError, OSError) as e:
        logger.error(f"Data error: {e}")
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
