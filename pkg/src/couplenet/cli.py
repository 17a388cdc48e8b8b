"""Command-line entry point.

Subcommands: gen-data, train, eval, gradcheck, ablate, infer.  Every run
writes its fully resolved configuration next to its outputs so it can be
reproduced exactly.  Exit codes: 0 success, 1 validation error, 2 runtime
failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig

OUT_ROOT_ENV = "COUPLENET_OUT"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; remap to the validation exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _out_dir(args, command):
    if args.out:
        path = Path(args.out)
    else:
        path = Path(os.environ.get(OUT_ROOT_ENV, "runs")) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args):
    """Config file (if given) + CLI overrides -> validated RunConfig."""
    data = {}
    if args.config:
        with open(args.config) as f:
            data = json.load(f)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    coupling = dict(data.get("coupling", {}))
    if getattr(args, "coupling", None):
        coupling["strategy"] = args.coupling
    if getattr(args, "norm", None):
        coupling["normalization"] = args.norm
    if getattr(args, "branches", None):
        coupling["branches"] = args.branches
    if coupling:
        data["coupling"] = coupling
    if getattr(args, "context", None):
        data["context"] = args.context == "on"
    if getattr(args, "k", None) is not None:
        data.setdefault("model", {})["k"] = args.k
    if getattr(args, "scales", None):
        scales = [float(s) for s in args.scales.split(",")]
        data.setdefault("train", {})["scales"] = scales
    return RunConfig.from_dict(data)


def _write_config(cfg, out_dir):
    cfg.save(out_dir / "config.json")


def cmd_gen_data(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, "gen-data")
    manifest = cfg.make_manifest()
    (out_dir / "manifest.json").write_text(manifest.to_json())
    if args.render:
        from .ppm import write_pgm
        n = min(args.render, manifest.split_size("train"))
        for i in range(n):
            write_pgm(out_dir / f"train_{i:04d}.pgm",
                      manifest.image("train", i)[0, 0])
    _write_config(cfg, out_dir)
    print(f"wrote manifest ({manifest.num_train} train / {manifest.num_test} "
          f"test scenes) to {out_dir}")
    return 0


def cmd_train(args):
    from .train import DivergenceError, run_training

    cfg = _load_config(args)
    out_dir = _out_dir(args, "train")
    model = cfg.make_model()
    manifest = cfg.make_manifest()
    _write_config(cfg, out_dir)
    log_path = out_dir / "metrics.jsonl"
    with open(log_path, "w") as log_file:
        def progress(entry):
            log_file.write(json.dumps(entry) + "\n")
            if entry["iteration"] % 100 == 0 or "val_map" in entry:
                print(json.dumps(entry), flush=True)

        try:
            run_training(manifest, model, cfg.train_config(), seed=cfg.seed,
                         progress=progress)
        except DivergenceError as exc:
            print(f"training diverged: {exc}", file=sys.stderr)
            return 2
    ckpt_path = out_dir / "checkpoint.cpnt"
    save_checkpoint(ckpt_path, model.param_dict(), cfg.to_dict())
    print(f"saved checkpoint to {ckpt_path}")
    return 0


def cmd_eval(args):
    from .evaluate import evaluate_model

    cfg = _load_config(args)
    out_dir = _out_dir(args, "eval")
    params, ckpt_cfg = load_checkpoint(args.checkpoint)
    if not args.config and isinstance(ckpt_cfg, dict):
        cfg = RunConfig.from_dict(ckpt_cfg)
    model = cfg.make_model()
    model.load_param_dict(params)
    manifest = cfg.make_manifest()
    ev = cfg.eval
    metrics = evaluate_model(model, manifest, args.split, cfg.proposal_config(),
                             seed=cfg.seed, iou_thresh=ev["iou_thresh"],
                             score_thresh=ev["score_thresh"],
                             nms_thresh=ev["nms_thresh"])
    _write_config(cfg, out_dir)
    (out_dir / "eval.json").write_text(json.dumps(metrics, indent=1,
                                                  sort_keys=True) + "\n")
    print(f"mAP@{ev['iou_thresh']}: {metrics['map']:.4f}")
    for c, ap in sorted(metrics["per_class_ap"].items()):
        print(f"  class {c}: AP {ap:.4f}")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import run_gradcheck

    results = run_gradcheck(scope=args.scope, seed=args.seed or 2024,
                            corrupt=args.corrupt)
    if not results:
        print(f"no gradcheck suite matches scope {args.scope!r}",
              file=sys.stderr)
        return 1
    all_passed = True
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{r['suite']:12s} max_rel_err {r['max_rel_err']:.3e} "
              f"tol {r['tolerance']:g} {status} ({r['seconds']:.2f}s)")
        all_passed &= r["passed"]
    return 0 if all_passed else 2


def cmd_ablate(args):
    from .ablation import grid_cells, render_csv, render_markdown, run_grid, \
        summarize

    cfg = _load_config(args)
    out_dir = _out_dir(args, "ablate")
    seeds = [int(s) for s in args.seeds.split(",")]
    cells = grid_cells(include_baselines=not args.no_baselines)
    if args.cells:
        wanted = args.cells.split(",")
        by_name = {c.name: c for c in cells}
        unknown = [w for w in wanted if w not in by_name]
        if unknown:
            raise ConfigError(f"unknown grid cells: {unknown}; "
                              f"choose from {sorted(by_name)}")
        cells = [by_name[w] for w in wanted]
    _write_config(cfg, out_dir)
    results = run_grid(cfg, seeds, cells=cells, workers=args.workers,
                       progress=lambda r: print(
                           f"{r['cell']} seed {r['seed']}: "
                           f"{r['status']} "
                           f"{'' if r['map'] is None else format(r['map'], '.2f')}",
                           flush=True))
    summary = summarize(results)
    report = render_markdown(summary, seeds)
    (out_dir / "ablation.md").write_text(report)
    (out_dir / "ablation.csv").write_text(render_csv(results))
    print(report)
    return 0


def cmd_infer(args):
    from .evaluate import detect_scene
    from .ppm import overlay_detections, write_ppm

    cfg = _load_config(args)
    out_dir = _out_dir(args, "infer")
    if not os.path.exists(args.checkpoint):
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 1
    params, ckpt_cfg = load_checkpoint(args.checkpoint)
    if not args.config and isinstance(ckpt_cfg, dict):
        cfg = RunConfig.from_dict(ckpt_cfg)
    model = cfg.make_model()
    model.load_param_dict(params)
    manifest = cfg.make_manifest()
    scene = manifest.scene(args.split, args.index)
    image = manifest.image(args.split, args.index)
    ev = cfg.eval
    dets = detect_scene(model, image, scene, cfg.proposal_config(),
                        seed=cfg.seed, image_id=args.index,
                        score_thresh=args.score_thresh,
                        nms_thresh=ev["nms_thresh"])
    _write_config(cfg, out_dir)
    det_records = [{"class_id": d.class_id, "score": d.score,
                    "box": list(d.box)} for d in dets]
    (out_dir / "detections.json").write_text(
        json.dumps(det_records, indent=1, sort_keys=True) + "\n")
    write_ppm(out_dir / "overlay.ppm", overlay_detections(image[0, 0], dets))
    print(f"{len(dets)} detections written to {out_dir}")
    return 0


def build_parser():
    parser = _Parser(prog="couplenet",
                     description="Two-branch detection head: dataset "
                                 "generation, training, evaluation, gradient "
                                 "checks, ablation, inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, overrides=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", help=f"output directory (default: "
                                     f"${OUT_ROOT_ENV}/<command>)")
        if overrides:
            p.add_argument("--coupling", choices=["sum", "prod", "max"])
            p.add_argument("--norm", choices=["none", "l2", "conv"])
            p.add_argument("--branches", choices=["local", "global", "both"])
            p.add_argument("--context", choices=["on", "off"])
            p.add_argument("--k", type=int)
            p.add_argument("--scales", help="comma-separated training scales")

    p = sub.add_parser("gen-data", help="write a dataset manifest (+renders)")
    common(p)
    p.add_argument("--render", type=int, default=0, metavar="N",
                   help="also render the first N training scenes as PGM")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model, save a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (mAP)")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    common(p, overrides=False)
    p.add_argument("--scope", help="only run suites whose name contains this")
    p.add_argument("--corrupt", action="store_true",
                   help=argparse.SUPPRESS)  # sensitivity test hook
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="normalization x coupling grid")
    common(p)
    p.add_argument("--seeds", default="1,2,3",
                   help="comma-separated training seeds")
    p.add_argument("--cells", help="comma-separated cell names to restrict "
                                   "the grid (e.g. 'none+sum,l2+sum')")
    p.add_argument("--no-baselines", action="store_true",
                   help="skip the single-branch baseline rows")
    p.add_argument("--workers", type=int, default=1,
                   help="process-pool width for grid cells")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer", help="run detection on one scene")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--score-thresh", type=float, default=0.6)
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, IsADirectoryError,
            PermissionError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
