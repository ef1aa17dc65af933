"""Command-line entry point.

Subcommands: generate-data, train, eval, count-params, report, grid-search.
Every artifact-producing run writes a reproducibility stamp (config hash,
seed, package version) into its output directory.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .datastore import build_dataset, load_manifest, verify_checksums
from .errors import RfcnetError, UsageError
from .metrics import default_class_names
from .models import build, count_params
from .training import TrainConfig, evaluate, grid_search, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="rfcnet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, out_required=True):
        p.add_argument("--config", type=Path, default=None,
                       help="experiment config file (JSON); default: built-in")
        p.add_argument("--profile", default="full", choices=["full", "tiny"],
                       help="config profile to apply")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if out_required:
            p.add_argument("--out", type=Path, required=True,
                           help="output directory")

    p = sub.add_parser("generate-data", help="generate the benchmark dataset")
    common(p)
    p.add_argument("--workers", type=int, default=1,
                   help="parallel sequence generators")
    p.add_argument("--mnist-dir", default=None,
                   help="directory with the four IDX files (for glyph_source=mnist)")
    p.add_argument("--verify", action="store_true",
                   help="re-hash shards against the manifest after writing")

    p = sub.add_parser("train", help="train one named model spec")
    common(p)
    p.add_argument("--spec", required=True, help="model name from the config zoo")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--device", default=None, help="override train.device")
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--init-from", type=Path, default=None,
                   help="warm-start shared weights from an existing checkpoint")

    p = sub.add_parser("eval", help="evaluate a checkpoint on dataset splits")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", action="append", required=True,
                   help="split name; repeat for several (e.g. test, clean_test)")
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("count-params", help="print parameter tables for model specs")
    p.add_argument("--spec", required=True,
                   help="model name from the config zoo, or 'all'")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--profile", default="full", choices=["full", "tiny"])

    p = sub.add_parser("report", help="write per-class IoU tables for a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plots", action="store_true",
                   help="also write bar-chart images (needs matplotlib)")

    p = sub.add_parser("grid-search", help="train every cell of the config grid")
    common(p)
    p.add_argument("--spec", required=True, help="base model name")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--budget", type=int, default=None,
                   help="max epochs per grid cell")
    return parser


def _stamp(out_dir: Path, config: ExperimentConfig, seed: int, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_stamp.json").write_text(json.dumps({
        "command": command,
        "config_sha256": config.config_hash(),
        "seed": seed,
        "rfcnet_version": __version__,
        "argv": sys.argv[1:],
    }, indent=2))


def _resolve_train_config(config: ExperimentConfig, args) -> TrainConfig:
    train_cfg = config.train
    if args.seed is not None:
        train_cfg.seed = args.seed
    if getattr(args, "device", None):
        train_cfg.device = args.device
    if getattr(args, "max_epochs", None):
        train_cfg.max_epochs = args.max_epochs
    return train_cfg


def _cmd_generate_data(args) -> int:
    config = load_config(args.config, args.profile)
    seed = args.seed if args.seed is not None else config.train.seed

    def progress(split, count, samples):
        print(f"generating {split}: {count} sequences")
        return samples

    _stamp(args.out, config, seed, "generate-data")
    manifest = build_dataset(config.scene, seed, args.out, splits=config.splits,
                             shard_size=config.shard_size,
                             quantized=config.quantized, workers=args.workers,
                             mnist_dir=args.mnist_dir, progress=progress)
    if args.verify:
        verify_checksums(manifest)
        print("checksums verified")
    total = sum(config.splits.values())
    print(f"wrote {total} sequences to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config, args.profile)
    if args.spec not in config.model_specs:
        raise UsageError(f"unknown model spec {args.spec!r} "
                         f"(have {sorted(config.model_specs)})")
    spec = config.model_specs[args.spec]
    manifest = load_manifest(args.data)
    train_cfg = _resolve_train_config(config, args)
    _stamp(args.out, config, train_cfg.seed, "train")
    result = train(spec, manifest, train_cfg, args.out, init_from=args.init_from)
    print(f"best val mIoU {result.best_val_miou:.4f} at epoch {result.best_epoch} "
          f"({result.epochs_run} epochs run)")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.data)
    for split in args.split:
        report = evaluate(args.checkpoint, manifest, split,
                          batch_size=args.batch_size)
        print(report.format_table())
        print()
    return 0


def _cmd_count_params(args) -> int:
    config = load_config(args.config, args.profile)
    names = sorted(config.model_specs) if args.spec == "all" else [args.spec]
    for name in names:
        if name not in config.model_specs:
            raise UsageError(f"unknown model spec {name!r}")
    print(f"{'model':<12s} {'total':>12s} {'features':>12s} {'filters':>12s} "
          f"{'upsampling':>12s} {'classifier':>12s}")
    for name in names:
        net = build(config.model_specs[name])
        rep = count_params(net)
        g = rep.groups
        print(f"{name:<12s} {rep.total:>12,d} {g['feature_extractor']:>12,d} "
              f"{g['filter_modules']:>12,d} {g['upsampling']:>12,d} "
              f"{g['classifier']:>12,d}")
    return 0


def _cmd_report(args) -> int:
    manifest = load_manifest(args.data)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for split in ("test", "clean_test"):
        if split not in manifest.shards:
            continue
        report = evaluate(args.checkpoint, manifest, split)
        reports[split] = report
        (args.out / f"iou_{split}.txt").write_text(report.format_table() + "\n")
        print(report.format_table())
        print()
    (args.out / "report.json").write_text(json.dumps({
        split: {"mean_iou": r.mean_iou, "per_class_iou": r.per_class_iou}
        for split, r in reports.items()
    }, indent=2))
    if args.plots:
        _write_plots(reports, args.out)
    return 0


def _write_plots(reports, out_dir: Path) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping plots", file=sys.stderr)
        return
    names = default_class_names()
    for split, report in reports.items():
        fig, ax = plt.subplots(figsize=(8, 3.5))
        ax.bar(range(len(report.per_class_iou)), report.per_class_iou)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("IoU")
        ax.set_title(f"{split}: mean IoU {report.mean_iou:.3f}")
        fig.tight_layout()
        fig.savefig(out_dir / f"iou_{split}.png", dpi=120)
        plt.close(fig)


def _cmd_grid_search(args) -> int:
    config = load_config(args.config, args.profile)
    if args.spec not in config.model_specs:
        raise UsageError(f"unknown model spec {args.spec!r}")
    if not config.grid:
        raise UsageError("config has no 'grid' section")
    manifest = load_manifest(args.data)
    train_cfg = _resolve_train_config(config, args)
    _stamp(args.out, config, train_cfg.seed, "grid-search")
    results = grid_search(config.model_specs[args.spec], config.grid, manifest,
                          train_cfg, args.out, budget_epochs=args.budget)
    print(f"{'rank':<5s} {'val mIoU':>9s}  cell")
    for rank, record in enumerate(results, 1):
        print(f"{rank:<5d} {record['best_val_miou']:>9.4f}  {record['cell']}")
    return 0


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "count-params": _cmd_count_params,
    "report": _cmd_report,
    "grid-search": _cmd_grid_search,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except RfcnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
