"""``dermaug`` command line: pca-fit, split, augment, balance, eval, contact-sheet.

Exit codes: 0 success, 1 usage error, 2 data or IO error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

from . import color, committee, dataset, pipeline, preview
from .errors import DermaugError, DermaugIOError, ManifestError
from .imagecore import load_image, save_image
from .rng import SeedContext

log = logging.getLogger("dermaug")

WORKERS_ENV = "DERMAUG_WORKERS"
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _ops(text: str) -> List[str]:
    ops = [o.strip() for o in text.split(",") if o.strip()]
    bad = [o for o in ops if o not in pipeline.OPS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown ops {bad}; choose from {','.join(pipeline.OPS)}")
    return ops


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dermaug", description="Seeded dermoscopy augmentation and dataset preparation.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    workers = dict(type=_positive, default=_default_workers(),
                   help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
    val_fold = dict(type=_nonneg_int, action="append", default=[], metavar="FOLD",
                    help="fold held out for validation (repeatable)")

    p = sub.add_parser("pca-fit", help="fit the dataset color PCA model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--pixel-stride", type=_positive, default=1)
    p.add_argument("--val-fold", **val_fold)
    p.add_argument("--workers", **workers)

    p = sub.add_parser("split", help="stratified k-fold assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("augment", help="materialize augmented copies of training samples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ops", type=_ops, default=list(pipeline.OPS), help="comma list from crop,d4,color,warp")
    p.add_argument("--crops-per-image", type=_nonneg_int, default=3)
    p.add_argument("--colors-per-image", type=_nonneg_int, default=1)
    p.add_argument("--warps-per-image", type=_nonneg_int, default=1)
    p.add_argument("--pca-model")
    p.add_argument("--sigma", type=_nonneg_float, default=color.SIGMA)
    p.add_argument("--max-frac", type=_nonneg_float, default=0.2)
    p.add_argument("--warp-reg", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--val-fold", **val_fold)
    p.add_argument("--workers", **workers)

    p = sub.add_parser("balance", help="plan and materialize class-balanced subsets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", choices=["partition", "oversample"], default="partition")
    p.add_argument("--pca-model")
    p.add_argument("--sigma", type=_nonneg_float, default=color.SIGMA)
    p.add_argument("--max-frac", type=_nonneg_float, default=0.2)
    p.add_argument("--warp-reg", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--val-fold", **val_fold)
    p.add_argument("--workers", **workers)

    p = sub.add_parser("eval", help="average committee predictions and score them")
    p.add_argument("--pred", nargs="+", required=True, metavar="CSV")
    p.add_argument("--truth", required=True)
    p.add_argument("--report-out", required=True)
    p.add_argument("--committee-out", help="also write the averaged predictions")
    p.add_argument("--threshold", type=float, default=committee.THRESHOLD)

    p = sub.add_parser("contact-sheet", help="tile manifest images into one preview")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-image", required=True)
    p.add_argument("--rows", type=_positive, required=True)
    p.add_argument("--cols", type=_positive, required=True)
    return parser


# --------------------------------------------------------------------------
# commands

def _image_stats(path: str, stride: int) -> color.ColorStats:
    return color.ColorStats().update_image(load_image(path), stride)


def _stats_star(args):
    return _image_stats(*args)


def cmd_pca_fit(args) -> None:
    records = dataset.read_manifest(args.manifest)
    val = set(args.val_fold)
    train = sorted((r for r in records if r.fold is None or r.fold not in val), key=lambda r: r.id)
    jobs = [(r.image, args.pixel_stride) for r in train]
    if args.workers > 1 and len(jobs) > 1:
        import multiprocessing
        with ProcessPoolExecutor(args.workers, mp_context=multiprocessing.get_context("spawn")) as pool:
            partials = list(pool.map(_stats_star, jobs))
    else:
        partials = [_image_stats(*j) for j in jobs]
    total = color.ColorStats()
    for part in partials:          # ascending sample id
        total.merge(part)
    model = total.to_model()
    color.save_model(model, args.model_out)
    log.info("color model from %d pixels of %d images: lambda=%s", model.pixel_count, len(train),
             " ".join(f"{v:.6g}" for v in model.eigenvalues))


def cmd_split(args) -> None:
    if args.k < 2:
        raise UsageError(f"--k must be >= 2, got {args.k}")
    records = dataset.read_manifest(args.manifest)
    plan = dataset.stratified_kfold(records, args.k, SeedContext(args.seed, "split"))
    dataset.write_manifest(plan.apply(records), args.out)
    for f in range(plan.k):
        ids = set(plan.fold_ids(f))
        counts = dataset.class_counts([r for r in records if r.id in ids])
        log.info("fold %d: %d samples %s", f, len(ids), counts)


def _options(args) -> pipeline.AugOptions:
    model = color.load_model(args.pca_model) if args.pca_model else None
    return pipeline.AugOptions(model=model, sigma=args.sigma, max_frac=args.max_frac, regularization=args.warp_reg)


def cmd_augment(args) -> None:
    if "color" in args.ops and not args.pca_model:
        raise UsageError("--ops color requires --pca-model")
    if args.max_frac >= 1:
        raise UsageError("--max-frac must be < 1")
    records = dataset.read_manifest(args.manifest)
    plan = pipeline.build_augment_plan(records, args.ops, args.seed, args.crops_per_image,
                                       args.colors_per_image, args.warps_per_image, args.val_fold)
    res = pipeline.materialize(plan, records, args.out_dir, _options(args), args.workers)
    print(f"{len(res.manifests['manifest.jsonl'])} records written, {len(res.skipped)} skipped")


def cmd_balance(args) -> None:
    if args.max_frac >= 1:
        raise UsageError("--max-frac must be < 1")
    records = dataset.read_manifest(args.manifest)
    val = set(args.val_fold)
    train = [r for r in records if r.fold is None or r.fold not in val]
    seed = SeedContext(args.seed, "balance")
    if args.strategy == "oversample":
        plan = dataset.balance_oversample(train, seed)
    else:
        plan = dataset.balance_partition(train, seed)
    if plan.augmentation_count(None) and any(
            a.op == "color" for sub in plan.subsets for e in sub for a in e.augmentations) and not args.pca_model:
        raise UsageError("this balance plan schedules color copies; pass --pca-model")
    res = pipeline.materialize(plan, records, args.out_dir, _options(args), args.workers, args.val_fold)
    for i in range(len(plan.subsets)):
        log.info("subset %d: %s", i, plan.subset_counts(i))
    print(f"{len(plan.subsets)} balanced subsets, {plan.augmentation_count()} augmented copies, "
          f"{len(res.skipped)} skipped")


def cmd_eval(args) -> None:
    members = [committee.read_predictions(p) for p in args.pred]
    truth = committee.read_truth(args.truth)
    preds = committee.aggregate_mean(members)
    report = committee.challenge_score(preds, truth, args.threshold)
    try:
        Path(args.report_out).write_text(report.to_keyvalue(), encoding="utf-8")
    except OSError as exc:
        raise DermaugIOError(f"{args.report_out}: {exc}") from exc
    if args.committee_out:
        committee.write_predictions(preds, args.committee_out)
    print(f"committee of {len(members)} member(s)")
    print(report.to_table(), end="")


def cmd_contact_sheet(args) -> None:
    records = dataset.read_manifest(args.manifest)
    if not records:
        raise ManifestError(f"{args.manifest}: manifest is empty")
    capacity = args.rows * args.cols
    if len(records) > capacity:
        log.warning("%d images in manifest; only the first %d fit a %dx%d sheet",
                    len(records), capacity, args.rows, args.cols)
    images = [load_image(r.image) for r in records[:capacity]]
    save_image(preview.contact_sheet(images, args.rows, args.cols), args.out_image)


COMMANDS = {
    "pca-fit": cmd_pca_fit,
    "split": cmd_split,
    "augment": cmd_augment,
    "balance": cmd_balance,
    "eval": cmd_eval,
    "contact-sheet": cmd_contact_sheet,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.info("config: %s", json.dumps(vars(args), sort_keys=True, default=str))
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dermaug {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DermaugError as exc:
        print(f"dermaug {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
