"""Turn fold / augmentation / balancing plans into files on disk.

Every augmented sample is derived from ``SeedContext(master_seed, out_id)``,
so outputs do not depend on job order or worker count. Output layout::

    out_dir/images/<id>.<ext>   out_dir/masks/<id>.<ext>   out_dir/<manifest>.jsonl
"""
from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
import re
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import color, geometric, warp
from .dataset import BalancePlan, FoldPlan, SampleRecord, check_unique, write_manifest
from .errors import DermaugError, DermaugIOError, ManifestError
from .imagecore import check_pair, load_image, load_mask, save_image, save_mask
from .rng import SeedContext

log = logging.getLogger(__name__)

OPS = ("crop", "d4", "color", "warp")

_SAFE = re.compile(r"[^A-Za-z0-9._-]")


def safe_name(sample_id: str) -> str:
    cleaned = _SAFE.sub("_", sample_id)
    if cleaned != sample_id or cleaned in ("", ".", ".."):
        cleaned += "-" + hashlib.blake2b(sample_id.encode("utf-8"), digest_size=4).hexdigest()
    return cleaned


@dataclass(frozen=True)
class AugJob:
    source: SampleRecord
    out_id: str
    op: str                         # crop | d4 | color | warp | geometric
    d4: Optional[geometric.D4Element] = None
    fallback: Optional[str] = None  # op to run instead when a warp is impossible


@dataclass(frozen=True)
class AugmentPlan:
    passthrough: List[SampleRecord]
    jobs: List[AugJob]
    seed: int


@dataclass(frozen=True)
class AugOptions:
    model: Optional[color.ColorPcaModel] = None
    sigma: float = color.SIGMA
    max_frac: float = warp.MAX_FRAC
    regularization: float = 0.0
    min_minor: float = warp.MIN_MINOR_AXIS


@dataclass
class MaterializeResult:
    manifests: Dict[str, List[SampleRecord]]
    skipped: List[Tuple[str, str]] = field(default_factory=list)


def build_augment_plan(records: Sequence[SampleRecord], ops: Sequence[str], seed: int,
                       crops_per_image: int = 3, colors_per_image: int = 1,
                       warps_per_image: int = 1, val_folds: Sequence[int] = ()) -> AugmentPlan:
    """Independent augmentation branches from each training record.

    ``d4`` emits the 7 non-identity group elements (the original is already
    carried through). Records whose fold is in ``val_folds`` are carried
    through untouched.
    """
    unknown = set(ops) - set(OPS)
    if unknown:
        raise ValueError(f"unknown ops: {sorted(unknown)}")
    check_unique(records)
    val = set(val_folds)
    jobs: List[AugJob] = []
    for rec in records:
        if rec.fold is not None and rec.fold in val:
            continue
        if "crop" in ops:
            jobs += [AugJob(rec, f"{rec.id}__crop{j}", "crop") for j in range(crops_per_image)]
        if "d4" in ops:
            jobs += [AugJob(rec, f"{rec.id}__d4-{g.name}", "d4", g) for g in geometric.enumerate_d4()[1:]]
        if "color" in ops:
            jobs += [AugJob(rec, f"{rec.id}__color{j}", "color") for j in range(colors_per_image)]
        if "warp" in ops:
            jobs += [AugJob(rec, f"{rec.id}__warp{j}", "warp") for j in range(warps_per_image)]
    return AugmentPlan(list(records), jobs, seed)


def balance_jobs(plan: BalancePlan, by_id: Dict[str, SampleRecord]) -> List[List[AugJob]]:
    out = []
    for sub in plan.subsets:
        jobs = []
        for entry in sub:
            src = by_id[entry.id]
            for spec in entry.augmentations:
                fb = "geometric" if spec.op == "warp" else None
                jobs.append(AugJob(src, f"{src.id}__{spec.key}", spec.op, fallback=fb))
        out.append(jobs)
    return out


# --------------------------------------------------------------------------
# job execution (runs inside worker processes)

def _load_sample(rec: SampleRecord):
    img = load_image(rec.image)
    mask = None
    if rec.mask is not None:
        mask = load_mask(rec.mask)
        check_pair(img, mask)
    return img, mask


def _geometric(img, mask, seed: SeedContext, prov: dict):
    if mask is not None:
        crop = geometric.sample_crop(img.width, img.height, geometric.lesion_bbox(mask), seed)
        img = geometric.apply_crop(img, crop)
        mask = geometric.crop_mask(mask, crop)
        prov["bbox"] = crop.region.as_list()
    g = geometric.enumerate_d4()[seed.stream("d4").integers(1, 7)]
    prov["rotation"], prov["hflip"] = g.rotation, g.hflip
    return geometric.apply_d4(img, g), (geometric.d4_mask(mask, g) if mask is not None else None)


def _run_op(job: AugJob, img, mask, seed: SeedContext, opts: AugOptions, prov: dict):
    op = job.op
    if op == "crop":
        if mask is None:
            raise DermaugError("crop needs a lesion mask")
        crop = geometric.sample_crop(img.width, img.height, geometric.lesion_bbox(mask), seed)
        prov["bbox"] = crop.region.as_list()
        return geometric.apply_crop(img, crop), geometric.crop_mask(mask, crop)
    if op == "d4":
        prov["rotation"], prov["hflip"] = job.d4.rotation, job.d4.hflip
        return geometric.apply_d4(img, job.d4), (geometric.d4_mask(mask, job.d4) if mask is not None else None)
    if op == "geometric":
        return _geometric(img, mask, seed, prov)
    if op == "color":
        shift = color.sample_color_shift(opts.model, seed, opts.sigma)
        prov["alphas"] = list(shift.alphas)
        prov["delta"] = list(shift.delta)
        return color.apply_color_shift(img, shift), mask
    if op == "warp":
        if mask is None:
            raise DermaugError("warp needs a lesion mask")
        out_img, out_mask, _, pair = warp.lesion_warp(
            img, mask, seed, opts.max_frac, opts.regularization, opts.min_minor)
        prov["source_points"] = [list(p) for p in pair.source]
        prov["target_points"] = [list(p) for p in pair.target]
        prov["deltas"] = list(pair.deltas)
        prov["regularization"] = opts.regularization
        return out_img, out_mask
    raise ValueError(f"unknown op {op!r}")


def execute_job(job: AugJob, seed: int, out_dir: str, opts: AugOptions):
    """Run one job; returns ``(record, None)`` or ``(None, reason)`` when skipped."""
    out = Path(out_dir)
    ctx = SeedContext(seed, job.out_id)
    prov = {"op": job.op, "source": job.source.id, "seed": seed}
    try:
        img, mask = _load_sample(job.source)
        try:
            new_img, new_mask = _run_op(job, img, mask, ctx, opts, prov)
        except DermaugError as exc:
            if job.fallback is None:
                raise
            log.info("%s: %s failed (%s); using %s", job.out_id, job.op, exc, job.fallback)
            prov = {"op": job.fallback, "source": job.source.id, "seed": seed,
                    "fallback_from": job.op, "reason": str(exc)}
            new_img, new_mask = _run_op(replace(job, op=job.fallback), img, mask, ctx, opts, prov)
        name = safe_name(job.out_id)
        img_path = out / "images" / f"{name}.png"
        save_image(new_img, img_path)
        mask_path = None
        if new_mask is not None:
            mask_path = out / "masks" / f"{name}.png"
            save_mask(new_mask, mask_path)
    except DermaugError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    rec = SampleRecord(job.out_id, str(img_path), job.source.label,
                       str(mask_path) if mask_path else None, job.source.fold, prov)
    return rec, None


def _execute_star(args):
    return execute_job(*args)


def run_jobs(jobs: Sequence[AugJob], seed: int, out_dir: Path, opts: AugOptions, workers: int = 1):
    args = [(job, seed, str(out_dir), opts) for job in jobs]
    if workers <= 1 or len(jobs) <= 1:
        return [execute_job(*a) for a in args]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_execute_star, args, chunksize=max(1, len(args) // (4 * workers))))


def copy_original(rec: SampleRecord, out_dir: Path) -> SampleRecord:
    name = safe_name(rec.id)

    def copy(src: str, sub: str) -> str:
        dst = out_dir / sub / (name + Path(src).suffix.lower())
        try:
            shutil.copyfile(src, dst)
        except FileNotFoundError as exc:
            raise DermaugIOError(f"{src}: no such file") from exc
        except OSError as exc:
            raise DermaugIOError(f"{src}: {exc}") from exc
        return str(dst)

    return replace(rec, image=copy(rec.image, "images"), mask=copy(rec.mask, "masks") if rec.mask else None)


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DermaugIOError(f"{out}: {exc}") from exc
    return out


def _collect(jobs, results, skipped) -> List[SampleRecord]:
    made = []
    for job, (rec, reason) in zip(jobs, results):
        if rec is None:
            log.warning("skipped %s: %s", job.out_id, reason)
            skipped.append((job.out_id, reason))
        else:
            made.append(rec)
    return made


def materialize(plan: Union[FoldPlan, AugmentPlan, BalancePlan], records: Sequence[SampleRecord], out_dir,
                opts: AugOptions = AugOptions(), workers: int = 1,
                val_folds: Sequence[int] = ()) -> MaterializeResult:
    """Execute ``plan`` into ``out_dir`` and write the resulting manifest(s).

    * FoldPlan: ``manifest.jsonl`` with folds assigned, files copied.
    * AugmentPlan: ``manifest.jsonl`` with originals followed by augmented copies.
    * BalancePlan: ``subset_XX.jsonl`` per subset plus ``plan.json``; records in
      ``val_folds`` are excluded from the plan's inputs by the caller and are
      written untouched to ``validation.jsonl``.

    Per-sample augmentation failures are logged and reported in ``skipped``.
    """
    check_unique(records)
    out = _prepare(out_dir)
    result = MaterializeResult({})

    if isinstance(plan, FoldPlan):
        recs = [copy_original(r, out) for r in plan.apply(records)]
        write_manifest(recs, out / "manifest.jsonl")
        result.manifests["manifest.jsonl"] = recs
        return result

    if isinstance(plan, AugmentPlan):
        if opts.model is None and any(j.op == "color" for j in plan.jobs):
            raise ValueError("color augmentation requires a PCA model")
        _check_new_ids(records, [j.out_id for j in plan.jobs])
        originals = [copy_original(r, out) for r in plan.passthrough]
        results = run_jobs(plan.jobs, plan.seed, out, opts, workers)
        recs = originals + _collect(plan.jobs, results, result.skipped)
        write_manifest(recs, out / "manifest.jsonl")
        result.manifests["manifest.jsonl"] = recs
        _log_summary(result)
        return result

    if isinstance(plan, BalancePlan):
        val = set(val_folds)
        by_id = {r.id: r for r in records}
        per_subset = balance_jobs(plan, by_id)
        flat = [j for jobs in per_subset for j in jobs]
        if opts.model is None and any(j.op == "color" for j in flat):
            raise ValueError("color augmentation requires a PCA model")
        _check_new_ids(records, [j.out_id for j in flat])
        for job in flat:
            if job.source.fold is not None and job.source.fold in val:
                raise ManifestError(f"{job.source.id} is in a validation fold and cannot be augmented")
        used = sorted({e.id for sub in plan.subsets for e in sub})
        copied = {i: copy_original(by_id[i], out) for i in used}
        results = run_jobs(flat, plan.seed, out, opts, workers)
        made = dict(zip((j.out_id for j in flat), results))
        for s, (sub, jobs) in enumerate(zip(plan.subsets, per_subset)):
            recs = [copied[e.id] for e in sub]
            recs += _collect(jobs, [made[j.out_id] for j in jobs], result.skipped)
            name = f"subset_{s:02d}.jsonl"
            write_manifest(recs, out / name)
            result.manifests[name] = recs
        held_out = [copy_original(r, out) for r in records if r.fold is not None and r.fold in val]
        if held_out:
            write_manifest(held_out, out / "validation.jsonl")
            result.manifests["validation.jsonl"] = held_out
        try:
            (out / "plan.json").write_text(json.dumps(plan.to_json(), indent=1) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DermaugIOError(f"{out / 'plan.json'}: {exc}") from exc
        _log_summary(result)
        return result

    raise TypeError(f"cannot materialize {type(plan).__name__}")


def _check_new_ids(records, new_ids):
    taken = {r.id for r in records}
    for i in new_ids:
        if i in taken:
            raise ManifestError(f"augmented id {i!r} collides with an existing sample")
        taken.add(i)


def _log_summary(result: MaterializeResult):
    total = sum(len(v) for v in result.manifests.values())
    log.info("materialized %d records, %d skipped", total, len(result.skipped))
