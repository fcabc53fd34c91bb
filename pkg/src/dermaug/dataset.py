"""Sample manifests, stratified folds and class-balancing plans.

A manifest is UTF-8 JSON Lines, one flat object per sample::

    {"id": "ISIC_0000000", "image": "images/ISIC_0000000.png", "mask": "masks/ISIC_0000000.png",
     "label": "nevus", "fold": 3, "provenance": "original"}

``mask`` and ``fold`` are optional. ``provenance`` is the string ``"original"``
or a compact JSON encoding of the augmentation descriptor that produced the
sample. Relative paths are resolved against the manifest's directory.
"""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import BadKError, DermaugIOError, EmptyClassError, ManifestError, NotFoundError, TooFewSamplesError
from .rng import SeedContext

LABELS = ("melanoma", "nevus", "seborrheic_keratosis")
AUG_CYCLE = ("geometric", "color", "warp")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image: str
    label: str
    mask: Optional[str] = None
    fold: Optional[int] = None
    provenance: Union[str, dict] = "original"

    @property
    def is_original(self) -> bool:
        return self.provenance == "original"


def _label_key(label: str):
    return (LABELS.index(label), label) if label in LABELS else (len(LABELS), label)


def provenance_to_str(prov: Union[str, dict]) -> str:
    if isinstance(prov, str):
        return prov
    return json.dumps(prov, sort_keys=True, separators=(",", ":"))


def provenance_from_str(text: str) -> Union[str, dict]:
    if text.startswith("{"):
        return json.loads(text)
    return text


def record_to_line(rec: SampleRecord, base: Optional[Path] = None) -> str:
    def rel(p: str) -> str:
        if base is None:
            return p
        return Path(os.path.relpath(p, base)).as_posix()

    obj = {"id": rec.id, "image": rel(rec.image)}
    if rec.mask is not None:
        obj["mask"] = rel(rec.mask)
    obj["label"] = rec.label
    if rec.fold is not None:
        obj["fold"] = rec.fold
    obj["provenance"] = provenance_to_str(rec.provenance)
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def record_from_line(line: str, base: Optional[Path] = None, where: str = "") -> SampleRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{where}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}: expected an object")
    for key in ("id", "image", "label"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ManifestError(f"{where}: missing or non-string {key!r}")
    if obj["label"] not in LABELS:
        raise ManifestError(f"{where}: unknown label {obj['label']!r}")
    fold = obj.get("fold")
    if fold is not None and (not isinstance(fold, int) or isinstance(fold, bool) or fold < 0):
        raise ManifestError(f"{where}: fold must be a non-negative integer")
    mask = obj.get("mask")
    if mask is not None and not isinstance(mask, str):
        raise ManifestError(f"{where}: mask must be a string path")
    prov = obj.get("provenance", "original")
    if not isinstance(prov, str):
        raise ManifestError(f"{where}: provenance must be a string")
    try:
        prov = provenance_from_str(prov)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{where}: bad provenance descriptor") from exc

    def resolve(p):
        if p is None or base is None:
            return p
        return str(base / p)

    return SampleRecord(obj["id"], resolve(obj["image"]), obj["label"], resolve(mask), fold, prov)


def check_unique(records: Sequence[SampleRecord]) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise ManifestError(f"duplicate sample id {r.id!r}")
        seen.add(r.id)


def read_manifest(path) -> List[SampleRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise NotFoundError(f"{path}: no such file") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc
    base = path.resolve().parent
    records = [
        record_from_line(line, base, f"{path}:{i}")
        for i, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]
    check_unique(records)
    return records


def write_manifest(records: Sequence[SampleRecord], path) -> None:
    path = Path(path)
    base = path.resolve().parent
    body = "".join(record_to_line(r, base) + "\n" for r in records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(body, encoding="utf-8")
    except OSError as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc


def class_counts(records: Sequence[SampleRecord]) -> Dict[str, int]:
    return dict(Counter(r.label for r in records))


def _by_class(records: Sequence[SampleRecord]) -> Dict[str, List[str]]:
    groups: Dict[str, List[str]] = {}
    for r in records:
        groups.setdefault(r.label, []).append(r.id)
    return {lab: sorted(groups[lab]) for lab in sorted(groups, key=_label_key)}


# --------------------------------------------------------------------------
# folds

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: Dict[str, int]
    seed: int

    def fold_ids(self, fold: int) -> List[str]:
        return sorted(i for i, f in self.assignment.items() if f == fold)

    def apply(self, records: Sequence[SampleRecord]) -> List[SampleRecord]:
        return [replace(r, fold=self.assignment[r.id]) for r in records]


def stratified_kfold(records: Sequence[SampleRecord], k: int, seed: SeedContext) -> FoldPlan:
    """Shuffle each class by seed, then deal one continuous round-robin.

    The deal position carries over from one class to the next (classes in
    label order), so fold totals differ by at most one as well as per-class
    counts.
    """
    if not isinstance(k, int) or k < 2:
        raise BadKError(f"k must be an integer >= 2, got {k!r}")
    check_unique(records)
    assignment: Dict[str, int] = {}
    pos = 0
    for label, ids in _by_class(records).items():
        if len(ids) < k:
            raise TooFewSamplesError(f"class {label!r} has {len(ids)} samples, fewer than k={k}")
        seed.stream(f"stratified_kfold/{label}").shuffle(ids)
        for sid in ids:
            assignment[sid] = pos % k
            pos += 1
    return FoldPlan(k, assignment, seed.master_seed)


# --------------------------------------------------------------------------
# balancing

@dataclass(frozen=True)
class AugSpec:
    """One scheduled augmented copy: operation name and a key unique per source."""

    op: str
    key: str


@dataclass(frozen=True)
class BalanceEntry:
    id: str
    multiplicity: int
    augmentations: Tuple[AugSpec, ...] = ()


@dataclass(frozen=True)
class BalancePlan:
    strategy: str
    subsets: List[List[BalanceEntry]]
    seed: int = 0
    labels: Dict[str, str] = field(default_factory=dict)

    def subset_counts(self, i: int) -> Dict[str, int]:
        counts: Counter = Counter()
        for e in self.subsets[i]:
            counts[self.labels[e.id]] += e.multiplicity
        return dict(counts)

    def augmentation_count(self, label: Optional[str] = None) -> int:
        return sum(
            len(e.augmentations)
            for sub in self.subsets for e in sub
            if label is None or self.labels[e.id] == label
        )

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "subsets": [
                [{"id": e.id, "multiplicity": e.multiplicity,
                  "augmentations": [[a.op, a.key] for a in e.augmentations]} for e in sub]
                for sub in self.subsets
            ],
        }


def _groups_for_balance(records: Sequence[SampleRecord], labels: Sequence[str]) -> Dict[str, List[str]]:
    check_unique(records)
    groups = _by_class(records)
    for lab in labels:
        if not groups.get(lab):
            raise EmptyClassError(f"class {lab!r} has no samples")
    return {lab: groups[lab] for lab in sorted(labels, key=_label_key)}


def _top_up(ids: Sequence[str], target: int, tag: str) -> List[BalanceEntry]:
    """All of ``ids`` plus ``target - len(ids)`` augmented copies.

    Copies are handed out in rounds over ``ids`` (in the given order); round r
    uses operation ``AUG_CYCLE[r % 3]``.
    """
    n = len(ids)
    extra: Dict[str, List[AugSpec]] = {sid: [] for sid in ids}
    for j in range(target - n):
        rnd, idx = divmod(j, n)
        op = AUG_CYCLE[rnd % len(AUG_CYCLE)]
        extra[ids[idx]].append(AugSpec(op, f"{tag}r{rnd}-{op}"))
    return [BalanceEntry(sid, 1 + len(extra[sid]), tuple(extra[sid])) for sid in sorted(ids)]


def balance_oversample(records: Sequence[SampleRecord], seed: SeedContext,
                       labels: Sequence[str] = LABELS) -> BalancePlan:
    """One subset: every class topped up with augmented copies to the majority count."""
    groups = _groups_for_balance(records, labels)
    target = max(len(ids) for ids in groups.values())
    entries: List[BalanceEntry] = []
    for label, ids in groups.items():
        order = seed.stream(f"oversample/{label}").shuffle(list(ids))
        entries.extend(_top_up(order, target, "b0"))
    lab = {r.id: r.label for r in records}
    return BalancePlan("oversample", [sorted(entries, key=lambda e: e.id)], seed.master_seed, lab)


def balance_partition(records: Sequence[SampleRecord], seed: SeedContext,
                      labels: Sequence[str] = LABELS) -> BalancePlan:
    """Split the majority class into m = majority // smallest chunks, one subset each.

    Chunk sizes differ by at most one. In subset s (chunk size T) every other
    class contributes exactly T samples: classes with at least T members give a
    rotating window of T ids from their shuffled order, smaller classes give all
    their ids plus augmented copies.
    """
    groups = _groups_for_balance(records, labels)
    majority = max(groups, key=lambda lab: (len(groups[lab]), -_label_key(lab)[0]))
    n_maj = len(groups[majority])
    n_min = min(len(ids) for ids in groups.values())
    m = max(1, n_maj // n_min)

    orders = {lab: seed.stream(f"partition/{lab}").shuffle(list(ids)) for lab, ids in groups.items()}
    base, rem = divmod(n_maj, m)
    chunks = []
    start = 0
    for s in range(m):
        size = base + (1 if s < rem else 0)
        chunks.append(orders[majority][start:start + size])
        start += size

    subsets = []
    for s, chunk in enumerate(chunks):
        target = len(chunk)
        entries = [BalanceEntry(sid, 1) for sid in chunk]
        for lab, order in orders.items():
            if lab == majority:
                continue
            n = len(order)
            if n >= target:
                off = (s * target) % n
                window = [order[(off + i) % n] for i in range(target)]
                entries.extend(BalanceEntry(sid, 1) for sid in window)
            else:
                entries.extend(_top_up(order, target, f"b{s}"))
        subsets.append(sorted(entries, key=lambda e: e.id))
    lab = {r.id: r.label for r in records}
    return BalancePlan("partition", subsets, seed.master_seed, lab)
