"""Committee probability averaging and challenge-style metrics.

Prediction files are CSV with header ``id,p_melanoma,p_keratosis,p_nevus``;
truth files are CSV with header ``id,label``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Mapping, Sequence, Tuple

from .dataset import LABELS
from .errors import (
    CorruptHeaderError,
    DegenerateLabelsError,
    DermaugIOError,
    EmptyCommitteeError,
    IdSetMismatchError,
    ManifestError,
    NotFoundError,
)

PRED_HEADER = ("id", "p_melanoma", "p_keratosis", "p_nevus")
TRUTH_HEADER = ("id", "label")
THRESHOLD = 0.5

Probs = Tuple[float, float, float]


@dataclass(frozen=True)
class PredictionSet:
    entries: Dict[str, Probs]

    def __post_init__(self):
        for sid, probs in self.entries.items():
            if len(probs) != 3:
                raise ValueError(f"{sid}: expected 3 probabilities")
            for p in probs:
                if not (0.0 <= p <= 1.0):
                    raise ValueError(f"{sid}: probability {p!r} outside [0, 1]")

    def ids(self):
        return set(self.entries)

    def column(self, i: int) -> Dict[str, float]:
        return {sid: probs[i] for sid, probs in self.entries.items()}


def aggregate_mean(members: Sequence[PredictionSet]) -> PredictionSet:
    if not members:
        raise EmptyCommitteeError("committee has no members")
    ids = members[0].ids()
    for m in members[1:]:
        if m.ids() != ids:
            raise IdSetMismatchError("committee members cover different ids")
    n = len(members)
    out = {}
    for sid in sorted(ids):
        probs = []
        for c in range(3):
            vals = [m.entries[sid][c] for m in members]
            # fsum is order independent; equal members are returned untouched
            probs.append(vals[0] if vals.count(vals[0]) == n else math.fsum(vals) / n)
        out[sid] = tuple(probs)
    return PredictionSet(out)


def roc_auc(scores: Mapping[str, float], positives: Iterable[str]) -> float:
    """Mann-Whitney AUC with ties counted half, via a sort and tie groups.

    The count is kept in half-pair units as an integer, so the result equals
    direct pair enumeration exactly.
    """
    pos = set(positives)
    unknown = pos - set(scores)
    if unknown:
        raise IdSetMismatchError(f"{len(unknown)} positive ids have no score")
    n_pos = len(pos)
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("need at least one positive and one negative")

    ranked = sorted(scores.items(), key=lambda kv: kv[1])
    twice_u = 0          # 2 * (concordant + 0.5 * tied)
    neg_below = 0
    i = 0
    while i < len(ranked):
        j = i
        while j < len(ranked) and ranked[j][1] == ranked[i][1]:
            j += 1
        p = sum(1 for sid, _ in ranked[i:j] if sid in pos)
        q = (j - i) - p
        twice_u += 2 * p * neg_below + p * q
        neg_below += q
        i = j
    return twice_u / (2 * n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    auc_melanoma: float
    auc_keratosis: float
    mean_auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    threshold: float = THRESHOLD
    n: int = 0

    def as_dict(self) -> Dict[str, float]:
        return {
            "auc_melanoma": self.auc_melanoma,
            "auc_keratosis": self.auc_keratosis,
            "mean_auc": self.mean_auc,
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "n": self.n,
        }

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.as_dict().items())

    def to_table(self) -> str:
        rows = [
            ("AUC melanoma vs rest", self.auc_melanoma),
            ("AUC keratosis vs rest", self.auc_keratosis),
            ("Score (mean AUC)", self.mean_auc),
            (f"Melanoma accuracy @ {self.threshold:g}", self.accuracy),
            (f"Melanoma sensitivity @ {self.threshold:g}", self.sensitivity),
            (f"Melanoma specificity @ {self.threshold:g}", self.specificity),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  ------"]
        lines += [f"{name.ljust(width)}  {val:.4f}" for name, val in rows]
        lines.append(f"{'samples'.ljust(width)}  {self.n}")
        return "\n".join(lines) + "\n"


def challenge_score(preds: PredictionSet, truth: Mapping[str, str], threshold: float = THRESHOLD) -> MetricsReport:
    """Per-task AUCs (melanoma, keratosis), their mean, and melanoma threshold metrics."""
    if preds.ids() != set(truth):
        raise IdSetMismatchError("prediction and truth ids differ")
    mel = {sid for sid, lab in truth.items() if lab == "melanoma"}
    ker = {sid for sid, lab in truth.items() if lab == "seborrheic_keratosis"}
    auc_m = roc_auc(preds.column(0), mel)
    auc_k = roc_auc(preds.column(1), ker)

    tp = fp = tn = fn = 0
    for sid, probs in preds.entries.items():
        called = probs[0] >= threshold
        if sid in mel:
            tp += called
            fn += not called
        else:
            fp += called
            tn += not called
    n = tp + fp + tn + fn
    return MetricsReport(
        auc_melanoma=auc_m,
        auc_keratosis=auc_k,
        mean_auc=(auc_m + auc_k) / 2,
        accuracy=(tp + tn) / n,
        sensitivity=tp / (tp + fn),
        specificity=tn / (tn + fp),
        threshold=threshold,
        n=n,
    )


# --------------------------------------------------------------------------
# CSV IO

def _read_csv(path, header: Tuple[str, ...]):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                head = next(reader)
            except StopIteration:
                raise CorruptHeaderError(f"{path}: empty file") from None
            if tuple(h.strip() for h in head) != header:
                raise CorruptHeaderError(f"{path}: expected header {','.join(header)}")
            rows = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise NotFoundError(f"{path}: no such file") from exc
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc
    for n, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ManifestError(f"{path}:{n}: expected {len(header)} fields")
    return rows


def read_predictions(path) -> PredictionSet:
    entries = {}
    for n, row in enumerate(_read_csv(path, PRED_HEADER), start=2):
        sid = row[0].strip()
        if sid in entries:
            raise ManifestError(f"{path}:{n}: duplicate id {sid!r}")
        try:
            probs = tuple(float(v) for v in row[1:])
        except ValueError as exc:
            raise ManifestError(f"{path}:{n}: {exc}") from exc
        if not all(0.0 <= p <= 1.0 for p in probs):
            raise ManifestError(f"{path}:{n}: probabilities must lie in [0, 1]")
        entries[sid] = probs
    return PredictionSet(entries)


def write_predictions(preds: PredictionSet, path) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PRED_HEADER)
            for sid in sorted(preds.entries):
                w.writerow([sid] + [repr(p) for p in preds.entries[sid]])
    except OSError as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc


def read_truth(path) -> Dict[str, str]:
    truth = {}
    for n, row in enumerate(_read_csv(path, TRUTH_HEADER), start=2):
        sid, label = row[0].strip(), row[1].strip()
        if label not in LABELS:
            raise ManifestError(f"{path}:{n}: unknown label {label!r}")
        if sid in truth:
            raise ManifestError(f"{path}:{n}: duplicate id {sid!r}")
        truth[sid] = label
    return truth
