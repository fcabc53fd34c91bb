import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dermaug.committee import (
    PredictionSet,
    aggregate_mean,
    challenge_score,
    read_predictions,
    read_truth,
    roc_auc,
    write_predictions,
)
from dermaug.errors import (
    CorruptHeaderError,
    DegenerateLabelsError,
    EmptyCommitteeError,
    IdSetMismatchError,
    ManifestError,
)

from oracles import pair_auc


def test_aggregate_single_member():
    p = PredictionSet({"a": (0.1, 0.2, 0.7), "b": (0.5, 0.25, 0.25)})
    assert aggregate_mean([p]) == p


def test_aggregate_arithmetic():
    m = [PredictionSet({"a": (v, 0.0, 1.0 - v)}) for v in (0.2, 0.6)]
    assert aggregate_mean(m).entries["a"][0] == pytest.approx(0.4)
    m.append(PredictionSet({"a": (0.7, 0.0, 0.3)}))
    assert aggregate_mean(m).entries["a"][0] == pytest.approx(0.5)


def test_aggregate_permutation_and_idempotence():
    rng = random.Random(1)
    members = [PredictionSet({f"s{i}": tuple(rng.random() for _ in range(3)) for i in range(20)}) for _ in range(4)]
    assert aggregate_mean(members) == aggregate_mean(members[::-1])
    assert aggregate_mean([members[0]] * 3) == members[0]


def test_aggregate_errors():
    with pytest.raises(EmptyCommitteeError):
        aggregate_mean([])
    with pytest.raises(IdSetMismatchError):
        aggregate_mean([PredictionSet({"a": (0, 0, 1)}), PredictionSet({"b": (0, 0, 1)})])


def test_prediction_range():
    with pytest.raises(ValueError):
        PredictionSet({"a": (1.2, 0, 0)})


def test_auc_examples():
    assert roc_auc({"a": 0.9, "b": 0.8, "c": 0.1, "d": 0.2}, {"a", "b"}) == 1.0
    assert roc_auc({k: 0.3 for k in "abcde"}, {"a", "c"}) == 0.5
    scores = {"A": 0.9, "B": 0.4, "C": 0.4, "D": 0.1}
    assert pair_auc(scores, {"A", "C"}) == 0.875
    assert roc_auc(scores, {"A", "C"}) == 0.875


def test_auc_degenerate():
    with pytest.raises(DegenerateLabelsError):
        roc_auc({"a": 0.1, "b": 0.2}, {"a", "b"})
    with pytest.raises(DegenerateLabelsError):
        roc_auc({"a": 0.1, "b": 0.2}, set())


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2 ** 32))
def test_auc_matches_pairs(n, seed):
    rng = random.Random(seed)
    levels = rng.choice([3, 10, 1000])
    scores = {f"x{i}": rng.randrange(levels) / levels for i in range(n)}
    pos = {k for k in scores if rng.random() < 0.5}
    if not pos or len(pos) == n:
        pos = {"x0"} if "x0" not in pos else set(scores) - {"x1"}
    assert roc_auc(scores, pos) == pair_auc(scores, pos)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_auc_monotone_invariance_and_complement(seed):
    rng = random.Random(seed)
    scores = {f"x{i}": rng.randrange(8) / 8 for i in range(30)}
    pos = set(list(scores)[:12])
    auc = roc_auc(scores, pos)
    transformed = {k: math.exp(3 * v) + 7 for k, v in scores.items()}
    assert roc_auc(transformed, pos) == auc
    assert roc_auc(scores, set(scores) - pos) + auc == 1.0


def test_challenge_score_oracle_and_uniform():
    truth = {"a": "melanoma", "b": "nevus", "c": "seborrheic_keratosis", "d": "nevus"}
    onehot = {"melanoma": (1.0, 0.0, 0.0), "seborrheic_keratosis": (0.0, 1.0, 0.0), "nevus": (0.0, 0.0, 1.0)}
    perfect = challenge_score(PredictionSet({k: onehot[v] for k, v in truth.items()}), truth)
    assert perfect.mean_auc == 1.0 and perfect.accuracy == 1.0
    uniform = challenge_score(PredictionSet({k: (1 / 3, 1 / 3, 1 / 3) for k in truth}), truth)
    assert uniform.auc_melanoma == uniform.auc_keratosis == uniform.mean_auc == 0.5


def test_challenge_score_hand_built():
    truth = {"s1": "melanoma", "s2": "melanoma", "s3": "nevus",
             "s4": "seborrheic_keratosis", "s5": "nevus", "s6": "seborrheic_keratosis"}
    preds = PredictionSet({
        "s1": (0.8, 0.1, 0.1), "s2": (0.3, 0.5, 0.2), "s3": (0.3, 0.2, 0.5),
        "s4": (0.6, 0.3, 0.1), "s5": (0.1, 0.3, 0.6), "s6": (0.2, 0.6, 0.2),
    })
    rep = challenge_score(preds, truth)
    mel = {"s1", "s2"}
    ker = {"s4", "s6"}
    exp_m = pair_auc(preds.column(0), mel)
    exp_k = pair_auc(preds.column(1), ker)
    # melanoma: s1 beats all 4 negatives; s2 (0.3) beats s5, s6, ties s3, loses to s4 -> (4+2+0.5)/8
    assert exp_m == 6.5 / 8
    # keratosis: s6 (0.6) beats all; s4 (0.3) beats s1, s3, ties s5, loses to s2 -> (4+2+0.5)/8
    assert exp_k == 6.5 / 8
    assert rep.auc_melanoma == exp_m and rep.auc_keratosis == exp_k
    assert rep.mean_auc == (exp_m + exp_k) / 2
    # threshold 0.5 on p_melanoma: s1 TP, s2 FN, s4 FP, others TN
    assert (rep.sensitivity, rep.specificity, rep.accuracy) == (0.5, 0.75, 4 / 6)


def test_challenge_score_id_mismatch():
    with pytest.raises(IdSetMismatchError):
        challenge_score(PredictionSet({"a": (1, 0, 0)}), {"b": "melanoma"})


def test_csv_round_trip(tmp_path):
    p = PredictionSet({"a": (0.1, 0.2, 0.7), "b": (1.0, 0.0, 0.0)})
    path = tmp_path / "p.csv"
    write_predictions(p, path)
    assert path.read_text().splitlines()[0] == "id,p_melanoma,p_keratosis,p_nevus"
    assert read_predictions(path) == p


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,p1,p2,p3\na,0,0,1\n")
    with pytest.raises(CorruptHeaderError):
        read_predictions(bad)
    bad.write_text("id,p_melanoma,p_keratosis,p_nevus\na,0,0,1.5\n")
    with pytest.raises(ManifestError):
        read_predictions(bad)
    bad.write_text("id,p_melanoma,p_keratosis,p_nevus\na,0,zero,1\n")
    with pytest.raises(ManifestError):
        read_predictions(bad)
    t = tmp_path / "t.csv"
    t.write_text("id,label\na,dog\n")
    with pytest.raises(ManifestError):
        read_truth(t)
