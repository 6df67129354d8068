import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drgr.envsim import EnvState, MFModel, build_lookup, predict_reward
from drgr.evalkit import (
    METRICS_COLUMNS,
    TestCase,
    build_test_cases,
    compare_table,
    evaluate,
    mf_oracle_ranker,
    ndcg_at_k,
    popularity_ranker,
    random_ranker,
    recall_at_k,
    training_histories,
    write_metrics,
)


def brute_force(ranked, positive, k):
    """Walk every position; a hit inside the cutoff scores 1 and 1/log2(position + 1)."""
    recall, ndcg = 0.0, 0.0
    position = 0
    for item in ranked:
        position += 1
        if position > k:
            break
        if item == positive:
            recall = 1.0
            ndcg = 1.0 / math.log2(1 + position)
    return recall, ndcg


def test_metric_examples():
    ranked = list(range(1, 11))
    assert recall_at_k(ranked, 1, 5) == 1
    assert recall_at_k(ranked, 6, 5) == 0
    assert recall_at_k(ranked, 5, 5) == 1
    assert ndcg_at_k(ranked, 1, 5) == 1.0
    assert ndcg_at_k(ranked, 3, 5) == 0.5
    assert ndcg_at_k(ranked, 7, 5) == 0.0
    with pytest.raises(ValueError):
        recall_at_k(ranked, 1, 0)
    with pytest.raises(ValueError):
        ndcg_at_k(ranked, 1, -1)


def test_brute_force_equivalence_on_random_small_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        ranked = rng.permutation(100)[:n].tolist()
        positive = int(rng.choice(ranked))
        k = int(rng.integers(1, 12))
        r, d = brute_force(ranked, positive, k)
        assert recall_at_k(ranked, positive, k) == r
        assert ndcg_at_k(ranked, positive, k) == d
        case = TestCase(0, positive, tuple(x for x in ranked if x != positive))
        rep = evaluate(lambda c, ranked=ranked: ranked, [case], (k,))
        assert rep.recall(k) == r
        assert rep.ndcg(k) == d


def perfect(case):
    return case.candidates.tolist()


def worst(case):
    return case.candidates.tolist()[::-1]


def cases(n, n_neg=100, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for g in range(n):
        items = rng.permutation(1000)[: n_neg + 1]
        out.append(TestCase(g, int(items[0]), tuple(int(x) for x in items[1:])))
    return out


def test_oracle_and_adversarial_rankers():
    cs = cases(20)
    best = evaluate(perfect, cs)
    bad = evaluate(worst, cs)
    for k in (5, 10, 20):
        assert best.recall(k) == best.ndcg(k) == 1.0
        assert bad.recall(k) == bad.ndcg(k) == 0.0


def test_empty_case_list_rejected():
    with pytest.raises(ValueError):
        evaluate(perfect, [])


def test_random_ranker_calibration():
    n = 20_000
    rep = evaluate(random_ranker(11), cases(n))
    for k in (5, 10, 20):
        p = k / 101
        assert abs(rep.recall(k) - p) < 3 * math.sqrt(p * (1 - p) / n)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_report_invariants_hold_for_any_ranker(seed):
    rep = evaluate(random_ranker(seed), cases(30, seed=seed))
    assert rep.recall(5) <= rep.recall(10) <= rep.recall(20)
    assert rep.ndcg(5) <= rep.ndcg(10) <= rep.ndcg(20)
    for k in (5, 10, 20):
        assert rep.ndcg(k) <= rep.recall(k)


def test_popularity_ranker():
    train = pd.DataFrame({
        "group_id": [0] * 12 + [1],
        "item_id": [7] * 10 + [3] * 2 + [9],
        "label": [1] * 12 + [0],
        "timestamp": range(13),
    })
    rank = popularity_ranker(train)
    case = TestCase(0, 9, (3, 7, 5, 1))
    assert rank(case) == [7, 3, 1, 5, 9]
    assert rank(case) == rank(case)


def test_mf_oracle_agrees_with_predicted_reward():
    rng = np.random.default_rng(0)
    model = MFModel(rng.normal(size=(2, 3)), rng.normal(size=(30, 3)), np.zeros(2), np.zeros(30), np.array(0.0))
    train = pd.DataFrame({"group_id": [1], "item_id": [4], "label": [0], "timestamp": [1]})
    case = TestCase(1, 4, tuple(range(5, 25)))
    ranked = mf_oracle_ranker(model, train)(case)
    lookup = build_lookup(train)
    scores = [predict_reward(model, 1, i, lookup)[0] for i in ranked]
    assert scores == sorted(scores, reverse=True)
    assert scores[ranked.index(4)] == -1.0


def test_test_cases_use_training_history_only():
    train = pd.DataFrame({
        "group_id": [0] * 7 + [1] * 2,
        "item_id": [10, 11, 12, 13, 14, 15, 16, 20, 21],
        "label": [1, 1, 1, 1, 1, 1, 0, 1, 1],
        "timestamp": [1, 2, 3, 4, 5, 6, 7, 1, 2],
    })
    held = pd.DataFrame({
        "group_id": [0, 0, 1],
        "item_id": [30, 31, 32],
        "label": [1, 0, 1],
        "timestamp": [9, 9, 9],
    })
    negs = {(0, 30): (1, 2), (0, 31): (3, 4), (1, 32): (5, 6)}
    out, skipped = build_test_cases(held, negs, train, 5)
    assert skipped == 1
    assert len(out) == 1
    assert out[0].state == EnvState(0, (11, 12, 13, 14, 15))
    assert training_histories(train, 5) == {0: (11, 12, 13, 14, 15)}


def test_positive_among_negatives_is_an_error():
    train = pd.DataFrame({"group_id": [0] * 5, "item_id": range(5), "label": 1, "timestamp": range(5)})
    held = pd.DataFrame({"group_id": [0], "item_id": [9], "label": [1], "timestamp": [9]})
    with pytest.raises(ValueError):
        build_test_cases(held, {(0, 9): (9, 8)}, train, 5)


def test_evaluation_does_not_mutate_cases():
    cs = cases(5)
    snapshot = [(c.group_id, c.positive_item, c.negatives) for c in cs]
    evaluate(random_ranker(0), cs)
    assert [(c.group_id, c.positive_item, c.negatives) for c in cs] == snapshot


def test_metrics_csv_and_compare_table(tmp_path):
    cs = cases(10)
    reps = [evaluate(perfect, cs, name="oracle"), evaluate(worst, cs, name="random", skipped=3)]
    df = write_metrics(reps, tmp_path / "metrics.csv")
    back = pd.read_csv(tmp_path / "metrics.csv")
    assert list(back.columns) == METRICS_COLUMNS
    assert len(df) == 12
    assert set(back.loc[back.ranker == "random", "skipped"]) == {3}
    table = compare_table(back)
    assert list(table.columns) == ["ranker", "R@5", "R@10", "R@20", "N@5", "N@10", "N@20"]
    assert table["ranker"].tolist() == ["oracle", "random"]
