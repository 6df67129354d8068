"""Top-K evaluation: Recall@K and NDCG@K over positive + sampled-negative lists."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .envsim import EnvState, MFModel, build_lookup, predict_reward

DEFAULT_KS = (5, 10, 20)
METRICS_COLUMNS = ["ranker", "metric", "K", "value", "n_cases", "skipped"]


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    group_id: int
    positive_item: int
    negatives: tuple[int, ...]
    state: EnvState | None = None

    @property
    def candidates(self) -> np.ndarray:
        return np.asarray((self.positive_item, *self.negatives), dtype=np.int64)


Ranker = Callable[[TestCase], Sequence[int]]


def _check_k(k: int) -> None:
    if k <= 0:
        raise ValueError(f"K must be positive, got {k}")


def _rank_of(ranked: Sequence[int], item: int) -> int | None:
    for pos, x in enumerate(ranked, start=1):
        if x == item:
            return pos
    return None


def recall_at_k(ranked: Sequence[int], positive_item: int, k: int) -> float:
    _check_k(k)
    return 1.0 if positive_item in list(ranked[:k]) else 0.0


def ndcg_at_k(ranked: Sequence[int], positive_item: int, k: int) -> float:
    """1 / log2(rank + 1) when the single relevant item sits in the top ``k``."""
    _check_k(k)
    rank = _rank_of(ranked[:k], positive_item)
    return 0.0 if rank is None else 1.0 / math.log2(rank + 1)


@dataclass
class MetricsReport:
    ranker: str
    values: dict[tuple[str, int], float]
    n_cases: int
    skipped: int = 0
    ks: tuple[int, ...] = DEFAULT_KS

    def recall(self, k: int) -> float:
        return self.values[("recall", k)]

    def ndcg(self, k: int) -> float:
        return self.values[("ndcg", k)]

    def rows(self) -> list[dict]:
        return [
            {"ranker": self.ranker, "metric": m, "K": k, "value": v, "n_cases": self.n_cases, "skipped": self.skipped}
            for (m, k), v in sorted(self.values.items(), key=lambda kv: (kv[0][0] != "recall", kv[0][1]))
        ]


def evaluate(
    ranker: Ranker,
    test_cases: Sequence[TestCase],
    ks: Iterable[int] = DEFAULT_KS,
    name: str = "ranker",
    skipped: int = 0,
) -> MetricsReport:
    """Average Recall@K / NDCG@K of ``ranker`` over the cases."""
    ks = tuple(sorted(int(k) for k in ks))
    if not test_cases:
        raise ValueError("no test cases to evaluate")
    for k in ks:
        _check_k(k)
    kmax = max(ks)
    ranks = np.zeros(len(test_cases))
    for n, case in enumerate(test_cases):
        ranked = list(ranker(case))[:kmax]
        ranks[n] = _rank_of(ranked, case.positive_item) or np.inf
    values = {}
    for k in ks:
        hit = ranks <= k
        values[("recall", k)] = float(hit.mean())
        values[("ndcg", k)] = float(np.where(hit, 1.0 / np.log2(np.where(hit, ranks, 1.0) + 1.0), 0.0).mean())
    return MetricsReport(name, values, len(test_cases), skipped, ks)


# --------------------------------------------------------------------------- #
# test-case construction
# --------------------------------------------------------------------------- #


def training_histories(train: pd.DataFrame, history_length: int) -> dict[int, tuple[int, ...]]:
    """Most recent ``history_length`` positive training items per group, oldest first."""
    pos = train[train["label"] == 1].sort_values(["group_id", "timestamp", "item_id"], kind="mergesort")
    out = {}
    for g, sub in pos.groupby("group_id"):
        items = sub["item_id"].astype(int).tolist()
        if len(items) >= history_length:
            out[int(g)] = tuple(items[-history_length:])
    return out


def build_test_cases(
    held_out: pd.DataFrame,
    negatives: Mapping[tuple[int, int], Sequence[int]],
    train: pd.DataFrame,
    history_length: int = 5,
) -> tuple[list[TestCase], int]:
    """One case per held-out label-1 rating; returns ``(cases, skipped)``.

    Cases whose group has fewer than ``history_length`` positive training
    ratings cannot get a state and are skipped (counted, not dropped silently).
    """
    hist = training_histories(train, history_length)
    pos = held_out[held_out["label"] == 1].sort_values(["group_id", "timestamp", "item_id"], kind="mergesort")
    cases, skipped = [], 0
    for g, i in pos[["group_id", "item_id"]].itertuples(index=False):
        g, i = int(g), int(i)
        if g not in hist:
            skipped += 1
            continue
        negs = tuple(int(x) for x in negatives[(g, i)])
        if i in negs:
            raise ValueError(f"positive item {i} appears among the negatives of group {g}")
        cases.append(TestCase(g, i, negs, EnvState(g, hist[g])))
    return cases, skipped


def negatives_by_pair(sets: Iterable) -> dict[tuple[int, int], tuple[int, ...]]:
    return {(s.group_id, s.item_id): s.negatives for s in sets}


# --------------------------------------------------------------------------- #
# rankers
# --------------------------------------------------------------------------- #


def _order(scores: np.ndarray, items: np.ndarray) -> list[int]:
    """Descending score, ties by ascending item id."""
    return items[np.lexsort((items, -scores))].tolist()


def random_ranker(seed: int = 0) -> Ranker:
    rng = np.random.default_rng(seed)

    def rank(case: TestCase) -> list[int]:
        return rng.permutation(case.candidates).tolist()

    return rank


def popularity_ranker(train: pd.DataFrame) -> Ranker:
    """Rank by number of label-1 training group ratings."""
    counts = train.loc[train["label"] == 1, "item_id"].value_counts()
    lookup = {int(k): int(v) for k, v in counts.items()}

    def rank(case: TestCase) -> list[int]:
        items = case.candidates
        scores = np.asarray([lookup.get(int(i), 0) for i in items], dtype=np.float64)
        return _order(scores, items)

    return rank


def mf_oracle_ranker(model: MFModel, train: pd.DataFrame | None = None, override: bool = True) -> Ranker:
    """Rank by the environment's own reward; an in-simulator upper bound, not a baseline."""
    lookup = build_lookup(train) if train is not None else {}

    def rank(case: TestCase) -> list[int]:
        items = case.candidates
        scores = np.asarray([predict_reward(model, case.group_id, int(i), lookup, override)[0] for i in items])
        return _order(scores, items)

    return rank


def agent_ranker(agent) -> Ranker:
    """Rank by the actor's inner-product scores for the case's state."""

    def rank(case: TestCase) -> list[int]:
        if case.state is None:
            raise ValueError("agent ranking needs a state")
        items = case.candidates
        return _order(agent.item_scores(case.state, items), items)

    return rank


# --------------------------------------------------------------------------- #
# output
# --------------------------------------------------------------------------- #


def metrics_frame(reports: Iterable[MetricsReport]) -> pd.DataFrame:
    rows = [r for rep in reports for r in rep.rows()]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def write_metrics(reports: Iterable[MetricsReport], path: str | Path) -> pd.DataFrame:
    df = metrics_frame(reports)
    df.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")
    return df


def compare_table(metrics: pd.DataFrame) -> pd.DataFrame:
    """Pivot metrics rows into one row per ranker with R@K / N@K columns."""
    df = metrics.copy()
    df["column"] = df["metric"].map({"recall": "R", "ndcg": "N"}) + "@" + df["K"].astype(str)
    table = df.pivot_table(index="ranker", columns="column", values="value", aggfunc="first", sort=False)
    ks = sorted(df["K"].unique())
    cols = [f"R@{k}" for k in ks] + [f"N@{k}" for k in ks]
    return table.reindex(columns=cols).reset_index()
