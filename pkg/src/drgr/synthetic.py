"""A small planted world with block-structured group preferences.

Items are split into equal blocks; each group likes a fixed set of
consecutive blocks and dislikes the rest. Every (group, item) pair has a
ground-truth label. A few liked items per group are held out as test
positives; the remaining pairs form the observed training ratings, with
increasing timestamps so episodes start from real history.

Groups that share a liked set hold out different items, so every item is
observed in training for some group and a factor model can recover the
held-out preferences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .evalkit import TestCase, build_test_cases


@dataclass
class PlantedWorld:
    n_users: int
    n_items: int
    members: dict[int, tuple[int, ...]]
    truth: np.ndarray  # (n_groups, n_items) labels in {0, 1}
    train: pd.DataFrame  # group_id, item_id, label, timestamp
    held_out: pd.DataFrame
    test_cases: list[TestCase]

    @property
    def n_groups(self) -> int:
        return self.truth.shape[0]


def planted_world(
    n_groups: int = 10,
    n_items: int = 50,
    n_blocks: int = 5,
    liked_blocks: int = 3,
    group_size: int = 2,
    held_out_per_group: int = 3,
    history_length: int = 5,
    seed: int = 0,
) -> PlantedWorld:
    if n_items % n_blocks:
        raise ValueError("n_items must be a multiple of n_blocks")
    rng = np.random.default_rng(seed)
    block_of = np.arange(n_items) // (n_items // n_blocks)
    truth = np.zeros((n_groups, n_items), dtype=np.int64)
    for g in range(n_groups):
        liked = {(g + k) % n_blocks for k in range(liked_blocks)}
        truth[g] = np.isin(block_of, list(liked))

    n_users = n_groups * group_size
    members = {g: tuple(range(g * group_size, (g + 1) * group_size)) for g in range(n_groups)}

    # groups g and g + n_blocks share a liked set; rotate which items they hold out
    rows_train, rows_test = [], []
    for g in range(n_groups):
        liked = np.flatnonzero(truth[g])
        start = (g // n_blocks) * held_out_per_group + (g % n_blocks)
        held = set(liked[(start + np.arange(held_out_per_group)) % len(liked)].tolist())
        order = rng.permutation(n_items)
        t = 1_000_000 + 1000 * g
        for i in order:
            rec = (g, int(i), int(truth[g, i]))
            if i in held:
                rows_test.append((*rec, t + 10_000))
            else:
                rows_train.append((*rec, t))
                t += 1
    cols = ["group_id", "item_id", "label", "timestamp"]
    train = pd.DataFrame(rows_train, columns=cols)
    held_out = pd.DataFrame(rows_test, columns=cols)

    negatives = {}
    for g, i, _, _ in rows_test:
        negatives[(g, i)] = tuple(np.flatnonzero(truth[g] == 0).tolist())
    cases, skipped = build_test_cases(held_out, negatives, train, history_length)
    if skipped:
        raise ValueError("planted world has groups without enough positive history")
    return PlantedWorld(n_users, n_items, members, truth, train, held_out, cases)

