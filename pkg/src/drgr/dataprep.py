"""Build the random-group dataset from raw MovieLens ratings.

Pipeline: ``load_ratings`` -> ``synthesize_groups`` (generate -> derive ->
filter, repeated in batches) -> ``reindex`` -> ``sample_negatives`` ->
``temporal_split``. ``build_dataset`` runs all of it; ``write_dataset`` and
``read_dataset`` handle the on-disk ``.dat`` layout.

Every random draw comes from a generator seeded with ``(seed, key...)`` where
the key is the candidate-group index or the ``(group, item)`` pair, so results
do not depend on processing order or thread count.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

RATINGS_HEADER = ["userId", "movieId", "rating", "timestamp"]
POSITIVE_THRESHOLD = 4.0

GROUP_MEMBER_FILE = "groupMember.dat"
GROUP_RATING_FILES = {"train": "groupRatingTrain.dat", "val": "groupRatingVal.dat", "test": "groupRatingTest.dat"}
USER_RATING_FILES = {"train": "userRatingTrain.dat", "val": "userRatingVal.dat", "test": "userRatingTest.dat"}
NEGATIVE_FILE = "negative.dat"
IDMAP_FILE = "idMap.dat"

GROUP_COLUMNS = ["group_id", "item_id", "label", "timestamp"]
USER_COLUMNS = ["user_id", "item_id", "rating", "timestamp"]


class DataError(ValueError):
    """Malformed input data or an impossible dataset request."""


# --------------------------------------------------------------------------- #
# domain types
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Group:
    group_id: int
    members: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class NegativeSampleSet:
    group_id: int
    item_id: int
    negatives: tuple[int, ...]


@dataclass
class SplitBundle:
    train: pd.DataFrame
    val: pd.DataFrame
    test: pd.DataFrame
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def parts(self) -> dict[str, pd.DataFrame]:
        return {"train": self.train, "val": self.val, "test": self.test}


@dataclass
class GroupDataset:
    """A prepared dataset with dense 0-based user, item and group ids."""

    groups: list[Group]
    group_split: SplitBundle
    user_split: SplitBundle
    negatives: list[NegativeSampleSet]
    user_map: np.ndarray  # dense user id -> raw MovieLens userId
    item_map: np.ndarray  # dense item id -> raw MovieLens movieId
    extra: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.user_map)

    @property
    def n_items(self) -> int:
        return len(self.item_map)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def group_ratings(self) -> pd.DataFrame:
        return pd.concat(list(self.group_split.parts().values()), ignore_index=True)

    @property
    def user_ratings(self) -> pd.DataFrame:
        return pd.concat(list(self.user_split.parts().values()), ignore_index=True)

    def members(self) -> dict[int, tuple[int, ...]]:
        return {g.group_id: g.members for g in self.groups}


# --------------------------------------------------------------------------- #
# ingestion
# --------------------------------------------------------------------------- #

_HALF_STARS = {k / 2 for k in range(1, 11)}


def load_ratings(path: str | Path) -> pd.DataFrame:
    """Read a MovieLens ``ratings.csv`` into a frame of user ratings.

    Columns of the result: ``user_id, item_id, rating, timestamp``. Any bad
    row raises :class:`DataError` naming its line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"ratings file not found: {path}")
    users, items, ratings, stamps = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RATINGS_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(RATINGS_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                u, i, r, t = int(row[0]), int(row[1]), float(row[2]), int(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: non-numeric field in {row}") from exc
            if r not in _HALF_STARS:
                raise DataError(f"{path}:{line}: rating {r} is not a half-star value in [0.5, 5]")
            if t <= 0:
                raise DataError(f"{path}:{line}: timestamp must be positive, got {t}")
            users.append(u)
            items.append(i)
            ratings.append(r)
            stamps.append(t)
    return pd.DataFrame(
        {
            "user_id": np.asarray(users, dtype=np.int64),
            "item_id": np.asarray(items, dtype=np.int64),
            "rating": np.asarray(ratings, dtype=np.float64),
            "timestamp": np.asarray(stamps, dtype=np.int64),
        }
    )


_YEAR = re.compile(r"\((\d{4})\)\s*$")


def load_release_years(path: str | Path) -> dict[int, int]:
    """Map movieId -> release year parsed from a MovieLens ``movies.csv`` title."""
    years = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            m = _YEAR.search(row["title"])
            if m:
                years[int(row["movieId"])] = int(m.group(1))
    return years


# --------------------------------------------------------------------------- #
# group synthesis
# --------------------------------------------------------------------------- #


def generate_groups(
    users: Sequence[int],
    n_groups: int,
    size_min: int = 2,
    size_max: int = 5,
    seed: int = 0,
    start_id: int = 0,
) -> list[Group]:
    """Draw ``n_groups`` random candidate groups.

    Group ``start_id + k`` gets its size uniformly from ``[size_min, size_max]``
    and its members without replacement, using a generator keyed on
    ``(seed, start_id + k)``. Members are stored sorted.
    """
    if n_groups <= 0:
        raise DataError(f"n_groups must be positive, got {n_groups}")
    if size_min < 1 or size_min > size_max:
        raise DataError(f"invalid group size bounds [{size_min}, {size_max}]")
    pool = np.unique(np.asarray(users, dtype=np.int64))
    if len(pool) < size_max:
        raise DataError(f"need at least {size_max} users, have {len(pool)}")
    groups = []
    for gid in range(start_id, start_id + n_groups):
        rng = np.random.default_rng([seed, gid])
        size = int(rng.integers(size_min, size_max + 1))
        members = np.sort(rng.choice(pool, size=size, replace=False))
        groups.append(Group(gid, tuple(int(u) for u in members)))
    return groups


class _UserIndex:
    """Per-user sorted item arrays for fast intersections."""

    def __init__(self, user_ratings: pd.DataFrame):
        df = user_ratings.sort_values(["user_id", "item_id", "timestamp"], kind="mergesort")
        df = df.drop_duplicates(["user_id", "item_id"], keep="last")
        self.items: dict[int, np.ndarray] = {}
        self.ratings: dict[int, np.ndarray] = {}
        self.stamps: dict[int, np.ndarray] = {}
        u = df["user_id"].to_numpy()
        bounds = np.flatnonzero(np.diff(u)) + 1
        starts = np.concatenate([[0], bounds])
        ends = np.concatenate([bounds, [len(u)]])
        it, ra, ts = df["item_id"].to_numpy(), df["rating"].to_numpy(), df["timestamp"].to_numpy()
        for s, e in zip(starts, ends):
            if e > s:
                uid = int(u[s])
                self.items[uid] = it[s:e]
                self.ratings[uid] = ra[s:e]
                self.stamps[uid] = ts[s:e]

    def group_records(self, group: Group) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        common = self.items[group.members[0]]
        for u in group.members[1:]:
            common = np.intersect1d(common, self.items[u], assume_unique=True)
        positive = np.ones(len(common), dtype=bool)
        stamp = np.zeros(len(common), dtype=np.int64)
        for u in group.members:
            pos = np.searchsorted(self.items[u], common)
            positive &= self.ratings[u][pos] >= POSITIVE_THRESHOLD
            stamp = np.maximum(stamp, self.stamps[u][pos])
        return common, positive.astype(np.int64), stamp


def _derive(groups: Iterable[Group], index: _UserIndex) -> pd.DataFrame:
    parts = []
    for g in groups:
        items, labels, stamps = index.group_records(g)
        parts.append(
            pd.DataFrame({"group_id": np.full(len(items), g.group_id, dtype=np.int64),
                          "item_id": items, "label": labels, "timestamp": stamps})
        )
    if not parts:
        return pd.DataFrame({c: pd.Series(dtype=np.int64) for c in GROUP_COLUMNS})
    return pd.concat(parts, ignore_index=True)


def derive_group_ratings(groups: Iterable[Group], user_ratings: pd.DataFrame) -> pd.DataFrame:
    """Unanimity rule: one record per (group, item) that every member rated.

    Label 1 when every member's rating is >= 4, else 0. The record timestamp
    is the latest of the members' rating timestamps.
    """
    return _derive(groups, _UserIndex(user_ratings))


def filter_groups(
    groups: Sequence[Group], group_ratings: pd.DataFrame, min_ratings: int = 20
) -> tuple[list[Group], pd.DataFrame]:
    counts = group_ratings.groupby("group_id").size()
    keep = {int(g) for g, n in counts.items() if n >= min_ratings}
    kept_groups = [g for g in groups if g.group_id in keep]
    kept = group_ratings[group_ratings["group_id"].isin(keep)].reset_index(drop=True)
    return kept_groups, kept


def synthesize_groups(
    user_ratings: pd.DataFrame,
    n_groups: int,
    size_min: int = 2,
    size_max: int = 5,
    min_ratings: int = 20,
    seed: int = 0,
    batch_size: int = 2000,
    max_attempts_factor: int = 1000,
) -> tuple[list[Group], pd.DataFrame]:
    """Sample candidate groups in batches until ``n_groups`` pass the filter.

    Survivors are taken in candidate order and renumbered 0..n_groups-1, so the
    result does not depend on ``batch_size``. Gives up after
    ``max_attempts_factor * n_groups`` candidates.
    """
    if n_groups <= 0:
        raise DataError(f"n_groups must be positive, got {n_groups}")
    index = _UserIndex(user_ratings)
    users = sorted(index.items)
    cap = max_attempts_factor * n_groups
    survivors: list[Group] = []
    frames: list[pd.DataFrame] = []
    tried = 0
    while len(survivors) < n_groups:
        if tried >= cap:
            raise DataError(
                f"only {len(survivors)} of {n_groups} groups reached {min_ratings} ratings "
                f"after {tried} candidates (retry cap)"
            )
        batch = generate_groups(users, min(batch_size, cap - tried), size_min, size_max, seed, start_id=tried)
        tried += len(batch)
        ratings = _derive(batch, index)
        kept, kept_ratings = filter_groups(batch, ratings, min_ratings)
        for g in kept[: n_groups - len(survivors)]:
            survivors.append(g)
            frames.append(kept_ratings[kept_ratings["group_id"] == g.group_id])
    log.info("kept %d groups out of %d candidates", n_groups, tried)

    renumber = {g.group_id: k for k, g in enumerate(survivors)}
    groups = [Group(renumber[g.group_id], g.members) for g in survivors]
    ratings = pd.concat(frames, ignore_index=True)
    ratings["group_id"] = ratings["group_id"].map(renumber).astype(np.int64)
    return groups, ratings


# --------------------------------------------------------------------------- #
# negatives and splits
# --------------------------------------------------------------------------- #


def sample_negatives(
    group_ratings: pd.DataFrame,
    all_items: Sequence[int],
    k: int = 100,
    seed: int = 0,
    threads: int = 1,
) -> list[NegativeSampleSet]:
    """For every group rating, ``k`` distinct items the group never rated.

    Sets come back sorted by ``(group_id, item_id)``.
    """
    universe = np.unique(np.asarray(all_items, dtype=np.int64))
    df = group_ratings.sort_values(["group_id", "item_id"], kind="mergesort")
    jobs = []
    for gid, sub in df.groupby("group_id", sort=True):
        unrated = np.setdiff1d(universe, sub["item_id"].to_numpy(), assume_unique=False)
        if len(unrated) < k:
            raise DataError(f"group {gid} has only {len(unrated)} unrated items, need {k}")
        jobs.append((int(gid), sub["item_id"].to_numpy(), unrated))

    def draw(job):
        gid, items, unrated = job
        out = []
        for item in items:
            rng = np.random.default_rng([seed, gid, int(item)])
            neg = rng.choice(unrated, size=k, replace=False)
            out.append(NegativeSampleSet(gid, int(item), tuple(int(x) for x in neg)))
        return out

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(draw, jobs))
    else:
        chunks = [draw(job) for job in jobs]
    return [s for chunk in chunks for s in chunk]


def _cut_points(n: int, fractions: Sequence[float]) -> tuple[int, int]:
    a = int(round(n * fractions[0]))
    b = int(round(n * (fractions[0] + fractions[1])))
    return a, max(a, b)


def temporal_split(
    records: pd.DataFrame,
    fractions: Sequence[float] = (0.7, 0.1, 0.2),
    key: Sequence[str] | None = None,
) -> SplitBundle:
    """Sort by time (ties by ``key`` columns) and cut into train/val/test.

    ``key`` defaults to ``(group_id, item_id)`` or ``(user_id, item_id)``,
    whichever the frame has.
    """
    if len(records) == 0:
        raise DataError("cannot split an empty record set")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be 3 positive numbers summing to 1, got {fractions}")
    if key is None:
        key = ("group_id", "item_id") if "group_id" in records.columns else ("user_id", "item_id")
    ordered = records.sort_values(["timestamp", *key], kind="mergesort").reset_index(drop=True)
    a, b = _cut_points(len(ordered), fractions)
    return SplitBundle(
        ordered.iloc[:a].reset_index(drop=True),
        ordered.iloc[a:b].reset_index(drop=True),
        ordered.iloc[b:].reset_index(drop=True),
        fractions,  # type: ignore[arg-type]
    )


# --------------------------------------------------------------------------- #
# end-to-end build
# --------------------------------------------------------------------------- #


@dataclass
class PrepConfig:
    n_groups: int = 1000
    size_min: int = 2
    size_max: int = 5
    min_ratings: int = 20
    negatives: int = 100
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    threads: int = 1


def reindex(
    groups: list[Group], group_ratings: pd.DataFrame, user_ratings: pd.DataFrame
) -> tuple[list[Group], pd.DataFrame, pd.DataFrame, np.ndarray, np.ndarray]:
    """Restrict user ratings to group members and map users/items to dense ids.

    The item universe is every item some member rated.
    """
    members = np.unique(np.concatenate([np.asarray(g.members) for g in groups]))
    ur = user_ratings[user_ratings["user_id"].isin(members)]
    user_map = members
    item_map = np.unique(ur["item_id"].to_numpy())
    u_lookup = {int(raw): k for k, raw in enumerate(user_map)}
    i_lookup = pd.Series(np.arange(len(item_map)), index=item_map)

    ur = ur.assign(
        user_id=np.searchsorted(user_map, ur["user_id"].to_numpy()),
        item_id=i_lookup.loc[ur["item_id"].to_numpy()].to_numpy(),
    ).reset_index(drop=True)
    gr = group_ratings.assign(item_id=i_lookup.loc[group_ratings["item_id"].to_numpy()].to_numpy())
    gr = gr.reset_index(drop=True)[GROUP_COLUMNS]
    dense_groups = [Group(g.group_id, tuple(u_lookup[u] for u in g.members)) for g in groups]
    return dense_groups, gr, ur[USER_COLUMNS], user_map, item_map


def build_dataset(user_ratings: pd.DataFrame, config: PrepConfig) -> GroupDataset:
    groups, group_ratings = synthesize_groups(
        user_ratings, config.n_groups, config.size_min, config.size_max, config.min_ratings, config.seed
    )
    groups, group_ratings, member_ratings, user_map, item_map = reindex(groups, group_ratings, user_ratings)
    negatives = sample_negatives(
        group_ratings, np.arange(len(item_map)), config.negatives, seed=config.seed + 1, threads=config.threads
    )
    return GroupDataset(
        groups=groups,
        group_split=temporal_split(group_ratings, config.fractions),
        user_split=temporal_split(member_ratings, config.fractions),
        negatives=negatives,
        user_map=user_map,
        item_map=item_map,
    )


# --------------------------------------------------------------------------- #
# .dat files
# --------------------------------------------------------------------------- #


def write_dataset(ds: GroupDataset, out_dir: str | Path) -> list[Path]:
    """Write the ``.dat`` files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str, lines: Iterable[str]) -> None:
        path = out / name
        with open(path, "w", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
        written.append(path)

    emit(GROUP_MEMBER_FILE, (f"{g.group_id}\t{','.join(map(str, g.members))}" for g in ds.groups))
    for part, df in ds.group_split.parts().items():
        emit(GROUP_RATING_FILES[part],
             (f"{g}\t{i}\t{lab}\t{t}" for g, i, lab, t in df[GROUP_COLUMNS].itertuples(index=False)))
    for part, df in ds.user_split.parts().items():
        emit(USER_RATING_FILES[part],
             (f"{u}\t{i}\t{r:.1f}\t{t}" for u, i, r, t in df[USER_COLUMNS].itertuples(index=False)))
    emit(NEGATIVE_FILE, (f"{s.group_id}\t{s.item_id}\t{','.join(map(str, s.negatives))}" for s in ds.negatives))
    emit(
        IDMAP_FILE,
        [f"user\t{k}\t{raw}" for k, raw in enumerate(ds.user_map)]
        + [f"item\t{k}\t{raw}" for k, raw in enumerate(ds.item_map)],
    )
    return written


def _read_table(path: Path, columns: list[str], float_col: str | None = None) -> pd.DataFrame:
    dtypes = {c: np.int64 for c in columns}
    if float_col:
        dtypes[float_col] = np.float64
    if path.stat().st_size == 0:
        return pd.DataFrame({c: pd.Series(dtype=dtypes[c]) for c in columns})
    return pd.read_csv(path, sep="\t", header=None, names=columns, dtype=dtypes)


def read_dataset(data_dir: str | Path) -> GroupDataset:
    d = Path(data_dir)
    missing = [n for n in [GROUP_MEMBER_FILE, NEGATIVE_FILE, IDMAP_FILE, *GROUP_RATING_FILES.values()]
               if not (d / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: missing dataset files {missing}")
    groups = []
    with open(d / GROUP_MEMBER_FILE) as fh:
        for line in fh:
            gid, members = line.rstrip("\n").split("\t")
            groups.append(Group(int(gid), tuple(int(u) for u in members.split(","))))
    gs = {p: _read_table(d / f, GROUP_COLUMNS) for p, f in GROUP_RATING_FILES.items()}
    us = {p: _read_table(d / f, USER_COLUMNS, "rating") for p, f in USER_RATING_FILES.items()}
    negatives = []
    with open(d / NEGATIVE_FILE) as fh:
        for line in fh:
            gid, item, negs = line.rstrip("\n").split("\t")
            negatives.append(NegativeSampleSet(int(gid), int(item), tuple(int(x) for x in negs.split(","))))
    users, items = [], []
    with open(d / IDMAP_FILE) as fh:
        for line in fh:
            kind, _, raw = line.rstrip("\n").split("\t")
            (users if kind == "user" else items).append(int(raw))
    return GroupDataset(
        groups=groups,
        group_split=SplitBundle(gs["train"], gs["val"], gs["test"]),
        user_split=SplitBundle(us["train"], us["val"], us["test"]),
        negatives=negatives,
        user_map=np.asarray(users, dtype=np.int64),
        item_map=np.asarray(items, dtype=np.int64),
    )


# --------------------------------------------------------------------------- #
# summary statistics
# --------------------------------------------------------------------------- #


@dataclass
class Summary:
    counts: dict[str, float]
    series: dict[str, pd.DataFrame]


def _month(stamps: pd.Series) -> pd.Series:
    return pd.to_datetime(stamps, unit="s", utc=True).dt.strftime("%Y-%m")


def summarize(ds: GroupDataset, release_years: dict[int, int] | None = None) -> Summary:
    """Dataset-level counts plus the data series behind the dataset figures.

    ``release_years`` maps raw movieIds to release years; without it the
    years-since-release series is empty.
    """
    ur = ds.user_ratings
    gr = ds.group_ratings
    n_groups = ds.n_groups
    counts = {
        "n_users": ds.n_users,
        "n_items": ds.n_items,
        "n_groups": n_groups,
        "n_user_item_ratings": len(ur),
        "n_group_item_ratings": len(gr),
        "avg_ratings_per_user": len(ur) / ds.n_users if ds.n_users else math.nan,
        "avg_ratings_per_group": len(gr) / n_groups if n_groups else math.nan,
        "avg_group_size": float(np.mean([len(g) for g in ds.groups])) if n_groups else math.nan,
        "group_positive_rate": float(gr["label"].mean()) if len(gr) else math.nan,
    }
    for part, df in ds.group_split.parts().items():
        counts[f"n_group_ratings_{part}"] = len(df)
        if len(df):
            counts[f"group_{part}_first_ts"] = int(df["timestamp"].min())
            counts[f"group_{part}_last_ts"] = int(df["timestamp"].max())

    # ratings per month, with the split each month's group ratings fall into
    um = ur.assign(month=_month(ur["timestamp"])).groupby("month").size().rename("user_ratings")
    gm = gr.assign(month=_month(gr["timestamp"])).groupby("month").size().rename("group_ratings")
    per_month = pd.concat([um, gm], axis=1).fillna(0).astype(np.int64).sort_index()
    for part, df in ds.group_split.parts().items():
        months = set(_month(df["timestamp"])) if len(df) else set()
        per_month[f"in_{part}"] = [int(m in months) for m in per_month.index]
    per_month = per_month.reset_index().rename(columns={"index": "month"})

    by_movie = ur.groupby("item_id")["rating"].agg(n_ratings="size", avg_rating="mean").reset_index()
    by_movie["raw_item_id"] = ds.item_map[by_movie["item_id"].to_numpy()]

    if release_years:
        year = pd.Series(ds.item_map).map(release_years)
        rated_year = pd.to_datetime(ur["timestamp"], unit="s", utc=True).dt.year
        since = rated_year.to_numpy() - year.to_numpy()[ur["item_id"].to_numpy()]
        tmp = pd.DataFrame({"years_since_release": since, "rating": ur["rating"].to_numpy()}).dropna()
        tmp["years_since_release"] = tmp["years_since_release"].astype(np.int64)
        by_age = tmp.groupby("years_since_release")["rating"].agg(n_ratings="size", avg_rating="mean").reset_index()
    else:
        by_age = pd.DataFrame({"years_since_release": [], "n_ratings": [], "avg_rating": []})

    # average member rating over each group's rated items, by group size
    members = ds.members()
    rating_of = ur.set_index(["user_id", "item_id"])["rating"]
    rows = []
    for gid, sub in gr.groupby("group_id"):
        mem = members[int(gid)]
        keys = pd.MultiIndex.from_product([list(mem), sub["item_id"].tolist()])
        vals = rating_of.reindex(keys).to_numpy()
        rows.append((int(gid), len(mem), len(sub), float(np.nanmean(vals)), float(sub["label"].mean())))
    by_group = pd.DataFrame(rows, columns=["group_id", "group_size", "n_ratings", "avg_member_rating", "positive_rate"])

    return Summary(
        counts,
        {
            "ratings_per_month": per_month,
            "movie_rating_vs_count": by_movie[["item_id", "raw_item_id", "n_ratings", "avg_rating"]],
            "rating_vs_years_since_release": by_age,
            "group_size_ratings": by_group,
        },
    )


def write_summary(summary: Summary, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "summary.csv"]
    pd.DataFrame({"statistic": list(summary.counts), "value": list(summary.counts.values())}).to_csv(
        paths[0], index=False, lineterminator="\n"
    )
    for name, df in summary.series.items():
        path = out / f"{name}.csv"
        df.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        paths.append(path)
    return paths
