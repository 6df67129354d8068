"""Fetch MovieLens 100K and write it in the `ratings.csv` / `movies.csv` layout.

The grouplens download host is not always reachable, so this pulls the copy
bundled inside the RecBole wheel on PyPI and converts it.

    python scripts/fetch_movielens.py --out data/ml-100k
"""

from __future__ import annotations

import argparse
import csv
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL_SPEC = "recbole==1.2.1"
MEMBER = "recbole/dataset_example/ml-100k/ml-100k.{}"


def _download_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", str(dest), WHEEL_SPEC],
        check=True,
    )
    return next(dest.glob("recbole-*.whl"))


def convert(wheel: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        inter = zf.read(MEMBER.format("inter")).decode("utf-8").splitlines()[1:]
        items = zf.read(MEMBER.format("item")).decode("latin-1").splitlines()[1:]

    with open(out / "ratings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["userId", "movieId", "rating", "timestamp"])
        for line in inter:
            user, item, rating, ts = line.split("\t")
            w.writerow([user, item, f"{float(rating):.1f}", ts])

    with open(out / "movies.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["movieId", "title", "genres"])
        for line in items:
            item, title, year, genres = (line.split("\t") + ["", "", ""])[:4]
            label = f"{title} ({year})" if year.strip() else title
            w.writerow([item, label, "|".join(genres.split())])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data/ml-100k"))
    parser.add_argument("--wheel", type=Path, default=None, help="use an already-downloaded wheel")
    args = parser.parse_args()
    if args.wheel is not None:
        convert(args.wheel, args.out)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            convert(_download_wheel(Path(tmp)), args.out)
    print(f"wrote {args.out / 'ratings.csv'} and {args.out / 'movies.csv'}")


if __name__ == "__main__":
    main()
