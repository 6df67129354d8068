from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
ML100K = ROOT / "data" / "ml-100k"


def write_toy_ratings(path: Path, n_users=40, n_items=150, density=0.6, seed=0) -> Path:
    """A dense MovieLens-shaped ratings.csv small enough for end-to-end runs."""
    rng = np.random.default_rng(seed)
    lines = ["userId,movieId,rating,timestamp"]
    for u in range(1, n_users + 1):
        taste = rng.normal()
        for i in range(1, n_items + 1):
            if rng.random() < density:
                r = np.clip(np.round(2 * (3.5 + taste * (i % 3 - 1) + rng.normal(0, 0.8))) / 2, 0.5, 5.0)
                lines.append(f"{u},{i},{r:.1f},{int(rng.integers(8.8e8, 9.0e8))}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def toy_ratings(tmp_path_factory) -> Path:
    return write_toy_ratings(tmp_path_factory.mktemp("toy") / "ratings.csv")


TOY_ARGS = [
    "--n-groups", "15",
    "--negatives", "20",
    "--mf-epochs", "5",
    "--episodes", "3",
    "--episode-length", "5",
    "--batch-size", "8",
    "--eval-every", "2",
]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
