"""Pipeline stages and the run manifest.

Workspace layout::

    <workspace>/
      manifest.json
      data/      groupMember.dat, groupRating{Train,Val,Test}.dat,
                 userRating{Train,Val,Test}.dat, negative.dat, idMap.dat
      models/    mf.ckpt, agent.ckpt, agent_last.ckpt
      reports/   stats/*.csv, mf_history.csv, train_curve.csv,
                 metrics.csv, compare.csv

Each stage records its config snapshot, seeds, timings and the SHA-256 of
every file it wrote in ``manifest.json``. A stage refuses to run when an
upstream stage is missing or one of its recorded outputs has changed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .agent import DRGRAgent, train_loop
from .config import RunConfig
from .dataprep import (
    GroupDataset,
    build_dataset,
    load_ratings,
    load_release_years,
    read_dataset,
    summarize,
    write_dataset,
    write_summary,
)
from .envsim import GroupRecEnv, MFModel, train_mf
from .evalkit import (
    agent_ranker,
    build_test_cases,
    compare_table,
    evaluate,
    mf_oracle_ranker,
    negatives_by_pair,
    popularity_ranker,
    random_ranker,
    write_metrics,
)

log = logging.getLogger(__name__)

UPSTREAM = {
    "prepare": [],
    "stats": ["prepare"],
    "train-env": ["prepare"],
    "train-agent": ["prepare", "train-env"],
    "evaluate": ["prepare", "train-env", "train-agent"],
    "compare": ["evaluate"],
}
STAGES = list(UPSTREAM)


class StageError(RuntimeError):
    """A stage cannot run: missing input or stale/missing upstream artifacts."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.data = self.root / "data"
        self.models = self.root / "models"
        self.reports = self.root / "reports"
        self.manifest_path = self.root / "manifest.json"

    def manifest(self) -> dict:
        if self.manifest_path.is_file():
            return json.loads(self.manifest_path.read_text())
        return {"code_version": __version__, "stages": {}}

    def write_manifest(self, manifest: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.manifest_path)

    def rel(self, path: Path) -> str:
        return path.resolve().relative_to(self.root.resolve()).as_posix()

    def check_upstream(self, stage: str) -> None:
        stages = self.manifest().get("stages", {})
        for up in UPSTREAM[stage]:
            rec = stages.get(up)
            if rec is None:
                raise StageError(f"{stage}: run stage '{up}' first")
            for rel, digest in rec["outputs"].items():
                path = self.root / rel
                if not path.is_file() or sha256_file(path) != digest:
                    raise StageError(f"{stage}: output {rel} of stage '{up}' is missing or stale; run '{up}' again")

    def record(self, stage: str, cfg: RunConfig, outputs: list[Path], seconds: float, extra: dict | None = None) -> None:
        manifest = self.manifest()
        manifest["code_version"] = __version__
        manifest["config"] = cfg.to_dict()
        entry = {
            "outputs": {self.rel(p): sha256_file(p) for p in sorted(outputs)},
            "seconds": round(seconds, 3),
            "seed": cfg.stage_seed(stage) if stage in ("prepare", "train-env", "train-agent", "evaluate") else None,
        }
        entry.update(extra or {})
        manifest.setdefault("stages", {})[stage] = entry
        # downstream results no longer match this stage's outputs
        for later in STAGES[STAGES.index(stage) + 1:]:
            if stage in UPSTREAM[later]:
                manifest["stages"].pop(later, None)
        self.write_manifest(manifest)


# --------------------------------------------------------------------------- #
# stages
# --------------------------------------------------------------------------- #


def cmd_prepare(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    src = Path(cfg.ratings)
    if not src.is_file():
        raise FileNotFoundError(f"ratings file not found: {src}")
    t0 = time.perf_counter()
    ratings = load_ratings(src)
    ds = build_dataset(ratings, cfg.prep_config())
    outputs = write_dataset(ds, ws.data)
    ws.record("prepare", cfg, outputs, time.perf_counter() - t0, {"input": {str(src): sha256_file(src)}})
    log.info("prepared %d groups, %d group ratings", ds.n_groups, len(ds.group_ratings))
    return outputs


def cmd_stats(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    ws.check_upstream("stats")
    t0 = time.perf_counter()
    ds = read_dataset(ws.data)
    years = None
    if cfg.movies:
        if not Path(cfg.movies).is_file():
            raise FileNotFoundError(f"movies file not found: {cfg.movies}")
        years = load_release_years(cfg.movies)
    outputs = write_summary(summarize(ds, years), ws.reports / "stats")
    ws.record("stats", cfg, outputs, time.perf_counter() - t0)
    return outputs


def cmd_train_env(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    ws.check_upstream("train-env")
    t0 = time.perf_counter()
    ds = read_dataset(ws.data)
    model, history = train_mf(ds.group_split.train, ds.n_groups, ds.n_items, cfg.mf_config(), ds.group_split.val)
    ws.models.mkdir(parents=True, exist_ok=True)
    ws.reports.mkdir(parents=True, exist_ok=True)
    model.save(ws.models / "mf.ckpt")
    history.to_csv(ws.reports / "mf_history.csv", index=False, float_format="%.8f", lineterminator="\n")
    outputs = [ws.models / "mf.ckpt", ws.reports / "mf_history.csv"]
    best = history.loc[history["val_rmse"].idxmin()] if history["val_rmse"].notna().any() else history.iloc[-1]
    ws.record("train-env", cfg, outputs, time.perf_counter() - t0,
              {"best_epoch": int(best["epoch"]), "val_rmse": float(best["val_rmse"])})
    return outputs


def _cases(ds: GroupDataset, part: str, history_length: int):
    held = ds.group_split.parts()[part]
    return build_test_cases(held, negatives_by_pair(ds.negatives), ds.group_split.train, history_length)


def cmd_train_agent(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    ws.check_upstream("train-agent")
    t0 = time.perf_counter()
    ds = read_dataset(ws.data)
    model = MFModel.load(ws.models / "mf.ckpt")
    env = GroupRecEnv(model, ds.group_split.train, cfg.env_config())
    tcfg = cfg.train_config()
    item_init = model.item_factors.copy() if tcfg.freeze_item_embeddings else None
    agent = DRGRAgent(ds.n_users, ds.n_items, ds.members(), tcfg, item_init=item_init)

    val_cases, _ = _cases(ds, "val", cfg.history_length)
    kmax = max(cfg.k_values)

    def validate(a: DRGRAgent) -> float:
        return evaluate(agent_ranker(a), val_cases, (kmax,)).recall(kmax)

    def progress(ep: int, row: dict) -> None:
        if ep % 50 == 0 or ep == tcfg.episodes:
            log.info("episode %d mean_reward %.4f critic %.4g actor %.4g", ep, row["mean_reward"],
                     row["critic_loss"], row["actor_loss"])

    result = train_loop(env, agent, validate=validate if val_cases else None, progress=progress)
    ws.models.mkdir(parents=True, exist_ok=True)
    ws.reports.mkdir(parents=True, exist_ok=True)
    agent.save(ws.models / "agent_last.ckpt")
    if result.best_blocks is not None:
        agent.params.assign(result.best_blocks)
    agent.save(ws.models / "agent.ckpt", {"best_episode": result.best_episode, "best_val_score": result.best_score})
    result.curve.to_csv(ws.reports / "train_curve.csv", index=False, float_format="%.8f", lineterminator="\n")
    outputs = [ws.models / "agent.ckpt", ws.models / "agent_last.ckpt", ws.reports / "train_curve.csv"]
    ws.record("train-agent", cfg, outputs, time.perf_counter() - t0,
              {"best_episode": result.best_episode, "best_val_recall": result.best_score})
    return outputs


def cmd_evaluate(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    ws.check_upstream("evaluate")
    t0 = time.perf_counter()
    ds = read_dataset(ws.data)
    model = MFModel.load(ws.models / "mf.ckpt")
    agent = DRGRAgent.load(ws.models / "agent.ckpt")
    cases, skipped = _cases(ds, "test", cfg.history_length)
    if not cases:
        raise StageError("evaluate: no test case has enough training history")
    train = ds.group_split.train
    rankers = [
        ("drgr", agent_ranker(agent)),
        ("popularity", popularity_ranker(train)),
        ("random", random_ranker(cfg.stage_seed("evaluate"))),
        ("oracle", mf_oracle_ranker(model, train, cfg.override_observed)),
    ]
    reports = [evaluate(r, cases, cfg.k_values, name, skipped) for name, r in rankers]
    ws.reports.mkdir(parents=True, exist_ok=True)
    path = ws.reports / "metrics.csv"
    write_metrics(reports, path)
    ws.record("evaluate", cfg, [path], time.perf_counter() - t0, {"n_cases": len(cases), "skipped": skipped})
    return [path]


def cmd_compare(cfg: RunConfig) -> list[Path]:
    ws = Workspace(cfg.workspace)
    ws.check_upstream("compare")
    t0 = time.perf_counter()
    table = compare_table(pd.read_csv(ws.reports / "metrics.csv"))
    path = ws.reports / "compare.csv"
    table.to_csv(path, index=False, float_format="%.4f", lineterminator="\n")
    ws.record("compare", cfg, [path], time.perf_counter() - t0)
    return [path]


COMMANDS = {
    "prepare": cmd_prepare,
    "stats": cmd_stats,
    "train-env": cmd_train_env,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def run_all(cfg: RunConfig) -> None:
    for stage in STAGES:
        COMMANDS[stage](cfg)
