"""Procedural dataset generation with balance constraints and splits.

Episodes are independent jobs keyed by (dataset seed, index, attempt); a
bounded process pool runs them. Degenerate episodes (planner never made
goal progress, or the event resolved too quickly to read) are retried with
fresh seeds up to a cap, then kept but flagged.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .episodes import (
    EpisodeRecord,
    PlannerBudget,
    load_record,
    run_episode,
    save_record,
)
from .physics import PhysicsParams
from .scene import (
    EventType,
    GoalKind,
    Layout,
    Relation,
    SampleConstraints,
    ScenarioConfig,
    classify_event,
    generate_layouts,
    goal_distance,
    sample_config,
)

RETRY_CAP = 8

RELATION_EVENTS = {
    Relation.FRIENDLY: (EventType.HELPING, EventType.COLLABORATION),
    Relation.ADVERSARIAL: (EventType.HINDERING, EventType.CONFLICTING),
    Relation.NEUTRAL: (EventType.INDEPENDENT,),
}


@dataclass
class GenerationSettings:
    budget: PlannerBudget = field(default_factory=PlannerBudget)
    balance: Optional[str] = "relation"  # relation | event | None
    split_fractions: tuple = (0.64, 0.16, 0.20)
    heldout_fraction: float = 0.8  # test episodes on unseen layouts
    min_duration: int = 40
    max_steps: Optional[int] = None
    min_goal_distance: float = 6.0
    max_workers: Optional[int] = None
    physics: PhysicsParams = field(default_factory=PhysicsParams)


@dataclass
class ManifestEntry:
    file: str
    seed: int
    event_type: str
    relation: str
    layout_id: str
    split: str
    steps: int
    degenerate: bool


@dataclass
class DatasetManifest:
    version: int
    seed: int
    entries: list
    heldout_layouts: list

    def files(self, split: Optional[str] = None) -> list:
        return [
            e.file for e in self.entries if split is None or e.split == split
        ]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "version": self.version,
                    "seed": self.seed,
                    "heldout_layouts": self.heldout_layouts,
                    "episodes": [e.__dict__ for e in self.entries],
                },
                f,
                indent=1,
            )

    @staticmethod
    def load(path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        return DatasetManifest(
            version=d["version"],
            seed=d["seed"],
            entries=[ManifestEntry(**e) for e in d["episodes"]],
            heldout_layouts=d["heldout_layouts"],
        )


def episode_is_degenerate(record: EpisodeRecord, min_duration: int) -> bool:
    """Planner-stuck filter: some own-goal agent never gained 10% progress.

    Also rejects episodes shorter than the duration band regardless of how
    they ended (too-short events read as nothing happening).
    """
    if record.n_steps < min_duration:
        return True
    config = record.config
    table = config.body_table()
    for a in config.agent_ids:
        if config.alpha(a, config.other_agent(a)) != 0:
            continue
        goal = config.goals[a]
        dists = [
            goal_distance(s, goal, table, config.layout, a)
            for s in record.states()
        ]
        d0 = dists[0]
        if d0 > 1.0 and min(dists) > 0.9 * d0:
            return True
    return False


def _config_ok(config: ScenarioConfig, settings: GenerationSettings) -> bool:
    table = config.body_table()
    for a in config.agent_ids:
        if config.alpha(a, config.other_agent(a)) != 0:
            continue
        d = goal_distance(config.initial, config.goals[a], table,
                          config.layout, a)
        if d < settings.min_goal_distance:
            return False
    return True


def generate_episode(
    dataset_seed: int,
    index: int,
    event_type: Optional[EventType],
    layouts: tuple,
    settings: GenerationSettings,
) -> tuple:
    """One dataset episode with retries; returns (record, degenerate flag)."""
    constraints = SampleConstraints(
        event_type=event_type,
        layouts=layouts,
        max_steps=settings.max_steps,
    )
    last = None
    for attempt in range(RETRY_CAP):
        seed = int(
            np.random.SeedSequence(
                [dataset_seed, index, attempt]
            ).generate_state(1)[0]
        )
        config = sample_config(seed, constraints, params=settings.physics)
        if not _config_ok(config, settings):
            continue
        record = run_episode(config, settings.budget)
        last = record
        if not episode_is_degenerate(record, settings.min_duration):
            return record, False
    if last is None:
        config = sample_config(
            int(np.random.SeedSequence([dataset_seed, index, RETRY_CAP])
                .generate_state(1)[0]),
            constraints,
            params=settings.physics,
        )
        last = run_episode(config, settings.budget)
    return last, True


def _worker(args):
    dataset_seed, index, event_value, layouts_blob, settings = args
    import pickle

    layouts = pickle.loads(layouts_blob)
    event = EventType(event_value) if event_value else None
    record, degenerate = generate_episode(
        dataset_seed, index, event, layouts, settings
    )
    return index, record, degenerate


def _event_cycle(count: int, balance: Optional[str],
                 rng: np.random.Generator) -> list:
    if balance == "event":
        order = list(EventType)
        return [order[i % len(order)] for i in range(count)]
    if balance == "relation":
        rels = list(RELATION_EVENTS)
        out = []
        for i in range(count):
            rel = rels[i % len(rels)]
            options = RELATION_EVENTS[rel]
            out.append(options[int(rng.integers(0, len(options)))])
        return out
    return [None] * count


def generate_dataset(
    count: int,
    out_dir,
    seed: int,
    settings: GenerationSettings = GenerationSettings(),
) -> DatasetManifest:
    """Generate episodes, write files + manifest, assign splits."""
    import pickle

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    n_layouts = max(4, count // 6)
    n_heldout = max(2, n_layouts // 3)
    main_layouts = tuple(generate_layouts(n_layouts, seed * 2 + 1))
    heldout_layouts = tuple(generate_layouts(n_heldout, seed * 2 + 2))

    ftrain, fval, ftest = settings.split_fractions
    n_test = int(round(count * ftest))
    n_val = int(round(count * fval))
    n_train = count - n_test - n_val
    splits = (["train"] * n_train) + (["val"] * n_val) + (["test"] * n_test)
    n_test_heldout = int(round(n_test * settings.heldout_fraction))

    events = _event_cycle(count, settings.balance, rng)

    jobs = []
    test_seen = 0
    for i in range(count):
        split = splits[i]
        if split == "test" and test_seen < n_test_heldout:
            layouts = heldout_layouts
            test_seen += 1
        else:
            layouts = main_layouts
        jobs.append(
            (
                seed,
                i,
                events[i].value if events[i] else None,
                pickle.dumps(layouts),
                settings,
            )
        )

    workers = settings.max_workers or min(4, os.cpu_count() or 1)
    results = {}
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, record, degenerate in pool.map(_worker, jobs):
                results[index] = (record, degenerate)
    else:
        for job in jobs:
            index, record, degenerate = _worker(job)
            results[index] = (record, degenerate)

    entries = []
    for i in range(count):
        record, degenerate = results[i]
        fname = f"episode_{i:05d}.jsonl"
        save_record(record, out / fname)
        entries.append(
            ManifestEntry(
                file=fname,
                seed=record.config.seed,
                event_type=record.label.event_type.value,
                relation=record.label.relation.value,
                layout_id=record.config.layout.layout_id,
                split=splits[i],
                steps=record.n_steps,
                degenerate=degenerate,
            )
        )
    manifest = DatasetManifest(
        version=1,
        seed=seed,
        entries=entries,
        heldout_layouts=[lay.layout_id for lay in heldout_layouts],
    )
    manifest.save(out / "manifest.json")
    return manifest
