"""Benchmark harness: recognition accuracy (top-k goals, relations) and
trajectory prediction error (ADE/FDE), stratified by relation class, plus
the constant-velocity reference predictor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .episodes import EpisodeRecord, StructuralError
from .inference import PosteriorSummary
from .scene import Relation


def ade_fde(predicted: np.ndarray, truth: np.ndarray) -> tuple:
    """Average and final displacement error over entities and steps."""
    if predicted.shape != truth.shape:
        raise StructuralError(
            f"prediction shape {predicted.shape} != truth {truth.shape}"
        )
    err = np.sqrt(((predicted - truth) ** 2).sum(axis=-1))  # (T, N)
    return float(err.mean()), float(err[-1].mean())


def constant_velocity_predict(record: EpisodeRecord, prefix_steps: int = 20,
                              horizon: int = 20) -> np.ndarray:
    """Extrapolate every entity at its final prefix velocity, wall-clamped."""
    if record.n_steps < prefix_steps:
        raise StructuralError("record shorter than the observation prefix")
    config = record.config
    table = config.body_table()
    walls = config.layout.wall_array()
    state = record.states()[prefix_steps]
    dt = config.physics.sub_step_dt * config.physics.sub_steps_per_action
    pos = state.pos.copy()
    vel = state.vel.copy()
    stopped = np.zeros(table.n, dtype=bool)
    out = np.zeros((horizon, table.n, 2))
    for t in range(horizon):
        for i in range(table.n):
            if stopped[i]:
                out[t, i] = pos[i]
                continue
            nxt = pos[i] + vel[i] * dt
            blocked = False
            for w in range(walls.shape[0]):
                d2, _, _ = kernels.seg_point_dist2(
                    walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3],
                    nxt[0], nxt[1],
                )
                if d2 < table.radii[i] ** 2:
                    blocked = True
                    break
            if blocked:
                stopped[i] = True
            else:
                pos[i] = nxt
            out[t, i] = pos[i]
    return out


@dataclass
class EpisodeScore:
    episode: str
    relation: str
    top1: Optional[float] = None  # None when no own-goal agent was scored
    top2: Optional[float] = None
    top3: Optional[float] = None
    relation_hit: float = 0.0
    ade: Optional[float] = None
    fde: Optional[float] = None


@dataclass
class MetricReport:
    scores: list = field(default_factory=list)

    def add(self, score: EpisodeScore) -> None:
        self.scores.append(score)

    @staticmethod
    def _mean(vals) -> Optional[float]:
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    def aggregate(self, relation: Optional[str] = None) -> dict:
        rows = [
            s for s in self.scores
            if relation is None
            or (relation == "social") == (s.relation != Relation.NEUTRAL.value)
        ]
        return {
            "episodes": len(rows),
            "top1": self._mean([s.top1 for s in rows]),
            "top2": self._mean([s.top2 for s in rows]),
            "top3": self._mean([s.top3 for s in rows]),
            "relation": self._mean([s.relation_hit for s in rows]),
            "ade": self._mean([s.ade for s in rows]),
            "fde": self._mean([s.fde for s in rows]),
        }

    def summary(self) -> dict:
        return {
            "all": self.aggregate(),
            "independent": self.aggregate("independent"),
            "social": self.aggregate("social"),
        }


def topk_hits(posterior: dict, true_goal_key: str) -> tuple:
    """(top1, top2, top3) membership of the true goal in the posterior."""
    ranked = sorted(posterior.items(), key=lambda kv: -kv[1])
    keys = [k for k, _ in ranked]
    return tuple(
        1.0 if true_goal_key in keys[:k] else 0.0 for k in (1, 2, 3)
    )


def score_recognition(record: EpisodeRecord,
                      posterior: PosteriorSummary) -> EpisodeScore:
    """Top-k goal accuracy for own-goal agents; 3-way relation argmax.

    Agents with a social weight are scored through the relation metric only.
    """
    config = record.config
    hits = []
    for a in config.agent_ids:
        if config.alpha(a, config.other_agent(a)) != 0:
            continue
        hits.append(
            topk_hits(posterior.goal_posteriors[a], config.goals[a].key())
        )
    rel_pred = max(posterior.relation_posterior.items(), key=lambda kv: kv[1])
    score = EpisodeScore(
        episode=f"seed-{config.seed}",
        relation=record.label.relation.value,
        relation_hit=1.0 if rel_pred[0] == record.label.relation.value else 0.0,
    )
    if hits:
        arr = np.array(hits)
        score.top1, score.top2, score.top3 = (
            float(arr[:, 0].mean()),
            float(arr[:, 1].mean()),
            float(arr[:, 2].mean()),
        )
    return score


def evaluate_recognition(records: list, posteriors: list) -> MetricReport:
    report = MetricReport()
    for rec, post in zip(records, posteriors):
        report.add(score_recognition(rec, post))
    return report


def score_prediction(record: EpisodeRecord, predicted: np.ndarray,
                     prefix_steps: int = 20) -> tuple:
    """(ADE, FDE) of a prediction against the recorded continuation."""
    horizon = predicted.shape[0]
    truth_states = record.states()
    needed = prefix_steps + horizon
    truth = np.stack(
        [
            truth_states[min(t, len(truth_states) - 1)].pos
            for t in range(prefix_steps + 1, needed + 1)
        ]
    )
    return ade_fde(predicted, truth)
