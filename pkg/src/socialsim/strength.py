"""Strength estimation from motion cues.

Features are summary statistics of speed and acceleration magnitude. The
trained estimator is a 2x64 MLP classifier over the four strength levels;
when no training data is available, an analytic fallback maps observed top
speed to the terminal speed each strength level can sustain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episodes import EpisodeRecord
from .physics import PhysicsParams

N_LEVELS = 4


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class CueFeatures:
    mean_speed: float
    max_speed: float
    min_speed: float
    mean_accel: float
    max_accel: float
    min_accel: float

    def __post_init__(self):
        if not (self.min_speed <= self.mean_speed <= self.max_speed):
            raise ValueError("speed stats out of order")
        if not (self.min_accel <= self.mean_accel <= self.max_accel):
            raise ValueError("acceleration stats out of order")

    def vector(self) -> np.ndarray:
        return np.array(
            [self.mean_speed, self.max_speed, self.min_speed,
             self.mean_accel, self.max_accel, self.min_accel]
        )


def cue_features(positions: np.ndarray, entity_index: int,
                 step_dt: float = 0.25) -> CueFeatures:
    """Speed/acceleration stats from a (T+1, N, 2) position stack."""
    p = positions[:, entity_index, :]
    vel = np.diff(p, axis=0) / step_dt
    speed = np.hypot(vel[:, 0], vel[:, 1])
    if len(speed) < 2:
        speed = np.concatenate([speed, speed])
    acc = np.diff(vel, axis=0) / step_dt
    amag = np.hypot(acc[:, 0], acc[:, 1])
    if len(amag) == 0:
        amag = np.zeros(1)
    return CueFeatures(
        mean_speed=float(speed.mean()),
        max_speed=float(speed.max()),
        min_speed=float(speed.min()),
        mean_accel=float(amag.mean()),
        max_accel=float(amag.max()),
        min_accel=float(amag.min()),
    )


def record_cue_features(record: EpisodeRecord, agent_id: str) -> CueFeatures:
    table = record.config.body_table()
    return cue_features(record.positions(), table.index(agent_id))


class AnalyticStrengthEstimator:
    """Training-free fallback: match top speed to per-level terminal speed."""

    def __init__(self, params: PhysicsParams = PhysicsParams(),
                 typical_mass: float = 1.5, sharpness: float = 1.2):
        self.params = params
        self.typical_mass = typical_mass
        self.sharpness = sharpness

    def level_terminal_speeds(self, mass: float) -> np.ndarray:
        forces = 4.5 * np.arange(1, N_LEVELS + 1)
        v = forces / (mass * self.params.linear_friction)
        return np.minimum(v, self.params.speed_cap)

    def estimate(self, features: CueFeatures,
                 mass: float | None = None) -> np.ndarray:
        v_term = self.level_terminal_speeds(mass or self.typical_mass)
        gap = np.abs(features.max_speed - v_term)
        logits = -self.sharpness * gap
        w = np.exp(logits - logits.max())
        return w / w.sum()


class MLPStrengthRegressor:
    """The 2-layer (64-dim each) feed-forward strength estimator."""

    def __init__(self, seed: int = 0):
        from sklearn.neural_network import MLPClassifier

        self.model = MLPClassifier(
            hidden_layer_sizes=(64, 64),
            activation="relu",
            solver="adam",
            learning_rate_init=1e-3,
            max_iter=4000,
            random_state=seed,
        )
        self.classes_: np.ndarray | None = None

    def fit(self, features: np.ndarray, levels: np.ndarray) -> None:
        self.model.fit(features, levels)
        self.classes_ = self.model.classes_

    def estimate(self, features: CueFeatures,
                 mass: float | None = None) -> np.ndarray:
        proba = self.model.predict_proba(features.vector().reshape(1, -1))[0]
        out = np.full(N_LEVELS, 1e-3)
        for cls, p in zip(self.classes_, proba):
            out[int(cls) - 1] += p
        return out / out.sum()


def fit_strength_regressor(records: list, min_episodes: int = 100,
                           seed: int = 0) -> MLPStrengthRegressor:
    """Train the cue-based strength estimator on labeled episodes."""
    if len(records) < min_episodes:
        raise TrainingError(
            f"need >= {min_episodes} labeled episodes, got {len(records)}"
        )
    feats = []
    labels = []
    for rec in records:
        for a in rec.config.agent_ids:
            feats.append(record_cue_features(rec, a).vector())
            labels.append(rec.config.entity_spec(a).strength.level)
    reg = MLPStrengthRegressor(seed=seed)
    reg.fit(np.array(feats), np.array(labels))
    return reg


def estimate_strength(estimator, features: CueFeatures,
                      mass: float | None = None) -> np.ndarray:
    """Distribution over the four strength levels."""
    return estimator.estimate(features, mass)
