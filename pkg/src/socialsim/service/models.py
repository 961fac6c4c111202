"""Pydantic request/response and wire-message models for the service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field

WIRE_VERSION = 1


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class SampleScenarioRequest(BaseModel):
    seed: int = 0
    event_type: Optional[str] = None
    max_steps: Optional[int] = None
    n_objects: Optional[int] = None


class BudgetOverrides(BaseModel):
    belief_particles: int = 50
    pomcp_simulations: int = 1000
    rollout_depth: int = 10
    lambda_cost: float = 0.05


class RunEpisodeRequest(BaseModel):
    config: Optional[dict] = None
    seed: Optional[int] = None
    event_type: Optional[str] = None
    max_steps: Optional[int] = None
    budget: BudgetOverrides = Field(default_factory=BudgetOverrides)


class EpisodeSummary(BaseModel):
    episode_id: str
    event_type: str
    relation: str
    steps: int
    termination: str
    human_controlled: bool
    seed: int


class GenerateRequest(BaseModel):
    count: int = 10
    seed: int = 0
    balance: Optional[str] = "relation"
    max_steps: Optional[int] = None
    min_duration: int = 40
    budget: BudgetOverrides = Field(default_factory=BudgetOverrides)
    max_workers: Optional[int] = None


class InferenceParamsModel(BaseModel):
    m_particles: int = 15
    l_iterations: int = 6
    beta: float = 0.05
    eta: float = 0.1
    delta_t: int = 10
    gamma: float = 10.0
    sim_belief_particles: int = 10
    sim_pomcp_simulations: int = 100
    seed: int = 0


class InferRequest(BaseModel):
    episode_id: str
    mode: str = "full"
    params: InferenceParamsModel = Field(default_factory=InferenceParamsModel)
    predict_horizon: Optional[int] = None
    prefix_steps: int = 20


class PosteriorResponse(BaseModel):
    episode_id: str
    mode: str
    goal_posteriors: dict
    alpha_posteriors: dict
    relation_posterior: dict
    strength_posteriors: dict
    top_hypothesis: dict
    clipping_fired: bool
    n_simulations: int
    prediction: Optional[dict] = None
    weighted_hypotheses: list = Field(default_factory=list)


class EvaluateRequest(BaseModel):
    episode_ids: Optional[list] = None
    predictions_dir: Optional[str] = None


class CreateSessionRequest(BaseModel):
    seed: Optional[int] = None
    config: Optional[dict] = None
    event_type: Optional[str] = None
    max_steps: Optional[int] = None
    tick_hz: float = 4.0
    free_play_ticks: int = 0
    rejoin_grace_s: float = 10.0


class SessionInfo(BaseModel):
    session_id: str
    phase: str
    tick: int
    slots: list
    goals: dict
