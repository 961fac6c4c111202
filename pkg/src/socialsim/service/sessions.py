"""Authoritative two-player sessions: tick loop, partial views, recording.

The server is the single source of truth: clients send actions, never
states. Each tick collects the latest input per player (NoForce when idle),
resets agent velocities (the human-control rule), steps the world, and sends
each player only what its agent observes. Finished sessions are written as
standard episode records flagged human-controlled.
"""

from __future__ import annotations

import asyncio
import itertools
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..episodes import (
    FORMAT_VERSION,
    EpisodeRecord,
    StepRecord,
    derive_seeds,
    episode_goals_met,
    save_record,
    session_step,
)
from ..perception import observe
from ..physics import Action
from ..scene import ScenarioConfig, classify_event
from .models import WIRE_VERSION


@dataclass
class PlayerSlot:
    agent_id: str
    connected: bool = False
    websocket: Optional[object] = None
    pending_action: Optional[Action] = None
    last_seen: float = 0.0


@dataclass
class SessionState:
    session_id: str
    config: ScenarioConfig
    tick_hz: float
    free_play_ticks: int
    rejoin_grace_s: float
    records_dir: Path
    phase: str = "lobby"
    tick: int = 0
    state: object = None
    slots: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    episode_id: Optional[str] = None
    termination: Optional[str] = None

    def __post_init__(self):
        self.state = self.config.initial.copy()
        self.table = self.config.body_table()
        self.walls = self.config.layout.wall_array()
        self.slots = [PlayerSlot(agent_id=a)
                      for a in sorted(self.config.agent_ids)]

    def slot_for(self, index: int) -> PlayerSlot:
        return self.slots[index]

    def all_connected(self) -> bool:
        return all(s.connected for s in self.slots)

    def any_connected(self) -> bool:
        return any(s.connected for s in self.slots)


def _entity_payload(state, table, entity_id):
    i = table.index(entity_id)
    holds = int(state.grab[i])
    return {
        "id": entity_id,
        "x": float(state.pos[i, 0]),
        "y": float(state.pos[i, 1]),
        "angle": float(state.ang[i]),
        "vx": float(state.vel[i, 0]),
        "vy": float(state.vel[i, 1]),
        "holding": table.ids[holds] if holds >= 0 else None,
    }


def config_message(session: SessionState, slot_index: int) -> dict:
    cfg = session.config
    return {
        "v": WIRE_VERSION,
        "type": "config",
        "session": session.session_id,
        "slot": slot_index,
        "agent_id": session.slots[slot_index].agent_id,
        "goals": {a: g.key() for a, g in cfg.goals.items()},
        "alpha": [list(x) for x in cfg.social.alpha],
        "max_steps": cfg.max_steps,
        "tick_hz": session.tick_hz,
        "layout": {
            "width": cfg.layout.width,
            "height": cfg.layout.height,
            "walls": [list(w) for w in cfg.layout.walls],
            "landmarks": [
                {"id": lm.landmark_id, "color": lm.color, "box": list(lm.box)}
                for lm in cfg.layout.landmarks
            ],
        },
        "entities": [
            {
                "id": e.entity_id,
                "kind": e.kind.value,
                "radius": e.radius,
                "color": e.color,
            }
            for e in cfg.entities
        ],
    }


def tick_view(session: SessionState, slot_index: int, observation) -> dict:
    """Partial view for one player: observed entities only (leak-freedom)."""
    table = session.table
    seen_ids = sorted(observation.seen_ids)
    return {
        "v": WIRE_VERSION,
        "type": "tick",
        "step": session.tick,
        "phase": session.phase,
        "agent_id": session.slots[slot_index].agent_id,
        "self": _entity_payload(session.state, table,
                                session.slots[slot_index].agent_id),
        "entities": [
            _entity_payload(session.state, table, e) for e in seen_ids
        ],
        "touched": list(observation.touched),
        "fov": np.packbits(observation.fov_mask).tobytes().hex(),
    }


class SessionManager:
    def __init__(self, records_dir, tick_sleep=asyncio.sleep):
        self.records_dir = Path(records_dir)
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, SessionState] = {}
        self._tasks: dict[str, asyncio.Task] = {}
        self._sleep = tick_sleep

    def create(self, config: ScenarioConfig, tick_hz: float = 4.0,
               free_play_ticks: int = 0,
               rejoin_grace_s: float = 10.0) -> SessionState:
        sid = uuid.uuid4().hex[:12]
        session = SessionState(
            session_id=sid,
            config=config,
            tick_hz=tick_hz,
            free_play_ticks=free_play_ticks,
            rejoin_grace_s=rejoin_grace_s,
            records_dir=self.records_dir,
        )
        self.sessions[sid] = session
        return session

    def get(self, sid: str) -> SessionState:
        return self.sessions[sid]

    async def connect(self, sid: str, slot_index: int, websocket) -> None:
        session = self.get(sid)
        slot = session.slot_for(slot_index)
        slot.websocket = websocket
        slot.connected = True
        slot.last_seen = time.monotonic()
        await websocket.send_json(config_message(session, slot_index))
        if session.all_connected() and session.phase == "lobby":
            session.phase = (
                "free_play" if session.free_play_ticks > 0 else "live"
            )
            if sid not in self._tasks:
                self._tasks[sid] = asyncio.ensure_future(
                    self._run_session(session)
                )
        elif session.phase == "paused" and session.all_connected():
            session.phase = "live"

    def disconnect(self, sid: str, slot_index: int) -> None:
        session = self.sessions.get(sid)
        if session is None:
            return
        slot = session.slot_for(slot_index)
        slot.connected = False
        slot.websocket = None
        if session.phase in ("live", "free_play"):
            session.phase = "paused"
            session.pause_deadline = time.monotonic() + session.rejoin_grace_s

    def submit_action(self, sid: str, slot_index: int, action: Action) -> None:
        # last write wins within a tick
        self.get(sid).slot_for(slot_index).pending_action = action

    async def _broadcast(self, session: SessionState, payload: dict) -> None:
        for slot in session.slots:
            if slot.connected and slot.websocket is not None:
                try:
                    await slot.websocket.send_json(payload)
                except Exception:
                    slot.connected = False

    async def _run_session(self, session: SessionState) -> None:
        interval = 1.0 / session.tick_hz
        free_left = session.free_play_ticks
        while True:
            await self._sleep(interval)
            if session.phase == "paused":
                if not session.any_connected() or (
                    time.monotonic() > getattr(session, "pause_deadline", 0)
                ):
                    session.termination = "aborted_disconnect"
                    break
                continue
            if session.phase == "ended":
                return
            if session.phase == "free_play" and free_left > 0:
                free_left -= 1
                await self._step_once(session, record=False)
                if free_left == 0:
                    session.phase = "live"
                    session.state = session.config.initial.copy()
                    session.tick = 0
                continue
            done = await self._step_once(session, record=True)
            if done:
                session.termination = session.termination or "goals_satisfied"
                break
            if session.tick >= session.config.max_steps:
                session.termination = "max_steps"
                break
        await self._finish(session)

    async def _step_once(self, session: SessionState, record: bool) -> bool:
        actions = {}
        for slot in session.slots:
            act = slot.pending_action or Action.NOFORCE
            slot.pending_action = None
            actions[slot.agent_id] = act
        observations = {
            i: observe(session.state, slot.agent_id, session.table,
                       session.walls, session.config.physics)
            for i, slot in enumerate(session.slots)
        }
        if record:
            session.steps.append(
                StepRecord(
                    t=session.tick,
                    state=session.state,
                    actions=dict(actions),
                    seen={s.agent_id: sorted(observations[i].seen_ids)
                          for i, s in enumerate(session.slots)},
                    touched={s.agent_id: list(observations[i].touched)
                             for i, s in enumerate(session.slots)},
                    fov={
                        s.agent_id: np.packbits(
                            observations[i].fov_mask
                        ).tobytes().hex()
                        for i, s in enumerate(session.slots)
                    },
                    subgoals={s.agent_id: None for s in session.slots},
                )
            )
        for i, slot in enumerate(session.slots):
            view = tick_view(session, i, observations[i])
            if slot.connected and slot.websocket is not None:
                try:
                    await slot.websocket.send_json(view)
                except Exception:
                    slot.connected = False
        session.state = session_step(session.state, actions, session.table,
                                     session.walls, session.config.physics)
        session.tick += 1
        return episode_goals_met(session.config, session.state, session.table)

    async def _finish(self, session: SessionState) -> None:
        session.phase = "ended"
        record = EpisodeRecord(
            version=FORMAT_VERSION,
            config=session.config,
            label=classify_event(session.config),
            seeds=derive_seeds(session.config.seed, session.config.agent_ids),
            steps=session.steps,
            final_state=session.state,
            termination=session.termination or "max_steps",
            human_controlled=True,
        )
        episode_id = f"human_{session.session_id}"
        save_record(record, self.records_dir / f"{episode_id}.jsonl")
        session.episode_id = episode_id
        await self._broadcast(session, {
            "v": WIRE_VERSION,
            "type": "end",
            "reason": session.termination,
            "episode_id": episode_id,
            "steps": len(session.steps),
        })
