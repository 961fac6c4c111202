"""FastAPI application: REST operations plus the live-session and replay
WebSocket endpoints. The CLI dispatches to the same core calls."""

from __future__ import annotations

import asyncio
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..dataset import GenerationSettings, generate_dataset
from ..episodes import (
    PlannerBudget,
    ReplayIntegrityError,
    StructuralError,
    load_record,
    run_episode,
    save_record,
    state_to_dict,
    verify_replay,
)
from ..evaluation import (
    MetricReport,
    ade_fde,
    constant_velocity_predict,
    score_prediction,
    score_recognition,
)
from ..inference import (
    InferenceParams,
    predict_trajectories,
    simple_infer,
)
from ..physics import Action
from ..pomcp import PUCTParams
from ..scene import EventType, SampleConstraints, sample_config
from ..episodes import config_from_dict, config_to_dict
from .models import (
    WIRE_VERSION,
    BudgetOverrides,
    CreateSessionRequest,
    EpisodeSummary,
    EvaluateRequest,
    GenerateRequest,
    HealthResponse,
    InferRequest,
    PosteriorResponse,
    RunEpisodeRequest,
    SampleScenarioRequest,
    SessionInfo,
)
from .sessions import SessionManager


def budget_from(model: BudgetOverrides) -> PlannerBudget:
    return PlannerBudget(
        belief_particles=model.belief_particles,
        lambda_cost=model.lambda_cost,
        puct=PUCTParams(
            num_simulations=model.pomcp_simulations,
            rollout_depth=model.rollout_depth,
        ),
    )


def params_from(model) -> InferenceParams:
    return InferenceParams(**model.model_dump())


def posterior_payload(episode_id, result, prediction=None) -> dict:
    post = result.posterior
    top = post.top_hypothesis
    return {
        "episode_id": episode_id,
        "mode": result.mode,
        "goal_posteriors": post.goal_posteriors,
        "alpha_posteriors": {
            f"{i}->{j}": {str(k): v for k, v in dist.items()}
            for (i, j), dist in post.alpha_posteriors.items()
        },
        "relation_posterior": post.relation_posterior,
        "strength_posteriors": {
            a: {str(k): v for k, v in dist.items()}
            for a, dist in post.strength_posteriors.items()
        },
        "top_hypothesis": {
            "goals": dict(top.goals),
            "alpha": [list(x) for x in top.alpha],
            "strengths": dict(top.strengths),
        },
        "clipping_fired": post.clipping_fired,
        "n_simulations": result.n_simulations,
        "prediction": prediction,
        "weighted_hypotheses": [
            {
                "goals": dict(p.hypothesis.goals),
                "alpha": [list(x) for x in p.hypothesis.alpha],
                "strengths": dict(p.hypothesis.strengths),
                "weight": p.weight,
                "log_likelihood": p.log_likelihood,
            }
            for p in result.particles
        ],
    }


def create_app(episodes_dir="var/episodes",
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="socialsim service", version=__version__)
    episodes_path = Path(episodes_dir)
    episodes_path.mkdir(parents=True, exist_ok=True)
    manager = SessionManager(records_dir=episodes_path)
    app.state.episodes_path = episodes_path
    app.state.manager = manager

    def episode_file(episode_id: str) -> Path:
        path = episodes_path / f"{episode_id}.jsonl"
        if not path.exists():
            raise HTTPException(404, f"unknown episode: {episode_id}")
        return path

    def load(episode_id: str):
        try:
            return load_record(episode_file(episode_id))
        except StructuralError as e:
            raise HTTPException(409, str(e)) from e

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(version=__version__)

    @app.post("/scenarios/sample")
    def scenarios_sample(req: SampleScenarioRequest):
        constraints = SampleConstraints(
            event_type=EventType(req.event_type) if req.event_type else None,
            max_steps=req.max_steps,
            n_objects=req.n_objects,
        )
        cfg = sample_config(req.seed, constraints)
        return config_to_dict(cfg)

    @app.post("/episodes/run", response_model=EpisodeSummary)
    def episodes_run(req: RunEpisodeRequest):
        if req.config is not None:
            cfg = config_from_dict(req.config)
        else:
            constraints = SampleConstraints(
                event_type=(
                    EventType(req.event_type) if req.event_type else None
                ),
                max_steps=req.max_steps,
            )
            cfg = sample_config(req.seed or 0, constraints)
        record = run_episode(cfg, budget_from(req.budget))
        episode_id = f"episode_{cfg.seed}"
        save_record(record, episodes_path / f"{episode_id}.jsonl")
        return EpisodeSummary(
            episode_id=episode_id,
            event_type=record.label.event_type.value,
            relation=record.label.relation.value,
            steps=record.n_steps,
            termination=record.termination,
            human_controlled=record.human_controlled,
            seed=cfg.seed,
        )

    @app.post("/episodes/generate")
    def episodes_generate(req: GenerateRequest):
        settings = GenerationSettings(
            budget=budget_from(req.budget),
            balance=req.balance,
            max_steps=req.max_steps,
            min_duration=req.min_duration,
            max_workers=req.max_workers,
        )
        manifest = generate_dataset(req.count, episodes_path, req.seed,
                                    settings)
        return json.loads((episodes_path / "manifest.json").read_text())

    @app.get("/episodes")
    def episodes_list():
        out = []
        for path in sorted(episodes_path.glob("*.jsonl")):
            header = json.loads(path.read_text().splitlines()[0])
            out.append({
                "episode_id": path.stem,
                "event_type": header["label"]["event_type"],
                "relation": header["label"]["relation"],
                "human_controlled": header["human_controlled"],
            })
        return out

    @app.get("/episodes/{episode_id}", response_class=PlainTextResponse)
    def episodes_get(episode_id: str):
        return episode_file(episode_id).read_text(encoding="utf-8")

    @app.get("/episodes/{episode_id}/verify")
    def episodes_verify(episode_id: str):
        record = load(episode_id)
        try:
            verify_replay(record)
        except ReplayIntegrityError as e:
            raise HTTPException(
                409, f"replay diverged at step {e.step}"
            ) from e
        return {"ok": True, "steps": record.n_steps}

    @app.post("/inference", response_model=PosteriorResponse)
    def inference(req: InferRequest):
        record = load(req.episode_id)
        params = params_from(req.params)
        try:
            result = simple_infer(record, params, mode=req.mode)
        except (StructuralError, ValueError) as e:
            raise HTTPException(409, str(e)) from e
        prediction = None
        if req.predict_horizon:
            pred = predict_trajectories(
                record, params, prefix_steps=req.prefix_steps,
                horizon=req.predict_horizon,
            )
            ade, fde = score_prediction(record, pred, req.prefix_steps)
            cv = constant_velocity_predict(record, req.prefix_steps,
                                           req.predict_horizon)
            cv_ade, cv_fde = score_prediction(record, cv, req.prefix_steps)
            prediction = {
                "positions": pred.tolist(),
                "ade": ade, "fde": fde,
                "cv_ade": cv_ade, "cv_fde": cv_fde,
            }
        return posterior_payload(req.episode_id, result, prediction)

    @app.post("/evaluate")
    def evaluate(req: EvaluateRequest):
        ids = req.episode_ids or [p.stem for p in
                                  sorted(episodes_path.glob("*.jsonl"))
                                  if p.stem != "manifest"]
        predictions_dir = Path(req.predictions_dir) if req.predictions_dir \
            else None
        report = MetricReport()
        scored = 0
        for episode_id in ids:
            record = load(episode_id)
            pred_path = (
                predictions_dir / f"{episode_id}.json"
                if predictions_dir else None
            )
            if pred_path is None or not pred_path.exists():
                continue
            payload = json.loads(pred_path.read_text())
            from ..inference import PosteriorSummary

            post = PosteriorSummary(
                goal_posteriors=payload["goal_posteriors"],
                alpha_posteriors={},
                relation_posterior=payload["relation_posterior"],
                strength_posteriors={},
                top_hypothesis=None,
                clipping_fired=payload.get("clipping_fired", False),
            )
            score = score_recognition(record, post)
            if payload.get("prediction"):
                pred = np.array(payload["prediction"]["positions"])
                prefix = payload.get("prefix_steps", 20)
                if record.n_steps >= prefix:
                    score.ade, score.fde = score_prediction(record, pred,
                                                            prefix)
            report.add(score)
            scored += 1
        return {"episodes_scored": scored, "summary": report.summary()}

    # ------------------------------------------------------------------
    # sessions

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        if req.config is not None:
            cfg = config_from_dict(req.config)
        else:
            constraints = SampleConstraints(
                event_type=(
                    EventType(req.event_type) if req.event_type else None
                ),
                max_steps=req.max_steps,
            )
            cfg = sample_config(req.seed or 0, constraints)
        session = manager.create(
            cfg, tick_hz=req.tick_hz, free_play_ticks=req.free_play_ticks,
            rejoin_grace_s=req.rejoin_grace_s,
        )
        return {
            "session_id": session.session_id,
            "slots": [s.agent_id for s in session.slots],
            "join_paths": [
                f"/sessions/{session.session_id}/play/{i}"
                for i in range(len(session.slots))
            ],
        }

    @app.get("/sessions/{sid}", response_model=SessionInfo)
    def session_info(sid: str):
        if sid not in manager.sessions:
            raise HTTPException(404, "unknown session")
        s = manager.get(sid)
        return SessionInfo(
            session_id=sid,
            phase=s.phase,
            tick=s.tick,
            slots=[
                {"agent_id": slot.agent_id, "connected": slot.connected}
                for slot in s.slots
            ],
            goals={a: g.key() for a, g in s.config.goals.items()},
        )

    @app.websocket("/sessions/{sid}/play/{slot}")
    async def play(websocket: WebSocket, sid: str, slot: int):
        await websocket.accept()
        if sid not in manager.sessions:
            await websocket.close(code=4004)
            return
        try:
            first = await websocket.receive_json()
            if first.get("type") != "join":
                await websocket.close(code=4002)
                return
            await manager.connect(sid, slot, websocket)
            while True:
                msg = await websocket.receive_json()
                if msg.get("type") == "input":
                    try:
                        action = Action[msg["action"]]
                    except KeyError:
                        continue  # unknown action tags are ignored
                    manager.submit_action(sid, slot, action)
                elif msg.get("type") == "leave":
                    break
        except WebSocketDisconnect:
            pass
        finally:
            manager.disconnect(sid, slot)

    # ------------------------------------------------------------------
    # replay streaming

    @app.websocket("/replays/{episode_id}/stream")
    async def stream_replay(websocket: WebSocket, episode_id: str):
        await websocket.accept()
        path = episodes_path / f"{episode_id}.jsonl"
        if not path.exists():
            await websocket.close(code=4004)
            return
        try:
            record = load_record(path)
        except StructuralError:
            await websocket.send_json(
                {"v": WIRE_VERSION, "type": "error",
                 "error": "malformed episode file"}
            )
            await websocket.close(code=4009)
            return

        states = record.states()
        speed = 1.0
        frame = 0
        playing = False
        header = {
            "v": WIRE_VERSION,
            "type": "replay_config",
            "episode_id": episode_id,
            "steps": record.n_steps,
            "label": {
                "event_type": record.label.event_type.value,
                "relation": record.label.relation.value,
            },
            "goals": {a: g.key() for a, g in record.config.goals.items()},
            "human_controlled": record.human_controlled,
            "layout": {
                "width": record.config.layout.width,
                "height": record.config.layout.height,
                "walls": [list(w) for w in record.config.layout.walls],
                "landmarks": [
                    {"id": lm.landmark_id, "color": lm.color,
                     "box": list(lm.box)}
                    for lm in record.config.layout.landmarks
                ],
            },
            "entities": [
                {"id": e.entity_id, "kind": e.kind.value, "radius": e.radius,
                 "color": e.color}
                for e in record.config.entities
            ],
        }

        def frame_payload(k: int) -> dict:
            subgoals = (
                record.steps[k].subgoals if k < record.n_steps else {}
            )
            actions = (
                {a: act.name for a, act in record.steps[k].actions.items()}
                if k < record.n_steps else {}
            )
            return {
                "v": WIRE_VERSION,
                "type": "replay_frame",
                "frame": k,
                "state": state_to_dict(states[k]),
                "subgoals": subgoals,
                "actions": actions,
            }

        await websocket.send_json(header)
        try:
            while True:
                if playing:
                    try:
                        msg = await asyncio.wait_for(
                            websocket.receive_json(),
                            timeout=0.25 / max(speed, 1e-6),
                        )
                    except asyncio.TimeoutError:
                        msg = None
                else:
                    msg = await websocket.receive_json()
                if msg is not None:
                    kind = msg.get("type")
                    if kind == "seek":
                        frame = max(0, min(int(msg.get("frame", 0)),
                                           len(states) - 1))
                        await websocket.send_json(frame_payload(frame))
                    elif kind == "play":
                        playing = True
                    elif kind == "pause":
                        playing = False
                    elif kind == "speed":
                        speed = float(msg.get("speed", 1.0))
                    elif kind == "close":
                        break
                    continue
                # timer fired while playing: advance one frame
                if frame < len(states) - 1:
                    frame += 1
                    await websocket.send_json(frame_payload(frame))
                else:
                    playing = False
                    await websocket.send_json(
                        {"v": WIRE_VERSION, "type": "replay_end"}
                    )
        except WebSocketDisconnect:
            pass

    if frontend_dir and Path(frontend_dir).exists():
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True),
                  name="ui")

    return app
