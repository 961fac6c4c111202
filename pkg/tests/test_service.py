import json
import math
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from socialsim.episodes import (
    load_record,
    record_from_lines,
    verify_replay,
)
from socialsim.perception import observe
from socialsim.physics import Action
from socialsim.scene import GoalKind, GoalSpec, Layout
from socialsim.service import create_app
from socialsim.episodes import config_to_dict

from .conftest import corner_landmarks, simple_config


def _session_config(max_steps=24):
    lay = Layout(layout_id="svc", landmarks=corner_landmarks())
    cfg = simple_config(
        lay, [[6.0, 6.0], [14.0, 14.0], [10.0, 10.0]],
        {"a0": GoalSpec(GoalKind.GOTO, landmark_id="L2"),
         "a1": GoalSpec(GoalKind.GOTO, landmark_id="L0")},
        max_steps=max_steps,
        seed=404,
    )
    return cfg


@pytest.fixture
def client(tmp_path):
    app = create_app(episodes_dir=tmp_path / "episodes")
    with TestClient(app) as client:
        client.episodes_dir = tmp_path / "episodes"
        yield client


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_sample_and_run_and_verify(client):
    r = client.post("/scenarios/sample", json={"seed": 3, "max_steps": 40})
    assert r.status_code == 200
    cfg = r.json()
    assert len(cfg["entities"]) >= 2

    r = client.post("/episodes/run", json={
        "config": cfg,
        "budget": {"belief_particles": 6, "pomcp_simulations": 40},
    })
    assert r.status_code == 200
    summary = r.json()
    episode_id = summary["episode_id"]
    assert summary["steps"] >= 1

    r = client.get(f"/episodes/{episode_id}/verify")
    assert r.status_code == 200
    assert r.json()["ok"] is True

    r = client.get("/episodes")
    ids = [e["episode_id"] for e in r.json()]
    assert episode_id in ids

    r = client.get(f"/episodes/{episode_id}")
    lines = r.text.strip().splitlines()
    rec = record_from_lines(lines)
    assert verify_replay(rec)


def test_unknown_episode_404(client):
    assert client.get("/episodes/nope/verify").status_code == 404


def _drive_session(client, cfg, scripted, tick_hz=40.0, max_ticks=200):
    """Run a two-player session with scripted per-slot action callbacks.

    Returns (list of tick views per slot, end message, episode_id).
    """
    r = client.post("/sessions", json={
        "config": config_to_dict(cfg),
        "tick_hz": tick_hz,
    })
    assert r.status_code == 200
    info = r.json()
    sid = info["session_id"]
    views = {0: [], 1: []}
    ends = {}

    def run_slot(slot):
        with client.websocket_connect(
            f"/sessions/{sid}/play/{slot}"
        ) as ws:
            ws.send_json({"v": 1, "type": "join", "session": sid,
                          "slot": slot})
            config_msg = ws.receive_json()
            assert config_msg["type"] == "config"
            assert set(config_msg["goals"]) == {"a0", "a1"}
            for _ in range(max_ticks):
                msg = ws.receive_json()
                if msg["type"] == "tick":
                    views[slot].append(msg)
                    act = scripted(slot, msg)
                    if act is not None:
                        ws.send_json({"v": 1, "type": "input",
                                      "action": act.name})
                elif msg["type"] == "end":
                    ends[slot] = msg
                    break

    threads = [threading.Thread(target=run_slot, args=(i,)) for i in (0, 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert ends, "session never ended"
    return views, ends, next(iter(ends.values()))["episode_id"]


def test_session_idle_players_static(client):
    cfg = _session_config(max_steps=10)
    views, ends, episode_id = _drive_session(
        client, cfg, scripted=lambda slot, msg: None
    )
    for slot in (0, 1):
        xs = [v["self"]["x"] for v in views[slot]]
        ys = [v["self"]["y"] for v in views[slot]]
        assert max(xs) - min(xs) < 1e-9
        assert max(ys) - min(ys) < 1e-9


def test_session_eastward_control_and_record(client):
    cfg = _session_config(max_steps=16)

    def scripted(slot, msg):
        return Action.FORCE_E if slot == 0 else None

    views, ends, episode_id = _drive_session(client, cfg, scripted)
    xs = [v["self"]["x"] for v in views[0]]
    assert all(b >= a - 1e-9 for a, b in zip(xs, xs[1:]))
    assert xs[-1] > xs[0] + 1.0

    # recorded human episode replays bit-identically
    rec = load_record(client.episodes_dir / f"{episode_id}.jsonl")
    assert rec.human_controlled
    assert verify_replay(rec)
    assert rec.n_steps == 16


def test_session_leak_freedom_proxy(client):
    cfg = _session_config(max_steps=12)
    views, ends, episode_id = _drive_session(
        client, cfg,
        scripted=lambda slot, msg: Action.FORCE_N if slot == 0 else
        Action.FORCE_W,
    )
    rec = load_record(client.episodes_dir / f"{episode_id}.jsonl")
    table = rec.config.body_table()
    walls = rec.config.layout.wall_array()
    states = rec.states()
    for slot, agent in ((0, "a0"), (1, "a1")):
        for view in views[slot]:
            state = states[view["step"]]
            obs = observe(state, agent, table, walls, rec.config.physics)
            sent = {e["id"] for e in view["entities"]}
            assert sent == obs.seen_ids
            assert view["fov"] == np.packbits(obs.fov_mask).tobytes().hex()


def test_session_goal_completion_ends_early(client):
    lay = Layout(layout_id="svc2", landmarks=corner_landmarks())
    cfg = simple_config(
        lay, [[5.5, 5.5], [15.0, 15.0], [10.0, 2.0]],
        {"a0": GoalSpec(GoalKind.GOTO, landmark_id="L0"),
         "a1": GoalSpec(GoalKind.GOTO, landmark_id="L2")},
        max_steps=60,
        seed=405,
    )

    def scripted(slot, msg):
        return Action.FORCE_SW if slot == 0 else Action.FORCE_NE

    views, ends, episode_id = _drive_session(client, cfg, scripted)
    end = next(iter(ends.values()))
    assert end["reason"] == "goals_satisfied"
    assert end["steps"] < 60


def test_replay_stream_seek_play_and_annotations(client):
    cfg = _session_config(max_steps=8)
    _, _, episode_id = _drive_session(client, cfg,
                                      scripted=lambda s, m: None)
    with client.websocket_connect(f"/replays/{episode_id}/stream") as ws:
        header = ws.receive_json()
        assert header["type"] == "replay_config"
        assert header["steps"] == 8
        assert header["label"]["relation"] in (
            "friendly", "adversarial", "neutral"
        )
        ws.send_json({"type": "seek", "frame": 3})
        frame = ws.receive_json()
        assert frame["type"] == "replay_frame"
        assert frame["frame"] == 3
        # frame contents equal the recorded step state
        rec = load_record(client.episodes_dir / f"{episode_id}.jsonl")
        from socialsim.episodes import state_to_dict

        assert frame["state"] == state_to_dict(rec.states()[3])
        ws.send_json({"type": "speed", "speed": 50.0})
        ws.send_json({"type": "play"})
        got = []
        while True:
            msg = ws.receive_json()
            if msg["type"] == "replay_end":
                break
            got.append(msg["frame"])
        assert got == list(range(4, 9))
        ws.send_json({"type": "close"})


def test_inference_endpoint_small(client):
    r = client.post("/episodes/run", json={
        "seed": 21, "event_type": "independent", "max_steps": 30,
        "budget": {"belief_particles": 6, "pomcp_simulations": 40},
    })
    episode_id = r.json()["episode_id"]
    r = client.post("/inference", json={
        "episode_id": episode_id,
        "mode": "initial",
        "params": {"m_particles": 3, "l_iterations": 1,
                   "sim_belief_particles": 4, "sim_pomcp_simulations": 30},
    })
    assert r.status_code == 200
    body = r.json()
    assert sum(body["relation_posterior"].values()) == pytest.approx(1.0)
    assert len(body["weighted_hypotheses"]) == 3
    assert sum(h["weight"] for h in body["weighted_hypotheses"]) == (
        pytest.approx(1.0)
    )


def test_human_vs_synthetic_zero_delta_on_identical_sets(client):
    from socialsim.inference import InferenceParams
    from socialsim.service.compare import evaluate_human_vs_synthetic

    r = client.post("/episodes/run", json={
        "seed": 33, "event_type": "independent", "max_steps": 30,
        "budget": {"belief_particles": 6, "pomcp_simulations": 40},
    })
    episode_id = r.json()["episode_id"]
    rec = load_record(client.episodes_dir / f"{episode_id}.jsonl")
    params = InferenceParams(m_particles=3, l_iterations=1,
                             sim_belief_particles=4,
                             sim_pomcp_simulations=30)
    out = evaluate_human_vs_synthetic([rec], [rec], params, mode="initial")
    for stratum in ("all",):
        for metric, delta in out["delta"][stratum].items():
            if delta is not None:
                assert delta == pytest.approx(0.0, abs=1e-12)
    assert "independent" in out["delta"]  # per-relation breakdown present


def test_mismatched_sets_are_structural_error(client):
    from socialsim.episodes import StructuralError
    from socialsim.inference import InferenceParams
    from socialsim.service.compare import evaluate_human_vs_synthetic

    r = client.post("/episodes/run", json={
        "seed": 33, "event_type": "independent", "max_steps": 30,
        "budget": {"belief_particles": 6, "pomcp_simulations": 40},
    })
    id1 = r.json()["episode_id"]
    r = client.post("/episodes/run", json={
        "seed": 44, "event_type": "conflicting-goals", "max_steps": 40,
        "budget": {"belief_particles": 6, "pomcp_simulations": 40},
    })
    id2 = r.json()["episode_id"]
    a = load_record(client.episodes_dir / f"{id1}.jsonl")
    b = load_record(client.episodes_dir / f"{id2}.jsonl")
    with pytest.raises(StructuralError):
        evaluate_human_vs_synthetic([a], [b])
    with pytest.raises(StructuralError):
        evaluate_human_vs_synthetic([a], [a, b])
