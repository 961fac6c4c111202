"""Episode orchestration, the canonical record format, and replay.

One episode = the full perceive/believe/plan/act loop for both agents,
recorded step by step. Records serialize to JSON-lines: one header line
(config at full float precision, seeds, label), one line per step (state,
actions, observation summaries, selected subgoals; floats at 9 significant
digits), and a footer (termination). Replay re-derives every state from the
config and recorded actions and must match the stored states exactly in the
rounded domain; divergence names the first bad step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Optional

import numpy as np

from .gridnav import grids_for
from .perception import (
    BeliefParticleSet,
    Observation,
    init_particles,
    observe,
    update_particles,
)
from .physics import (
    Action,
    BodyTable,
    PhysicsParams,
    RejectedInputError,
    StrengthLevel,
    WorldState,
    step_world,
)
from .pomcp import PUCTParams, SearchContext, pomcp_act
from .scene import (
    EntityKind,
    EntitySpec,
    EventLabel,
    EventType,
    GoalSpec,
    Landmark,
    Layout,
    Relation,
    RewardSpec,
    ScenarioConfig,
    SocialWeights,
    classify_event,
    goal_satisfied,
)
from .symbolic import (
    SATISFIED,
    PlanContext,
    Predicate,
    carry_destination,
    encode_subgoal,
    nav_field_for_subgoal,
    plan_subgoals,
    select_subgoal,
    symbolize,
)

FORMAT_VERSION = 1


class ReplayIntegrityError(Exception):
    def __init__(self, step: int, message: str):
        super().__init__(f"replay diverged at step {step}: {message}")
        self.step = step


class StructuralError(Exception):
    pass


@dataclass(frozen=True)
class PlannerBudget:
    belief_particles: int = 50
    lambda_cost: float = 0.05
    puct: PUCTParams = field(default_factory=PUCTParams)

    def reduced(self, belief_particles: int, num_simulations: int
                ) -> "PlannerBudget":
        return PlannerBudget(
            belief_particles=belief_particles,
            lambda_cost=self.lambda_cost,
            puct=replace(self.puct, num_simulations=num_simulations),
        )


@dataclass
class StepRecord:
    t: int
    state: WorldState
    actions: dict  # agent_id -> Action
    seen: dict     # agent_id -> list of entity ids
    touched: dict  # agent_id -> list of entity ids
    fov: dict      # agent_id -> bytes-hex of packed cell mask
    subgoals: dict  # agent_id -> predicate key or None


@dataclass
class EpisodeRecord:
    version: int
    config: ScenarioConfig
    label: EventLabel
    seeds: dict
    steps: list  # list[StepRecord]
    final_state: WorldState
    termination: str
    human_controlled: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def states(self) -> list:
        return [s.state for s in self.steps] + [self.final_state]

    def positions(self) -> np.ndarray:
        """(T+1, N, 2) stacked entity centers."""
        return np.stack([s.pos for s in self.states()])

    def prefix(self, n_steps: int) -> "EpisodeRecord":
        if n_steps > self.n_steps:
            raise StructuralError(
                f"prefix of {n_steps} steps from {self.n_steps}-step record"
            )
        return EpisodeRecord(
            version=self.version,
            config=self.config,
            label=self.label,
            seeds=self.seeds,
            steps=self.steps[:n_steps],
            final_state=(
                self.steps[n_steps].state
                if n_steps < self.n_steps
                else self.final_state
            ),
            termination="prefix",
            human_controlled=self.human_controlled,
        )


def derive_seeds(config_seed: int, agent_ids) -> dict:
    ss = np.random.SeedSequence(config_seed)
    children = ss.spawn(2 * len(agent_ids))
    seeds: dict = {"config": config_seed, "belief": {}, "planner": {}}
    for i, a in enumerate(sorted(agent_ids)):
        seeds["belief"][a] = int(children[2 * i].generate_state(1)[0])
        seeds["planner"][a] = int(children[2 * i + 1].generate_state(1)[0])
    return seeds


def _step_rng(base_seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, step]))


def episode_goals_met(config: ScenarioConfig, state: WorldState,
                      table: BodyTable) -> bool:
    """Termination: physical goals met; helpers need their target's goal."""
    for a in config.agent_ids:
        other = config.other_agent(a)
        alpha = config.alpha(a, other)
        if alpha == 0:
            if not goal_satisfied(state, config.goals[a], table,
                                  config.layout, a):
                return False
        elif alpha > 0:
            if not goal_satisfied(state, config.goals[other], table,
                                  config.layout, other):
                return False
        else:
            return False  # hindering runs to the step limit
    return True


def run_episode(
    config: ScenarioConfig,
    budget: PlannerBudget = PlannerBudget(),
    horizon: Optional[int] = None,
    initial_state: Optional[WorldState] = None,
    beliefs: Optional[dict] = None,
    stop_on_goals: bool = True,
    inspector: Optional[Callable] = None,
) -> EpisodeRecord:
    """Execute the joint simulation loop and record everything.

    Per step and agent: observe, filter particles, plan subgoals per
    particle, pick the best-valued subgoal, POMCP on the matching particle
    subset; then one world step with both actions. Deterministic given the
    config seed.
    """
    table = config.body_table()
    walls = config.layout.wall_array()
    grids = grids_for(config.layout)
    params = config.physics
    seeds = derive_seeds(config.seed, config.agent_ids)

    state = (initial_state or config.initial).copy()
    if beliefs is None:
        beliefs = {
            a: init_particles(config, a, budget.belief_particles,
                              seed=seeds["belief"][a])
            for a in config.agent_ids
        }

    contexts = {
        a: PlanContext(
            agent_id=a,
            other_id=config.other_agent(a),
            table=table,
            layout=config.layout,
            grids=grids,
            params=params,
            observed_ids=frozenset(),
        )
        for a in config.agent_ids
    }

    max_steps = horizon if horizon is not None else config.max_steps
    prev_actions: dict = {a: None for a in config.agent_ids}
    steps: list[StepRecord] = []
    termination = "max_steps"
    pos_history = {a: [state.pos[table.index(a)].copy()]
                   for a in config.agent_ids}

    for t in range(max_steps):
        actions: dict = {}
        seen_rec: dict = {}
        touched_rec: dict = {}
        fov_rec: dict = {}
        subgoal_rec: dict = {}
        for a in config.agent_ids:
            obs = observe(state, a, table, walls, params)
            beliefs[a] = update_particles(
                beliefs[a], prev_actions[a], obs, config, state
            )
            ctx = replace(contexts[a], observed_ids=frozenset(obs.seen_ids))
            other = config.other_agent(a)
            alpha = config.alpha(a, other)
            plans = []
            for p in beliefs[a].particles:
                sym = symbolize(p, table, config.layout, params)
                plans.append(
                    plan_subgoals(sym, config.goals[a], config.goals[other],
                                  alpha, p, ctx)
                )
            head, subset_idx, _scores = select_subgoal(
                plans, beliefs[a].k, budget.lambda_cost,
            )
            if head == SATISFIED:
                speed = float(np.hypot(*state.vel[table.index(a)]))
                actions[a] = Action.STOP if speed > 0.1 else Action.NOFORCE
                subgoal_rec[a] = None
            else:
                dock = carry_destination(
                    plans[subset_idx[0]], head, config.layout
                )
                sgdvec = encode_subgoal(head, table, config.layout, params,
                                        dock_target=dock)
                subset = [beliefs[a].particles[i] for i in subset_idx]
                field = nav_field_for_subgoal(head, grids, table, subset[0])
                sctx = SearchContext.build(table, walls, params, a, sgdvec,
                                           field)
                rng = _step_rng(seeds["planner"][a], t)
                actions[a] = pomcp_act(subset, sctx, budget.puct, rng)
                subgoal_rec[a] = head.key()
            # grip-slip reflex: welded but pinned (no net movement over a
            # short window) means the hold is wedged; let go and re-dock
            ai = table.index(a)
            hist = pos_history[a]
            hist.append(state.pos[ai].copy())
            if len(hist) > 6:
                hist.pop(0)
            if (
                state.grab[ai] >= 0
                and len(hist) == 6
                and subgoal_rec[a] is not None
                and float(np.hypot(*(hist[-1] - hist[0]))) < 0.25
            ):
                actions[a] = Action.RELEASE
                hist.clear()
                hist.append(state.pos[ai].copy())
            seen_rec[a] = sorted(obs.seen_ids)
            touched_rec[a] = list(obs.touched)
            fov_rec[a] = np.packbits(obs.fov_mask).tobytes().hex()

        if inspector is not None:
            inspector(t, state, beliefs)

        steps.append(
            StepRecord(
                t=t,
                state=state,
                actions=dict(actions),
                seen=seen_rec,
                touched=touched_rec,
                fov=fov_rec,
                subgoals=subgoal_rec,
            )
        )
        state = step_world(state, actions, table, walls, params)
        prev_actions = dict(actions)

        if stop_on_goals and episode_goals_met(config, state, table):
            termination = "goals_satisfied"
            break

    return EpisodeRecord(
        version=FORMAT_VERSION,
        config=config,
        label=classify_event(config),
        seeds=seeds,
        steps=steps,
        final_state=state,
        termination=termination,
    )


# ---------------------------------------------------------------------------
# serialization

def _round9(x: float) -> float:
    return float(f"{x:.9g}")


def _arr9(a: np.ndarray) -> list:
    return [[_round9(v) for v in row] for row in np.atleast_2d(a)]


def state_to_dict(state: WorldState, rounded: bool = True) -> dict:
    conv = _round9 if rounded else float
    return {
        "t": state.step_index,
        "layout": state.layout_ref,
        "ids": list(state.ids),
        "pos": [[conv(v) for v in row] for row in state.pos],
        "vel": [[conv(v) for v in row] for row in state.vel],
        "ang": [conv(v) for v in state.ang],
        "avel": [conv(v) for v in state.avel],
        "grab": [int(v) for v in state.grab],
        "grab_off": [[conv(v) for v in row] for row in state.grab_off],
    }


def state_from_dict(d: dict) -> WorldState:
    n = len(d["ids"])
    return WorldState(
        step_index=int(d["t"]),
        layout_ref=d["layout"],
        ids=tuple(d["ids"]),
        pos=np.array(d["pos"], dtype=np.float64).reshape(n, 2),
        vel=np.array(d["vel"], dtype=np.float64).reshape(n, 2),
        ang=np.array(d["ang"], dtype=np.float64),
        avel=np.array(d["avel"], dtype=np.float64),
        grab=np.array(d["grab"], dtype=np.int64),
        grab_off=np.array(d["grab_off"], dtype=np.float64).reshape(n, 2),
    )


def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "layout": {
            "id": config.layout.layout_id,
            "width": config.layout.width,
            "height": config.layout.height,
            "walls": [list(w) for w in config.layout.walls],
            "landmarks": [
                {"id": lm.landmark_id, "color": lm.color, "box": list(lm.box)}
                for lm in config.layout.landmarks
            ],
        },
        "entities": [
            {
                "id": e.entity_id,
                "kind": e.kind.value,
                "size": e.size_level,
                "color": e.color,
                "strength": e.strength.level if e.strength else None,
                "max_force": e.strength.max_force if e.strength else None,
            }
            for e in config.entities
        ],
        "goals": {a: g.key() for a, g in config.goals.items()},
        "alpha": [list(x) for x in config.social.alpha],
        "initial": state_to_dict(config.initial, rounded=False),
        "seed": config.seed,
        "max_steps": config.max_steps,
        "reward": asdict(config.reward),
        "physics": asdict(config.physics),
    }


def config_from_dict(d: dict) -> ScenarioConfig:
    lay = d["layout"]
    layout = Layout(
        layout_id=lay["id"],
        width=lay["width"],
        height=lay["height"],
        walls=tuple(tuple(w) for w in lay["walls"]),
        landmarks=tuple(
            Landmark(lm["id"], lm["color"], tuple(lm["box"]))
            for lm in lay["landmarks"]
        ),
    )
    entities = tuple(
        EntitySpec(
            entity_id=e["id"],
            kind=EntityKind(e["kind"]),
            size_level=e["size"],
            color=e["color"],
            strength=(
                StrengthLevel(e["strength"], e["max_force"])
                if e["strength"] is not None
                else None
            ),
        )
        for e in d["entities"]
    )
    return ScenarioConfig(
        layout=layout,
        entities=entities,
        goals={a: GoalSpec.from_key(k) for a, k in d["goals"].items()},
        social=SocialWeights(
            alpha=tuple((a, b, int(v)) for a, b, v in d["alpha"])
        ),
        initial=state_from_dict(d["initial"]),
        seed=d["seed"],
        max_steps=d["max_steps"],
        reward=RewardSpec(**d["reward"]),
        physics=PhysicsParams(**d["physics"]),
    )


def record_to_lines(record: EpisodeRecord) -> list:
    header = {
        "version": record.version,
        "kind": "socialsim-episode",
        "human_controlled": record.human_controlled,
        "seeds": record.seeds,
        "label": {
            "event_type": record.label.event_type.value,
            "relation": record.label.relation.value,
        },
        "config": config_to_dict(record.config),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for s in record.steps:
        lines.append(
            json.dumps(
                {
                    "t": s.t,
                    "state": state_to_dict(s.state),
                    "actions": {a: act.name for a, act in s.actions.items()},
                    "seen": s.seen,
                    "touched": s.touched,
                    "fov": s.fov,
                    "subgoals": s.subgoals,
                },
                separators=(",", ":"),
            )
        )
    lines.append(
        json.dumps(
            {
                "end": {
                    "reason": record.termination,
                    "steps": record.n_steps,
                    "final_state": state_to_dict(record.final_state),
                }
            },
            separators=(",", ":"),
        )
    )
    return lines


def save_record(record: EpisodeRecord, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(record_to_lines(record)) + "\n")


def record_from_lines(lines: list) -> EpisodeRecord:
    if len(lines) < 2:
        raise StructuralError("episode file too short")
    try:
        header = json.loads(lines[0])
        footer = json.loads(lines[-1])
    except json.JSONDecodeError as e:
        raise StructuralError(f"malformed episode file: {e}") from e
    if "end" not in footer:
        raise StructuralError("episode file missing footer (truncated?)")
    config = config_from_dict(header["config"])
    steps = []
    for line in lines[1:-1]:
        d = json.loads(line)
        steps.append(
            StepRecord(
                t=d["t"],
                state=state_from_dict(d["state"]),
                actions={a: Action[n] for a, n in d["actions"].items()},
                seen=d["seen"],
                touched=d["touched"],
                fov=d["fov"],
                subgoals=d["subgoals"],
            )
        )
    label = EventLabel(
        EventType(header["label"]["event_type"]),
        Relation(header["label"]["relation"]),
    )
    return EpisodeRecord(
        version=header["version"],
        config=config,
        label=label,
        seeds=header["seeds"],
        steps=steps,
        final_state=state_from_dict(footer["end"]["final_state"]),
        termination=footer["end"]["reason"],
        human_controlled=header["human_controlled"],
    )


def load_record(path) -> EpisodeRecord:
    with open(path, "r", encoding="utf-8") as f:
        lines = [l for l in f.read().splitlines() if l.strip()]
    return record_from_lines(lines)


# ---------------------------------------------------------------------------
# replay

def session_step(state: WorldState, actions: dict, table: BodyTable,
                 walls: np.ndarray, params: PhysicsParams) -> WorldState:
    """Human-session dynamics: agent velocities reset before each step."""
    pre = state.copy()
    for a in table.agent_ids:
        i = table.index(a)
        pre.vel[i] = 0.0
        pre.avel[i] = 0.0
    return step_world(pre, actions, table, walls, params)


def replay(record: EpisodeRecord, verify: bool = True):
    """Yield re-derived states; verify them against the stored ones."""
    config = record.config
    table = config.body_table()
    walls = config.layout.wall_array()
    params = config.physics
    state = config.initial.copy()
    stepper = session_step if record.human_controlled else step_world

    for s in record.steps:
        if verify:
            got = state_to_dict(state)
            want = state_to_dict(s.state)
            if got != want:
                raise ReplayIntegrityError(s.t, "state mismatch")
        yield state
        state = stepper(state, s.actions, table, walls, params)
    if verify:
        got = state_to_dict(state)
        want = state_to_dict(record.final_state)
        if got != want:
            raise ReplayIntegrityError(record.n_steps, "final state mismatch")
    yield state


def verify_replay(record: EpisodeRecord) -> bool:
    for _ in replay(record, verify=True):
        pass
    return True
