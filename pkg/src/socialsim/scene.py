"""Scenario data model: layouts, entities, goals, social weights, events.

A ScenarioConfig is the generative "question": everything needed to run one
social event. Procedural sampling (sample_config / generate_layouts) honors
event-type constraints and stays deterministic per seed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .physics import (
    Action,
    BodyTable,
    PhysicsParams,
    RejectedInputError,
    StrengthLevel,
    WorldState,
    make_world,
    mass_for_radius,
    radius_for_size,
)

GRID_W = 20
GRID_H = 20

LANDMARK_COLORS = ("red", "yellow", "blue", "purple")
AGENT_COLORS = ("green", "pink")
OBJECT_COLORS = ("orange", "cyan")


class ConstraintError(Exception):
    """Raised when constrained sampling cannot produce a valid scenario."""


@dataclass(frozen=True)
class Landmark:
    landmark_id: str
    color: str
    box: tuple[float, float, float, float]  # x0, y0, x1, y1

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.box
        return x0 <= x <= x1 and y0 <= y <= y1

    def distance(self, x: float, y: float) -> float:
        x0, y0, x1, y1 = self.box
        dx = max(x0 - x, 0.0, x - x1)
        dy = max(y0 - y, 0.0, y - y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Layout:
    """Arena walls and landmarks; internal walls sit on integer grid lines."""

    layout_id: str
    width: float = float(GRID_W)
    height: float = float(GRID_H)
    walls: tuple[tuple[float, float, float, float], ...] = ()
    landmarks: tuple[Landmark, ...] = ()

    def wall_array(self, include_bounds: bool = True) -> np.ndarray:
        segs = []
        if include_bounds:
            w, h = self.width, self.height
            segs += [(0, 0, w, 0), (w, 0, w, h), (w, h, 0, h), (0, h, 0, 0)]
        segs += list(self.walls)
        return np.array(segs, dtype=np.float64).reshape(len(segs), 4)

    def landmark_by_id(self, landmark_id: str) -> Landmark:
        for lm in self.landmarks:
            if lm.landmark_id == landmark_id:
                return lm
        raise RejectedInputError(f"unknown landmark: {landmark_id}")


class EntityKind(str, enum.Enum):
    AGENT = "agent"
    OBJECT = "object"


@dataclass(frozen=True)
class EntitySpec:
    entity_id: str
    kind: EntityKind
    size_level: int
    color: str
    strength: Optional[StrengthLevel] = None

    @property
    def radius(self) -> float:
        return radius_for_size(self.size_level)

    @property
    def mass(self) -> float:
        return mass_for_radius(self.radius)


def build_body_table(entities: Sequence[EntitySpec]) -> BodyTable:
    n = len(entities)
    kinds = np.zeros(n, dtype=np.uint8)
    radii = np.zeros(n, dtype=np.float64)
    masses = np.zeros(n, dtype=np.float64)
    maxf = np.zeros(n, dtype=np.float64)
    for i, e in enumerate(entities):
        kinds[i] = 0 if e.kind == EntityKind.AGENT else 1
        radii[i] = e.radius
        masses[i] = e.mass
        if e.kind == EntityKind.AGENT:
            if e.strength is None:
                raise RejectedInputError(f"agent {e.entity_id} has no strength")
            maxf[i] = e.strength.max_force
    return BodyTable(
        ids=tuple(e.entity_id for e in entities),
        kinds=kinds, radii=radii, masses=masses, max_forces=maxf,
    )


class GoalKind(str, enum.Enum):
    GOTO = "goto"
    MOVE_OBJECT = "move_object"
    APPROACH = "approach"
    AVOID = "avoid"


@dataclass(frozen=True)
class GoalSpec:
    kind: GoalKind
    landmark_id: Optional[str] = None
    object_id: Optional[str] = None
    other_agent_id: Optional[str] = None

    def key(self) -> str:
        if self.kind == GoalKind.GOTO:
            return f"goto:{self.landmark_id}"
        if self.kind == GoalKind.MOVE_OBJECT:
            return f"move:{self.object_id}:{self.landmark_id}"
        if self.kind == GoalKind.APPROACH:
            return f"approach:{self.other_agent_id}"
        return f"avoid:{self.other_agent_id}"

    @staticmethod
    def from_key(key: str) -> "GoalSpec":
        parts = key.split(":")
        if parts[0] == "goto":
            return GoalSpec(GoalKind.GOTO, landmark_id=parts[1])
        if parts[0] == "move":
            return GoalSpec(GoalKind.MOVE_OBJECT, object_id=parts[1],
                            landmark_id=parts[2])
        if parts[0] == "approach":
            return GoalSpec(GoalKind.APPROACH, other_agent_id=parts[1])
        if parts[0] == "avoid":
            return GoalSpec(GoalKind.AVOID, other_agent_id=parts[1])
        raise RejectedInputError(f"bad goal key: {key}")


def grounded_goals(agent_id: str, agent_ids: Sequence[str],
                   object_ids: Sequence[str],
                   landmark_ids: Sequence[str]) -> list[GoalSpec]:
    """All physical goals available to one agent in this scenario."""
    goals = [GoalSpec(GoalKind.GOTO, landmark_id=l) for l in landmark_ids]
    for o in object_ids:
        goals += [
            GoalSpec(GoalKind.MOVE_OBJECT, object_id=o, landmark_id=l)
            for l in landmark_ids
        ]
    others = [a for a in agent_ids if a != agent_id]
    for other in others:
        goals.append(GoalSpec(GoalKind.APPROACH, other_agent_id=other))
        goals.append(GoalSpec(GoalKind.AVOID, other_agent_id=other))
    return goals


@dataclass(frozen=True)
class SocialWeights:
    """Ordered-pair weights; at most one nonzero (proposal scheme)."""

    alpha: tuple[tuple[str, str, int], ...] = ()

    def __post_init__(self):
        nonzero = [a for a in self.alpha if a[2] != 0]
        if len(nonzero) > 1:
            raise RejectedInputError("at most one nonzero social weight allowed")
        for _, _, v in self.alpha:
            if v not in (-1, 0, 1):
                raise RejectedInputError(f"social weight out of range: {v}")

    def get(self, i: str, j: str) -> int:
        for a, b, v in self.alpha:
            if a == i and b == j:
                return v
        return 0

    @staticmethod
    def pair(i: str, j: str, a_ij: int, a_ji: int) -> "SocialWeights":
        return SocialWeights(alpha=((i, j, a_ij), (j, i, a_ji)))


AVOID_RADIUS = 6.0
TOUCH_GOAL_EPS = 0.25


@dataclass(frozen=True)
class RewardSpec:
    """Shaped goal progress: satisfaction bonus minus scaled distance."""

    satisfaction_bonus: float = 1.0
    shaping_scale: float = 0.03
    force_action_cost: float = 0.0
    planning_horizon: int = 20

    def action_cost(self, action: Action) -> float:
        return -self.force_action_cost if action.is_force else 0.0


def goal_distance(state: WorldState, goal: GoalSpec, table: BodyTable,
                  layout: Layout, agent_id: str) -> float:
    """Distance-to-goal-state measure used for rewards and cue proposals."""
    ai = table.index(agent_id)
    ax, ay = state.pos[ai]
    if goal.kind == GoalKind.GOTO:
        lm = layout.landmark_by_id(goal.landmark_id)
        return lm.distance(ax, ay)
    if goal.kind == GoalKind.MOVE_OBJECT:
        oi = table.index(goal.object_id)
        lm = layout.landmark_by_id(goal.landmark_id)
        obj_d = lm.distance(state.pos[oi, 0], state.pos[oi, 1])
        gap = max(
            0.0,
            float(np.hypot(*(state.pos[oi] - state.pos[ai])))
            - table.radii[ai] - table.radii[oi],
        )
        return obj_d + gap
    oi = table.index(goal.other_agent_id)
    gap = max(
        0.0,
        float(np.hypot(*(state.pos[oi] - state.pos[ai])))
        - table.radii[ai] - table.radii[oi],
    )
    if goal.kind == GoalKind.APPROACH:
        return max(0.0, gap - TOUCH_GOAL_EPS)
    return max(0.0, AVOID_RADIUS - gap)


def goal_satisfied(state: WorldState, goal: GoalSpec, table: BodyTable,
                   layout: Layout, agent_id: str) -> bool:
    if goal.kind == GoalKind.GOTO:
        lm = layout.landmark_by_id(goal.landmark_id)
        ai = table.index(agent_id)
        return lm.contains(state.pos[ai, 0], state.pos[ai, 1])
    if goal.kind == GoalKind.MOVE_OBJECT:
        oi = table.index(goal.object_id)
        lm = layout.landmark_by_id(goal.landmark_id)
        return lm.contains(state.pos[oi, 0], state.pos[oi, 1])
    return goal_distance(state, goal, table, layout, agent_id) <= 1e-9


def goal_progress_reward(state: WorldState, goal: GoalSpec, table: BodyTable,
                         layout: Layout, agent_id: str,
                         spec: RewardSpec) -> float:
    d = goal_distance(state, goal, table, layout, agent_id)
    bonus = (
        spec.satisfaction_bonus
        if goal_satisfied(state, goal, table, layout, agent_id)
        else 0.0
    )
    return bonus - spec.shaping_scale * d


class EventType(str, enum.Enum):
    HELPING = "helping-obstacle"
    COLLABORATION = "joint-collaboration"
    HINDERING = "hindering"
    CONFLICTING = "conflicting-goals"
    INDEPENDENT = "independent"


class Relation(str, enum.Enum):
    FRIENDLY = "friendly"
    ADVERSARIAL = "adversarial"
    NEUTRAL = "neutral"


RELATION_OF_EVENT = {
    EventType.HELPING: Relation.FRIENDLY,
    EventType.COLLABORATION: Relation.FRIENDLY,
    EventType.HINDERING: Relation.ADVERSARIAL,
    EventType.CONFLICTING: Relation.ADVERSARIAL,
    EventType.INDEPENDENT: Relation.NEUTRAL,
}


@dataclass(frozen=True)
class EventLabel:
    event_type: EventType
    relation: Relation

    def __post_init__(self):
        if RELATION_OF_EVENT[self.event_type] != self.relation:
            raise RejectedInputError(
                f"relation {self.relation} inconsistent with {self.event_type}"
            )

    @staticmethod
    def of(event_type: EventType) -> "EventLabel":
        return EventLabel(event_type, RELATION_OF_EVENT[event_type])


def goals_conflict(g1: GoalSpec, g2: GoalSpec, a1: str, a2: str) -> bool:
    """Same object to different landmarks, or an approach/avoid pairing."""
    if (
        g1.kind == GoalKind.MOVE_OBJECT
        and g2.kind == GoalKind.MOVE_OBJECT
        and g1.object_id == g2.object_id
        and g1.landmark_id != g2.landmark_id
    ):
        return True
    if (
        g1.kind == GoalKind.APPROACH
        and g2.kind == GoalKind.AVOID
        and g1.other_agent_id == a2
        and g2.other_agent_id == a1
    ):
        return True
    if (
        g1.kind == GoalKind.AVOID
        and g2.kind == GoalKind.APPROACH
        and g1.other_agent_id == a2
        and g2.other_agent_id == a1
    ):
        return True
    return False


@dataclass(frozen=True)
class ScenarioConfig:
    layout: Layout
    entities: tuple[EntitySpec, ...]
    goals: dict  # agent_id -> GoalSpec
    social: SocialWeights
    initial: WorldState
    seed: int
    max_steps: int = 60
    reward: RewardSpec = field(default_factory=RewardSpec)
    physics: PhysicsParams = field(default_factory=PhysicsParams)

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(
            e.entity_id for e in self.entities if e.kind == EntityKind.AGENT
        )

    @property
    def object_ids(self) -> tuple[str, ...]:
        return tuple(
            e.entity_id for e in self.entities if e.kind == EntityKind.OBJECT
        )

    @property
    def landmark_ids(self) -> tuple[str, ...]:
        return tuple(lm.landmark_id for lm in self.layout.landmarks)

    def body_table(self) -> BodyTable:
        return build_body_table(self.entities)

    def entity_spec(self, entity_id: str) -> EntitySpec:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise RejectedInputError(f"unknown entity: {entity_id}")

    def other_agent(self, agent_id: str) -> str:
        for a in self.agent_ids:
            if a != agent_id:
                return a
        raise RejectedInputError("scenario has a single agent")

    def alpha(self, i: str, j: str) -> int:
        return self.social.get(i, j)

    def grounded_goals_for(self, agent_id: str) -> list[GoalSpec]:
        return grounded_goals(
            agent_id, self.agent_ids, self.object_ids, self.landmark_ids
        )


def reward(state: WorldState, agent_id: str, config: ScenarioConfig,
           action: Action) -> float:
    """Two-agent social reward mixing own and other's goal progress.

    R_i = (1 - |a_ij|) R(s, g_i) + a_ij R(s, g_j) + C(a).
    """
    table = config.body_table()
    j = config.other_agent(agent_id)
    a_ij = config.alpha(agent_id, j)
    r_own = goal_progress_reward(
        state, config.goals[agent_id], table, config.layout, agent_id,
        config.reward,
    )
    r_other = goal_progress_reward(
        state, config.goals[j], table, config.layout, j, config.reward
    )
    return (
        (1 - abs(a_ij)) * r_own
        + a_ij * r_other
        + config.reward.action_cost(action)
    )


def classify_event(config: ScenarioConfig) -> EventLabel:
    """Deterministic event labeling from goals and social weights."""
    ids = config.agent_ids
    a01 = config.alpha(ids[0], ids[1])
    a10 = config.alpha(ids[1], ids[0])
    if a01 > 0 or a10 > 0:
        return EventLabel.of(EventType.HELPING)
    if a01 < 0 or a10 < 0:
        return EventLabel.of(EventType.HINDERING)
    g0, g1 = config.goals[ids[0]], config.goals[ids[1]]
    if g0 == g1 and g0.kind in (GoalKind.MOVE_OBJECT, GoalKind.GOTO):
        return EventLabel.of(EventType.COLLABORATION)
    if goals_conflict(g0, g1, ids[0], ids[1]):
        return EventLabel.of(EventType.CONFLICTING)
    return EventLabel.of(EventType.INDEPENDENT)


# ---------------------------------------------------------------------------
# connectivity

def wall_edge_blocks(layout: Layout) -> tuple[np.ndarray, np.ndarray]:
    """Grid-edge blocking masks from integer-aligned wall segments."""
    bh = np.zeros((GRID_H, GRID_W - 1), dtype=np.uint8)
    bv = np.zeros((GRID_H - 1, GRID_W), dtype=np.uint8)
    for x1, y1, x2, y2 in layout.walls:
        if abs(y1 - y2) < 1e-9:  # horizontal wall: blocks vertical moves
            y = int(round(y1))
            xa, xb = sorted((x1, x2))
            if 1 <= y <= GRID_H - 1:
                for x in range(int(math.floor(xa)), int(math.ceil(xb))):
                    if 0 <= x < GRID_W:
                        bv[y - 1, x] = 1
        elif abs(x1 - x2) < 1e-9:  # vertical wall: blocks horizontal moves
            x = int(round(x1))
            ya, yb = sorted((y1, y2))
            if 1 <= x <= GRID_W - 1:
                for y in range(int(math.floor(ya)), int(math.ceil(yb))):
                    if 0 <= y < GRID_H:
                        bh[y, x - 1] = 1
    return bh, bv


def free_space_connected(layout: Layout) -> bool:
    from . import kernels

    bh, bv = wall_edge_blocks(layout)
    src = np.zeros(GRID_W * GRID_H, dtype=np.uint8)
    src[0] = 1
    dist = np.empty(GRID_W * GRID_H, dtype=np.int64)
    kernels.bfs_grid(bh, bv, GRID_W, GRID_H, src, dist)
    return bool(np.all(dist >= 0))


# ---------------------------------------------------------------------------
# procedural generation

def _corner_landmarks(rng: np.random.Generator) -> tuple[Landmark, ...]:
    w, h = float(GRID_W), float(GRID_H)
    sizes = rng.integers(4, 6, size=4)  # 4..5 cells per side
    corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
    colors = list(LANDMARK_COLORS)
    rng.shuffle(colors)
    lms = []
    for k, ((cx, cy), color) in enumerate(zip(corners, colors)):
        s = float(sizes[k])
        x0 = cx if cx == 0.0 else cx - s
        y0 = cy if cy == 0.0 else cy - s
        lms.append(Landmark(f"L{k}", color, (x0, y0, x0 + s, y0 + s)))
    return tuple(lms)


def _sample_walls(rng: np.random.Generator) -> tuple[tuple[float, float, float, float], ...]:
    """Rooms-and-doors walls on integer grid lines, with door gaps."""
    walls = []
    n_walls = int(rng.integers(1, 4))
    used_coords: set[tuple[str, int]] = set()
    for _ in range(n_walls):
        for _try in range(20):
            vertical = bool(rng.integers(0, 2))
            coord = int(rng.integers(5, 16))
            axis = ("v" if vertical else "h", coord)
            if axis in used_coords:
                continue
            used_coords.add(axis)
            style = rng.integers(0, 3)
            span = GRID_W if not vertical else GRID_H
            if style == 0:
                # full line with one door
                door_w = int(rng.integers(2, 4))
                door_at = int(rng.integers(1, span - door_w - 1))
                spans = [(0, door_at), (door_at + door_w, span)]
            elif style == 1:
                # full line with two doors
                door_w = int(rng.integers(2, 4))
                d1 = int(rng.integers(1, span // 2 - door_w))
                d2 = int(rng.integers(span // 2 + 1, span - door_w - 1))
                spans = [(0, d1), (d1 + door_w, d2), (d2 + door_w, span)]
            else:
                # stub wall from one edge
                length = int(rng.integers(4, span - 4))
                spans = [(0, length)] if rng.integers(0, 2) else [(span - length, span)]
            for a, b in spans:
                if b - a < 1:
                    continue
                if vertical:
                    walls.append((float(coord), float(a), float(coord), float(b)))
                else:
                    walls.append((float(a), float(coord), float(b), float(coord)))
            break
    return tuple(walls)


def generate_layouts(count: int, seed: int) -> list[Layout]:
    """Connected rooms-and-doors layouts, deterministic per seed."""
    rng = np.random.default_rng(seed)
    layouts = []
    attempt = 0
    while len(layouts) < count:
        attempt += 1
        if attempt > count * 50 + 100:
            raise ConstraintError("layout generation failed to converge")
        lay = Layout(
            layout_id=f"layout-{seed}-{attempt:04d}",
            walls=_sample_walls(rng),
            landmarks=_corner_landmarks(rng),
        )
        if free_space_connected(lay):
            layouts.append(lay)
    return layouts


def _wall_clearance(layout: Layout, x: float, y: float) -> float:
    from .kernels import seg_point_dist2

    best = min(x, y, layout.width - x, layout.height - y)
    for x1, y1, x2, y2 in layout.walls:
        d2, _, _ = seg_point_dist2(x1, y1, x2, y2, x, y)
        best = min(best, math.sqrt(d2))
    return best


def _place_entities(
    rng: np.random.Generator, layout: Layout, specs: Sequence[EntitySpec],
) -> Optional[np.ndarray]:
    pos = np.zeros((len(specs), 2), dtype=np.float64)
    for i, spec in enumerate(specs):
        r = spec.radius
        ok = False
        for _try in range(200):
            x = rng.uniform(r + 0.1, layout.width - r - 0.1)
            y = rng.uniform(r + 0.1, layout.height - r - 0.1)
            if _wall_clearance(layout, x, y) <= r + 0.1:
                continue
            clear = True
            for j in range(i):
                if math.hypot(x - pos[j, 0], y - pos[j, 1]) <= r + specs[j].radius + 0.3:
                    clear = False
                    break
            if clear:
                pos[i] = (x, y)
                ok = True
                break
        if not ok:
            return None
    return pos


def drag_threshold(size_level: int, params: PhysicsParams) -> float:
    """Propulsion needed to get a resting object of this size moving."""
    r = radius_for_size(size_level)
    return params.mu_static * mass_for_radius(r)


@dataclass(frozen=True)
class SampleConstraints:
    event_type: Optional[EventType] = None
    layouts: Optional[tuple[Layout, ...]] = None
    n_objects: Optional[int] = None
    max_steps: Optional[int] = None
    agent_sizes: Optional[tuple[int, int]] = None
    agent_strengths: Optional[tuple[int, int]] = None


def _pick_goal(rng, agent_id, other_id, object_ids, landmark_ids,
               allow_social_targets=True) -> GoalSpec:
    kinds = ["goto"] + (["move"] if object_ids else [])
    if allow_social_targets:
        kinds += ["approach", "avoid"]
    k = kinds[int(rng.integers(0, len(kinds)))]
    if k == "goto":
        return GoalSpec(GoalKind.GOTO,
                        landmark_id=str(rng.choice(list(landmark_ids))))
    if k == "move":
        return GoalSpec(
            GoalKind.MOVE_OBJECT,
            object_id=str(rng.choice(list(object_ids))),
            landmark_id=str(rng.choice(list(landmark_ids))),
        )
    if k == "approach":
        return GoalSpec(GoalKind.APPROACH, other_agent_id=other_id)
    return GoalSpec(GoalKind.AVOID, other_agent_id=other_id)


def sample_config(
    seed: int,
    constraints: SampleConstraints = SampleConstraints(),
    params: PhysicsParams = PhysicsParams(),
) -> ScenarioConfig:
    """Sample a valid scenario; identical seeds give identical configs."""
    rng = np.random.default_rng(seed)
    for _attempt in range(60):
        cfg = _try_sample(rng, seed, constraints, params)
        if cfg is not None:
            return cfg
    raise ConstraintError(f"could not satisfy constraints {constraints}")


def _try_sample(rng, seed, c: SampleConstraints,
                params: PhysicsParams) -> Optional[ScenarioConfig]:
    if c.layouts:
        layout = c.layouts[int(rng.integers(0, len(c.layouts)))]
    else:
        layout = generate_layouts(1, int(rng.integers(0, 2**31)))[0]

    event = c.event_type or list(EventType)[int(rng.integers(0, 5))]

    needs_object = event in (
        EventType.HELPING, EventType.COLLABORATION, EventType.CONFLICTING
    )
    n_obj = c.n_objects if c.n_objects is not None else int(rng.integers(0, 3))
    if needs_object:
        n_obj = max(1, n_obj)
    if event == EventType.HINDERING:
        n_obj = max(1, n_obj)  # steal-style hindering needs a target object

    sizes = c.agent_sizes or (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
    strengths = c.agent_strengths or (
        int(rng.integers(1, 5)), int(rng.integers(1, 5)),
    )
    obj_sizes = [int(rng.integers(1, 5)) for _ in range(n_obj)]

    a0, a1 = "a0", "a1"
    f = [5.5 * strengths[0], 5.5 * strengths[1]]

    # event-specific structure
    alpha = (0, 0)
    if event == EventType.HELPING:
        helped = int(rng.integers(0, 2))
        helper = 1 - helped
        # the helped agent must be unable to drag its target object alone,
        # while helper participation makes it feasible
        strengths = list(strengths)
        strengths[helped] = 1
        strengths[helper] = max(3, strengths[helper])
        f = [5.5 * strengths[0], 5.5 * strengths[1]]
        obj_sizes[0] = int(rng.integers(3, 5))
        thr = drag_threshold(obj_sizes[0], params)
        if not (f[helped] < thr and f[helped] + f[helper] > thr):
            return None
        goals = {}
        goals[f"a{helped}"] = GoalSpec(
            GoalKind.MOVE_OBJECT, object_id="o0",
            landmark_id=str(rng.choice([lm.landmark_id for lm in layout.landmarks])),
        )
        goals[f"a{helper}"] = _pick_goal(
            rng, f"a{helper}", f"a{helped}", [f"o{i}" for i in range(n_obj)],
            [lm.landmark_id for lm in layout.landmarks],
            allow_social_targets=False,
        )
        alpha = (1, 0) if helper == 0 else (0, 1)
    elif event == EventType.COLLABORATION:
        target = GoalSpec(
            GoalKind.MOVE_OBJECT, object_id="o0",
            landmark_id=str(rng.choice([lm.landmark_id for lm in layout.landmarks])),
        )
        goals = {a0: target, a1: target}
        # prefer objects heavy enough that teamwork is worthwhile
        obj_sizes[0] = int(rng.integers(2, 5))
    elif event == EventType.HINDERING:
        hinderer = int(rng.integers(0, 2))
        victim = 1 - hinderer
        # victim pursues an object goal it can progress on alone
        thr_ok = [s for s in (1, 2, 3) if drag_threshold(s, params) < f[victim]]
        if not thr_ok:
            return None
        obj_sizes[0] = thr_ok[int(rng.integers(0, len(thr_ok)))]
        goals = {}
        goals[f"a{victim}"] = GoalSpec(
            GoalKind.MOVE_OBJECT, object_id="o0",
            landmark_id=str(rng.choice([lm.landmark_id for lm in layout.landmarks])),
        )
        goals[f"a{hinderer}"] = _pick_goal(
            rng, f"a{hinderer}", f"a{victim}", [f"o{i}" for i in range(n_obj)],
            [lm.landmark_id for lm in layout.landmarks],
            allow_social_targets=False,
        )
        alpha = (-1, 0) if hinderer == 0 else (0, -1)
        # hinderer must be able to contest the object
        if drag_threshold(obj_sizes[0], params) >= f[hinderer]:
            return None
    elif event == EventType.CONFLICTING:
        if rng.uniform() < 0.7:
            lms = list(rng.choice(
                [lm.landmark_id for lm in layout.landmarks], size=2,
                replace=False,
            ))
            thr_ok = [s for s in (1, 2, 3)
                      if drag_threshold(s, params) < min(f)]
            if not thr_ok:
                return None
            obj_sizes[0] = thr_ok[int(rng.integers(0, len(thr_ok)))]
            goals = {
                a0: GoalSpec(GoalKind.MOVE_OBJECT, object_id="o0",
                             landmark_id=str(lms[0])),
                a1: GoalSpec(GoalKind.MOVE_OBJECT, object_id="o0",
                             landmark_id=str(lms[1])),
            }
        else:
            chaser = int(rng.integers(0, 2))
            goals = {
                f"a{chaser}": GoalSpec(GoalKind.APPROACH,
                                       other_agent_id=f"a{1 - chaser}"),
                f"a{1 - chaser}": GoalSpec(GoalKind.AVOID,
                                           other_agent_id=f"a{chaser}"),
            }
    else:  # independent
        lm_ids = [lm.landmark_id for lm in layout.landmarks]
        obj_ids = [f"o{i}" for i in range(n_obj)]
        for _try in range(30):
            g0 = _pick_goal(rng, a0, a1, obj_ids, lm_ids,
                            allow_social_targets=False)
            g1 = _pick_goal(rng, a1, a0, obj_ids, lm_ids,
                            allow_social_targets=False)
            if g0 != g1 and not goals_conflict(g0, g1, a0, a1):
                break
        else:
            return None
        # goals must be achievable alone
        for g, fi in ((g0, f[0]), (g1, f[1])):
            if g.kind == GoalKind.MOVE_OBJECT:
                sz = obj_sizes[int(g.object_id[1:])]
                if drag_threshold(sz, params) >= fi:
                    return None
        goals = {a0: g0, a1: g1}

    entities = [
        EntitySpec(a0, EntityKind.AGENT, sizes[0], AGENT_COLORS[0],
                   StrengthLevel(strengths[0])),
        EntitySpec(a1, EntityKind.AGENT, sizes[1], AGENT_COLORS[1],
                   StrengthLevel(strengths[1])),
    ]
    for i in range(n_obj):
        entities.append(
            EntitySpec(f"o{i}", EntityKind.OBJECT, obj_sizes[i],
                       OBJECT_COLORS[i])
        )

    positions = _place_entities(rng, layout, entities)
    if positions is None:
        return None

    angles = rng.uniform(0.0, 2.0 * math.pi, size=len(entities))
    initial = make_world(
        [e.entity_id for e in entities], positions,
        layout_ref=layout.layout_id, angles=angles,
    )
    max_steps = c.max_steps or int(rng.integers(40, 101))
    config = ScenarioConfig(
        layout=layout,
        entities=tuple(entities),
        goals=goals,
        social=SocialWeights.pair(a0, a1, alpha[0], alpha[1]),
        initial=initial,
        seed=seed,
        max_steps=max_steps,
        physics=params,
    )
    if not _goals_physically_reachable(config):
        return None
    return config


def _goal_reachable_by(config: ScenarioConfig, actor: str,
                       goal: GoalSpec) -> bool:
    """Body-size-aware reachability of a goal when `actor` pursues it."""
    from .gridnav import grids_for

    grids = grids_for(config.layout)
    table = config.body_table()
    pos = config.initial.pos
    ai = table.index(actor)
    r_a = float(table.radii[ai])
    at = tuple(pos[ai])
    if goal.kind == GoalKind.GOTO:
        return grids.landmark_reachable(at, goal.landmark_id, r_a)
    if goal.kind == GoalKind.MOVE_OBJECT:
        oi = table.index(goal.object_id)
        r_carry = max(r_a, float(table.radii[oi]))
        return grids.reachable(at, tuple(pos[oi]), r_a) and (
            grids.landmark_reachable(tuple(pos[oi]), goal.landmark_id,
                                     r_carry)
        )
    if goal.kind == GoalKind.APPROACH:
        oi = table.index(goal.other_agent_id)
        return grids.reachable(at, tuple(pos[oi]), r_a)
    return True  # AVOID needs no route


def _goal_steps_needed(config: ScenarioConfig, actor: str,
                       goal: GoalSpec) -> float:
    """Rough action-step budget to achieve a goal, from BFS distances."""
    from .gridnav import grids_for

    grids = grids_for(config.layout)
    table = config.body_table()
    params = config.physics
    pos = config.initial.pos
    ai = table.index(actor)
    r_a = float(table.radii[ai])
    m_a = float(table.masses[ai])
    f = float(table.max_forces[ai])
    v_a = min(params.speed_cap, f / (m_a * params.linear_friction))
    at = tuple(pos[ai])
    per_unit = 4.0  # steps per world unit at 1 u/s (0.25 s per step)
    if goal.kind == GoalKind.GOTO:
        d = grids.distance_to_landmark(at, goal.landmark_id, r_a)
        return d / v_a * per_unit * 1.4 + 10
    if goal.kind == GoalKind.MOVE_OBJECT:
        oi = table.index(goal.object_id)
        m_o = float(table.masses[oi])
        r_carry = max(r_a, float(table.radii[oi]))
        f_carry = f
        m_carry = m_a + m_o
        other = config.other_agent(actor)
        if config.goals.get(other) == goal and config.alpha(other, actor) == 0:
            # shared goal: both bodies pull the load together
            f_carry = f + float(table.max_forces[table.index(other)])
            m_carry += float(table.masses[table.index(other)])
        v_c = (f_carry - params.mu_kinetic * m_o) / (
            m_carry * params.linear_friction
        )
        v_c = min(params.speed_cap, max(0.3, v_c))
        d_ao = grids.travel_distance(at, tuple(pos[oi]), r_a)
        d_ol = grids.distance_to_landmark(tuple(pos[oi]), goal.landmark_id,
                                          r_carry)
        return (d_ao / v_a + d_ol / v_c) * per_unit * 1.4 + 20
    if goal.kind == GoalKind.APPROACH:
        oi = table.index(goal.other_agent_id)
        d = grids.travel_distance(at, tuple(pos[oi]), r_a)
        return d / v_a * per_unit * 1.4 + 10
    return 1.0


MIN_GOAL_DISTANCE = 6.0


def _core_goal_distance(config: ScenarioConfig, holder: str,
                        goal: GoalSpec) -> float:
    """Distance that actually has to be covered to satisfy the goal."""
    table = config.body_table()
    pos = config.initial.pos
    if goal.kind == GoalKind.MOVE_OBJECT:
        oi = table.index(goal.object_id)
        lm = config.layout.landmark_by_id(goal.landmark_id)
        return lm.distance(pos[oi, 0], pos[oi, 1])
    if goal.kind == GoalKind.AVOID:
        return AVOID_RADIUS
    return goal_distance(config.initial, goal, table, config.layout, holder)


def _goals_physically_reachable(config: ScenarioConfig) -> bool:
    ids = config.agent_ids
    pairs = [(a, config.other_agent(a)) for a in ids]
    helpers = [(i, j) for i, j in pairs if config.alpha(i, j) > 0]
    hinderers = [(i, j) for i, j in pairs if config.alpha(i, j) < 0]

    for a in ids:
        other = config.other_agent(a)
        alpha = config.alpha(a, other)
        target_goal = config.goals[a] if alpha == 0 else config.goals[other]
        holder = a if alpha == 0 else other
        if not _goal_reachable_by(config, a, target_goal):
            return False
        if _core_goal_distance(config, holder, target_goal) < MIN_GOAL_DISTANCE:
            return False

    helped = {j for _, j in helpers}
    for a in ids:
        other = config.other_agent(a)
        alpha = config.alpha(a, other)
        if alpha > 0:
            # the helper must have time to do the work itself
            if _goal_steps_needed(config, a, config.goals[other]) > config.max_steps:
                return False
        elif alpha == 0 and a not in helped and not hinderers:
            if _goal_steps_needed(config, a, config.goals[a]) > config.max_steps:
                return False
        elif alpha == 0 and hinderers:
            # the victim must at least plausibly attempt its goal in time
            if _goal_steps_needed(config, a, config.goals[a]) > config.max_steps:
                return False
    return True
