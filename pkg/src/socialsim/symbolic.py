"""Symbolic layer: predicates, subgoal planning, and subgoal scoring.

Each belief particle is abstracted into predicates (On/Touch/Attach/Close
and negations). Plans are shortest operator sequences over a pick-and-place
abstraction (move / pick up / carry / drop), searched per particle; social
directives compile the other agent's goal into targets (assist) or into
cost-ranked counter-templates (hinder). The scored value of a candidate
subgoal trades off how many particles propose it against the mean remaining
travel cost.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .gridnav import LayoutGrids, cell_of
from .physics import BodyTable, PhysicsParams, WorldState
from .scene import AVOID_RADIUS, GRID_W, GoalKind, GoalSpec, Layout

CLOSE_FACTOR = 1.5
REGION_BLOCK = 5  # cells per exploration-region side


class PredKind(str, enum.Enum):
    ON = "On"
    TOUCH = "Touch"
    ATTACH = "Attach"
    CLOSE = "Close"


@dataclass(frozen=True)
class Predicate:
    kind: PredKind
    a: str
    b: str
    negated: bool = False
    anchor: Optional[int] = None  # exploration region id for unseen targets

    def key(self) -> str:
        neg = "!" if self.negated else ""
        anc = f"@r{self.anchor}" if self.anchor is not None else ""
        return f"{neg}{self.kind.value}({self.a},{self.b}){anc}"

    @staticmethod
    def from_key(key: str) -> "Predicate":
        neg = key.startswith("!")
        if neg:
            key = key[1:]
        anchor = None
        if "@r" in key:
            key, anc = key.split("@r")
            anchor = int(anc)
        name, args = key[:-1].split("(")
        a, b = args.split(",")
        return Predicate(PredKind(name), a, b, negated=neg, anchor=anchor)

    def base(self) -> "Predicate":
        return Predicate(self.kind, self.a, self.b)

    def sort_key(self):
        return (self.kind.value, self.a, self.b, self.negated,
                -1 if self.anchor is None else self.anchor)


@dataclass(frozen=True)
class SymbolicState:
    """Closed-world set of true positive atoms."""

    atoms: frozenset

    def holds(self, pred: Predicate) -> bool:
        present = pred.base() in self.atoms
        return not present if pred.negated else present

    def all_predicates(self) -> list[Predicate]:
        out = list(self.atoms)
        return out


def region_of_cell(cell: int) -> int:
    cx = cell % GRID_W
    cy = cell // GRID_W
    per_row = GRID_W // REGION_BLOCK
    return (cy // REGION_BLOCK) * per_row + cx // REGION_BLOCK


def close_threshold(r_a: float, r_b: float) -> float:
    """Surface-distance threshold below which two bodies count as Close."""
    return CLOSE_FACTOR * (r_a + r_b)


def symbolize(state: WorldState, table: BodyTable, layout: Layout,
              params: PhysicsParams) -> SymbolicState:
    """All true grounded predicates of a physical state."""
    n = table.n
    atoms = set()
    joints = {(i, j) for i, j in state.joints()}
    for i in range(n):
        x, y = state.pos[i]
        for lm in layout.landmarks:
            if lm.contains(x, y):
                atoms.add(Predicate(PredKind.ON, table.ids[i], lm.landmark_id))
            if lm.distance(x, y) < CLOSE_FACTOR * table.radii[i]:
                atoms.add(
                    Predicate(PredKind.CLOSE, table.ids[i], lm.landmark_id)
                )
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = (
                float(np.hypot(*(state.pos[j] - state.pos[i])))
                - table.radii[i] - table.radii[j]
            )
            if gap < close_threshold(table.radii[i], table.radii[j]):
                atoms.add(
                    Predicate(PredKind.CLOSE, table.ids[i], table.ids[j])
                )
            if table.kinds[i] == 0:
                touching = gap <= params.touch_eps or (i, j) in joints or (
                    (j, i) in joints
                )
                if touching:
                    atoms.add(
                        Predicate(PredKind.TOUCH, table.ids[i], table.ids[j])
                    )
                if (i, j) in joints:
                    atoms.add(
                        Predicate(PredKind.ATTACH, table.ids[i], table.ids[j])
                    )
    return SymbolicState(atoms=frozenset(atoms))


@dataclass(frozen=True)
class PlanContext:
    agent_id: str
    other_id: str
    table: BodyTable
    layout: Layout
    grids: LayoutGrids
    params: PhysicsParams
    observed_ids: frozenset


@dataclass(frozen=True)
class SubgoalPlan:
    subgoals: tuple  # tuple[Predicate, ...]; empty when satisfied
    cost: float

    @property
    def head(self) -> Optional[Predicate]:
        return self.subgoals[0] if self.subgoals else None


def _entity_cell(state: WorldState, ctx: PlanContext, entity_id: str) -> int:
    i = ctx.table.index(entity_id)
    return cell_of(state.pos[i, 0], state.pos[i, 1])


def _close_pred(ctx: PlanContext, state: WorldState, target: str) -> Predicate:
    anchor = None
    if target not in ctx.observed_ids:
        anchor = region_of_cell(_entity_cell(state, ctx, target))
    return Predicate(PredKind.CLOSE, ctx.agent_id, target, anchor=anchor)


def _touch_pred(ctx: PlanContext, state: WorldState, target: str) -> Predicate:
    anchor = None
    if target not in ctx.observed_ids:
        anchor = region_of_cell(_entity_cell(state, ctx, target))
    return Predicate(PredKind.TOUCH, ctx.agent_id, target, anchor=anchor)


# ---------------------------------------------------------------------------
# pick-and-place search

@dataclass(frozen=True)
class _Node:
    at: str          # "start" | entity id | landmark id
    held: Optional[str]
    done: frozenset  # achieved goal facts


def _loc_cell(node_at: str, state: WorldState, ctx: PlanContext,
              self_idx: int) -> int:
    if node_at == "start":
        return cell_of(state.pos[self_idx, 0], state.pos[self_idx, 1])
    if node_at.startswith("L"):
        lm = ctx.layout.landmark_by_id(node_at)
        return cell_of(*lm.center)
    return _entity_cell(state, ctx, node_at)


def _travel(ctx: PlanContext, state: WorldState, self_idx: int,
            a: str, b: str, radius: Optional[float] = None) -> float:
    r = ctx.table.radii[self_idx] if radius is None else radius
    ca = _loc_cell(a, state, ctx, self_idx)
    if b.startswith("L"):
        return float(ctx.grids.field_from_landmark(b, r)[ca])
    cb = _loc_cell(b, state, ctx, self_idx)
    return float(ctx.grids.field_from_cell(cb, r)[ca])


def _search_positive(goal: GoalSpec, sym: SymbolicState, state: WorldState,
                     ctx: PlanContext) -> SubgoalPlan:
    """Dijkstra over the pick-and-place abstraction for one positive goal."""
    self_id = ctx.agent_id
    self_idx = ctx.table.index(self_id)

    if goal.kind == GoalKind.GOTO:
        if sym.holds(Predicate(PredKind.ON, self_id, goal.landmark_id)):
            return SubgoalPlan((), 0.0)
        cost = _travel(ctx, state, self_idx, "start", goal.landmark_id)
        return SubgoalPlan(
            (Predicate(PredKind.ON, self_id, goal.landmark_id),), cost
        )

    if goal.kind == GoalKind.APPROACH:
        if sym.holds(Predicate(PredKind.TOUCH, self_id, goal.other_agent_id)):
            return SubgoalPlan((), 0.0)
        cost = _travel(ctx, state, self_idx, "start", goal.other_agent_id)
        return SubgoalPlan((_touch_pred(ctx, state, goal.other_agent_id),), cost)

    if goal.kind == GoalKind.AVOID:
        other_idx = ctx.table.index(goal.other_agent_id)
        gap = (
            float(np.hypot(*(state.pos[other_idx] - state.pos[self_idx])))
            - ctx.table.radii[self_idx] - ctx.table.radii[other_idx]
        )
        if gap >= AVOID_RADIUS:
            return SubgoalPlan((), 0.0)
        return SubgoalPlan(
            (Predicate(PredKind.CLOSE, self_id, goal.other_agent_id,
                       negated=True),),
            AVOID_RADIUS - gap,
        )

    # MOVE_OBJECT: proper search over move / pickup / carry operators
    obj = goal.object_id
    lm = goal.landmark_id
    if sym.holds(Predicate(PredKind.ON, obj, lm)):
        return SubgoalPlan((), 0.0)

    attached = sym.holds(Predicate(PredKind.ATTACH, self_id, obj))
    close = sym.holds(Predicate(PredKind.CLOSE, self_id, obj))
    start_at = obj if (attached or close) else "start"
    start = _Node(at=start_at, held=obj if attached else None,
                  done=frozenset())

    obj_cell = _entity_cell(state, ctx, obj)
    obj_idx = ctx.table.index(obj)
    carry_radius = max(ctx.table.radii[self_idx], ctx.table.radii[obj_idx])

    def neighbors(node: _Node):
        if node.held == obj:
            # carry from the object's position to the landmark
            carry_cost = float(
                ctx.grids.field_from_landmark(lm, carry_radius)[obj_cell]
            )
            yield (
                _Node(at=lm, held=obj, done=frozenset({"on"})),
                carry_cost,
                Predicate(PredKind.ON, obj, lm),
            )
        elif node.at != obj:
            yield (
                _Node(at=obj, held=node.held, done=node.done),
                _travel(ctx, state, self_idx, node.at, obj),
                _close_pred(ctx, state, obj),
            )
        else:
            yield (
                _Node(at=obj, held=obj, done=node.done),
                1.0,
                Predicate(PredKind.ATTACH, self_id, obj),
            )

    # tiny graph: expand with Dijkstra
    best: dict[_Node, float] = {start: 0.0}
    frontier = [(0.0, 0, start, ())]
    counter = 1
    while frontier:
        cost, _, node, seq = heapq.heappop(frontier)
        if "on" in node.done:
            return SubgoalPlan(tuple(seq), cost)
        if cost > best.get(node, math.inf):
            continue
        for nxt, step_cost, pred in neighbors(node):
            ncost = cost + step_cost
            if ncost < best.get(nxt, math.inf):
                best[nxt] = ncost
                heapq.heappush(frontier, (ncost, counter, nxt, seq + (pred,)))
                counter += 1
    return SubgoalPlan((), math.inf)


def _plan_assist(goal: GoalSpec, sym: SymbolicState, state: WorldState,
                 ctx: PlanContext) -> SubgoalPlan:
    """Achieve the other agent's goal with self as the actor."""
    if goal.kind == GoalKind.MOVE_OBJECT:
        return _search_positive(goal, sym, state, ctx)
    if goal.kind == GoalKind.GOTO:
        # nothing to carry; escort the other agent
        if sym.holds(Predicate(PredKind.ON, ctx.other_id, goal.landmark_id)):
            return SubgoalPlan((), 0.0)
        return SubgoalPlan(
            (_close_pred(ctx, state, ctx.other_id),),
            _travel(ctx, state, ctx.table.index(ctx.agent_id), "start",
                    ctx.other_id),
        )
    if goal.kind == GoalKind.APPROACH and goal.other_agent_id == ctx.agent_id:
        # they want to reach me; meet them
        return _search_positive(
            GoalSpec(GoalKind.APPROACH, other_agent_id=ctx.other_id),
            sym, state, ctx,
        )
    if goal.kind == GoalKind.AVOID and goal.other_agent_id == ctx.agent_id:
        # they want distance from me; give it
        return _search_positive(
            GoalSpec(GoalKind.AVOID, other_agent_id=ctx.other_id),
            sym, state, ctx,
        )
    return SubgoalPlan((), 0.0)


def _plan_hinder(goal: GoalSpec, sym: SymbolicState, state: WorldState,
                 ctx: PlanContext) -> SubgoalPlan:
    """Cheapest counter-plan against the other agent's goal."""
    self_id = ctx.agent_id
    self_idx = ctx.table.index(self_id)
    candidates: list[SubgoalPlan] = []

    if goal.kind == GoalKind.MOVE_OBJECT:
        obj = goal.object_id
        # steal: take the object and carry it to the farthest landmark
        target_lm = goal.landmark_id
        far_lm = max(
            (l for l in ctx.layout.landmarks if l.landmark_id != target_lm),
            key=lambda l: float(
                ctx.grids.field_from_landmark(l.landmark_id)[
                    cell_of(*ctx.layout.landmark_by_id(target_lm).center)
                ]
            ),
        ).landmark_id
        steal = _search_positive(
            GoalSpec(GoalKind.MOVE_OBJECT, object_id=obj, landmark_id=far_lm),
            sym, state, ctx,
        )
        candidates.append(steal)
        # block: intercept the other agent, keep it away from the object
        block_cost = _travel(ctx, state, self_idx, "start", ctx.other_id) + 5.0
        seq = []
        if not sym.holds(Predicate(PredKind.CLOSE, self_id, ctx.other_id)):
            seq.append(_close_pred(ctx, state, ctx.other_id))
        seq.append(
            Predicate(PredKind.CLOSE, ctx.other_id, obj, negated=True)
        )
        candidates.append(SubgoalPlan(tuple(seq), block_cost))
    elif goal.kind == GoalKind.GOTO:
        lm = goal.landmark_id
        if sym.holds(Predicate(PredKind.ON, self_id, lm)):
            occupy = SubgoalPlan((), 0.0)  # camp where they want to go
        else:
            occupy = SubgoalPlan(
                (Predicate(PredKind.ON, self_id, lm),),
                _travel(ctx, state, self_idx, "start", lm),
            )
        candidates.append(occupy)
        chase_cost = _travel(ctx, state, self_idx, "start", ctx.other_id) + 5.0
        candidates.append(
            SubgoalPlan((_close_pred(ctx, state, ctx.other_id),), chase_cost)
        )
    elif goal.kind == GoalKind.APPROACH:
        # they chase me; flee
        candidates.append(
            _search_positive(
                GoalSpec(GoalKind.AVOID, other_agent_id=ctx.other_id),
                sym, state, ctx,
            )
        )
    else:  # AVOID: they flee me; chase
        candidates.append(
            _search_positive(
                GoalSpec(GoalKind.APPROACH, other_agent_id=ctx.other_id),
                sym, state, ctx,
            )
        )

    if not candidates:
        return SubgoalPlan((), 0.0)
    return min(candidates, key=lambda c: c.cost)


def plan_subgoals(sym: SymbolicState, goal_self: GoalSpec,
                  goal_other: GoalSpec, alpha: int, particle: WorldState,
                  ctx: PlanContext) -> SubgoalPlan:
    """Ordered subgoal plan for one particle under the social directive."""
    if alpha > 0:
        return _plan_assist(goal_other, sym, particle, ctx)
    if alpha < 0:
        return _plan_hinder(goal_other, sym, particle, ctx)
    return _search_positive(goal_self, sym, particle, ctx)


def heuristic_cost(particle: WorldState, goal_self: GoalSpec,
                   goal_other: GoalSpec, alpha: int,
                   ctx: PlanContext) -> float:
    """Estimated remaining travel distance to the final goal state."""
    sym = symbolize(particle, ctx.table, ctx.layout, ctx.params)
    return plan_subgoals(sym, goal_self, goal_other, alpha, particle, ctx).cost


SATISFIED = Predicate(PredKind.ON, "-", "-")  # sentinel head for empty plans


@dataclass
class SubgoalScore:
    subgoal: Predicate
    count: int
    mean_cost: float
    value: float


def score_subgoals(heads_costs: list, k: int, lam: float) -> list[SubgoalScore]:
    """V(h) = n_h/K - lambda * mean cost of particles proposing h."""
    groups: dict = {}
    for head, cost in heads_costs:
        groups.setdefault(head, []).append(cost)
    scores = []
    for head, costs in groups.items():
        n_h = len(costs)
        mean_c = float(np.mean(costs))
        scores.append(
            SubgoalScore(head, n_h, mean_c, n_h / k - lam * mean_c)
        )
    return scores


COST_NORM = 28.284271  # arena diagonal; keeps lambda*cost on the freq scale


def select_subgoal(plans: list, k: int, lam: float,
                   cost_norm: float = COST_NORM):
    """Pick argmax-V head; ties break to lower cost then predicate order.

    plans: per-particle SubgoalPlan list; costs are normalized by the arena
    diagonal before scoring so the lambda term stays comparable to the
    frequency term. Returns (head, particle indices whose head matches,
    scores). Empty plans map to the SATISFIED sentinel.
    """
    heads = [p.head if p.head is not None else SATISFIED for p in plans]
    heads_costs = [
        (h, min(p.cost, 2.0 * cost_norm) / cost_norm)
        for h, p in zip(heads, plans)
    ]
    scores = score_subgoals(heads_costs, k, lam)
    best = max(
        scores,
        key=lambda s: (s.value, -s.mean_cost,
                       tuple(-ord(c) for c in s.subgoal.key())),
    )
    subset = [i for i, h in enumerate(heads) if h == best.subgoal]
    return best.subgoal, subset, scores


def nav_field_for_subgoal(pred: Predicate, grids: LayoutGrids,
                          table: BodyTable,
                          reference: WorldState) -> Optional[np.ndarray]:
    """BFS distance field guiding the low-level search toward the subgoal.

    Landmark targets use the cached landmark field; entity targets use the
    field rooted at the entity's (possibly hypothesized) cell in a reference
    particle. Negated subgoals get no field (fleeing is local).
    """
    if pred.negated:
        return None
    r_self = float(table.radii[table.index(pred.a)])
    if pred.kind == PredKind.ON:
        r = r_self
        if pred.a in table.object_ids:
            # carried object moves with its (possibly larger) carrier
            r = float(max(table.radii))
        return grids.field_from_landmark(pred.b, r)
    if pred.b.startswith("L") and any(
        lm.landmark_id == pred.b for lm in grids.layout.landmarks
    ):
        return grids.field_from_landmark(pred.b, r_self)
    bi = table.index(pred.b)
    cell = cell_of(reference.pos[bi, 0], reference.pos[bi, 1])
    return grids.field_from_cell(cell, r_self)


def carry_destination(plan: SubgoalPlan, head: Predicate,
                      layout: Layout) -> Optional[tuple]:
    """Landmark center the held/targeted object will eventually go to."""
    if head.kind not in (PredKind.CLOSE, PredKind.ATTACH):
        return None
    obj = head.b
    for pred in plan.subgoals:
        if pred.kind == PredKind.ON and pred.a == obj and not pred.negated:
            try:
                return layout.landmark_by_id(pred.b).center
            except Exception:
                return None
    return None


def encode_subgoal(pred: Predicate, table: BodyTable, layout: Layout,
                   params: PhysicsParams,
                   dock_target: Optional[tuple] = None) -> np.ndarray:
    """Pack a predicate into the kernel subgoal vector."""
    sg = np.zeros(kernels.SG_LEN, dtype=np.float64)
    if dock_target is not None:
        sg[kernels.SG_DOCK_X] = dock_target[0]
        sg[kernels.SG_DOCK_Y] = dock_target[1]
        sg[kernels.SG_DOCK_VALID] = 1.0
    kind_code = {
        PredKind.CLOSE: kernels.SG_CLOSE,
        PredKind.ON: kernels.SG_ON,
        PredKind.ATTACH: kernels.SG_ATTACH,
        PredKind.TOUCH: kernels.SG_TOUCH,
    }[pred.kind]
    sg[0] = kind_code
    sg[1] = 1.0 if pred.negated else 0.0
    sg[2] = table.index(pred.a)
    is_lm = pred.b.startswith("L") and pred.b in {
        lm.landmark_id for lm in layout.landmarks
    }
    sg[3] = 1.0 if is_lm else 0.0
    if is_lm:
        lm = layout.landmark_by_id(pred.b)
        sg[5:9] = lm.box
        sg[4] = -1
        r_a = table.radii[table.index(pred.a)]
        sg[9] = 0.5 * r_a if pred.kind == PredKind.CLOSE else 0.0
    else:
        bi = table.index(pred.b)
        sg[4] = bi
        r_a = table.radii[table.index(pred.a)]
        sg[9] = close_threshold(r_a, table.radii[bi])
        if pred.kind == PredKind.CLOSE and pred.negated:
            # fleeing uses the avoid radius, not the close threshold
            sg[9] = AVOID_RADIUS
    return sg
