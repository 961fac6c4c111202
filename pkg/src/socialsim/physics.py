"""Deterministic 2D world of disc bodies: agents, movable objects, walls.

Agents are self-propelled (8 force directions capped by their strength),
can turn, stop, and grab/release objects. Grabs are translation-only welds:
the attached group shares one velocity and moves rigidly. Objects feel
Coulomb-style ground friction, which is what makes heavy objects immovable
for weak agents; everything feels linear damping, so bodies coast to rest.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import (
    A_FORCE0,
    A_GRAB,
    A_NOFORCE,
    A_RELEASE,
    A_STOP,
    A_TURN_LEFT,
    A_TURN_RIGHT,
    N_ACTIONS,
    P_LEN,
)


class SimulationError(Exception):
    """Base for world-stepping failures."""


class RejectedInputError(SimulationError):
    """Malformed inputs: missing agent actions, unknown ids."""


class NumericCorruptionError(SimulationError):
    """NaN or infinity detected in the world state."""


class Action(enum.IntEnum):
    NOFORCE = A_NOFORCE
    STOP = A_STOP
    FORCE_E = A_FORCE0
    FORCE_NE = A_FORCE0 + 1
    FORCE_N = A_FORCE0 + 2
    FORCE_NW = A_FORCE0 + 3
    FORCE_W = A_FORCE0 + 4
    FORCE_SW = A_FORCE0 + 5
    FORCE_S = A_FORCE0 + 6
    FORCE_SE = A_FORCE0 + 7
    TURN_LEFT = A_TURN_LEFT
    TURN_RIGHT = A_TURN_RIGHT
    GRAB = A_GRAB
    RELEASE = A_RELEASE

    @property
    def is_force(self) -> bool:
        return A_FORCE0 <= self.value < A_FORCE0 + 8

    def direction(self) -> tuple[float, float]:
        if not self.is_force:
            return (0.0, 0.0)
        k = self.value - A_FORCE0
        return (float(kernels.DIR8[k, 0]), float(kernels.DIR8[k, 1]))


FORCE_ACTIONS = tuple(a for a in Action if a.is_force)
ALL_ACTIONS = tuple(Action)
assert len(ALL_ACTIONS) == N_ACTIONS


# size level -> disc radius; mass grows with area
def radius_for_size(size_level: int) -> float:
    return 0.3 + 0.2 * size_level


def mass_for_radius(radius: float) -> float:
    return 2.0 * radius * radius


@dataclass(frozen=True)
class StrengthLevel:
    """Agent strength level; max_force caps every propulsion force."""

    level: int
    max_force: float = 0.0

    def __post_init__(self):
        if not 1 <= self.level <= 4:
            raise RejectedInputError(f"strength level out of range: {self.level}")
        if self.max_force <= 0.0:
            object.__setattr__(self, "max_force", 5.5 * self.level)


@dataclass(frozen=True)
class PhysicsParams:
    sub_steps_per_action: int = 5
    sub_step_dt: float = 0.05
    linear_friction: float = 1.2
    angular_friction: float = 2.0
    restitution: float = 0.0
    grab_radius: float = 0.6
    grab_arc: float = math.radians(75.0)
    turn_rate: float = math.pi / 6.0
    penetration_tolerance: float = 0.15
    mu_static: float = 3.5
    mu_kinetic: float = 3.0
    static_speed_eps: float = 0.3
    auto_face: bool = True
    speed_cap: float = 4.0
    solver_iterations: int = 6
    correction_slop: float = 0.01
    correction_fraction: float = 0.8
    touch_eps: float = 0.12
    fov_half_angle: float = math.radians(60.0)
    arena_w: float = 20.0
    arena_h: float = 20.0

    def to_vector(self) -> np.ndarray:
        p = np.zeros(P_LEN, dtype=np.float64)
        p[kernels.P_DT] = self.sub_step_dt
        p[kernels.P_SUBSTEPS] = self.sub_steps_per_action
        p[kernels.P_LIN_DAMP] = self.linear_friction
        p[kernels.P_ANG_DAMP] = self.angular_friction
        p[kernels.P_MU_S] = self.mu_static
        p[kernels.P_MU_K] = self.mu_kinetic
        p[kernels.P_TURN_RATE] = self.turn_rate
        p[kernels.P_GRAB_RADIUS] = self.grab_radius
        p[kernels.P_GRAB_ARC] = self.grab_arc
        p[kernels.P_SPEED_CAP] = self.speed_cap
        p[kernels.P_PEN_TOL] = self.penetration_tolerance
        p[kernels.P_SOLVER_ITERS] = self.solver_iterations
        p[kernels.P_TOUCH_EPS] = self.touch_eps
        p[kernels.P_FOV_HALF] = self.fov_half_angle
        p[kernels.P_ARENA_W] = self.arena_w
        p[kernels.P_ARENA_H] = self.arena_h
        p[kernels.P_CORR_SLOP] = self.correction_slop
        p[kernels.P_CORR_FRAC] = self.correction_fraction
        p[kernels.P_STATIC_EPS] = self.static_speed_eps
        p[kernels.P_AUTO_FACE] = 1.0 if self.auto_face else 0.0
        return p


@dataclass(frozen=True)
class BodyTable:
    """Static physical properties of all entities, in stable order."""

    ids: tuple[str, ...]
    kinds: np.ndarray  # (N,) u1: 0 agent, 1 object
    radii: np.ndarray
    masses: np.ndarray
    max_forces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(self.ids)})

    def index(self, entity_id: str) -> int:
        try:
            return self._index[entity_id]
        except KeyError:
            raise RejectedInputError(f"unknown entity id: {entity_id}") from None

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(e for i, e in enumerate(self.ids) if self.kinds[i] == 0)

    @property
    def object_ids(self) -> tuple[str, ...]:
        return tuple(e for i, e in enumerate(self.ids) if self.kinds[i] == 1)


@dataclass(frozen=True)
class EntityState:
    """Per-entity snapshot; attached_to lists weld partners."""

    entity_id: str
    position: tuple[float, float]
    orientation: float
    linear_velocity: tuple[float, float]
    angular_velocity: float
    attached_to: tuple[str, ...] = ()


@dataclass
class WorldState:
    """Full mutable-by-copy physical state at one step."""

    step_index: int
    layout_ref: str
    ids: tuple[str, ...]
    pos: np.ndarray
    vel: np.ndarray
    ang: np.ndarray
    avel: np.ndarray
    grab: np.ndarray       # (N,) i8, object index held by agent i
    grab_off: np.ndarray   # (N,2) world-frame weld offset

    def copy(self) -> "WorldState":
        return WorldState(
            step_index=self.step_index,
            layout_ref=self.layout_ref,
            ids=self.ids,
            pos=self.pos.copy(),
            vel=self.vel.copy(),
            ang=self.ang.copy(),
            avel=self.avel.copy(),
            grab=self.grab.copy(),
            grab_off=self.grab_off.copy(),
        )

    @property
    def n(self) -> int:
        return len(self.ids)

    def entity_states(self) -> list[EntityState]:
        idx = {i: e for i, e in enumerate(self.ids)}
        partners: dict[int, list[str]] = {}
        for i in range(self.n):
            j = int(self.grab[i])
            if j >= 0:
                partners.setdefault(i, []).append(idx[j])
                partners.setdefault(j, []).append(idx[i])
        return [
            EntityState(
                entity_id=self.ids[i],
                position=(float(self.pos[i, 0]), float(self.pos[i, 1])),
                orientation=float(self.ang[i]),
                linear_velocity=(float(self.vel[i, 0]), float(self.vel[i, 1])),
                angular_velocity=float(self.avel[i]),
                attached_to=tuple(sorted(partners.get(i, []))),
            )
            for i in range(self.n)
        ]

    def joints(self) -> list[tuple[int, int]]:
        return [(i, int(self.grab[i])) for i in range(self.n) if self.grab[i] >= 0]

    def equal_to(self, other: "WorldState") -> bool:
        return (
            self.step_index == other.step_index
            and self.ids == other.ids
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.vel, other.vel)
            and np.array_equal(self.ang, other.ang)
            and np.array_equal(self.avel, other.avel)
            and np.array_equal(self.grab, other.grab)
            and np.array_equal(self.grab_off, other.grab_off)
        )


def make_world(ids, positions, layout_ref="", angles=None) -> WorldState:
    n = len(ids)
    pos = np.asarray(positions, dtype=np.float64).reshape(n, 2).copy()
    ang = (
        np.zeros(n, dtype=np.float64)
        if angles is None
        else np.asarray(angles, dtype=np.float64).copy()
    )
    return WorldState(
        step_index=0,
        layout_ref=layout_ref,
        ids=tuple(ids),
        pos=pos,
        vel=np.zeros((n, 2), dtype=np.float64),
        ang=ang,
        avel=np.zeros(n, dtype=np.float64),
        grab=np.full(n, -1, dtype=np.int64),
        grab_off=np.zeros((n, 2), dtype=np.float64),
    )


@dataclass
class StepDiagnostics:
    applied_force: np.ndarray  # (N,) max propulsion magnitude this step
    max_penetration: float
    wall_crossings: int


def _check_finite(state: WorldState) -> None:
    if not (
        np.all(np.isfinite(state.pos))
        and np.all(np.isfinite(state.vel))
        and np.all(np.isfinite(state.ang))
        and np.all(np.isfinite(state.avel))
    ):
        raise NumericCorruptionError("non-finite value in world state")


def actions_to_array(table: BodyTable, actions: dict[str, Action]) -> np.ndarray:
    arr = np.zeros(table.n, dtype=np.uint8)
    for agent_id in table.agent_ids:
        if agent_id not in actions:
            raise RejectedInputError(f"missing action for agent {agent_id}")
        arr[table.index(agent_id)] = int(actions[agent_id])
    return arr


def step_world(
    state: WorldState,
    actions: dict[str, Action],
    table: BodyTable,
    walls: np.ndarray,
    params: PhysicsParams,
    collect_diagnostics: bool = False,
):
    """Pure one-action-step transition; returns the successor state.

    Raises RejectedInputError when an agent action is missing and
    NumericCorruptionError on non-finite state.
    """
    _check_finite(state)
    act = actions_to_array(table, actions)
    out = state.copy()
    forces = np.zeros(table.n, dtype=np.float64)
    diag = np.zeros(2, dtype=np.float64)
    kernels.step_kernel(
        out.pos, out.vel, out.ang, out.avel, out.grab, out.grab_off,
        table.radii, table.masses, table.kinds, table.max_forces,
        act, walls, params.to_vector(), forces, diag,
    )
    out.step_index = state.step_index + 1
    _check_finite(out)
    if collect_diagnostics:
        return out, StepDiagnostics(forces, float(diag[0]), int(diag[1]))
    return out


def try_grab(
    state: WorldState, agent_id: str, table: BodyTable, params: PhysicsParams
) -> WorldState:
    """Attach the nearest grabbable object in range/front arc; no-op if none."""
    i = table.index(agent_id)
    out = state.copy()
    if out.grab[i] >= 0:
        return out
    j = kernels._find_grab_target(
        out.pos, out.ang, table.radii, table.kinds, i,
        params.grab_radius, params.grab_arc,
    )
    if j >= 0:
        out.grab[i] = j
        out.grab_off[i] = out.pos[j] - out.pos[i]
    return out


def release(state: WorldState, agent_id: str, table: BodyTable) -> WorldState:
    """Drop any held object; the object keeps its current velocity."""
    i = table.index(agent_id)
    out = state.copy()
    out.grab[i] = -1
    return out


def contact_pairs(state: WorldState, table: BodyTable, walls: np.ndarray,
                  touch_eps: float) -> set[tuple[int, int]]:
    """Index pairs in contact (surface gap <= touch_eps) or welded."""
    pairs: set[tuple[int, int]] = set()
    n = table.n
    for i in range(n):
        for j in range(i + 1, n):
            gap = (
                float(np.hypot(*(state.pos[j] - state.pos[i])))
                - table.radii[i]
                - table.radii[j]
            )
            if gap <= touch_eps:
                pairs.add((i, j))
    for i, j in state.joints():
        pairs.add((min(i, j), max(i, j)))
    return pairs
