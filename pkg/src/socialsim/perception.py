"""Observation generation and per-agent belief tracking.

Vision is a conical field of view occluded by walls and bodies; touch is a
contact sensor. Anything in contact with an observed entity is observed too
(so an agent knows who is holding what it holds). Beliefs are K unweighted
particles: full world-state hypotheses kept consistent with observations by
resampling contradicted entities from an occupancy grid over unseen cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .gridnav import cell_of
from .physics import Action, BodyTable, EntityState, PhysicsParams, WorldState
from .scene import GRID_H, GRID_W, ScenarioConfig

RESAMPLE_ATTEMPTS = 20


@dataclass
class Observation:
    observer_id: str
    step_index: int
    self_state: EntityState
    seen: list  # (entity_id, EntityState), self included
    touched: list  # entity ids in (transitive) contact with the observer
    fov_mask: np.ndarray  # (GRID_H*GRID_W,) u1 cell visibility

    @property
    def seen_ids(self) -> set:
        return {e for e, _ in self.seen}


def _contact_closure(start: set[int], pairs: set[tuple[int, int]],
                     n: int) -> set[int]:
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for i, j in pairs:
        adj[i].add(j)
        adj[j].add(i)
    out = set(start)
    frontier = list(start)
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in out:
                out.add(nxt)
                frontier.append(nxt)
    return out


def observe(state: WorldState, agent_id: str, table: BodyTable,
            walls: np.ndarray, params: PhysicsParams) -> Observation:
    """Visual (conical, occluded) plus touch observation for one agent."""
    from .physics import contact_pairs

    obs_idx = table.index(agent_id)
    cell_vis = np.zeros(GRID_W * GRID_H, dtype=np.uint8)
    seen_direct = np.zeros(table.n, dtype=np.uint8)
    kernels.visibility_kernel(
        state.pos, table.radii, state.ang, walls, obs_idx,
        params.to_vector(), GRID_W, GRID_H, cell_vis, seen_direct,
    )
    pairs = contact_pairs(state, table, walls, params.touch_eps)
    touched = _contact_closure({obs_idx}, pairs, table.n) - {obs_idx}
    initially = {i for i in range(table.n) if seen_direct[i]} | {obs_idx}
    observed = _contact_closure(initially, pairs, table.n)

    entity_states = state.entity_states()
    seen = [
        (table.ids[i], entity_states[i]) for i in sorted(observed)
    ]
    return Observation(
        observer_id=agent_id,
        step_index=state.step_index,
        self_state=entity_states[obs_idx],
        seen=seen,
        touched=[table.ids[i] for i in sorted(touched)],
        fov_mask=cell_vis,
    )


@dataclass
class OccupancyGrid:
    """Per-agent visibility bookkeeping over 1x1 cells.

    Placement weight regrows with staleness: a cell cleared recently is
    unlikely to hide an entity, one cleared long ago (or never seen) is.
    """

    staleness_rate: float = 0.05
    step: int = 0
    visible_now: np.ndarray = field(
        default_factory=lambda: np.zeros(GRID_W * GRID_H, dtype=np.uint8)
    )
    last_seen: np.ndarray = field(
        default_factory=lambda: np.full(GRID_W * GRID_H, -1, dtype=np.int64)
    )

    def update(self, fov_mask: np.ndarray, step_index: int) -> None:
        self.visible_now = fov_mask.copy()
        self.last_seen[fov_mask == 1] = step_index
        self.step = step_index

    def placement_weights(self) -> np.ndarray:
        """Distribution over cells where an unseen entity could be."""
        w = np.ones(GRID_W * GRID_H, dtype=np.float64)
        seen_before = self.last_seen >= 0
        stale = (self.step - self.last_seen).astype(np.float64)
        w[seen_before] = np.minimum(
            1.0, self.staleness_rate * stale[seen_before]
        )
        w[self.visible_now == 1] = 0.0
        total = w.sum()
        if total <= 0.0:
            # everything visible; degenerate uniform fallback
            w[:] = 1.0
            total = w.sum()
        return w / total


@dataclass
class BeliefParticleSet:
    owner_id: str
    particles: list  # list[WorldState]
    occupancy: OccupancyGrid
    rng: np.random.Generator
    observed_ids: set = field(default_factory=set)

    @property
    def k(self) -> int:
        return len(self.particles)


def _wall_gap(walls: np.ndarray, x: float, y: float) -> float:
    best = 1e18
    for w in range(walls.shape[0]):
        d2, _, _ = kernels.seg_point_dist2(
            walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3], x, y
        )
        best = min(best, np.sqrt(d2))
    return best


def _placement_ok(x, y, ent, table, truth_positions, observed_idx, walls,
                  params) -> bool:
    if _wall_gap(walls, x, y) <= table.radii[ent]:
        return False
    for j in observed_idx:
        gap = (
            np.hypot(truth_positions[j][0] - x, truth_positions[j][1] - y)
            - table.radii[ent] - table.radii[j]
        )
        if gap <= params.touch_eps:
            return False
    return True


def _sample_position(rng, weights, ent, table, truth_positions, observed_idx,
                     walls, params):
    cells = np.arange(weights.shape[0])
    for _ in range(RESAMPLE_ATTEMPTS):
        cell = int(rng.choice(cells, p=weights))
        cx = cell % GRID_W + 0.5 + rng.uniform(-0.25, 0.25)
        cy = cell // GRID_W + 0.5 + rng.uniform(-0.25, 0.25)
        if _placement_ok(cx, cy, ent, table, truth_positions, observed_idx,
                         walls, params):
            return cx, cy
    # fallback: center of an unseen cell regardless of body overlaps
    cell = int(rng.choice(cells, p=weights))
    return cell % GRID_W + 0.5, cell // GRID_W + 0.5


def _overwrite_observed(particle: WorldState, truth: WorldState,
                        observed_idx: set[int]) -> None:
    for i in observed_idx:
        particle.pos[i] = truth.pos[i]
        particle.vel[i] = truth.vel[i]
        particle.ang[i] = truth.ang[i]
        particle.avel[i] = truth.avel[i]
        # joints are observable on both sides when either side is observed
        particle.grab[i] = truth.grab[i]
        particle.grab_off[i] = truth.grab_off[i]
    # never hypothesize attachments for unobserved agents
    for i in range(particle.n):
        if i not in observed_idx and particle.grab[i] >= 0:
            particle.grab[i] = -1


def _inconsistent_entities(particle: WorldState, table: BodyTable,
                           observed_idx: set[int], occ: OccupancyGrid,
                           truth: WorldState, params: PhysicsParams,
                           ) -> list[int]:
    bad = []
    for i in range(table.n):
        if i in observed_idx:
            continue
        cell = cell_of(particle.pos[i, 0], particle.pos[i, 1])
        if occ.visible_now[cell] == 1:
            bad.append(i)
            continue
        # contact with an observed entity would have made it observed
        for j in observed_idx:
            gap = (
                float(np.hypot(*(truth.pos[j] - particle.pos[i])))
                - table.radii[i] - table.radii[j]
            )
            if gap <= params.touch_eps:
                bad.append(i)
                break
    return bad


def particle_consistent(particle: WorldState, table: BodyTable,
                        observed_idx: set[int], occ: OccupancyGrid,
                        truth: WorldState, params: PhysicsParams) -> bool:
    for i in observed_idx:
        if not (
            np.array_equal(particle.pos[i], truth.pos[i])
            and np.array_equal(particle.vel[i], truth.vel[i])
            and particle.ang[i] == truth.ang[i]
        ):
            return False
    return not _inconsistent_entities(
        particle, table, observed_idx, occ, truth, params
    )


def init_particles(config: ScenarioConfig, agent_id: str, k: int,
                   seed: Optional[int] = None) -> BeliefParticleSet:
    """Uniform prior over unseen cells; observed entities at ground truth."""
    table = config.body_table()
    walls = config.layout.wall_array()
    params = config.physics
    truth = config.initial
    obs = observe(truth, agent_id, table, walls, params)
    occ = OccupancyGrid()
    occ.update(obs.fov_mask, truth.step_index)
    observed_idx = {table.index(e) for e in obs.seen_ids}
    rng = np.random.default_rng(
        seed if seed is not None else config.seed + hash(agent_id) % 1000
    )
    weights = occ.placement_weights()
    particles = []
    for _ in range(k):
        p = truth.copy()
        for i in range(table.n):
            if i in observed_idx:
                continue
            x, y = _sample_position(
                rng, weights, i, table,
                {j: truth.pos[j] for j in observed_idx}, observed_idx,
                walls, params,
            )
            p.pos[i] = (x, y)
            p.vel[i] = 0.0
            p.ang[i] = 0.0
            p.avel[i] = 0.0
            p.grab[i] = -1
        particles.append(p)
    bp = BeliefParticleSet(
        owner_id=agent_id, particles=particles, occupancy=occ, rng=rng,
        observed_ids=set(obs.seen_ids),
    )
    return bp


def update_particles(
    beliefs: BeliefParticleSet,
    own_action: Optional[Action],
    observation: Observation,
    config: ScenarioConfig,
    truth: WorldState,
) -> BeliefParticleSet:
    """Transition, overwrite with ground truth, resample inconsistencies.

    own_action None skips the physics transition (first observation of an
    episode). Other agents are assumed to coast (no propulsion).
    """
    from .physics import step_world

    table = config.body_table()
    walls = config.layout.wall_array()
    params = config.physics
    occ = beliefs.occupancy
    occ.update(observation.fov_mask, observation.step_index)
    observed_idx = {table.index(e) for e in observation.seen_ids}
    weights = occ.placement_weights()
    truth_positions = {j: truth.pos[j] for j in observed_idx}

    new_particles = []
    for p in beliefs.particles:
        if own_action is not None:
            acts = {a: Action.NOFORCE for a in config.agent_ids}
            acts[beliefs.owner_id] = own_action
            p = step_world(p, acts, table, walls, params)
        else:
            p = p.copy()
        _overwrite_observed(p, truth, observed_idx)
        bad = _inconsistent_entities(p, table, observed_idx, occ, truth, params)
        for i in bad:
            x, y = _sample_position(
                beliefs.rng, weights, i, table, truth_positions, observed_idx,
                walls, params,
            )
            p.pos[i] = (x, y)
            p.vel[i] = 0.0
            p.ang[i] = 0.0
            p.avel[i] = 0.0
            p.grab[i] = -1
        p.step_index = truth.step_index
        new_particles.append(p)

    beliefs.particles = new_particles
    beliefs.observed_ids = set(observation.seen_ids)
    return beliefs
