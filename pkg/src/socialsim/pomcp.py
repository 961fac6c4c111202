"""POMCP action search rooted at a subgoal-consistent particle subset.

Each simulation threads one root-sampled particle down the tree (the tree
branches on actions only; fields of view are not recomputed inside the
search), expands one leaf, and finishes with an epsilon-greedy rollout.
Action selection uses the visit-scaled PUCT bonus
    U(a) = c(s) * P(a) * sqrt(N) / (1 + N(a)),
    c(s) = log((1 + N + c_base) / c_base) + c_init,
with a uniform prior P. The other agent is assumed to coast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import A_NOFORCE, N_ACTIONS
from .physics import Action, BodyTable, PhysicsParams, WorldState


class EmptyParticleSetError(ValueError):
    pass


@dataclass(frozen=True)
class PUCTParams:
    c_init: float = 1.25
    c_base: float = 1000.0
    num_simulations: int = 1000
    rollout_depth: int = 10
    discount: float = 0.9
    epsilon: float = 0.15
    max_tree_depth: int = 50

    def __post_init__(self):
        if self.num_simulations < 1 or self.rollout_depth < 1:
            raise ValueError("POMCP budgets must be >= 1")


def exploration_coefficient(n_visits: int, params: PUCTParams) -> float:
    return (
        math.log((1.0 + n_visits + params.c_base) / params.c_base)
        + params.c_init
    )


class SearchNode:
    """Per-node MCTS statistics; root convention N = sum_a N(a) + 1."""

    __slots__ = ("visits", "action_visits", "action_values", "prior",
                 "children")

    def __init__(self):
        self.visits = 1
        self.action_visits = np.zeros(N_ACTIONS, dtype=np.int64)
        self.action_values = np.zeros(N_ACTIONS, dtype=np.float64)
        self.prior = np.full(N_ACTIONS, 1.0 / N_ACTIONS, dtype=np.float64)
        self.children: dict[int, "SearchNode"] = {}

    def q_values(self) -> np.ndarray:
        denom = np.maximum(self.action_visits, 1)
        return self.action_values / denom

    def puct_bonus(self, params: PUCTParams) -> np.ndarray:
        c = exploration_coefficient(self.visits, params)
        return (
            c * self.prior * math.sqrt(self.visits)
            / (1.0 + self.action_visits)
        )

    def select_action(self, params: PUCTParams) -> int:
        # try every action once before trusting value estimates
        untried = np.nonzero(self.action_visits == 0)[0]
        if untried.size:
            return int(untried[0])
        scores = self.q_values() + self.puct_bonus(params)
        return int(np.argmax(scores))


NO_FIELD = np.zeros(1, dtype=np.float64)


@dataclass
class SearchContext:
    """Static arrays shared by every simulation of one search."""

    table: BodyTable
    walls: np.ndarray
    pvec: np.ndarray
    self_idx: int
    subgoal_vec: np.ndarray
    nav_field: np.ndarray  # BFS distance field for shaping, or NO_FIELD
    grid_w: int = 20

    @staticmethod
    def build(table: BodyTable, walls: np.ndarray, params: PhysicsParams,
              agent_id: str, subgoal_vec: np.ndarray,
              nav_field: np.ndarray | None = None) -> "SearchContext":
        return SearchContext(
            table=table,
            walls=walls,
            pvec=params.to_vector(),
            self_idx=table.index(agent_id),
            subgoal_vec=subgoal_vec,
            nav_field=NO_FIELD if nav_field is None else nav_field,
        )


class _Scratch:
    def __init__(self, n: int):
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.ang = np.zeros(n)
        self.avel = np.zeros(n)
        self.grab = np.zeros(n, dtype=np.int64)
        self.grab_off = np.zeros((n, 2))
        self.actions = np.zeros(n, dtype=np.uint8)
        self.force = np.zeros(n)
        self.diag = np.zeros(2)

    def load(self, state: WorldState) -> None:
        np.copyto(self.pos, state.pos)
        np.copyto(self.vel, state.vel)
        np.copyto(self.ang, state.ang)
        np.copyto(self.avel, state.avel)
        np.copyto(self.grab, state.grab)
        np.copyto(self.grab_off, state.grab_off)


def _shaped_distance(scr: _Scratch, ctx: SearchContext):
    return kernels.subgoal_reward_terms(
        scr.pos, scr.ang, scr.grab, ctx.table.radii, ctx.subgoal_vec,
        ctx.pvec[kernels.P_TOUCH_EPS], ctx.nav_field, ctx.grid_w,
    )


def _step_reward(scr: _Scratch, ctx: SearchContext, action: int,
                 d_prev: float):
    """Apply own action (other agents coast).

    Returns (reward, terminal, new shaped distance); the reward pays for
    progress in the shaped subgoal distance plus a satisfaction bonus.
    """
    scr.actions[:] = A_NOFORCE
    scr.actions[ctx.self_idx] = action
    kernels.step_kernel(
        scr.pos, scr.vel, scr.ang, scr.avel, scr.grab, scr.grab_off,
        ctx.table.radii, ctx.table.masses, ctx.table.kinds,
        ctx.table.max_forces, scr.actions, ctx.walls, ctx.pvec,
        scr.force, scr.diag,
    )
    sat, dist = _shaped_distance(scr, ctx)
    if sat:
        return 1.0, True, dist
    reward = kernels.SHAPING_GAIN * (d_prev - dist) - kernels.TIME_PENALTY
    return reward, False, dist


def pomcp_act(
    particles: list,
    ctx: SearchContext,
    params: PUCTParams,
    rng: np.random.Generator,
    return_stats: bool = False,
):
    """Search for the best action toward the subgoal; argmax-visit result."""
    if not particles:
        raise EmptyParticleSetError("POMCP needs a non-empty particle subset")

    n = ctx.table.n
    scr = _Scratch(n)
    root = SearchNode()
    rng_state = np.zeros(2, dtype=np.uint64)

    for _sim in range(params.num_simulations):
        particle = particles[int(rng.integers(0, len(particles)))]
        scr.load(particle)
        _sat0, d_prev = _shaped_distance(scr, ctx)
        node = root
        path: list[tuple[SearchNode, int, float]] = []
        tail_return = 0.0
        depth = 0
        while True:
            a = node.select_action(params)
            reward, terminal, d_prev = _step_reward(scr, ctx, a, d_prev)
            if terminal:
                path.append((node, a, reward))
                break
            child = node.children.get(a)
            if child is None:
                # expand, then rollout from the successor state
                child = SearchNode()
                node.children[a] = child
                path.append((node, a, reward))
                rng_state[0] = rng.integers(1, 2**63, dtype=np.uint64)
                rng_state[1] = rng.integers(1, 2**63, dtype=np.uint64)
                tail_return = kernels.rollout_kernel(
                    scr.pos, scr.vel, scr.ang, scr.avel, scr.grab,
                    scr.grab_off, ctx.table.radii, ctx.table.masses,
                    ctx.table.kinds, ctx.table.max_forces, ctx.walls,
                    ctx.pvec, ctx.self_idx, ctx.subgoal_vec,
                    params.rollout_depth, params.discount, params.epsilon,
                    rng_state, ctx.nav_field, ctx.grid_w, scr.actions,
                    scr.force, scr.diag,
                )
                break
            path.append((node, a, reward))
            node = child
            depth += 1
            if depth >= params.max_tree_depth:
                break

        # backup discounted return along the path
        g = tail_return
        for node, a, reward in reversed(path):
            g = reward + params.discount * g
            node.action_visits[a] += 1
            node.action_values[a] += g
            node.visits += 1

    best = int(np.argmax(root.action_visits))
    action = Action(best)
    if return_stats:
        return action, root
    return action


def rollout_policy(state: WorldState, ctx: SearchContext, epsilon: float,
                   rng: np.random.Generator) -> Action:
    """One epsilon-greedy rollout action (the policy POMCP rolls out with)."""
    if epsilon > 0.0 and rng.uniform() < epsilon:
        return Action(int(rng.integers(0, N_ACTIONS)))
    a = kernels.greedy_action(
        state.pos, state.vel, state.ang, state.grab, ctx.table.radii,
        ctx.table.kinds, ctx.subgoal_vec, ctx.self_idx,
        ctx.pvec[kernels.P_TOUCH_EPS], ctx.pvec[kernels.P_GRAB_RADIUS],
        ctx.pvec[kernels.P_GRAB_ARC], ctx.nav_field, ctx.grid_w,
    )
    return Action(int(a))
