import math

import numpy as np
import pytest
from scipy import stats

from socialsim.kernels import N_ACTIONS
from socialsim.physics import Action, PhysicsParams, make_world, step_world
from socialsim.pomcp import (
    EmptyParticleSetError,
    PUCTParams,
    SearchContext,
    exploration_coefficient,
    pomcp_act,
    rollout_policy,
)
from socialsim.scene import GoalKind, GoalSpec, Layout, build_body_table
from socialsim.symbolic import PredKind, Predicate, encode_subgoal

from .conftest import agents_and_object, corner_landmarks


def _search_setup(positions, subgoal, agent="a0", angles=None, params=None):
    lay = Layout(layout_id="open", landmarks=corner_landmarks())
    ents = agents_and_object()
    table = build_body_table(ents)
    phys = params or PhysicsParams()
    state = make_world([e.entity_id for e in ents], positions,
                       layout_ref="open", angles=angles)
    sg = encode_subgoal(subgoal, table, lay, phys)
    ctx = SearchContext.build(table, lay.wall_array(), phys, agent, sg)
    return state, ctx, table, lay, phys


def test_exploration_constant_sanity():
    # c at N=0 with paper constants
    params = PUCTParams()
    got = exploration_coefficient(0, params)
    assert got == pytest.approx(math.log(1001.0 / 1000.0) + 1.25, abs=1e-12)
    assert got == pytest.approx(1.2509995, abs=1e-6)


def test_close_target_due_east_picks_force_east():
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    hits = 0
    runs = 100
    # one-step lookahead oracle: among force actions, east minimizes the
    # resulting distance to a target due east
    state, ctx, table, lay, phys = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 10.0]], subgoal,
        angles=[0.0, 0.0, 0.0],
    )
    best = None
    best_d = None
    for a in Action:
        if not a.is_force:
            continue
        nxt = step_world(state, {"a0": a, "a1": Action.NOFORCE}, table,
                         lay.wall_array(), phys)
        d = float(np.hypot(*(nxt.pos[2] - nxt.pos[0])))
        if best_d is None or d < best_d - 1e-12:
            best, best_d = a, d
    assert best == Action.FORCE_E

    for seed in range(runs):
        rng = np.random.default_rng(seed)
        act = pomcp_act([state], ctx, PUCTParams(num_simulations=600), rng)
        hits += act == Action.FORCE_E
    assert hits >= 95


def test_satisfied_subgoal_idles():
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    state, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [6.6, 10.0]], subgoal,
        angles=[0.0, 0.0, 0.0],
    )
    act = pomcp_act([state], ctx, PUCTParams(num_simulations=100),
                    np.random.default_rng(0))
    assert act in (Action.NOFORCE, Action.STOP)


def test_visit_conservation():
    subgoal = Predicate(PredKind.ON, "a0", "L2")
    state, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 10.0]], subgoal
    )
    n = 137
    _, root = pomcp_act([state], ctx, PUCTParams(num_simulations=n),
                        np.random.default_rng(1), return_stats=True)
    assert int(root.action_visits.sum()) == n
    assert root.visits == n + 1  # root convention N = sum_a N(a) + 1


def test_puct_bonus_nonnegative_and_vanishing():
    params = PUCTParams()
    from socialsim.pomcp import SearchNode

    node = SearchNode()
    node.visits = 500
    node.action_visits[:] = 2
    bonus = node.puct_bonus(params)
    assert (bonus >= 0).all()
    node.action_visits[3] = 10_000_000
    bonus2 = node.puct_bonus(params)
    assert bonus2[3] < 1e-3
    assert bonus2[3] < bonus[3]


def test_empty_particle_set_raises():
    subgoal = Predicate(PredKind.ON, "a0", "L2")
    _, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 10.0]], subgoal
    )
    with pytest.raises(EmptyParticleSetError):
        pomcp_act([], ctx, PUCTParams(num_simulations=10),
                  np.random.default_rng(0))


def test_budget_monotonicity_statistical():
    # success rate at reaching a nearby subgoal within 5 steps is
    # non-decreasing in the simulation budget
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    success = {}
    for sims in (20, 120, 400):
        wins = 0
        for seed in range(50):
            state, ctx, table, lay, phys = _search_setup(
                [[8.0, 10.0], [18.0, 18.0], [12.5, 10.0]], subgoal,
                angles=[0.0, 0.0, 0.0],
            )
            st = state
            for t in range(5):
                rng = np.random.default_rng([seed, t])
                act = pomcp_act([st], ctx, PUCTParams(num_simulations=sims),
                                rng)
                st = step_world(st, {"a0": act, "a1": Action.NOFORCE},
                                table, lay.wall_array(), phys)
                from socialsim.kernels import subgoal_eval

                sat, _ = subgoal_eval(st.pos, st.ang, st.grab, table.radii,
                                      ctx.subgoal_vec, phys.touch_eps)
                if sat:
                    wins += 1
                    break
        success[sims] = wins / 50.0
    assert success[120] >= success[20] - 0.08
    assert success[400] >= success[120] - 0.08
    assert success[400] >= success[20]


# ---------------------------------------------------------------------------
# rollout policy

def test_rollout_policy_greedy_matches_distance_oracle():
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    state, ctx, table, lay, phys = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 13.0]], subgoal,
        angles=[0.0, 0.0, 0.0],
    )
    act = rollout_policy(state, ctx, epsilon=0.0,
                         rng=np.random.default_rng(0))
    # oracle: quantized bearing toward the target
    dx, dy = state.pos[2] - state.pos[0]
    k = int(math.floor(
        (math.atan2(dy, dx) % (2 * math.pi) + math.pi / 8) / (math.pi / 4)
    )) % 8
    assert act == Action(int(Action.FORCE_E) + k)


def test_rollout_policy_uniform_at_epsilon_one():
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    state, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 13.0]], subgoal
    )
    rng = np.random.default_rng(0)
    counts = np.zeros(N_ACTIONS)
    n = 10_000
    for _ in range(n):
        counts[int(rollout_policy(state, ctx, 1.0, rng))] += 1
    expect = n / N_ACTIONS
    chi2 = float(((counts - expect) ** 2 / expect).sum())
    assert chi2 < stats.chi2.ppf(0.999, df=N_ACTIONS - 1)


def test_rollout_policy_satisfied_noforce():
    subgoal = Predicate(PredKind.CLOSE, "a0", "o0")
    state, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [6.6, 10.0]], subgoal
    )
    act = rollout_policy(state, ctx, 0.0, np.random.default_rng(0))
    assert act == Action.NOFORCE


def test_pomcp_deterministic_given_seed():
    subgoal = Predicate(PredKind.ON, "a0", "L2")
    state, ctx, *_ = _search_setup(
        [[5.0, 10.0], [18.0, 18.0], [15.0, 10.0]], subgoal
    )
    a = pomcp_act([state], ctx, PUCTParams(num_simulations=150),
                  np.random.default_rng(99))
    b = pomcp_act([state], ctx, PUCTParams(num_simulations=150),
                  np.random.default_rng(99))
    assert a == b
