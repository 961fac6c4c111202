import math

import numpy as np
import pytest
from scipy import stats

from socialsim.episodes import PlannerBudget, run_episode
from socialsim.gridnav import cell_of
from socialsim.inference import (
    Hypothesis,
    InferenceParams,
    WeightedHypothesis,
    estimate_beliefs_bottom_up,
    interval_distribution,
    likelihood,
    log_likelihood,
    propose_goal,
    propose_social,
    sample_local_interval,
    simple_infer,
    simulate_hypothesis,
    step_errors,
    summarize_posterior,
)
from socialsim.perception import observe, particle_consistent
from socialsim.pomcp import PUCTParams
from socialsim.scene import (
    EventType,
    GoalKind,
    GoalSpec,
    Relation,
    SampleConstraints,
    sample_config,
)

from .conftest import corner_landmarks, simple_config


@pytest.fixture(scope="module")
def observed_record():
    cfg = sample_config(
        31, SampleConstraints(event_type=EventType.INDEPENDENT, max_steps=30)
    )
    budget = PlannerBudget(belief_particles=6,
                           puct=PUCTParams(num_simulations=40))
    return run_episode(cfg, budget, stop_on_goals=False)


def _fast_params(**kw):
    defaults = dict(m_particles=4, l_iterations=2, sim_belief_particles=4,
                    sim_pomcp_simulations=30)
    defaults.update(kw)
    return InferenceParams(**defaults)


# ---------------------------------------------------------------------------
# likelihood

def test_likelihood_identity_is_one():
    traj = np.random.default_rng(0).uniform(0, 20, (10, 3, 2))
    assert likelihood(traj, traj.copy(), beta=0.05) == 1.0


def test_likelihood_constant_distance_oracle():
    # one entity offset by a constant 2 units for 40 steps at beta=0.05:
    # P = exp(-0.05 * 40 * 2) = exp(-4)
    obs = np.zeros((40, 1, 2))
    sim = obs.copy()
    sim[:, 0, 0] += 2.0
    assert likelihood(obs, sim, beta=0.05) == pytest.approx(
        math.exp(-4.0), rel=1e-12
    )


def test_likelihood_default_beta_is_paper_value():
    assert InferenceParams().beta == 0.05
    assert InferenceParams().eta == 0.1
    assert InferenceParams().delta_t == 10
    assert InferenceParams().m_particles == 15
    assert InferenceParams().l_iterations == 6
    assert InferenceParams().gamma == 10.0


def test_likelihood_extends_short_simulations_by_holding():
    obs = np.zeros((10, 1, 2))
    sim = np.zeros((4, 1, 2))
    sim[:, 0, 0] = [0.0, 1.0, 2.0, 3.0]
    errs = step_errors(obs, sim)
    assert errs.shape == (10,)
    assert errs[-1] == pytest.approx(3.0)  # held at the final state


def test_likelihood_shape_mismatch_is_structural_error():
    from socialsim.episodes import StructuralError

    with pytest.raises(StructuralError):
        step_errors(np.zeros((5, 2, 2)), np.zeros((5, 3, 2)))


# ---------------------------------------------------------------------------
# proposals

def _straight_line_record(target_lm="L2"):
    """Hand-built record: a0 walks straight onto a landmark."""
    from socialsim.episodes import (EpisodeRecord, FORMAT_VERSION, StepRecord,
                                    derive_seeds)
    from socialsim.physics import Action, step_world
    from socialsim.scene import Layout, classify_event

    lay = Layout(layout_id="open", landmarks=corner_landmarks())
    cfg = simple_config(
        lay, [[10.0, 10.0], [4.0, 16.0], [4.0, 4.0]],
        {"a0": GoalSpec(GoalKind.GOTO, landmark_id=target_lm),
         "a1": GoalSpec(GoalKind.GOTO, landmark_id="L3")},
        seed=17,
    )
    table = cfg.body_table()
    walls = cfg.layout.wall_array()
    st = cfg.initial.copy()
    steps = []
    for t in range(20):
        acts = {"a0": Action.FORCE_NE, "a1": Action.NOFORCE}
        steps.append(StepRecord(t=t, state=st, actions=acts, seen={},
                                touched={}, fov={}, subgoals={}))
        st = step_world(st, acts, table, walls, cfg.physics)
    return EpisodeRecord(
        version=FORMAT_VERSION, config=cfg, label=classify_event(cfg),
        seeds=derive_seeds(cfg.seed, cfg.agent_ids), steps=steps,
        final_state=st, termination="max_steps",
    )


def test_goal_cue_mode_is_achieved_goal():
    rec = _straight_line_record()
    goals, probs = propose_goal(rec, "a0", 0, rec.n_steps, gamma=10.0)
    best = goals[int(np.argmax(probs))]
    assert best.kind == GoalKind.GOTO
    assert best.landmark_id == "L2"


def test_goal_cue_symmetric_landmarks_equal_probability():
    from socialsim.episodes import (EpisodeRecord, FORMAT_VERSION, StepRecord,
                                    derive_seeds)
    from socialsim.physics import Action
    from socialsim.scene import Layout, classify_event

    lay = Layout(layout_id="open", landmarks=corner_landmarks())
    # stationary agent exactly on the vertical symmetry axis between L0/L1
    cfg = simple_config(
        lay, [[10.0, 2.0], [10.0, 18.0], [4.0, 10.0]],
        {"a0": GoalSpec(GoalKind.GOTO, landmark_id="L0"),
         "a1": GoalSpec(GoalKind.GOTO, landmark_id="L3")},
    )
    steps = [
        StepRecord(t=t, state=cfg.initial, actions={
            "a0": Action.NOFORCE, "a1": Action.NOFORCE
        }, seen={}, touched={}, fov={}, subgoals={})
        for t in range(12)
    ]
    rec = EpisodeRecord(
        version=FORMAT_VERSION, config=cfg, label=classify_event(cfg),
        seeds=derive_seeds(cfg.seed, cfg.agent_ids), steps=steps,
        final_state=cfg.initial, termination="max_steps",
    )
    goals, probs = propose_goal(rec, "a0", 0, rec.n_steps, gamma=10.0)
    by_key = {g.key(): p for g, p in zip(goals, probs)}
    assert by_key["goto:L0"] == pytest.approx(by_key["goto:L1"], rel=1e-9)


def test_goal_cue_matches_independent_softmax():
    rec = _straight_line_record()
    from socialsim.scene import goal_distance

    table = rec.config.body_table()
    goals, probs = propose_goal(rec, "a0", 0, rec.n_steps, gamma=10.0)
    s1, s2 = rec.states()[0], rec.states()[-1]
    from socialsim.inference import CUE_DISTANCE_NORM

    logits = np.array([
        -10.0 * (
            2.0 * goal_distance(s2, g, table, rec.config.layout, "a0")
            - goal_distance(s1, g, table, rec.config.layout, "a0")
        ) / CUE_DISTANCE_NORM
        for g in goals
    ])
    want = np.exp(logits - logits.max())
    want /= want.sum()
    assert np.allclose(probs, want, atol=1e-12)


def test_social_proposal_frequencies():
    rng = np.random.default_rng(0)
    n = 10_000
    counts = {"zero": 0}
    for _ in range(n):
        a = propose_social(rng, "a0", "a1")
        nz = [(i, j, v) for i, j, v in a if v != 0]
        assert len(nz) <= 1  # never both nonzero
        if not nz:
            counts["zero"] += 1
        else:
            key = (nz[0][0], nz[0][2])
            counts[key] = counts.get(key, 0) + 1
    # (0,0) with prob 1/3; each of the 4 nonzero outcomes with prob 1/6
    observed = [counts["zero"]] + [
        counts.get(k, 0)
        for k in [("a0", 1), ("a0", -1), ("a1", 1), ("a1", -1)]
    ]
    expected = [n / 3] + [n / 6] * 4
    chi2 = sum((o - e) ** 2 / e for o, e in zip(observed, expected))
    assert chi2 < stats.chi2.ppf(0.999, df=4)


# ---------------------------------------------------------------------------
# local interval sampling

def test_interval_uniform_errors_uniform_starts():
    errors = np.full(30, 2.0)
    dist = interval_distribution(errors, eta=0.1, delta_t=10)
    assert np.allclose(dist, dist[0])


def test_interval_spike_is_mode_and_matches_softmax():
    rng = np.random.default_rng(0)
    errors = np.ones(40)
    errors[25:30] += 6.0
    dist = interval_distribution(errors, eta=0.1, delta_t=10)
    # analytic softmax oracle
    sums = np.array([errors[t:t + 11].sum() for t in range(30)])
    want = np.exp(0.1 * (sums - sums.max()))
    want /= want.sum()
    assert np.allclose(dist, want, atol=1e-12)
    counts = np.zeros(30)
    for _ in range(10_000):
        counts[sample_local_interval(errors, 0.1, 10, rng)] += 1
    freq = counts / counts.sum()
    # fully-covering windows tie at the maximum; the empirical mode must
    # land on that plateau
    plateau = np.nonzero(want > want.max() - 1e-12)[0]
    assert int(np.argmax(freq)) in plateau
    assert np.abs(freq - want).max() < 0.03


def test_interval_too_short_trajectory_is_error():
    from socialsim.episodes import StructuralError

    with pytest.raises(StructuralError):
        sample_local_interval(np.ones(5), 0.1, 10,
                              np.random.default_rng(0))


# ---------------------------------------------------------------------------
# posteriors

def _hyp(g0, g1, a01=0, a10=0, f0=2, f1=2):
    return Hypothesis(
        goals=(("a0", g0), ("a1", g1)),
        alpha=(("a0", "a1", a01), ("a1", "a0", a10)),
        strengths=(("a0", f0), ("a1", f1)),
    )


def _wh(h, w):
    return WeightedHypothesis(hypothesis=h, trajectory=np.zeros((1, 1, 2)),
                              log_likelihood=0.0, weight=w)


def test_goal_posterior_weighted_sum_by_hand(observed_record):
    particles = [
        _wh(_hyp("goto:L1", "goto:L3"), 0.75),
        _wh(_hyp("goto:L2", "goto:L3"), 0.25),
    ]
    post = summarize_posterior(particles, observed_record.config)
    assert post.goal_posteriors["a0"]["goto:L1"] == pytest.approx(0.75)
    assert post.goal_posteriors["a0"]["goto:L2"] == pytest.approx(0.25)


def test_degenerate_helper_posterior_is_friendly(observed_record):
    particles = [
        _wh(_hyp("goto:L1", "goto:L3", a01=1), 0.6),
        _wh(_hyp("goto:L2", "goto:L2", a01=1), 0.4),
    ]
    post = summarize_posterior(particles, observed_record.config)
    assert post.relation_posterior[Relation.FRIENDLY.value] == pytest.approx(1.0)
    assert post.relation_posterior[Relation.NEUTRAL.value] == 0.0
    assert post.relation_posterior[Relation.ADVERSARIAL.value] == 0.0


def test_relation_posterior_formula_oracle(observed_record):
    # mixed particle set checked against the printed posterior formulas
    particles = [
        _wh(_hyp("goto:L1", "goto:L3", a01=1), 0.3),       # helping
        _wh(_hyp("move:o0:L1", "move:o0:L1"), 0.3),        # same goal
        _wh(_hyp("move:o0:L1", "move:o0:L2"), 0.2),        # conflicting
        _wh(_hyp("goto:L0", "goto:L2"), 0.2),              # independent
    ]
    post = summarize_posterior(particles, observed_record.config)
    p_pos, p_zero = 0.3, 0.7
    p_same, p_conf = 0.3, 0.2
    friendly = p_pos + p_same * p_zero
    adversarial = 0.0 + p_conf * p_zero
    neutral = 1.0 - friendly - adversarial
    total = friendly + adversarial + neutral
    assert post.relation_posterior["friendly"] == pytest.approx(
        friendly / total, abs=1e-12
    )
    assert post.relation_posterior["adversarial"] == pytest.approx(
        adversarial / total, abs=1e-12
    )
    assert sum(post.relation_posterior.values()) == pytest.approx(1.0)
    assert not post.clipping_fired


def test_duplicating_particle_preserves_posteriors(observed_record):
    base = [
        _wh(_hyp("goto:L1", "goto:L3"), 0.6),
        _wh(_hyp("goto:L2", "avoid:a0"), 0.4),
    ]
    split = [
        _wh(_hyp("goto:L1", "goto:L3"), 0.3),
        _wh(_hyp("goto:L1", "goto:L3"), 0.3),
        _wh(_hyp("goto:L2", "avoid:a0"), 0.4),
    ]
    a = summarize_posterior(base, observed_record.config)
    b = summarize_posterior(split, observed_record.config)
    assert a.goal_posteriors == b.goal_posteriors
    for k in a.relation_posterior:
        assert a.relation_posterior[k] == pytest.approx(
            b.relation_posterior[k], abs=1e-12
        )


# ---------------------------------------------------------------------------
# bottom-up belief estimation

def test_bottom_up_beliefs_fully_visible_match_truth():
    from socialsim.physics import PhysicsParams

    rec = _straight_line_record()
    # widen the cone so everything is visible from a0's pose
    beliefs = estimate_beliefs_bottom_up(rec, "a0", k=4, upto_step=3)
    cfg = rec.config
    table = cfg.body_table()
    walls = cfg.layout.wall_array()
    for t, bp in enumerate(beliefs):
        obs = observe(rec.states()[t], "a0", table, walls, cfg.physics)
        for p in bp.particles:
            for e in obs.seen_ids:
                i = table.index(e)
                assert np.array_equal(p.pos[i], rec.states()[t].pos[i])


def test_bottom_up_beliefs_hidden_entity_stays_unseen():
    rec = _straight_line_record()
    cfg = rec.config
    table = cfg.body_table()
    walls = cfg.layout.wall_array()
    beliefs = estimate_beliefs_bottom_up(rec, "a0", k=6, upto_step=6)
    for t, bp in enumerate(beliefs):
        obs = observe(rec.states()[t], "a0", table, walls, cfg.physics)
        observed_idx = {table.index(e) for e in obs.seen_ids}
        for p in bp.particles:
            assert particle_consistent(p, table, observed_idx, bp.occupancy,
                                       rec.states()[t], cfg.physics)
            for i in range(table.n):
                if i not in observed_idx:
                    c = cell_of(p.pos[i, 0], p.pos[i, 1])
                    assert bp.occupancy.visible_now[c] == 0


# ---------------------------------------------------------------------------
# end-to-end inference machinery

def test_simulate_hypothesis_deterministic(observed_record):
    params = _fast_params()
    h = _hyp("goto:L1", "goto:L3")
    a = simulate_hypothesis(observed_record, h, params)
    b = simulate_hypothesis(observed_record, h, params)
    assert np.array_equal(a, b)


def test_simple_infer_runs_and_normalizes(observed_record):
    params = _fast_params()
    result = simple_infer(observed_record, params, mode="initial")
    weights = [p.weight for p in result.particles]
    assert sum(weights) == pytest.approx(1.0, abs=1e-9)
    assert len(result.particles) == params.m_particles
    post = result.posterior
    for a, dist in post.goal_posteriors.items():
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
    assert sum(post.relation_posterior.values()) == pytest.approx(1.0,
                                                                  abs=1e-9)
    for v in post.relation_posterior.values():
        assert 0.0 <= v <= 1.0


def test_simple_infer_full_mode_mh_loop(observed_record):
    params = _fast_params()
    result = simple_infer(observed_record, params, mode="full")
    assert result.n_simulations >= params.m_particles
    assert sum(p.weight for p in result.particles) == pytest.approx(1.0,
                                                                    abs=1e-9)


def test_simple_infer_too_short_record(observed_record):
    from socialsim.episodes import StructuralError

    short = observed_record.prefix(4)
    with pytest.raises(StructuralError):
        simple_infer(short, _fast_params(), mode="initial")


def test_mh_identical_proposal_always_accepts():
    # acceptance ratio with Y' == Y_l is exactly 1
    log_ratio = 0.0
    accept = min(1.0, math.exp(min(log_ratio, 0.0)))
    assert accept == 1.0


def test_predict_output_shape(observed_record):
    from socialsim.inference import predict_trajectories

    if observed_record.n_steps < 20:
        pytest.skip("record too short")
    params = _fast_params()
    pred = predict_trajectories(observed_record, params, prefix_steps=20,
                                horizon=20, mode="initial")
    n = observed_record.config.body_table().n
    assert pred.shape == (20, n, 2)
