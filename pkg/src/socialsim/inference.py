"""SIMPLE: simulation-based inverse planning over goals, relations, strengths.

Hypotheses Y = (g_i, g_j, a_ij, a_ji, f_i, f_j) are proposed bottom-up from
trajectory cues, simulated through the full planner+physics stack, scored by
an exponential trajectory likelihood, and refined with Metropolis-Hastings
updates whose proposal windows concentrate where the current simulation
deviates most. Posteriors over goals and relationships are weighted particle
sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .episodes import EpisodeRecord, PlannerBudget, StructuralError, run_episode
from .perception import (BeliefParticleSet, OccupancyGrid, init_particles,
                         observe, update_particles)
from .physics import StrengthLevel
from .pomcp import PUCTParams
from .scene import (
    GoalKind,
    GoalSpec,
    Relation,
    ScenarioConfig,
    SocialWeights,
    goal_distance,
    goals_conflict,
)
from .strength import (
    AnalyticStrengthEstimator,
    CueFeatures,
    cue_features,
    estimate_strength,
)

MODES = ("initial", "global", "full")

# goal-cue distances are normalized by the arena diagonal so the gamma=10
# exponent spans a samplable range instead of collapsing to one-hot
CUE_DISTANCE_NORM = 28.284271


@dataclass(frozen=True)
class Hypothesis:
    """One joint assignment of goals, social weights, and strengths."""

    goals: tuple  # ((agent_id, goal_key), ...) sorted by agent
    alpha: tuple  # ((i, j, value), (j, i, value))
    strengths: tuple  # ((agent_id, level), ...) sorted by agent

    def goal_of(self, agent_id: str) -> str:
        for a, g in self.goals:
            if a == agent_id:
                return g
        raise KeyError(agent_id)

    def strength_of(self, agent_id: str) -> int:
        for a, s in self.strengths:
            if a == agent_id:
                return s
        raise KeyError(agent_id)

    def alpha_of(self, i: str, j: str) -> int:
        for a, b, v in self.alpha:
            if a == i and b == j:
                return v
        return 0


@dataclass(frozen=True)
class InferenceParams:
    m_particles: int = 15
    l_iterations: int = 6
    beta: float = 0.05
    eta: float = 0.1
    delta_t: int = 10
    gamma: float = 10.0
    sim_belief_particles: int = 10
    sim_pomcp_simulations: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("m_particles", "l_iterations", "beta", "eta", "delta_t",
                     "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def sim_budget(self) -> PlannerBudget:
        return PlannerBudget(
            belief_particles=self.sim_belief_particles,
            puct=PUCTParams(num_simulations=self.sim_pomcp_simulations),
        )


@dataclass
class WeightedHypothesis:
    hypothesis: Hypothesis
    trajectory: np.ndarray  # simulated (T+1, N, 2) positions
    log_likelihood: float
    weight: float


@dataclass
class PosteriorSummary:
    goal_posteriors: dict      # agent_id -> {goal_key: prob}
    alpha_posteriors: dict     # (i, j) -> {value: prob}
    relation_posterior: dict   # relation value -> prob
    strength_posteriors: dict  # agent_id -> {level: prob}
    top_hypothesis: Hypothesis
    clipping_fired: bool


@dataclass
class InferenceResult:
    mode: str
    particles: list  # list[WeightedHypothesis]
    posterior: PosteriorSummary
    n_simulations: int


# ---------------------------------------------------------------------------
# likelihood

def _normalize_lengths(observed: np.ndarray, simulated: np.ndarray
                       ) -> np.ndarray:
    """Truncate or extend-by-holding the simulation to the observed length."""
    t_obs = observed.shape[0]
    t_sim = simulated.shape[0]
    if t_sim == t_obs:
        return simulated
    if t_sim > t_obs:
        return simulated[:t_obs]
    pad = np.repeat(simulated[-1:], t_obs - t_sim, axis=0)
    return np.concatenate([simulated, pad], axis=0)


def step_errors(observed: np.ndarray, simulated: np.ndarray) -> np.ndarray:
    """Per-step L2 norm over concatenated entity center positions."""
    sim = _normalize_lengths(observed, simulated)
    if sim.shape != observed.shape:
        raise StructuralError(
            f"trajectory shape mismatch: {sim.shape} vs {observed.shape}"
        )
    diff = (observed - sim).reshape(observed.shape[0], -1)
    return np.sqrt((diff * diff).sum(axis=1))


def log_likelihood(observed: np.ndarray, simulated: np.ndarray,
                   beta: float) -> float:
    return -beta * float(step_errors(observed, simulated).sum())


def likelihood(observed: np.ndarray, simulated: np.ndarray,
               beta: float) -> float:
    """P(s|Y) = exp(-beta * sum_t ||s^t - shat^t||_2), in (0, 1]."""
    return math.exp(log_likelihood(observed, simulated, beta))


# ---------------------------------------------------------------------------
# bottom-up proposals

def propose_goal(record: EpisodeRecord, agent_id: str, t1: int, t2: int,
                 gamma: float) -> tuple:
    """Cue distribution over grounded goals from a trajectory window.

    Q(g) ~ exp(-gamma * (2 d(s_t2, g) - d(s_t1, g))): achievement at the
    window end or progress across the window raises a goal's probability.
    """
    if t2 - t1 < 1:
        raise StructuralError("goal proposal window must span >= 2 states")
    config = record.config
    table = config.body_table()
    states = record.states()
    s1, s2 = states[t1], states[t2]
    goals = config.grounded_goals_for(agent_id)
    logits = np.empty(len(goals))
    for k, g in enumerate(goals):
        d1 = goal_distance(s1, g, table, config.layout, agent_id)
        d2 = goal_distance(s2, g, table, config.layout, agent_id)
        logits[k] = -gamma * (2.0 * d2 - d1) / CUE_DISTANCE_NORM
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return goals, probs


def propose_social(rng: np.random.Generator, i: str, j: str) -> tuple:
    """u ~ U{-1,0,1}; if nonzero, one uniformly chosen ordered pair gets u."""
    u = int(rng.integers(-1, 2))
    if u == 0:
        return (i, j, 0), (j, i, 0)
    if rng.integers(0, 2) == 0:
        return (i, j, u), (j, i, 0)
    return (i, j, 0), (j, i, u)


def social_log_pmf(alpha: tuple) -> float:
    nonzero = [v for _, _, v in alpha if v != 0]
    return math.log(1.0 / 3.0) if not nonzero else math.log(1.0 / 6.0)


def window_cue_features(record: EpisodeRecord, agent_id: str, t1: int,
                        t2: int) -> CueFeatures:
    table = record.config.body_table()
    window = record.positions()[t1:t2 + 1]
    return cue_features(window, table.index(agent_id))


# ---------------------------------------------------------------------------
# bottom-up belief estimation

def estimate_beliefs_bottom_up(
    record: EpisodeRecord,
    agent_id: str,
    k: int,
    upto_step: Optional[int] = None,
    seed: int = 0,
) -> list:
    """Particle filter run on observations recomputed from recorded states.

    Returns one BeliefParticleSet per step 0..upto_step (inclusive), each
    consistent with what the agent could have seen by then.
    """
    config = record.config
    table = config.body_table()
    walls = config.layout.wall_array()
    params = config.physics
    states = record.states()
    last = upto_step if upto_step is not None else record.n_steps
    beliefs = init_particles(config, agent_id, k, seed=seed)
    out = []
    prev_action = None
    for t in range(last + 1):
        obs = observe(states[t], agent_id, table, walls, params)
        beliefs = update_particles(beliefs, prev_action, obs, config,
                                   states[t])
        occ = beliefs.occupancy
        out.append(
            BeliefParticleSet(
                owner_id=agent_id,
                particles=[p.copy() for p in beliefs.particles],
                occupancy=replace(
                    OccupancyGrid(staleness_rate=occ.staleness_rate,
                                  step=occ.step),
                    visible_now=occ.visible_now.copy(),
                    last_seen=occ.last_seen.copy(),
                ),
                rng=beliefs.rng,
                observed_ids=set(beliefs.observed_ids),
            )
        )
        if t < record.n_steps:
            prev_action = record.steps[t].actions[agent_id]
    return out


# ---------------------------------------------------------------------------
# hypothesis simulation

def hypothesis_config(record: EpisodeRecord, hyp: Hypothesis
                      ) -> ScenarioConfig:
    """Scenario skeleton from the observed episode, latents from Y."""
    config = record.config
    entities = tuple(
        replace(e, strength=StrengthLevel(hyp.strength_of(e.entity_id)))
        if e.entity_id in config.agent_ids
        else e
        for e in config.entities
    )
    return replace(
        config,
        entities=entities,
        goals={a: GoalSpec.from_key(g) for a, g in hyp.goals},
        social=SocialWeights(alpha=hyp.alpha),
    )


def simulate_hypothesis(
    record: EpisodeRecord,
    hyp: Hypothesis,
    params: InferenceParams,
    from_step: int = 0,
    horizon: Optional[int] = None,
    beliefs: Optional[dict] = None,
) -> np.ndarray:
    """Simulate the generative stack under Y; returns (T+1, N, 2) positions."""
    config = hypothesis_config(record, hyp)
    steps = horizon if horizon is not None else record.n_steps - from_step
    initial = record.states()[from_step] if from_step > 0 else None
    sim = run_episode(
        config,
        budget=params.sim_budget(),
        horizon=steps,
        initial_state=initial,
        beliefs=beliefs,
        stop_on_goals=True,
    )
    return sim.positions()


# ---------------------------------------------------------------------------
# local estimation

def sample_local_interval(errors: np.ndarray, eta: float, delta_t: int,
                          rng: np.random.Generator) -> int:
    """Window start ~ softmax(eta * windowed error mass)."""
    t_max = len(errors) - delta_t
    if t_max < 1:
        raise StructuralError("trajectory shorter than the interval length")
    sums = np.array(
        [errors[t:t + delta_t + 1].sum() for t in range(t_max)]
    )
    logits = eta * sums
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return int(rng.choice(t_max, p=p))


def interval_distribution(errors: np.ndarray, eta: float,
                          delta_t: int) -> np.ndarray:
    t_max = len(errors) - delta_t
    sums = np.array(
        [errors[t:t + delta_t + 1].sum() for t in range(t_max)]
    )
    logits = eta * sums
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


# ---------------------------------------------------------------------------
# the SIMPLE engine

class _ProposalMachine:
    """Window-conditioned factored proposal Q(Y | s^{t1:t2})."""

    def __init__(self, record: EpisodeRecord, params: InferenceParams,
                 strength_estimator=None):
        self.record = record
        self.params = params
        self.config = record.config
        self.table = self.config.body_table()
        self.agents = sorted(self.config.agent_ids)
        self.estimator = strength_estimator or AnalyticStrengthEstimator(
            self.config.physics
        )
        self._goal_cache: dict = {}
        self._strength_cache: dict = {}

    def goal_distribution(self, agent_id: str, t1: int, t2: int):
        key = (agent_id, t1, t2)
        if key not in self._goal_cache:
            goals, probs = propose_goal(
                self.record, agent_id, t1, t2, self.params.gamma
            )
            self._goal_cache[key] = ([g.key() for g in goals], probs)
        return self._goal_cache[key]

    def strength_distribution(self, agent_id: str, t1: int, t2: int
                              ) -> np.ndarray:
        key = (agent_id, t1, t2)
        if key not in self._strength_cache:
            feats = window_cue_features(self.record, agent_id, t1, t2)
            mass = self.config.entity_spec(agent_id).mass
            self._strength_cache[key] = estimate_strength(
                self.estimator, feats, mass
            )
        return self._strength_cache[key]

    def sample(self, t1: int, t2: int, rng: np.random.Generator) -> Hypothesis:
        goals = []
        strengths = []
        for a in self.agents:
            keys, probs = self.goal_distribution(a, t1, t2)
            goals.append((a, keys[int(rng.choice(len(keys), p=probs))]))
            sp = self.strength_distribution(a, t1, t2)
            strengths.append((a, int(rng.choice(4, p=sp)) + 1))
        alpha = propose_social(rng, self.agents[0], self.agents[1])
        return Hypothesis(
            goals=tuple(goals), alpha=alpha, strengths=tuple(strengths)
        )

    def log_density(self, hyp: Hypothesis, t1: int, t2: int) -> float:
        """log Q(Y | s^{t1:t2}) via the factored decomposition."""
        total = social_log_pmf(hyp.alpha)
        for a in self.agents:
            keys, probs = self.goal_distribution(a, t1, t2)
            total += math.log(
                max(float(probs[keys.index(hyp.goal_of(a))]), 1e-300)
            )
            sp = self.strength_distribution(a, t1, t2)
            total += math.log(max(float(sp[hyp.strength_of(a) - 1]), 1e-300))
        return total


class _SimulationCache:
    def __init__(self, record, params):
        self.record = record
        self.params = params
        self.observed = record.positions()
        self.cache: dict = {}
        self.n_simulations = 0

    def evaluate(self, hyp: Hypothesis) -> tuple:
        if hyp not in self.cache:
            traj = simulate_hypothesis(self.record, hyp, self.params)
            ll = log_likelihood(self.observed, traj, self.params.beta)
            self.cache[hyp] = (traj, ll)
            self.n_simulations += 1
        return self.cache[hyp]


def _normalized_weights(loglik: list) -> np.ndarray:
    arr = np.array(loglik)
    arr -= arr.max()
    w = np.exp(arr)
    return w / w.sum()


def _relation_posterior(particles: list, config: ScenarioConfig) -> tuple:
    agents = sorted(config.agent_ids)
    i, j = agents[0], agents[1]
    p_pos = p_neg = p_zero = 0.0
    p_same = p_conflict = 0.0
    for wh in particles:
        h = wh.hypothesis
        w = wh.weight
        a_ij, a_ji = h.alpha_of(i, j), h.alpha_of(j, i)
        if a_ij > 0 or a_ji > 0:
            p_pos += w
        elif a_ij < 0 or a_ji < 0:
            p_neg += w
        else:
            p_zero += w
        gi = GoalSpec.from_key(h.goal_of(i))
        gj = GoalSpec.from_key(h.goal_of(j))
        if h.goal_of(i) == h.goal_of(j) and gi.kind in (
            GoalKind.MOVE_OBJECT, GoalKind.GOTO
        ):
            p_same += w
        elif goals_conflict(gi, gj, i, j):
            p_conflict += w
    friendly = p_pos + p_same * p_zero
    adversarial = p_neg + p_conflict * p_zero
    clipped = False
    vals = [friendly, adversarial]
    for k, v in enumerate(vals):
        if v < 0.0 or v > 1.0:
            vals[k] = min(1.0, max(0.0, v))
            clipped = True
    friendly, adversarial = vals
    neutral = 1.0 - friendly - adversarial
    if neutral < 0.0:
        neutral = 0.0
        clipped = True
    total = friendly + adversarial + neutral
    rel = {
        Relation.FRIENDLY.value: friendly / total,
        Relation.ADVERSARIAL.value: adversarial / total,
        Relation.NEUTRAL.value: neutral / total,
    }
    return rel, clipped


def summarize_posterior(particles: list, config: ScenarioConfig
                        ) -> PosteriorSummary:
    agents = sorted(config.agent_ids)
    goal_post: dict = {a: {} for a in agents}
    strength_post: dict = {a: {} for a in agents}
    for wh in particles:
        for a in agents:
            g = wh.hypothesis.goal_of(a)
            goal_post[a][g] = goal_post[a].get(g, 0.0) + wh.weight
            s = wh.hypothesis.strength_of(a)
            strength_post[a][s] = strength_post[a].get(s, 0.0) + wh.weight
    i, j = agents[0], agents[1]
    alpha_post = {(i, j): {}, (j, i): {}}
    for wh in particles:
        for pair in ((i, j), (j, i)):
            v = wh.hypothesis.alpha_of(*pair)
            alpha_post[pair][v] = alpha_post[pair].get(v, 0.0) + wh.weight
    rel, clipped = _relation_posterior(particles, config)
    top = max(particles, key=lambda wh: wh.weight).hypothesis
    return PosteriorSummary(
        goal_posteriors=goal_post,
        alpha_posteriors=alpha_post,
        relation_posterior=rel,
        strength_posteriors=strength_post,
        top_hypothesis=top,
        clipping_fired=clipped,
    )


def simple_infer(
    record: EpisodeRecord,
    params: InferenceParams = InferenceParams(),
    mode: str = "full",
    strength_estimator=None,
    sim_cache: Optional[_SimulationCache] = None,
) -> InferenceResult:
    """Run SIMPLE on one episode.

    initial: bottom-up proposals from the whole trajectory, simulated and
    weighted. full: L rounds of local-window re-proposal with MH accepts.
    global: like full but windows always span the whole trajectory.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if record.n_steps < params.delta_t:
        raise StructuralError(
            f"record too short for inference: {record.n_steps} steps"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([params.seed, record.config.seed])
    )
    machine = _ProposalMachine(record, params, strength_estimator)
    sims = sim_cache or _SimulationCache(record, params)
    t_end = record.n_steps

    hyps: list[Hypothesis] = []
    loglik: list[float] = []
    for _m in range(params.m_particles):
        h = machine.sample(0, t_end, rng)
        hyps.append(h)
        loglik.append(sims.evaluate(h)[1])

    if mode != "initial":
        for _l in range(params.l_iterations):
            for m in range(params.m_particles):
                if mode == "full":
                    errs = step_errors(sims.observed, sims.cache[hyps[m]][0])
                    t1 = sample_local_interval(
                        errs, params.eta, params.delta_t, rng
                    )
                    t2 = t1 + params.delta_t
                else:
                    t1, t2 = 0, t_end
                prop = machine.sample(t1, t2, rng)
                _, ll_new = sims.evaluate(prop)
                log_ratio = (
                    machine.log_density(prop, t1, t2)
                    + ll_new
                    - machine.log_density(hyps[m], t1, t2)
                    - loglik[m]
                )
                accept_p = min(1.0, math.exp(min(log_ratio, 0.0)))
                if rng.uniform() < accept_p:
                    hyps[m] = prop
                    loglik[m] = ll_new

    weights = _normalized_weights(loglik)
    particles = [
        WeightedHypothesis(
            hypothesis=h,
            trajectory=sims.cache[h][0],
            log_likelihood=ll,
            weight=float(w),
        )
        for h, ll, w in zip(hyps, loglik, weights)
    ]
    posterior = summarize_posterior(particles, record.config)
    return InferenceResult(
        mode=mode,
        particles=particles,
        posterior=posterior,
        n_simulations=sims.n_simulations,
    )


def infer_all_modes(record: EpisodeRecord,
                    params: InferenceParams = InferenceParams(),
                    strength_estimator=None) -> dict:
    """Run initial/global/full sharing one simulation cache."""
    sims = _SimulationCache(record, params)
    return {
        mode: simple_infer(record, params, mode, strength_estimator, sims)
        for mode in MODES
    }


def predict_trajectories(
    record: EpisodeRecord,
    params: InferenceParams = InferenceParams(),
    prefix_steps: int = 20,
    horizon: int = 20,
    mode: str = "full",
) -> np.ndarray:
    """Watch the prefix, infer, roll the best hypothesis forward.

    Returns predicted positions for steps prefix+1..prefix+horizon with
    shape (horizon, N, 2).
    """
    if record.n_steps < prefix_steps:
        raise StructuralError("record shorter than the observation prefix")
    prefix = record.prefix(prefix_steps)
    result = simple_infer(prefix, params, mode=mode)
    best = result.posterior.top_hypothesis

    config = hypothesis_config(record, best)
    beliefs = {
        a: estimate_beliefs_bottom_up(
            prefix, a, params.sim_belief_particles, upto_step=prefix_steps,
            seed=params.seed + k,
        )[-1]
        for k, a in enumerate(sorted(config.agent_ids))
    }
    traj = simulate_hypothesis(
        record, best, params, from_step=prefix_steps, horizon=horizon,
        beliefs=beliefs,
    )
    # positions after each of the `horizon` steps
    out = traj[1:horizon + 1]
    if out.shape[0] < horizon:
        pad = np.repeat(out[-1:], horizon - out.shape[0], axis=0)
        out = np.concatenate([out, pad], axis=0)
    return out
