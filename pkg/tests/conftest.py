import math

import numpy as np
import pytest

from socialsim.episodes import PlannerBudget
from socialsim.physics import PhysicsParams, StrengthLevel, make_world
from socialsim.pomcp import PUCTParams
from socialsim.scene import (
    EntityKind,
    EntitySpec,
    GoalKind,
    GoalSpec,
    Landmark,
    Layout,
    ScenarioConfig,
    SocialWeights,
    build_body_table,
)


def corner_landmarks(size=4.0):
    w = 20.0
    return (
        Landmark("L0", "red", (0.0, 0.0, size, size)),
        Landmark("L1", "yellow", (w - size, 0.0, w, size)),
        Landmark("L2", "blue", (w - size, w - size, w, w)),
        Landmark("L3", "purple", (0.0, w - size, size, w)),
    )


@pytest.fixture
def open_layout():
    return Layout(layout_id="open", landmarks=corner_landmarks())


@pytest.fixture
def walled_layout():
    return Layout(
        layout_id="walled",
        walls=((10.0, 0.0, 10.0, 14.0),),
        landmarks=corner_landmarks(),
    )


def agents_and_object(sizes=(2, 2), strengths=(3, 3), obj_size=2):
    ents = [
        EntitySpec("a0", EntityKind.AGENT, sizes[0], "green",
                   StrengthLevel(strengths[0])),
        EntitySpec("a1", EntityKind.AGENT, sizes[1], "pink",
                   StrengthLevel(strengths[1])),
    ]
    if obj_size:
        ents.append(EntitySpec("o0", EntityKind.OBJECT, obj_size, "orange"))
    return tuple(ents)


def simple_config(layout, positions, goals, alpha=(0, 0), seed=0,
                  max_steps=40, entities=None, angles=None,
                  params=None) -> ScenarioConfig:
    ents = entities or agents_and_object()
    init = make_world(
        [e.entity_id for e in ents], positions,
        layout_ref=layout.layout_id, angles=angles,
    )
    return ScenarioConfig(
        layout=layout,
        entities=ents,
        goals=goals,
        social=SocialWeights.pair("a0", "a1", alpha[0], alpha[1]),
        initial=init,
        seed=seed,
        max_steps=max_steps,
        physics=params or PhysicsParams(),
    )


@pytest.fixture
def tiny_budget():
    return PlannerBudget(
        belief_particles=6, puct=PUCTParams(num_simulations=40)
    )


@pytest.fixture
def small_budget():
    return PlannerBudget(
        belief_particles=10, puct=PUCTParams(num_simulations=100)
    )
