"""Shared fixtures: the unit-square formation and scenario builders."""

import copy

import numpy as np
import pytest

from bearing_forge.formation_graph import (
    BearingSet,
    SensingGraph,
    build_bearing_laplacian,
)
from bearing_forge.scenario import compile_scenario, parse_config

SQUARE_POSITIONS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SQUARE_EDGES = [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]


@pytest.fixture
def square_graph():
    return SensingGraph(n=4, d=2, n_l=2, edges=SQUARE_EDGES)


@pytest.fixture
def square_bearings(square_graph):
    return BearingSet.from_positions(square_graph, SQUARE_POSITIONS)


@pytest.fixture
def square_laplacian(square_graph, square_bearings):
    return build_bearing_laplacian(square_graph, square_bearings)


def base_scenario_dict():
    """Minimal unit-square scenario; tests mutate copies of this."""
    return {
        "graph": {
            "n_agents": 4,
            "dimension": 2,
            "leaders": [1, 2],
            "edges": [list(e) for e in SQUARE_EDGES],
        },
        "geometry": {
            "desired_positions": {
                "1": [0, 0],
                "2": [1, 0],
                "3": [1, 1],
                "4": [0, 1],
            },
            "leader_velocity": [0.5, 0],
        },
        "disturbances": {},
        "controller": {"mode": "known", "kappa_p": 1.0, "kappa_v": 1.0},
        "integration": {"step": 1e-3, "t_final": 2.0, "record_every": 100},
    }


def make_scenario(**sections):
    """Compile a scenario built from the base dict with section overrides.

    Each keyword replaces or deep-merges (one level) the matching section.
    """
    data = copy.deepcopy(base_scenario_dict())
    for key, value in sections.items():
        if isinstance(value, dict) and key in data:
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return compile_scenario(parse_config(data))


def random_formation(rng, n=None, d=None, n_l=2, complete=True):
    """Generic random formation: positions plus a (complete by default) graph."""
    n = n if n is not None else int(rng.integers(4, 9))
    d = d if d is not None else int(rng.choice([2, 3]))
    while True:
        pos = rng.uniform(-5, 5, size=(n, d))
        diffs = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1) + np.eye(n)
        if dist.min() > 0.3:
            break
    if complete:
        edges = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    else:
        edges = []
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                if rng.random() < 0.6:
                    edges.append((i, j))
        if not edges:
            edges = [(1, 2)]
    graph = SensingGraph(n=n, d=d, n_l=n_l, edges=edges)
    bearings = BearingSet.from_positions(graph, pos)
    return graph, bearings, pos
