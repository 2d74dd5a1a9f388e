"""Bearing-based leader-follower formation control with internal-model
disturbance rejection for double-integrator agents."""

from importlib import resources

from . import (
    control_laws,
    disturbance,
    errors,
    formation_graph,
    internal_model,
    scenario,
    sim_engine,
)

__all__ = [
    "control_laws",
    "disturbance",
    "errors",
    "formation_graph",
    "internal_model",
    "scenario",
    "sim_engine",
    "bundled_scenario",
]

__version__ = "0.1.0"


def bundled_scenario(name):
    """Filesystem path of a scenario shipped with the package
    (e.g. ``square_known`` or ``square_known.json``)."""
    if not name.endswith(".json"):
        name = name + ".json"
    path = resources.files(__name__).joinpath("data", name)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return str(path)
