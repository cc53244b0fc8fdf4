"""Sliding-mode optimal load-frequency control simulator."""

import json

from ._core import (
    ConfigError,
    NumericError,
    Scenario,
    Trajectory,
    __version__,
    build_incidence,
    load_scenario,
    optimal_dispatch,
    parse_scenario,
    run_batch,
    run_scenario,
)


def verify(scenario, trajectory=None, tolerances=""):
    """Run (unless a trajectory is given) and return the verification report as a dict."""
    from ._core import verify_json

    if trajectory is None:
        trajectory = run_scenario(scenario)
    return json.loads(verify_json(scenario, trajectory, tolerances))


__all__ = [
    "ConfigError",
    "NumericError",
    "Scenario",
    "Trajectory",
    "__version__",
    "build_incidence",
    "load_scenario",
    "optimal_dispatch",
    "parse_scenario",
    "run_batch",
    "run_scenario",
    "verify",
]
