import json
from pathlib import Path

import numpy as np
import pytest

from corrlearn.evidence import EvidenceConfig
from corrlearn.optimizer import DStarLibrary, OptimizerConfig, build_library
from corrlearn.planner import plan
from corrlearn.rewards import Scenario, load_scenario, scenario_from_dict
from corrlearn.trajectory import Trajectory

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "corrlearn" / "data"
# libraries are expensive; cache them on disk, keyed by config hash via
# build_library's resume logic
CACHE_DIR = Path(__file__).resolve().parent / ".cache"


def micro_scenario_dict() -> dict:
    return {
        "schema_version": 1,
        "scenario_id": "micro",
        "num_agents": 1,
        "horizon": 6,
        "dt": 0.5,
        "starts": [[0.0, 0.0]],
        "goal_regions": [{"label": "goal", "center": [3.0, 0.0], "radius": 0.5}],
        "danger_zones": [{"center": [1.5, -0.2], "radius": 0.8}],
        "features": ["goal:goal", "danger", "efficiency"],
        "scales": {"goal_distance": 4.0, "path_length": 8.0, "formation_variance": 1.0, "danger_exposure": 0.6},
        "candidate_thetas": [
            [0.45, 0.05, 0.5],
            [0.2, 0.6, 0.2],
            [0.3, 0.2, 0.5],
        ],
        "theta_labels": ["direct", "cautious", "balanced"],
        "true_theta_index": 1,
        "workspace": [[-0.5, -2.0], [3.5, 2.0]],
        "hyperparameters": {
            "mu": 0.3,
            "alpha": 0.9,
            "gamma": 0.05,
            "lambda": 1.0,
            "beta_noise": 8.0,
            "force_bound": 1.0,
            "deform_order": 2,
        },
        "human": {
            "cooldown": 2,
            "lookahead": 1,
            "deadband": 0.003,
            "patience": 0.85,
            "force_levels": [0.3, 0.6, 1.0],
            "num_directions": 12,
        },
        "prior": None,
    }


@pytest.fixture(scope="session")
def micro_scenario() -> Scenario:
    return scenario_from_dict(micro_scenario_dict())


@pytest.fixture(scope="session")
def micro_initial(micro_scenario) -> Trajectory:
    # straight line start -> goal centre; deliberately clips the zone
    pts = np.linspace([0.0, 0.0], [3.0, 0.0], micro_scenario.horizon + 1)
    return Trajectory(points=pts, dt=micro_scenario.dt)


@pytest.fixture(scope="session")
def nav_single() -> Scenario:
    return load_scenario(DATA_DIR / "nav_single.json")


@pytest.fixture(scope="session")
def nav_team() -> Scenario:
    return load_scenario(DATA_DIR / "nav_team.json")


def benchmark_opt_config(scenario: Scenario) -> OptimizerConfig:
    return OptimizerConfig(
        t_max=48,
        inner_iterations=150,
        step_size=0.05,
        force_bound=scenario.hyperparameters.force_bound,
        seed=0,
    )


def build_cached_library(scenario: Scenario, k_max: int = 6) -> DStarLibrary:
    CACHE_DIR.mkdir(exist_ok=True)
    out = CACHE_DIR / f"{scenario.scenario_id}.dstar.json"
    initial = plan(scenario.candidate_thetas[0], scenario).trajectory
    return build_library(
        scenario,
        k_max,
        benchmark_opt_config(scenario),
        EvidenceConfig.from_scenario(scenario),
        initial,
        out_path=out,
    )


@pytest.fixture(scope="session")
def nav_single_library(nav_single) -> DStarLibrary:
    return build_cached_library(nav_single)


@pytest.fixture(scope="session")
def nav_team_library(nav_team) -> DStarLibrary:
    return build_cached_library(nav_team)


@pytest.fixture(scope="session")
def tiny_team() -> Scenario:
    """Small 2-agent scenario for fast unit-level checks."""
    obj = json.loads(json.dumps(micro_scenario_dict()))
    obj.update(
        {
            "scenario_id": "tiny_team",
            "num_agents": 2,
            "horizon": 8,
            "starts": [[0.0, 0.5], [0.0, -0.5]],
            "features": ["goal:goal", "formation", "danger", "efficiency"],
            "candidate_thetas": [
                [0.4, 0.2, 0.0, 0.4],
                [0.2, 0.3, 0.4, 0.1],
                [0.3, 0.0, 0.4, 0.3],
            ],
            "theta_labels": ["a", "b", "c"],
            "scales": {
                "goal_distance": 4.0,
                "path_length": 8.0,
                "formation_variance": 0.2,
                "danger_exposure": 0.6,
            },
        }
    )
    obj["danger_zones"] = [{"center": [1.5, -0.9], "radius": 0.8}]
    return scenario_from_dict(obj)
