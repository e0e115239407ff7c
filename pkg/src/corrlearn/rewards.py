"""Scenario definitions and the linear feature-based reward.

The reward of a trajectory is an inner product between a candidate weight
vector and a feature vector. Four feature families cover the navigation
tasks: terminal goal proximity (one feature per goal region), formation
keeping (stability of inter-agent distances), danger-zone avoidance, and
travel efficiency. Every feature is normalized into [0, 1] using scales
declared by the scenario, so weight vectors are comparable across features.

Feature evaluation accepts arbitrary leading batch dimensions over waypoint
arrays; everything downstream (likelihoods, optimizers, oracles) relies on
that to stay fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .trajectory import InvalidScenarioError, ShapeError, Trajectory

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GoalRegion:
    label: str
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class DangerZone:
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class Hyperparameters:
    """Scenario-level learning knobs shared by every inference model."""

    mu: float = 0.01
    alpha: float = 0.9
    gamma: float = 0.1
    lam: float = 1.0
    beta_noise: float = 1.0
    force_bound: float = 1.0
    deform_order: int = 2


@dataclass(frozen=True)
class HumanPolicyDefaults:
    """Default behaviour of the simulated corrector for this scenario."""

    cooldown: int = 3
    lookahead: int = 2
    deadband: float = 0.005
    patience: float = 0.8
    force_levels: tuple[float, ...] = (0.4, 0.7, 1.0)
    num_directions: int = 16


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    num_agents: int
    horizon: int  # steps T; trajectories carry T+1 waypoints
    dt: float
    starts: np.ndarray  # (num_agents, 2)
    goal_regions: list[GoalRegion]
    danger_zones: list[DangerZone]
    feature_names: list[str]
    candidate_thetas: np.ndarray  # (num_candidates, num_features)
    theta_labels: list[str]
    scales: dict[str, float]
    workspace: np.ndarray  # ((xmin, ymin), (xmax, ymax))
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    human: HumanPolicyDefaults = field(default_factory=HumanPolicyDefaults)
    true_theta_index: int | None = None
    prior_weights: np.ndarray | None = None  # defaults to uniform

    def __post_init__(self) -> None:
        if self.num_agents < 1:
            raise InvalidScenarioError("num_agents must be >= 1")
        if self.horizon < 2:
            raise InvalidScenarioError("horizon must be >= 2 steps")
        thetas = np.asarray(self.candidate_thetas, dtype=float)
        if thetas.ndim != 2 or thetas.shape[0] == 0:
            raise InvalidScenarioError("candidate_thetas must be a nonempty matrix")
        if thetas.shape[1] != len(self.feature_names):
            raise InvalidScenarioError(
                f"candidate weight dimension {thetas.shape[1]} does not match "
                f"{len(self.feature_names)} declared features"
            )
        for g in self.goal_regions:
            if g.radius <= 0:
                raise InvalidScenarioError(f"goal region {g.label!r} must have positive radius")
        for z in self.danger_zones:
            if z.radius <= 0:
                raise InvalidScenarioError("danger zones must have positive radius")
        object.__setattr__(self, "candidate_thetas", thetas)
        object.__setattr__(self, "starts", np.asarray(self.starts, dtype=float).reshape(self.num_agents, 2))

    @property
    def num_candidates(self) -> int:
        return self.candidate_thetas.shape[0]

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def prior_log_weights(self) -> np.ndarray:
        if self.prior_weights is None:
            return np.full(self.num_candidates, -np.log(self.num_candidates))
        w = np.asarray(self.prior_weights, dtype=float)
        return np.log(w / w.sum())

    def goal_by_label(self, label: str) -> GoalRegion:
        for g in self.goal_regions:
            if g.label == label:
                return g
        raise InvalidScenarioError(f"no goal region labelled {label!r}")

    def content_dict(self) -> dict:
        """Canonical JSON-ready form, used both for files and config hashing."""
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "num_agents": self.num_agents,
            "horizon": self.horizon,
            "dt": self.dt,
            "starts": self.starts.tolist(),
            "goal_regions": [
                {"label": g.label, "center": g.center.tolist(), "radius": g.radius}
                for g in self.goal_regions
            ],
            "danger_zones": [
                {"center": z.center.tolist(), "radius": z.radius} for z in self.danger_zones
            ],
            "features": list(self.feature_names),
            "candidate_thetas": self.candidate_thetas.tolist(),
            "theta_labels": list(self.theta_labels),
            "scales": dict(self.scales),
            "workspace": self.workspace.tolist(),
            "hyperparameters": {
                "mu": self.hyperparameters.mu,
                "alpha": self.hyperparameters.alpha,
                "gamma": self.hyperparameters.gamma,
                "lambda": self.hyperparameters.lam,
                "beta_noise": self.hyperparameters.beta_noise,
                "force_bound": self.hyperparameters.force_bound,
                "deform_order": self.hyperparameters.deform_order,
            },
            "human": {
                "cooldown": self.human.cooldown,
                "lookahead": self.human.lookahead,
                "deadband": self.human.deadband,
                "patience": self.human.patience,
                "force_levels": list(self.human.force_levels),
                "num_directions": self.human.num_directions,
            },
            "true_theta_index": self.true_theta_index,
            "prior": None if self.prior_weights is None else list(map(float, self.prior_weights)),
        }


def scenario_from_dict(obj: dict) -> Scenario:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidScenarioError(f"unsupported scenario schema_version: {version!r}")
    hp = obj.get("hyperparameters", {})
    human = obj.get("human", {})
    return Scenario(
        scenario_id=obj["scenario_id"],
        num_agents=int(obj["num_agents"]),
        horizon=int(obj["horizon"]),
        dt=float(obj["dt"]),
        starts=np.asarray(obj["starts"], dtype=float),
        goal_regions=[
            GoalRegion(label=g["label"], center=np.asarray(g["center"], float), radius=float(g["radius"]))
            for g in obj["goal_regions"]
        ],
        danger_zones=[
            DangerZone(center=np.asarray(z["center"], float), radius=float(z["radius"]))
            for z in obj.get("danger_zones", [])
        ],
        feature_names=list(obj["features"]),
        candidate_thetas=np.asarray(obj["candidate_thetas"], dtype=float),
        theta_labels=list(obj.get("theta_labels", [f"candidate {i}" for i in range(len(obj["candidate_thetas"]))])),
        scales={k: float(v) for k, v in obj["scales"].items()},
        workspace=np.asarray(obj["workspace"], dtype=float),
        hyperparameters=Hyperparameters(
            mu=float(hp.get("mu", 0.01)),
            alpha=float(hp.get("alpha", 0.9)),
            gamma=float(hp.get("gamma", 0.1)),
            lam=float(hp.get("lambda", 1.0)),
            beta_noise=float(hp.get("beta_noise", 1.0)),
            force_bound=float(hp.get("force_bound", 1.0)),
            deform_order=int(hp.get("deform_order", 2)),
        ),
        human=HumanPolicyDefaults(
            cooldown=int(human.get("cooldown", 3)),
            lookahead=int(human.get("lookahead", 2)),
            deadband=float(human.get("deadband", 0.005)),
            patience=float(human.get("patience", 0.8)),
            force_levels=tuple(float(v) for v in human.get("force_levels", (0.4, 0.7, 1.0))),
            num_directions=int(human.get("num_directions", 16)),
        ),
        true_theta_index=obj.get("true_theta_index"),
        prior_weights=None if obj.get("prior") is None else np.asarray(obj["prior"], float),
    )


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(scenario.content_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _as_agent_points(points: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Validate and reshape (..., T+1, 2A) waypoints to (..., T+1, A, 2)."""
    pts = np.asarray(points, dtype=float)
    expected = 2 * scenario.num_agents
    if pts.shape[-1] != expected:
        raise ShapeError(
            f"waypoint dimension {pts.shape[-1]} does not match scenario's "
            f"{scenario.num_agents} agents (expected {expected})"
        )
    if pts.shape[-2] != scenario.horizon + 1:
        raise ShapeError(
            f"trajectory has {pts.shape[-2]} waypoints, scenario horizon needs "
            f"{scenario.horizon + 1}"
        )
    return pts.reshape(*pts.shape[:-1], scenario.num_agents, 2)


def _goal_proximity(agent_pts: np.ndarray, region: GoalRegion, scale: float) -> np.ndarray:
    terminal_centroid = agent_pts[..., -1, :, :].mean(axis=-2)
    d = np.linalg.norm(terminal_centroid - region.center, axis=-1)
    return 1.0 - np.clip(d / scale, 0.0, 1.0)


def _formation(agent_pts: np.ndarray, scenario: Scenario, scale: float) -> np.ndarray:
    A = scenario.num_agents
    if A < 2:
        return np.ones(agent_pts.shape[:-3])
    pair_vars = []
    for a in range(A):
        for b in range(a + 1, A):
            d = np.linalg.norm(agent_pts[..., :, a, :] - agent_pts[..., :, b, :], axis=-1)
            pair_vars.append(d.var(axis=-1))
    var = np.mean(pair_vars, axis=0)
    return 1.0 - np.clip(var / scale, 0.0, 1.0)


def danger_penetration(agent_pts: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Per-sample penetration into danger zones, in [0, 1].

    Shape (..., T+1, A): per zone the penalty is a flat-topped dome,
    1 - (d/r)^2, so it is smooth inside the zone, 1 at the centre and 0 at
    the boundary. Skimming the rim barely registers; a path must leave the
    zone entirely before the penalty vanishes.
    """
    q = np.zeros(agent_pts.shape[:-1])
    for z in scenario.danger_zones:
        d_sq = np.sum(np.square(agent_pts - z.center), axis=-1)
        q = q + np.clip(1.0 - d_sq / z.radius**2, 0.0, None)
    return np.minimum(q, 1.0)


def _danger(agent_pts: np.ndarray, scenario: Scenario) -> np.ndarray:
    if not scenario.danger_zones:
        return np.ones(agent_pts.shape[:-3])
    q = danger_penetration(agent_pts, scenario)
    # trapezoidal time average: endpoint samples carry half weight
    w = np.ones(q.shape[-2])
    w[0] = 0.5
    w[-1] = 0.5
    avg = np.einsum("...ta,t->...a", q, w) / scenario.horizon
    scale = scenario.scales.get("danger_exposure", 1.0)
    return 1.0 - np.clip(avg.mean(axis=-1) / scale, 0.0, 1.0)


def _efficiency(agent_pts: np.ndarray, scale: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(agent_pts, axis=-3), axis=-1)  # (..., T, A)
    length = seg.sum(axis=-2).mean(axis=-1)
    return 1.0 - np.clip(length / scale, 0.0, 1.0)


def features(points: np.ndarray | Trajectory, scenario: Scenario) -> np.ndarray:
    """Feature vector(s) for one trajectory or a batch of waypoint arrays.

    Accepts a Trajectory or an array shaped (..., T+1, 2 * num_agents);
    returns (..., num_features) ordered as scenario.feature_names.
    """
    if isinstance(points, Trajectory):
        points = points.points
    agent_pts = _as_agent_points(points, scenario)
    values = []
    for name in scenario.feature_names:
        if name.startswith("goal:"):
            region = scenario.goal_by_label(name.split(":", 1)[1])
            values.append(_goal_proximity(agent_pts, region, scenario.scales["goal_distance"]))
        elif name == "formation":
            values.append(_formation(agent_pts, scenario, scenario.scales["formation_variance"]))
        elif name == "danger":
            values.append(_danger(agent_pts, scenario))
        elif name == "efficiency":
            values.append(_efficiency(agent_pts, scenario.scales["path_length"]))
        else:
            raise InvalidScenarioError(f"unknown feature identifier {name!r}")
    return np.stack(values, axis=-1)


def reward(points: np.ndarray | Trajectory, theta: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Inner product of the weight vector with the trajectory features.

    Scalar for a single trajectory, an array for batched input.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (scenario.num_features,):
        raise ShapeError(
            f"weight vector shape {theta.shape} does not match {scenario.num_features} features"
        )
    phi = features(points, scenario)
    out = phi @ theta
    return float(out) if out.ndim == 0 else out


def reward_all_candidates(points: np.ndarray | Trajectory, scenario: Scenario) -> np.ndarray:
    """Rewards of one trajectory (or batch) under every candidate weight vector."""
    phi = features(points, scenario)
    return phi @ scenario.candidate_thetas.T
