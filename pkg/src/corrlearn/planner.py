"""Waypoint-space trajectory optimization against a candidate reward.

Plans are full-horizon waypoint arrays. A plan is seeded with a rigid
straight-line move of the whole team toward the best-scoring goal region,
then refined with L-BFGS on all remaining waypoints (terminal included; only
the already-executed prefix is frozen). Gradients of every feature are
analytic, so replanning is cheap enough to run after every correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .evidence import Belief
from .rewards import Scenario, reward
from .trajectory import ShapeError, Trajectory


@dataclass(frozen=True)
class PlanResult:
    trajectory: Trajectory
    converged: bool


def _clip_grad_mask(value: float) -> float:
    """1.0 while a clip(x, 0, 1) stays strictly interior, else 0."""
    return 1.0 if 0.0 < value < 1.0 else 0.0


def reward_gradient(points: np.ndarray, theta: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Gradient of the reward w.r.t. every waypoint coordinate.

    `points` has shape (T+1, 2A); the result matches. Kinks introduced by the
    [0, 1] feature clamps get zero gradient on the clamped side.
    """
    T1 = points.shape[0]
    A = scenario.num_agents
    pts = points.reshape(T1, A, 2)
    grad = np.zeros_like(pts)
    theta = np.asarray(theta, dtype=float)

    for f_idx, name in enumerate(scenario.feature_names):
        w = theta[f_idx]
        if w == 0.0:
            continue
        if name.startswith("goal:"):
            region = scenario.goal_by_label(name.split(":", 1)[1])
            scale = scenario.scales["goal_distance"]
            centroid = pts[-1].mean(axis=0)
            diff = centroid - region.center
            d = np.linalg.norm(diff)
            if d > 1e-12 and _clip_grad_mask(d / scale):
                grad[-1] += w * (-(1.0 / scale) * (1.0 / A) * diff / d)
        elif name == "formation":
            if A < 2:
                continue
            scale = scenario.scales["formation_variance"]
            pairs = [(a, b) for a in range(A) for b in range(a + 1, A)]
            dists = np.stack(
                [np.linalg.norm(pts[:, a] - pts[:, b], axis=-1) for a, b in pairs]
            )  # (P, T+1)
            var = dists.var(axis=1).mean()
            if _clip_grad_mask(var / scale):
                coef = -w / (scale * len(pairs))
                for p_idx, (a, b) in enumerate(pairs):
                    d = dists[p_idx]
                    dvar_dd = (2.0 / T1) * (d - d.mean())  # (T+1,)
                    safe = np.maximum(d, 1e-12)
                    unit = (pts[:, a] - pts[:, b]) / safe[:, None]
                    grad[:, a] += coef * dvar_dd[:, None] * unit
                    grad[:, b] -= coef * dvar_dd[:, None] * unit
        elif name == "danger":
            if not scenario.danger_zones:
                continue
            T = scenario.horizon
            scale = scenario.scales.get("danger_exposure", 1.0)
            tw = np.ones(T1)
            tw[0] = 0.5
            tw[-1] = 0.5
            q = np.zeros((T1, A))
            dq = np.zeros_like(pts)
            for z in scenario.danger_zones:
                diff = pts - z.center
                d_sq = np.sum(np.square(diff), axis=-1)
                inside = d_sq < z.radius**2
                q += np.clip(1.0 - d_sq / z.radius**2, 0.0, None)
                dq += np.where(inside[..., None], (-2.0 / z.radius**2) * diff, 0.0)
            saturated = q >= 1.0  # per-sample cap: no gradient past full penetration
            avg = (tw @ np.minimum(q, 1.0)).mean() / (T * scale)
            if _clip_grad_mask(avg):
                coef = -w / (T * A * scale)
                grad += coef * tw[:, None, None] * np.where(saturated[..., None], 0.0, dq)
        elif name == "efficiency":
            scale = scenario.scales["path_length"]
            seg = np.diff(pts, axis=0)  # (T, A, 2)
            seg_len = np.linalg.norm(seg, axis=-1)
            length = seg_len.sum(axis=0).mean()
            if _clip_grad_mask(length / scale):
                unit = seg / np.maximum(seg_len, 1e-12)[..., None]
                coef = -w / (scale * A)
                grad[1:] += coef * unit
                grad[:-1] -= coef * unit
    return grad.reshape(T1, 2 * A)


def _straight_line_seed(
    history: np.ndarray, scenario: Scenario, theta: np.ndarray
) -> np.ndarray:
    """Full-horizon seed: executed prefix, then a rigid move to the best region.

    The team translates rigidly (constant offsets from the centroid), so the
    seed never sacrifices formation; the refiner bends it from there.
    """
    T1 = scenario.horizon + 1
    A = scenario.num_agents
    clock = history.shape[0] - 1
    current = history[-1].reshape(A, 2)
    centroid = current.mean(axis=0)
    offsets = current - centroid
    remaining = T1 - 1 - clock

    best_pts = None
    best_r = -np.inf
    for region in scenario.goal_regions:
        pts = np.empty((T1, A, 2))
        pts[: clock + 1] = history.reshape(clock + 1, A, 2)
        frac = np.linspace(0.0, 1.0, remaining + 1)[1:, None]
        path_centroid = centroid + frac * (region.center - centroid)
        pts[clock + 1 :] = path_centroid[:, None, :] + offsets
        r = reward(pts.reshape(T1, 2 * A), theta, scenario)
        if r > best_r:
            best_r = r
            best_pts = pts
    assert best_pts is not None
    return best_pts.reshape(T1, 2 * A)


def plan(
    theta_or_belief: np.ndarray | Belief,
    scenario: Scenario,
    history: np.ndarray | None = None,
    planner_mode: str = "argmax",
    max_iterations: int = 200,
) -> PlanResult:
    """Optimize a full-horizon trajectory for the given weights or belief.

    `history` is the already-executed waypoint prefix, shape (clock+1, 2A);
    by default planning starts fresh from the scenario start positions. With
    a Belief, `planner_mode` picks the weight vector: the most probable
    candidate ("argmax", the default) or the belief-weighted mixture
    ("expected").
    """
    if isinstance(theta_or_belief, Belief):
        if planner_mode == "expected":
            theta = theta_or_belief.probabilities() @ scenario.candidate_thetas
        else:
            theta = scenario.candidate_thetas[theta_or_belief.argmax()]
    else:
        theta = np.asarray(theta_or_belief, dtype=float)

    if history is None:
        history = scenario.starts.reshape(1, -1)
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or history.shape[1] != 2 * scenario.num_agents:
        raise ShapeError(f"history must be (clock+1, {2 * scenario.num_agents}), got {history.shape}")
    clock = history.shape[0] - 1
    if clock >= scenario.horizon:
        return PlanResult(Trajectory(points=history, dt=scenario.dt), converged=True)

    seed = _straight_line_seed(history, scenario, theta)
    T1 = seed.shape[0]
    n = seed.shape[1]
    free = slice(clock + 1, T1)

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        pts = seed.copy()
        pts[free] = x.reshape(-1, n)
        value = reward(pts, theta, scenario)
        grad = reward_gradient(pts, theta, scenario)
        return -value, -grad[free].reshape(-1)

    result = minimize(
        objective,
        seed[free].reshape(-1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iterations},
    )
    pts = seed.copy()
    pts[free] = result.x.reshape(-1, n)
    # keep whichever of seed/refined actually scores better; L-BFGS cannot
    # worsen a seed it accepted, but guard against pathological line searches
    if reward(pts, theta, scenario) < reward(seed, theta, scenario):
        pts = seed
    # status 2 is a stalled line search, expected when the optimum sits on a
    # feature kink (e.g. terminal exactly at a goal centre); only exhausting
    # the iteration budget (status 1) is worth a warning
    converged = result.status != 1
    return PlanResult(Trajectory(points=pts, dt=scenario.dt), converged=converged)


def straight_line_reference(scenario: Scenario, region_label: str) -> Trajectory:
    """Uniform straight-line trajectory of the whole team to a named region."""
    region = scenario.goal_by_label(region_label)
    T1 = scenario.horizon + 1
    A = scenario.num_agents
    centroid = scenario.starts.mean(axis=0)
    offsets = scenario.starts - centroid
    frac = np.linspace(0.0, 1.0, T1)[:, None]
    path_centroid = centroid + frac * (region.center - centroid)
    pts = path_centroid[:, None, :] + offsets
    return Trajectory(points=pts.reshape(T1, 2 * A), dt=scenario.dt)


__all__ = ["PlanResult", "plan", "reward_gradient", "straight_line_reference"]
