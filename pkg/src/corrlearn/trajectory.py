"""Multi-agent trajectories and the correction-to-deformation operator.

A trajectory is a fixed-horizon sequence of joint planar states. A physical
correction (a force applied to one agent at one interior timestep) is mapped
into a smooth local modification of that agent's path: the force is spread
over neighbouring waypoints by a precomputed smoothing profile, leaving the
first and last waypoints untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Mismatched trajectory/kernel/correction dimensions."""


class InvalidScenarioError(ValueError):
    """Structurally invalid scenario or horizon."""


class InvalidHyperparameterError(ValueError):
    """Hyperparameter outside its admissible range."""


@dataclass(frozen=True)
class Trajectory:
    """Waypoints of the joint multi-agent state over a fixed horizon.

    `points` has shape (T+1, 2 * num_agents): row t holds the planar
    positions of every agent at step t, flattened as [x0, y0, x1, y1, ...].
    """

    points: np.ndarray
    dt: float = 0.1

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ShapeError(f"expected (T+1, n) waypoint array with T+1 >= 2, got {pts.shape}")
        if pts.shape[1] % 2 != 0 or pts.shape[1] == 0:
            raise ShapeError(f"state dimension must be 2 * num_agents, got {pts.shape[1]}")
        if not np.all(np.isfinite(pts)):
            raise ShapeError("trajectory contains non-finite coordinates")
        if self.dt <= 0:
            raise InvalidHyperparameterError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "points", pts)
        self.points.setflags(write=False)

    @property
    def horizon(self) -> int:
        """Number of steps T (waypoint count minus one)."""
        return self.points.shape[0] - 1

    @property
    def num_agents(self) -> int:
        return self.points.shape[1] // 2

    def agent_positions(self) -> np.ndarray:
        """View of the waypoints reshaped to (T+1, num_agents, 2)."""
        return self.points.reshape(self.points.shape[0], -1, 2)

    def to_json(self) -> dict:
        """Wire form: per-step list of [x, y] pairs, one pair per agent."""
        return {
            "dt": self.dt,
            "waypoints": [[[float(x), float(y)] for x, y in step.reshape(-1, 2)] for step in self.points],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Trajectory":
        steps = [np.asarray(step, dtype=float).reshape(-1) for step in obj["waypoints"]]
        return cls(points=np.stack(steps), dt=float(obj["dt"]))


@dataclass(frozen=True)
class Correction:
    """A single human intervention: a planar force on one agent at one step.

    `timestep` must be strictly interior to the horizon; the endpoints of a
    trajectory are never moved by a correction.
    """

    timestep: int
    agent: int
    force: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.force, dtype=float).reshape(-1)
        if f.shape != (2,):
            raise ShapeError(f"force must be a 2-vector, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ShapeError("force must be finite")
        if self.timestep < 1:
            raise ShapeError(f"correction timestep must be >= 1, got {self.timestep}")
        if self.agent < 0:
            raise ShapeError(f"agent index must be >= 0, got {self.agent}")
        object.__setattr__(self, "force", f)
        self.force.setflags(write=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.force))

    def to_json(self) -> dict:
        return {"timestep": self.timestep, "agent": self.agent, "force": [float(v) for v in self.force]}

    @classmethod
    def from_json(cls, obj: dict) -> "Correction":
        return cls(timestep=int(obj["timestep"]), agent=int(obj["agent"]), force=np.asarray(obj["force"], float))


CorrectionSequence = list[Correction]


@dataclass(frozen=True)
class DeformationKernel:
    """Smoothing profile that spreads a point force along a trajectory.

    The profile is the canonical (centre) column of the inverse of the
    squared finite-difference operator on the interior waypoints, embedded
    with zero endpoints. Per correction it is shifted so its peak sits at the
    correction timestep; shifted mass falling outside the horizon is dropped
    and the endpoints stay exactly zero. `mu` scales the whole profile.
    """

    horizon: int  # number of steps T; trajectories carry T+1 waypoints
    mu: float
    order: int
    base_profile: np.ndarray = field(repr=False)  # length T+1, peak at (T+1)//2
    peak_index: int

    def profile(self, timestep: int) -> np.ndarray:
        """Length-(T+1) displacement weights for a unit force at `timestep`."""
        if not 1 <= timestep <= self.horizon - 1:
            raise ShapeError(
                f"correction timestep must lie in [1, {self.horizon - 1}], got {timestep}"
            )
        shift = timestep - self.peak_index
        out = np.zeros_like(self.base_profile)
        src_lo = max(0, -shift)
        src_hi = min(len(out), len(out) - shift)
        out[src_lo + shift : src_hi + shift] = self.base_profile[src_lo:src_hi]
        out[0] = 0.0
        out[-1] = 0.0
        return out


def _interior_smoothing_inverse(num_waypoints: int, order: int) -> np.ndarray:
    """Inverse of the squared finite-difference operator on interior points.

    The difference operator is applied over the whole horizon with the
    endpoints clamped to zero (ghost values outside the horizon are zero),
    so boundary rows are retained and the quadratic form is positive
    definite on the interior block.
    """
    T = num_waypoints - 1
    m = T - 1
    rows = []
    if order == 1:
        # one row per edge, including the two edges touching the fixed ends
        for i in range(T):
            r = np.zeros(m)
            if 1 <= i + 1 <= T - 1:
                r[i] += 1.0
            if 1 <= i <= T - 1:
                r[i - 1] -= 1.0
            rows.append(r)
    else:
        # one centred second difference per waypoint, zero ghost points
        for i in range(T + 1):
            r = np.zeros(m)
            for j, c in ((i - 1, 1.0), (i, -2.0), (i + 1, 1.0)):
                if 1 <= j <= T - 1:
                    r[j - 1] += c
            rows.append(r)
    diff = np.array(rows)
    return np.linalg.inv(diff.T @ diff)


def make_kernel(num_waypoints: int, mu: float, order: int = 2) -> DeformationKernel:
    """Build the deformation kernel for trajectories with `num_waypoints` points.

    Raises InvalidScenarioError for horizons too short to have an interior
    waypoint and InvalidHyperparameterError for non-positive `mu` or an
    unsupported smoothness order.
    """
    if num_waypoints < 3:
        raise InvalidScenarioError(
            f"deformation needs at least 3 waypoints, got {num_waypoints}"
        )
    if mu <= 0:
        raise InvalidHyperparameterError(f"mu must be positive, got {mu}")
    if order not in (1, 2):
        raise InvalidHyperparameterError(f"order must be 1 or 2, got {order}")

    T = num_waypoints - 1
    inv = _interior_smoothing_inverse(num_waypoints, order)
    peak = (T + 1) // 2
    base = np.zeros(num_waypoints)
    base[1:T] = mu * inv[:, peak - 1]
    base.setflags(write=False)
    return DeformationKernel(horizon=T, mu=mu, order=order, base_profile=base, peak_index=peak)


def deform(traj: Trajectory, correction: Correction, kernel: DeformationKernel) -> Trajectory:
    """Apply one correction to a trajectory, returning the modified copy.

    Only the corrected agent's coordinates change; endpoints are preserved
    exactly.
    """
    if kernel.horizon != traj.horizon:
        raise ShapeError(
            f"kernel horizon {kernel.horizon} does not match trajectory horizon {traj.horizon}"
        )
    if not 1 <= correction.timestep <= traj.horizon - 1:
        raise ShapeError(
            f"correction timestep {correction.timestep} outside interior [1, {traj.horizon - 1}]"
        )
    if correction.agent >= traj.num_agents:
        raise ShapeError(
            f"agent {correction.agent} out of range for {traj.num_agents}-agent trajectory"
        )
    profile = kernel.profile(correction.timestep)
    pts = traj.points.copy()
    cols = slice(2 * correction.agent, 2 * correction.agent + 2)
    pts[:, cols] = pts[:, cols] + np.outer(profile, correction.force)
    return Trajectory(points=pts, dt=traj.dt)


def propagate_sequence(
    initial: Trajectory, corrections: CorrectionSequence, kernel: DeformationKernel
) -> list[Trajectory]:
    """Chain corrections: each deforms the previous result, starting at `initial`.

    Returns one trajectory per correction (empty input gives an empty list).
    """
    out: list[Trajectory] = []
    current = initial
    for c in corrections:
        current = deform(current, c, kernel)
        out.append(current)
    return out
