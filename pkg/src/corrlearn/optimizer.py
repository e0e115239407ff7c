"""Search for the maximum accumulated evidence achievable with K corrections.

The problem is mixed-integer: discrete choices of when (and, with several
agents, whom) to correct, and continuous force vectors for each correction.
Discrete assignments are sampled without replacement; for each assignment
the forces are optimized by projected gradient ascent with numerical
gradients. Results are persisted per (scenario, candidate, K) so the online
learner can normalize sequence likelihoods without optimizing in the loop.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .evidence import EvidenceConfig, accumulated_evidence, decay_weights
from .rewards import Scenario, reward
from .trajectory import (
    Correction,
    DeformationKernel,
    Trajectory,
    make_kernel,
    propagate_sequence,
)


class InfeasibleKError(ValueError):
    """More corrections requested than distinct (time, agent) slots exist."""


class LibraryMissError(KeyError):
    """No stored maximum-evidence entry for the requested key."""


class LibraryWriteError(OSError):
    """Persisting the library failed."""


@dataclass(frozen=True)
class OptimizerConfig:
    t_max: int = 200
    inner_iterations: int = 300
    step_size: float = 0.05
    force_bound: float = 1.0
    probe_directions: int = 8  # coarse restart probe; 0 disables restarts
    grid: tuple[float, float, int] | None = None  # (lo, hi, points) per force axis
    seed: int = 0

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.force_bound <= 0:
            raise ValueError(f"force_bound must be positive, got {self.force_bound}")

    def content_dict(self) -> dict:
        return {
            "t_max": self.t_max,
            "inner_iterations": self.inner_iterations,
            "step_size": self.step_size,
            "force_bound": self.force_bound,
            "probe_directions": self.probe_directions,
            "grid": None if self.grid is None else list(self.grid),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LibraryEntry:
    dstar: float
    times: list[int]
    agents: list[int]
    forces: np.ndarray  # (K, 2)
    config_hash: str

    def to_json(self) -> dict:
        return {
            "dstar": self.dstar,
            "times": list(self.times),
            "agents": list(self.agents),
            "forces": [[float(x), float(y)] for x, y in self.forces],
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LibraryEntry":
        return cls(
            dstar=float(obj["dstar"]),
            times=[int(t) for t in obj["times"]],
            agents=[int(a) for a in obj["agents"]],
            forces=np.asarray(obj["forces"], dtype=float).reshape(-1, 2),
            config_hash=obj["config_hash"],
        )


@dataclass
class DStarLibrary:
    """Maximum accumulated evidence per (scenario, candidate index, K)."""

    entries: dict[tuple[str, int, int], LibraryEntry] = field(default_factory=dict)

    @staticmethod
    def key_string(scenario_id: str, theta_index: int, k: int) -> str:
        return f"{scenario_id}/{theta_index}/{k}"

    def get(self, scenario_id: str, theta_index: int, k: int) -> LibraryEntry:
        try:
            return self.entries[(scenario_id, theta_index, k)]
        except KeyError:
            raise LibraryMissError(self.key_string(scenario_id, theta_index, k)) from None

    def best_available_k(self, scenario_id: str, theta_index: int, k: int) -> int | None:
        """Largest stored K' <= k for the given scenario and candidate."""
        stored = [
            kk for (sid, ti, kk) in self.entries if sid == scenario_id and ti == theta_index and kk <= k
        ]
        return max(stored) if stored else None

    def to_json(self) -> dict:
        return {
            self.key_string(sid, ti, k): entry.to_json()
            for (sid, ti, k), entry in self.entries.items()
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DStarLibrary":
        entries = {}
        for key, val in obj.items():
            sid, ti, k = key.rsplit("/", 2)
            entries[(sid, int(ti), int(k))] = LibraryEntry.from_json(val)
        return cls(entries=entries)

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "w") as f:
                json.dump(self.to_json(), f, indent=2, sort_keys=True)
                f.write("\n")
        except OSError as e:
            raise LibraryWriteError(f"could not write library to {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "DStarLibrary":
        with open(path) as f:
            return cls.from_json(json.load(f))


def config_hash(opt_cfg: OptimizerConfig, ev_cfg: EvidenceConfig, scenario: Scenario) -> str:
    """Stable digest tying library entries to the configs that produced them."""
    payload = {
        "optimizer": opt_cfg.content_dict(),
        "evidence": {
            "alpha": ev_cfg.alpha,
            "gamma": ev_cfg.gamma,
            "lambda": ev_cfg.lam,
            "include_final_reward": ev_cfg.include_final_reward,
        },
        "scenario": scenario.content_dict(),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class EvidenceEvaluator:
    """Batched accumulated-evidence evaluation for a fixed (times, agents) slate."""

    def __init__(
        self,
        times: list[int],
        agents: list[int],
        initial: Trajectory,
        theta: np.ndarray,
        ev_cfg: EvidenceConfig,
        scenario: Scenario,
        kernel: DeformationKernel,
    ) -> None:
        self.k = len(times)
        self.theta = np.asarray(theta, dtype=float)
        self.ev_cfg = ev_cfg
        self.scenario = scenario
        self.initial_pts = initial.points
        self.profiles = np.stack([kernel.profile(t) for t in times])  # (K, T+1)
        self.agent_cols = [slice(2 * a, 2 * a + 2) for a in agents]
        self.decay = decay_weights(self.k, ev_cfg.alpha)

    def chain(self, forces: np.ndarray) -> np.ndarray:
        """Deformation chain for force sets shaped (..., K, 2) -> (..., K, T+1, n)."""
        batch = forces.shape[:-2]
        T1, n = self.initial_pts.shape
        bumps = np.zeros(batch + (self.k, T1, n))
        for j, cols in enumerate(self.agent_cols):
            bumps[..., j, :, cols] = self.profiles[j][:, None] * forces[..., j, None, :]
        return self.initial_pts + np.cumsum(bumps, axis=-3)

    def evidence(self, forces: np.ndarray) -> np.ndarray:
        """Accumulated evidence for force sets shaped (..., K, 2)."""
        rewards = reward(self.chain(forces), self.theta, self.scenario)  # (..., K)
        value = self.ev_cfg.lam * (rewards @ self.decay)
        value = value - self.ev_cfg.gamma * np.sum(np.square(forces), axis=(-1, -2))
        if self.ev_cfg.include_final_reward:
            value = value + rewards[..., -1]
        return value


def _project(forces: np.ndarray, bound: float) -> np.ndarray:
    """Scale each force vector onto the norm ball of radius `bound`."""
    norms = np.linalg.norm(forces, axis=-1, keepdims=True)
    scale = np.where(norms > bound, bound / np.maximum(norms, 1e-300), 1.0)
    return forces * scale


GRAD_STEP = 1e-4


def _numerical_gradient(ev: EvidenceEvaluator, forces: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of the evidence w.r.t. every force coordinate."""
    k = forces.shape[0]
    flat = forces.reshape(-1)
    probes = np.repeat(flat[None, :], 2 * flat.size, axis=0)
    for d in range(flat.size):
        probes[2 * d, d] += h
        probes[2 * d + 1, d] -= h
    vals = ev.evidence(probes.reshape(-1, k, 2))
    return ((vals[0::2] - vals[1::2]) / (2 * h)).reshape(k, 2)


def check_gradient(
    times: list[int],
    agents: list[int],
    forces: np.ndarray,
    initial: Trajectory,
    theta: np.ndarray,
    opt_cfg: OptimizerConfig,
    ev_cfg: EvidenceConfig,
    scenario: Scenario,
) -> float:
    """Relative disagreement between the ascent gradient and a half-step probe.

    Large values indicate the finite-difference step is badly scaled for the
    evidence landscape.
    """
    kernel = make_kernel(scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order)
    ev = EvidenceEvaluator(times, agents, initial, theta, ev_cfg, scenario, kernel)
    g_full = _numerical_gradient(ev, np.asarray(forces, float), GRAD_STEP)
    g_half = _numerical_gradient(ev, np.asarray(forces, float), GRAD_STEP / 2)
    denom = max(np.linalg.norm(g_half), 1e-12)
    return float(np.linalg.norm(g_full - g_half) / denom)


def inner_optimize(
    times: list[int],
    agents: list[int],
    initial: Trajectory,
    theta: np.ndarray,
    opt_cfg: OptimizerConfig,
    ev_cfg: EvidenceConfig,
    scenario: Scenario,
    kernel: DeformationKernel | None = None,
    trace: list[float] | None = None,
) -> tuple[float, np.ndarray]:
    """Maximize evidence over force vectors for a fixed (times, agents) slate.

    Projected gradient ascent from zero forces with backtracking: a step is
    only accepted if it improves the objective, so the iterate sequence is
    non-decreasing (pass `trace` to record accepted objective values).
    Returns the best forces found and their exact evidence (re-evaluated
    through the reference chain so stored values are self-consistent).
    """
    if kernel is None:
        kernel = make_kernel(
            scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order
        )
    ev = EvidenceEvaluator(times, agents, initial, theta, ev_cfg, scenario, kernel)
    k = len(times)

    def ascend(start: np.ndarray) -> tuple[float, np.ndarray, list[float]]:
        forces = start
        value = float(ev.evidence(forces))
        local_trace = [value]
        halvings = opt_cfg.step_size * np.power(0.5, np.arange(25))
        stall = 0
        for _ in range(opt_cfg.inner_iterations):
            grad = _numerical_gradient(ev, forces, GRAD_STEP)
            if np.linalg.norm(grad) < 1e-12:
                break
            candidates = _project(
                forces[None] + halvings[:, None, None] * grad[None], opt_cfg.force_bound
            )
            cand_vals = ev.evidence(candidates)
            better = cand_vals > value + 1e-14
            if not np.any(better):
                break
            pick = int(np.argmax(better))  # largest improving step
            improvement = float(cand_vals[pick]) - value
            forces = candidates[pick]
            value = float(cand_vals[pick])
            local_trace.append(value)
            stall = stall + 1 if improvement < 1e-9 else 0
            if stall >= 3:
                break
        return value, forces, local_trace

    # gradient ascent from rest, plus one restart from the best coarse probe
    # (all corrections pushed the same way); the probe is what lets the solver
    # escape small-push local optima that the flat-topped zone penalty creates
    starts = [np.zeros((k, 2))]
    if opt_cfg.probe_directions > 0:
        angles = np.linspace(0.0, 2 * np.pi, opt_cfg.probe_directions, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        probes = np.concatenate(
            [
                0.7 * opt_cfg.force_bound * np.repeat(dirs[:, None, :], k, axis=1),
                0.35 * opt_cfg.force_bound * np.repeat(dirs[:, None, :], k, axis=1),
            ]
        )
        probe_vals = ev.evidence(probes)
        starts.append(probes[int(np.argmax(probe_vals))])

    best_value = -np.inf
    best_forces = starts[0]
    best_trace: list[float] = []
    for start in starts:
        value, forces, local_trace = ascend(start)
        if value > best_value:
            best_value, best_forces, best_trace = value, forces, local_trace
    if trace is not None:
        trace.extend(best_trace)

    corrections = [Correction(t, a, f) for t, a, f in zip(times, agents, best_forces)]
    trajs = propagate_sequence(initial, corrections, kernel)
    exact = accumulated_evidence(trajs, corrections, theta, ev_cfg, scenario)
    return exact, best_forces


def _assignment_space_size(num_slots: int, k: int) -> int:
    return math.comb(num_slots, k)


def _slot_to_pair(slot: int, num_agents: int) -> tuple[int, int]:
    """Slot index -> (timestep, agent), slots ordered by time then agent."""
    return 1 + slot // num_agents, slot % num_agents


def _sample_assignments(
    num_slots: int, k: int, t_max: int, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    total = _assignment_space_size(num_slots, k)
    if total <= t_max:
        return list(itertools.combinations(range(num_slots), k))
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    attempts = 0
    while len(out) < t_max and attempts < 50 * t_max:
        attempts += 1
        combo = tuple(sorted(rng.choice(num_slots, size=k, replace=False).tolist()))
        if combo in seen:
            continue
        seen.add(combo)
        out.append(combo)
    return out


def solve_dstar(
    initial: Trajectory,
    theta: np.ndarray,
    k: int,
    opt_cfg: OptimizerConfig,
    ev_cfg: EvidenceConfig,
    scenario: Scenario,
) -> tuple[float, list[int], list[int], np.ndarray]:
    """Best evidence over sampled discrete slates, each continuously optimized.

    Deterministic for a fixed OptimizerConfig.seed: discrete assignments are
    sampled without replacement (or fully enumerated when the space is small
    enough) and the continuous subproblem is deterministic.
    """
    if k < 1:
        raise InfeasibleKError("need at least one correction")
    num_slots = (scenario.horizon - 1) * scenario.num_agents
    if k > num_slots:
        raise InfeasibleKError(
            f"{k} corrections cannot fit {num_slots} distinct (time, agent) slots"
        )
    kernel = make_kernel(
        scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order
    )
    rng = np.random.default_rng(opt_cfg.seed)
    best: tuple[float, list[int], list[int], np.ndarray] | None = None
    for combo in _sample_assignments(num_slots, k, opt_cfg.t_max, rng):
        pairs = [_slot_to_pair(s, scenario.num_agents) for s in combo]
        times = [t for t, _ in pairs]
        agents = [a for _, a in pairs]
        value, forces = inner_optimize(times, agents, initial, theta, opt_cfg, ev_cfg, scenario, kernel)
        if best is None or value > best[0]:
            best = (value, times, agents, forces)
    assert best is not None
    return best


def exhaustive_search(
    initial: Trajectory,
    theta: np.ndarray,
    k: int,
    grid: np.ndarray,
    ev_cfg: EvidenceConfig,
    scenario: Scenario,
    force_bound: float | None = None,
) -> tuple[float, float, float]:
    """Enumerate every (times, agents, grid-force) sequence; return (max, min, count).

    `grid` is an (M, 2) array of candidate force vectors; entries outside the
    force bound are dropped because they are not admissible corrections.
    Intended for micro-instances where full enumeration is tractable.
    """
    if force_bound is not None:
        grid = grid[np.linalg.norm(grid, axis=1) <= force_bound + 1e-9]
    kernel = make_kernel(
        scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order
    )
    num_slots = (scenario.horizon - 1) * scenario.num_agents
    best = -np.inf
    worst = np.inf
    count = 0
    m = grid.shape[0]
    for combo in itertools.combinations(range(num_slots), k):
        pairs = [_slot_to_pair(s, scenario.num_agents) for s in combo]
        times = [t for t, _ in pairs]
        agents = [a for _, a in pairs]
        ev = EvidenceEvaluator(times, agents, initial, theta, ev_cfg, scenario, kernel)
        if k == 1:
            vals = ev.evidence(grid[:, None, :])
            best = max(best, float(vals.max()))
            worst = min(worst, float(vals.min()))
            count += m
        else:
            # chunk over the first force index to bound memory
            rest = np.array(list(itertools.product(*[range(m)] * (k - 1))))
            tail = grid[rest]  # (m^(k-1), k-1, 2)
            for i in range(m):
                head = np.repeat(grid[i][None, None, :], tail.shape[0], axis=0)
                vals = ev.evidence(np.concatenate([head, tail], axis=1))
                best = max(best, float(vals.max()))
                worst = min(worst, float(vals.min()))
                count += vals.size
    return best, worst, count


def make_force_grid(lo: float, hi: float, points: int) -> np.ndarray:
    axis = np.linspace(lo, hi, points)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _entry_seed(base_seed: int, theta_index: int, k: int) -> int:
    return int(np.random.SeedSequence((base_seed, theta_index, k)).generate_state(1)[0])


def _solve_entry(
    args: tuple[Scenario, Trajectory, int, int, OptimizerConfig, EvidenceConfig, str]
) -> tuple[tuple[str, int, int], LibraryEntry]:
    scenario, initial, theta_index, k, opt_cfg, ev_cfg, chash = args
    entry_cfg = replace(opt_cfg, seed=_entry_seed(opt_cfg.seed, theta_index, k))
    dstar, times, agents, forces = solve_dstar(
        initial, scenario.candidate_thetas[theta_index], k, entry_cfg, ev_cfg, scenario
    )
    entry = LibraryEntry(dstar=dstar, times=times, agents=agents, forces=forces, config_hash=chash)
    return (scenario.scenario_id, theta_index, k), entry


def build_library(
    scenario: Scenario,
    k_max: int,
    opt_cfg: OptimizerConfig,
    ev_cfg: EvidenceConfig,
    initial: Trajectory,
    out_path: str | Path | None = None,
    workers: int = 1,
    existing: DStarLibrary | None = None,
) -> DStarLibrary:
    """Solve and store entries for every candidate and every K up to k_max.

    Entries found in `existing` (or in the file at out_path) with a matching
    config hash are kept, making interrupted builds resumable. Per-entry
    seeds derive from (seed, candidate, K), so results do not depend on
    worker scheduling and rebuilding with identical configs is byte-stable.
    """
    chash = config_hash(opt_cfg, ev_cfg, scenario)
    library = existing or DStarLibrary()
    if existing is None and out_path is not None and Path(out_path).exists():
        library = DStarLibrary.load(out_path)
    library.entries = {
        key: e for key, e in library.entries.items() if e.config_hash == chash
    }

    todo = [
        (scenario, initial, ti, k, opt_cfg, ev_cfg, chash)
        for ti in range(scenario.num_candidates)
        for k in range(1, k_max + 1)
        if (scenario.scenario_id, ti, k) not in library.entries
    ]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, entry in pool.map(_solve_entry, todo):
                library.entries[key] = entry
    else:
        for args in todo:
            key, entry = _solve_entry(args)
            library.entries[key] = entry

    if out_path is not None:
        library.save(out_path)
    return library
