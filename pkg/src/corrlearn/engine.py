"""Episode execution: planning, simulated correctors, inference, logging.

One episode is a serialized state machine over a fixed horizon. The robot
follows its current plan; when a correction arrives it is appended to the
correction history, the deformation chain rooted at the initial plan is
rebuilt, the belief over candidate weight vectors is updated according to
the selected inference model, and the robot replans from its current state.
The simulated corrector chooses greedy evidence-improving forces for the
true weights and is deliberately blind to the robot's belief, so the same
seed produces the same correction stream under every inference model.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO

import numpy as np

from .evidence import (
    Belief,
    EvidenceConfig,
    decay_weights,
    log_likelihood_final,
    log_likelihood_independent,
    posterior_update,
)
from .optimizer import DStarLibrary, LibraryMissError
from .planner import PlanResult, plan
from .rewards import Scenario, features, scenario_from_dict
from .trajectory import (
    Correction,
    DeformationKernel,
    Trajectory,
    make_kernel,
    propagate_sequence,
)

logger = logging.getLogger(__name__)

MODELS = ("sequence", "independent", "final")


class UnknownModelError(ValueError):
    pass


@dataclass(frozen=True)
class HumanPolicy:
    """Noisily rational corrector settings.

    `patience` controls timing: the corrector acts at the next eligible slot
    only when the gain there is at least that fraction of the best gain any
    later slot could offer, so pushes land where they matter instead of as
    soon as any marginal improvement exists.
    """

    sigma: float = 0.0
    cooldown: int = 3
    lookahead: int = 2
    deadband: float = 0.005
    patience: float = 0.8
    force_levels: tuple[float, ...] = (0.4, 0.7, 1.0)
    num_directions: int = 16

    @classmethod
    def from_scenario(cls, scenario: Scenario, sigma: float = 0.0) -> "HumanPolicy":
        h = scenario.human
        return cls(
            sigma=sigma,
            cooldown=h.cooldown,
            lookahead=h.lookahead,
            deadband=h.deadband,
            patience=h.patience,
            force_levels=h.force_levels,
            num_directions=h.num_directions,
        )


@dataclass
class EpisodeState:
    scenario: Scenario
    model: str
    clock: int
    plan: Trajectory
    belief: Belief
    prior: Belief
    initial_plan: Trajectory
    kernel: DeformationKernel
    ev_cfg: EvidenceConfig
    corrections: list[Correction] = field(default_factory=list)
    deformed_history: list[Trajectory] = field(default_factory=list)
    rng_seed: int = 0
    last_correction_clock: int = -(10**9)
    planner_mode: str = "argmax"
    warnings: list[str] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.clock >= self.scenario.horizon

    def current_positions(self) -> np.ndarray:
        return self.plan.points[self.clock].reshape(-1, 2)

    def executed_prefix(self) -> np.ndarray:
        return self.plan.points[: self.clock + 1]

    def last_deformed(self) -> Trajectory:
        return self.deformed_history[-1] if self.deformed_history else self.initial_plan


@dataclass(frozen=True)
class EpisodeLog:
    scenario: dict
    model: str
    seed: int
    sigma: float
    true_theta_index: int | None
    predicted_theta_index: int
    final_belief: list[float]
    events: list[dict]
    warnings: list[str]

    def accuracy_hit(self) -> bool | None:
        if self.true_theta_index is None:
            return None
        return self.predicted_theta_index == self.true_theta_index

    def lines(self) -> list[str]:
        """JSON-lines form: header, one line per event, then the summary."""
        header = {
            "kind": "header",
            "scenario": self.scenario,
            "model": self.model,
            "seed": self.seed,
            "sigma": self.sigma,
            "true_theta_index": self.true_theta_index,
        }
        rows = [json.dumps(header, sort_keys=True)]
        rows += [json.dumps({"kind": "event", **e}, sort_keys=True) for e in self.events]
        rows.append(
            json.dumps(
                {
                    "kind": "final",
                    "final_belief": self.final_belief,
                    "predicted_theta_index": self.predicted_theta_index,
                    "warnings": self.warnings,
                },
                sort_keys=True,
            )
        )
        return rows

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for line in self.lines():
                f.write(line + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeLog":
        with open(path) as f:
            rows = [json.loads(line) for line in f if line.strip()]
        header = rows[0]
        final = rows[-1]
        if header.get("kind") != "header" or final.get("kind") != "final":
            raise ValueError(f"{path} is not an episode log")
        events = [{k: v for k, v in r.items() if k != "kind"} for r in rows[1:-1]]
        return cls(
            scenario=header["scenario"],
            model=header["model"],
            seed=header["seed"],
            sigma=header["sigma"],
            true_theta_index=header["true_theta_index"],
            predicted_theta_index=final["predicted_theta_index"],
            final_belief=final["final_belief"],
            events=events,
            warnings=final.get("warnings", []),
        )


def start_episode(
    scenario: Scenario,
    model: str,
    seed: int = 0,
    planner_mode: str = "argmax",
) -> EpisodeState:
    """Plan the initial trajectory under the prior and reset all histories."""
    if model not in MODELS:
        raise UnknownModelError(f"model must be one of {MODELS}, got {model!r}")
    prior = Belief(log_weights=scenario.prior_log_weights())
    theta0 = scenario.candidate_thetas[prior.argmax()]
    initial = plan(theta0, scenario, planner_mode=planner_mode).trajectory
    kernel = make_kernel(
        scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order
    )
    return EpisodeState(
        scenario=scenario,
        model=model,
        clock=0,
        plan=initial,
        belief=prior,
        prior=prior,
        initial_plan=initial,
        kernel=kernel,
        ev_cfg=EvidenceConfig.from_scenario(scenario),
        rng_seed=seed,
        planner_mode=planner_mode,
    )


def _candidate_forces(policy: HumanPolicy, bound: float) -> np.ndarray:
    angles = np.linspace(0.0, 2 * np.pi, policy.num_directions, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    levels = np.asarray(policy.force_levels) * bound
    return (levels[:, None, None] * dirs[None]).reshape(-1, 2)


def one_step_gains(
    true_theta: np.ndarray,
    state: EpisodeState,
    times: list[int],
    grid: np.ndarray,
) -> np.ndarray:
    """Evidence gain of appending one correction, per (agent, time, force).

    Appending (t, a, f) to the chain adds one deformed trajectory whose
    reward replaces a zero-force placeholder's, so the gain reduces to
    lam * [R(last_deformed + bump) - R(last_deformed)] - gamma * |f|^2;
    everything already in the chain contributes identically to both sides.
    """
    scenario = state.scenario
    cfg = state.ev_cfg
    base_pts = state.last_deformed().points
    profiles = np.stack([state.kernel.profile(t) for t in times])  # (nt, T+1)
    bumps = profiles[:, None, :, None] * grid[None, :, None, :]  # (nt, nf, T+1, 2)
    gains = np.empty((scenario.num_agents, len(times), grid.shape[0]))
    base_reward = float(features(base_pts, scenario) @ true_theta)
    effort_cost = cfg.gamma * np.sum(np.square(grid), axis=-1)  # (nf,)
    for agent in range(scenario.num_agents):
        cols = slice(2 * agent, 2 * agent + 2)
        batch = np.broadcast_to(
            base_pts, (len(times), grid.shape[0]) + base_pts.shape
        ).copy()
        batch[..., cols] += bumps
        r = features(batch, scenario) @ true_theta  # (nt, nf)
        gains[agent] = cfg.lam * (r - base_reward) - effort_cost[None, :]
    return gains


def simulated_human(
    true_theta: np.ndarray,
    state: EpisodeState,
    policy: HumanPolicy,
    rng: np.random.Generator,
) -> Correction | None:
    """Greedy single-correction proposal for the true weights, or None.

    Candidate forces on a direction/magnitude grid are scored by the
    one-step evidence gain. The corrector acts at the next eligible slot
    only when that slot's best gain clears the deadband and is competitive
    (per `patience`) with the best gain available anywhere later in the
    horizon. Gaussian noise of scale sigma perturbs the chosen force after
    the decision.
    """
    scenario = state.scenario
    t_c = state.clock + policy.lookahead
    if not 1 <= t_c <= scenario.horizon - 1:
        return None
    if state.clock - state.last_correction_clock < policy.cooldown:
        return None

    bound = scenario.hyperparameters.force_bound
    grid = _candidate_forces(policy, bound)
    times = list(range(t_c, scenario.horizon))
    gains = one_step_gains(true_theta, state, times, grid)  # (A, nt, nf)

    best_future = float(gains.max())
    now = gains[:, 0, :]  # slot t_c
    agent, f_idx = np.unravel_index(int(np.argmax(now)), now.shape)
    best_now = float(now[agent, f_idx])
    if best_now <= policy.deadband or best_now < policy.patience * best_future:
        return None
    force = grid[f_idx]
    if policy.sigma > 0:
        force = force + rng.normal(0.0, policy.sigma, size=2)
        norm = np.linalg.norm(force)
        if norm > bound:
            force = force * (bound / norm)
    return Correction(t_c, int(agent), force)


def _sequence_log_likelihoods(state: EpisodeState, library: DStarLibrary) -> np.ndarray:
    scenario = state.scenario
    cfg = state.ev_cfg
    k = len(state.corrections)
    ll = np.empty(scenario.num_candidates)
    # one feature pass over the chain covers every candidate: D is linear in phi
    phi = features(np.stack([t.points for t in state.deformed_history]), scenario)  # (K, F)
    decayed = decay_weights(k, cfg.alpha) @ phi  # (F,)
    if cfg.include_final_reward:
        decayed = cfg.lam * decayed + phi[-1]
        d_obs = scenario.candidate_thetas @ decayed
    else:
        d_obs = cfg.lam * (scenario.candidate_thetas @ decayed)
    d_obs = d_obs - cfg.gamma * sum(c.norm() ** 2 for c in state.corrections)
    for j in range(scenario.num_candidates):
        try:
            entry = library.get(scenario.scenario_id, j, k)
        except LibraryMissError:
            fallback = library.best_available_k(scenario.scenario_id, j, k)
            if fallback is None:
                raise
            msg = f"library miss for K={k} (candidate {j}); using K={fallback}"
            logger.warning(msg)
            if msg not in state.warnings:
                state.warnings.append(msg)
            entry = library.get(scenario.scenario_id, j, fallback)
        ll[j] = d_obs[j] - entry.dstar
    return ll


def _independent_log_likelihoods(state: EpisodeState) -> np.ndarray:
    scenario = state.scenario
    deformed = state.deformed_history[-1]
    previous = (
        state.deformed_history[-2] if len(state.deformed_history) > 1 else state.initial_plan
    )
    return np.array(
        [
            log_likelihood_independent(
                deformed, previous, theta, scenario.hyperparameters.gamma, scenario
            )
            for theta in scenario.candidate_thetas
        ]
    )


def apply_correction(
    state: EpisodeState, correction: Correction, library: DStarLibrary | None
) -> None:
    """Append a correction, update the belief per the model, and replan."""
    scenario = state.scenario
    state.corrections.append(correction)
    state.deformed_history = propagate_sequence(
        state.initial_plan, state.corrections, state.kernel
    )
    state.last_correction_clock = state.clock

    beta = state.ev_cfg.beta
    if state.model == "sequence":
        if library is None:
            raise LibraryMissError("sequence model needs a precomputed evidence library")
        ll = _sequence_log_likelihoods(state, library)
        state.belief = posterior_update(state.prior, beta * ll)
    elif state.model == "independent":
        ll = _independent_log_likelihoods(state)
        state.belief = posterior_update(state.belief, beta * ll)
    # final: belief untouched until the episode closes

    result: PlanResult = plan(
        state.belief, scenario, history=state.executed_prefix(), planner_mode=state.planner_mode
    )
    if not result.converged:
        state.warnings.append(f"planner hit its iteration budget at clock {state.clock}")
    state.plan = result.trajectory
    state.events.append(
        {
            "clock": state.clock,
            "correction": correction.to_json(),
            "belief": [float(p) for p in state.belief.probabilities()],
            "plan": state.plan.to_json(),
        }
    )


def step_episode(
    state: EpisodeState,
    library: DStarLibrary | None = None,
    external_correction: Correction | None = None,
    human: tuple[np.ndarray, HumanPolicy, np.random.Generator] | None = None,
) -> EpisodeState:
    """Advance the episode one timestep, applying at most one correction.

    Corrections come either from the caller (live sessions) or from the
    simulated corrector. Zero-force corrections are acknowledged but are not
    interactions: they change nothing and are not recorded.
    """
    if state.done:
        return state
    correction = external_correction
    if correction is None and human is not None:
        true_theta, policy, rng = human
        correction = simulated_human(true_theta, state, policy, rng)
    if correction is not None and correction.norm() > 0:
        apply_correction(state, correction, library)
    state.clock += 1
    return state


def finalize_episode(state: EpisodeState) -> EpisodeLog:
    """Close the episode; the final model performs its one-shot inference here."""
    scenario = state.scenario
    if state.model == "final":
        final_traj = state.last_deformed()
        ll = np.array(
            [
                log_likelihood_final(
                    final_traj, state.initial_plan, theta, scenario.hyperparameters.gamma, scenario
                )
                for theta in scenario.candidate_thetas
            ]
        )
        state.belief = posterior_update(state.prior, state.ev_cfg.beta * ll)
        state.events.append(
            {
                "clock": state.clock,
                "correction": None,
                "belief": [float(p) for p in state.belief.probabilities()],
                "plan": state.plan.to_json(),
            }
        )
    return EpisodeLog(
        scenario=scenario.content_dict(),
        model=state.model,
        seed=state.rng_seed,
        sigma=0.0,
        true_theta_index=scenario.true_theta_index,
        predicted_theta_index=state.belief.argmax(),
        final_belief=[float(p) for p in state.belief.probabilities()],
        events=list(state.events),
        warnings=list(state.warnings),
    )


def run_episode(
    scenario: Scenario,
    model: str,
    library: DStarLibrary | None,
    seed: int = 0,
    sigma: float = 0.0,
    planner_mode: str = "argmax",
) -> EpisodeLog:
    """Run a complete simulated-corrector episode and return its log."""
    state = start_episode(scenario, model, seed=seed, planner_mode=planner_mode)
    if scenario.true_theta_index is None:
        raise ValueError("simulated episodes need scenario.true_theta_index")
    true_theta = scenario.candidate_thetas[scenario.true_theta_index]
    policy = HumanPolicy.from_scenario(scenario, sigma=sigma)
    rng = np.random.default_rng(seed)
    while not state.done:
        step_episode(state, library=library, human=(true_theta, policy, rng))
    return replace(finalize_episode(state), seed=seed, sigma=sigma)


def replay_log(log: EpisodeLog, library: DStarLibrary | None) -> tuple[bool, str | None]:
    """Re-execute a log's correction stream and compare belief traces exactly.

    Returns (ok, first_divergence_description).
    """
    scenario = scenario_from_dict(log.scenario)
    state = start_episode(scenario, log.model, seed=log.seed)
    by_clock: dict[int, dict] = {}
    for e in log.events:
        if e.get("correction") is not None:
            by_clock[e["clock"]] = e
    while not state.done:
        event = by_clock.get(state.clock)
        correction = Correction.from_json(event["correction"]) if event else None
        step_episode(state, library=library, external_correction=correction)
        if event is not None:
            got = [float(p) for p in state.belief.probabilities()]
            want = [float(p) for p in event["belief"]]
            if got != want:
                return False, (
                    f"belief diverged at clock {event['clock']}: replayed {got}, logged {want}"
                )
    replay_final = finalize_episode(state)
    if replay_final.final_belief != log.final_belief:
        return False, (
            f"final belief diverged: replayed {replay_final.final_belief}, "
            f"logged {log.final_belief}"
        )
    if replay_final.predicted_theta_index != log.predicted_theta_index:
        return False, "predicted candidate diverged"
    return True, None


@dataclass(frozen=True)
class BenchmarkResult:
    summary: dict
    logs: list[EpisodeLog]


def episode_seed(base_seed: int, scenario_id: str, sigma: float, episode: int) -> int:
    """Stable per-episode seed, shared across models so streams are paired."""
    digest = hashlib.sha256(scenario_id.encode()).digest()
    sid = int.from_bytes(digest[:4], "big")
    return int(
        np.random.SeedSequence((base_seed, sid, int(round(sigma * 1000)), episode)).generate_state(1)[0]
    )


def _run_benchmark_episode(
    args: tuple[dict, str, DStarLibrary | None, int, float]
) -> EpisodeLog:
    scenario_dict, model, library, seed, sigma = args
    scenario = scenario_from_dict(scenario_dict)
    return run_episode(scenario, model, library, seed=seed, sigma=sigma)


def run_benchmark(
    scenario: Scenario,
    models: list[str],
    episodes: int,
    sigmas: list[float],
    seed: int,
    library: DStarLibrary | None,
    workers: int = 1,
) -> BenchmarkResult:
    """Paired benchmark: per (sigma, episode), each model sees the same seed.

    The simulated corrector ignores the robot's belief, so paired seeds give
    every model an identical correction stream, mirroring an evaluation of
    several inference rules on one recorded interaction. Episodes may run on
    a worker pool; results are aggregated by task order, not completion
    order, so the summary is independent of scheduling.
    """
    for model in models:
        if model not in MODELS:
            raise UnknownModelError(f"unknown model {model!r}")
    tasks = [
        (scenario.content_dict(), model, library, episode_seed(seed, scenario.scenario_id, sigma, ep), sigma)
        for model in models
        for sigma in sigmas
        for ep in range(episodes)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_benchmark_episode, tasks))
    else:
        logs = [_run_benchmark_episode(t) for t in tasks]

    per_model: dict[str, dict] = {}
    idx = 0
    for model in models:
        hits: list[bool] = []
        by_sigma: dict[str, dict] = {}
        for sigma in sigmas:
            sigma_hits = []
            for _ in range(episodes):
                hit = logs[idx].accuracy_hit()
                idx += 1
                if hit is not None:
                    hits.append(hit)
                    sigma_hits.append(hit)
            by_sigma[str(sigma)] = {
                "episodes": episodes,
                "accuracy": float(np.mean(sigma_hits)) if sigma_hits else None,
            }
        arr = np.array(hits, dtype=float)
        per_model[model] = {
            "episodes": int(arr.size),
            "accuracy_mean": float(arr.mean()) if arr.size else None,
            "accuracy_std": float(arr.std()) if arr.size else None,
            "by_sigma": by_sigma,
        }
    summary = {
        "scenario_id": scenario.scenario_id,
        "episodes_per_sigma": episodes,
        "sigmas": list(map(float, sigmas)),
        "seed": seed,
        "models": per_model,
    }
    return BenchmarkResult(summary=summary, logs=logs)


def belief_trace_rows(log: EpisodeLog, episode_index: int) -> list[dict]:
    """One row per (episode, correction event, candidate) for external plotting."""
    rows = []
    for event_idx, e in enumerate(log.events):
        for theta_index, p in enumerate(e["belief"]):
            rows.append(
                {
                    "episode": episode_index,
                    "model": log.model,
                    "sigma": log.sigma,
                    "event": event_idx,
                    "clock": e["clock"],
                    "theta_index": theta_index,
                    "probability": p,
                }
            )
    return rows


def write_belief_traces(logs: list[EpisodeLog], out: IO[str]) -> None:
    out.write("episode,model,sigma,event,clock,theta_index,probability\n")
    for i, log in enumerate(logs):
        for r in belief_trace_rows(log, i):
            out.write(
                f"{r['episode']},{r['model']},{r['sigma']},{r['event']},"
                f"{r['clock']},{r['theta_index']},{r['probability']!r}\n"
            )
