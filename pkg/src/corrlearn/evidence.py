"""Correction-sequence evidence, baseline likelihoods, and belief updates.

The sequence model scores a whole correction history at once: decayed
rewards of the successively deformed trajectories minus the squared effort
of the forces. Normalizing that score by the best achievable score for the
same number of corrections yields the sequence log-likelihood. The
independent baseline scores each correction against the trajectory it
modified; the final baseline scores only the last trajectory against the
first. Beliefs over the candidate weight vectors live in log space
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rewards import Scenario, reward
from .trajectory import CorrectionSequence, ShapeError, Trajectory

LOG_FLOOR = -700.0


class EmptySequenceError(ValueError):
    """Evidence is undefined for an empty correction sequence."""


class DegenerateBeliefError(ValueError):
    """Every candidate was driven to zero probability."""


@dataclass(frozen=True)
class EvidenceConfig:
    """Weights of the evidence terms.

    alpha discounts older trajectory rewards, gamma prices squared correction
    effort, lam scales the decayed reward sum, and include_final_reward adds
    an extra undiscounted reward of the last trajectory on top of the decayed
    sum (the variant used by the cancellation identity checks).
    """

    alpha: float = 0.9
    gamma: float = 0.1
    lam: float = 1.0
    include_final_reward: bool = False
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.lam < 0:
            raise ValueError(f"lambda weight must be >= 0, got {self.lam}")

    @classmethod
    def from_scenario(cls, scenario: Scenario, include_final_reward: bool = False) -> "EvidenceConfig":
        hp = scenario.hyperparameters
        return cls(
            alpha=hp.alpha,
            gamma=hp.gamma,
            lam=hp.lam,
            include_final_reward=include_final_reward,
            beta=hp.beta_noise,
        )


@dataclass(frozen=True)
class Belief:
    """Normalized distribution over the candidate weight vectors, in log space."""

    log_weights: np.ndarray

    def __post_init__(self) -> None:
        lw = np.asarray(self.log_weights, dtype=float)
        object.__setattr__(self, "log_weights", lw)
        lw.setflags(write=False)
        total = np.exp(lw).sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"belief probabilities sum to {total}, expected 1")

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(log_weights=np.full(n, -np.log(n)))

    @classmethod
    def from_probabilities(cls, probs: np.ndarray) -> "Belief":
        p = np.asarray(probs, dtype=float)
        return cls(log_weights=np.log(np.maximum(p / p.sum(), np.exp(LOG_FLOOR))))

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def argmax(self) -> int:
        """Most probable candidate; ties resolve to the lowest index."""
        return int(np.argmax(self.probabilities()))

    def to_json(self) -> list[dict]:
        return [
            {"theta_index": i, "probability": float(p)}
            for i, p in enumerate(self.probabilities())
        ]


def decay_weights(k: int, alpha: float) -> np.ndarray:
    """Discount factors alpha^(K-t) for corrections t = 1..K."""
    return alpha ** np.arange(k - 1, -1, -1, dtype=float)


def effort(corrections: CorrectionSequence) -> float:
    """Total squared force magnitude of a correction sequence."""
    return float(sum(c.norm() ** 2 for c in corrections))


def accumulated_evidence(
    trajs: list[Trajectory] | list[np.ndarray],
    corrections: CorrectionSequence,
    theta: np.ndarray,
    cfg: EvidenceConfig,
    scenario: Scenario,
) -> float:
    """Evidence a correction sequence accrues for one candidate weight vector.

    `trajs` must be the deformation chain produced by the corrections, in
    order. Returns lam * sum_t alpha^(K-t) * R(traj_t) - gamma * effort,
    plus R(traj_K) when cfg.include_final_reward is set.
    """
    k = len(corrections)
    if k == 0:
        raise EmptySequenceError("evidence needs at least one correction")
    if len(trajs) != k:
        raise ShapeError(f"{len(trajs)} trajectories for {k} corrections")
    stacked = np.stack([t.points if isinstance(t, Trajectory) else np.asarray(t, float) for t in trajs])
    rewards = reward(stacked, theta, scenario)  # one batched feature evaluation
    value = cfg.lam * float(decay_weights(k, cfg.alpha) @ rewards) - cfg.gamma * effort(corrections)
    if cfg.include_final_reward:
        value += float(rewards[-1])
    return value


def correction_energy(
    trajs: list[Trajectory] | list[np.ndarray],
    corrections: CorrectionSequence,
    intended: Trajectory,
    theta: np.ndarray,
    cfg: EvidenceConfig,
    scenario: Scenario,
) -> float:
    """Evidence including the penalty for falling short of an intended trajectory.

    Equals the include_final_reward form of accumulated_evidence minus the
    intended trajectory's reward. The intended-trajectory term is constant
    over correction sequences, so it cancels whenever this energy is
    normalized by its own maximum; the identity is exercised by tests.
    """
    k = len(corrections)
    if k == 0:
        raise EmptySequenceError("energy needs at least one correction")
    cfg_with_final = EvidenceConfig(
        alpha=cfg.alpha, gamma=cfg.gamma, lam=cfg.lam, include_final_reward=True, beta=cfg.beta
    )
    return accumulated_evidence(trajs, corrections, theta, cfg_with_final, scenario) - reward(
        intended, theta, scenario
    )


def log_likelihood_sequence(
    trajs: list[Trajectory] | list[np.ndarray],
    corrections: CorrectionSequence,
    theta: np.ndarray,
    dstar: float,
    cfg: EvidenceConfig,
    scenario: Scenario,
) -> float:
    """Log of the sequence likelihood: observed evidence minus its stored maximum.

    Non-positive when `dstar` really is the maximum over sequences of the
    same length; may be positive when the stored value is suboptimal.
    """
    return accumulated_evidence(trajs, corrections, theta, cfg, scenario) - float(dstar)


def trajectory_displacement_sq(a: Trajectory | np.ndarray, b: Trajectory | np.ndarray) -> float:
    """Summed squared waypoint displacement between two trajectories."""
    pa = a.points if isinstance(a, Trajectory) else np.asarray(a, float)
    pb = b.points if isinstance(b, Trajectory) else np.asarray(b, float)
    if pa.shape != pb.shape:
        raise ShapeError(f"trajectory shapes differ: {pa.shape} vs {pb.shape}")
    return float(np.sum(np.square(pa - pb)))


def log_likelihood_independent(
    deformed: Trajectory,
    previous: Trajectory,
    theta: np.ndarray,
    gamma: float,
    scenario: Scenario,
) -> float:
    """Unnormalized log-likelihood of one correction viewed in isolation.

    Reward of the corrected trajectory minus gamma times its squared
    displacement from the trajectory it modified.
    """
    return reward(deformed, theta, scenario) - gamma * trajectory_displacement_sq(deformed, previous)


def log_likelihood_final(
    final: Trajectory,
    initial: Trajectory,
    theta: np.ndarray,
    gamma: float,
    scenario: Scenario,
) -> float:
    """Unnormalized log-likelihood comparing only the last trajectory to the first."""
    return log_likelihood_independent(final, initial, theta, gamma, scenario)


def episode_log_likelihood_independent(
    trajs: list[Trajectory],
    initial: Trajectory,
    theta: np.ndarray,
    gamma: float,
    scenario: Scenario,
) -> float:
    """Episode log-likelihood of the independence model.

    By construction the per-correction terms are conditionally independent,
    so the episode value is exactly their sum.
    """
    total = 0.0
    previous = initial
    for t in trajs:
        total += log_likelihood_independent(t, previous, theta, gamma, scenario)
        previous = t
    return total


def posterior_update(prior: Belief, log_likelihoods: np.ndarray) -> Belief:
    """Bayes update in log space with max-subtraction normalization.

    The maximum is subtracted before the floor is applied, so a constant
    added to every candidate cancels exactly; only candidates far below the
    leader are clamped (at LOG_FLOOR, keeping them recoverable).
    """
    ll = np.asarray(log_likelihoods, dtype=float)
    if ll.shape != prior.log_weights.shape:
        raise ShapeError(
            f"log-likelihood vector shape {ll.shape} does not match belief {prior.log_weights.shape}"
        )
    raw = prior.log_weights + ll
    finite = np.isfinite(raw)
    if not np.any(finite):
        raise DegenerateBeliefError("all candidates have zero posterior mass")
    shifted = np.maximum(raw - raw[finite].max(), LOG_FLOOR)
    log_norm = np.log(np.exp(shifted).sum())
    return Belief(log_weights=shifted - log_norm)
