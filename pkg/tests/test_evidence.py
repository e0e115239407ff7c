import numpy as np
import pytest

from corrlearn.evidence import (
    Belief,
    DegenerateBeliefError,
    EmptySequenceError,
    EvidenceConfig,
    accumulated_evidence,
    correction_energy,
    episode_log_likelihood_independent,
    log_likelihood_final,
    log_likelihood_independent,
    log_likelihood_sequence,
    posterior_update,
    trajectory_displacement_sq,
)
from corrlearn.optimizer import OptimizerConfig, inner_optimize
from corrlearn.trajectory import Correction, Trajectory, make_kernel, propagate_sequence

from oracles import evidence_oracle, features_oracle, softmax_oracle


def make_chain(scenario, initial, forces_times):
    kernel = make_kernel(
        scenario.horizon + 1, scenario.hyperparameters.mu, scenario.hyperparameters.deform_order
    )
    corrections = [Correction(t, a, np.asarray(f, float)) for t, a, f in forces_times]
    return corrections, propagate_sequence(initial, corrections, kernel), kernel


class TestAccumulatedEvidence:
    def test_degenerate_weights_sum_rewards(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig(alpha=1.0, gamma=0.0, lam=1.0)
        theta = micro_scenario.candidate_thetas[1]
        corrections, chain, _ = make_chain(
            micro_scenario, micro_initial, [(2, 0, [0.0, 0.5]), (4, 0, [0.1, -0.2])]
        )
        from corrlearn.rewards import reward

        r1 = reward(chain[0], theta, micro_scenario)
        r2 = reward(chain[1], theta, micro_scenario)
        got = accumulated_evidence(chain, corrections, theta, cfg, micro_scenario)
        assert got == pytest.approx(r1 + r2, rel=1e-12)

    def test_pure_effort_term(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig(alpha=0.9, gamma=1.0, lam=1.0)
        theta = np.zeros(3)  # all rewards vanish
        corrections, chain, _ = make_chain(
            micro_scenario, micro_initial, [(2, 0, [1.0, 0.0]), (4, 0, [0.0, 2.0])]
        )
        got = accumulated_evidence(chain, corrections, theta, cfg, micro_scenario)
        assert got == pytest.approx(-5.0, abs=1e-12)

    def test_three_corrections_match_scalar_oracle(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig(alpha=0.9, gamma=0.1, lam=1.0)
        theta = micro_scenario.candidate_thetas[1]
        corrections, chain, _ = make_chain(
            micro_scenario,
            micro_initial,
            [(1, 0, [0.2, 0.8]), (3, 0, [-0.3, 0.4]), (5, 0, [0.0, -0.6])],
        )
        got = accumulated_evidence(chain, corrections, theta, cfg, micro_scenario)
        want = evidence_oracle(
            [t.points for t in chain], corrections, theta, 0.9, 0.1, 1.0, micro_scenario
        )
        assert got == pytest.approx(want, abs=1e-9)

    def test_lambda_scales_reward_sum(self, micro_scenario, micro_initial):
        theta = micro_scenario.candidate_thetas[0]
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(3, 0, [0.0, 0.5])])
        base = accumulated_evidence(
            chain, corrections, theta, EvidenceConfig(alpha=0.9, gamma=0.0, lam=1.0), micro_scenario
        )
        doubled = accumulated_evidence(
            chain, corrections, theta, EvidenceConfig(alpha=0.9, gamma=0.0, lam=2.0), micro_scenario
        )
        assert doubled == pytest.approx(2 * base, rel=1e-12)

    def test_empty_sequence_error(self, micro_scenario):
        with pytest.raises(EmptySequenceError):
            accumulated_evidence([], [], np.zeros(3), EvidenceConfig(), micro_scenario)


class TestCorrectionEnergy:
    def test_defining_identity(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig(alpha=0.9, gamma=0.1)
        theta = micro_scenario.candidate_thetas[2]
        corrections, chain, _ = make_chain(
            micro_scenario, micro_initial, [(2, 0, [0.5, 0.5]), (4, 0, [-0.2, 0.3])]
        )
        from corrlearn.rewards import reward

        intended = micro_initial
        flag_on = EvidenceConfig(alpha=0.9, gamma=0.1, include_final_reward=True)
        e = correction_energy(chain, corrections, intended, theta, cfg, micro_scenario)
        d = accumulated_evidence(chain, corrections, theta, flag_on, micro_scenario)
        assert e + reward(intended, theta, micro_scenario) == pytest.approx(d, abs=1e-12)

    def test_zero_gap_when_intended_is_final(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig(alpha=0.9, gamma=0.1)
        theta = micro_scenario.candidate_thetas[1]
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(3, 0, [0.0, 0.7])])
        e = correction_energy(chain, corrections, chain[-1], theta, cfg, micro_scenario)
        # with the intended trajectory equal to the last deformed one, the gap
        # term vanishes and the energy equals the plain decayed-reward form
        d_plain = accumulated_evidence(chain, corrections, theta, cfg, micro_scenario)
        assert e == pytest.approx(d_plain, abs=1e-12)

    def test_softmax_cancellation_over_two_sequences(self, micro_scenario, micro_initial):
        # the intended-trajectory shift drops out of any softmax across
        # correction sequences
        rng = np.random.default_rng(7)
        cfg = EvidenceConfig(alpha=0.9, gamma=0.1)
        flag_on = EvidenceConfig(alpha=0.9, gamma=0.1, include_final_reward=True)
        theta = rng.uniform(0, 1, 3)
        intended_pts = micro_initial.points + rng.normal(0, 0.3, micro_initial.points.shape)
        intended = Trajectory(points=intended_pts, dt=micro_initial.dt)
        seqs = []
        for _ in range(2):
            spec = [(int(rng.integers(1, 3)), 0, rng.uniform(-1, 1, 2)), (int(rng.integers(3, 6)), 0, rng.uniform(-1, 1, 2))]
            seqs.append(make_chain(micro_scenario, micro_initial, spec))
        e_vals = np.array(
            [correction_energy(ch, cs, intended, theta, cfg, micro_scenario) for cs, ch, _ in seqs]
        )
        d_vals = np.array(
            [accumulated_evidence(ch, cs, theta, flag_on, micro_scenario) for cs, ch, _ in seqs]
        )
        np.testing.assert_allclose(softmax_oracle(e_vals), softmax_oracle(d_vals), atol=1e-9)


class TestSequenceLikelihood:
    def test_optimizer_argmax_scores_zero(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig.from_scenario(micro_scenario)
        opt = OptimizerConfig(t_max=5, inner_iterations=80, force_bound=1.0, seed=0)
        theta = micro_scenario.candidate_thetas[1]
        value, forces = inner_optimize([3], [0], micro_initial, theta, opt, cfg, micro_scenario)
        corrections = [Correction(3, 0, forces[0])]
        kernel = make_kernel(7, micro_scenario.hyperparameters.mu, 2)
        chain = propagate_sequence(micro_initial, corrections, kernel)
        ll = log_likelihood_sequence(chain, corrections, theta, value, cfg, micro_scenario)
        assert ll == pytest.approx(0.0, abs=1e-12)

    def test_nonpositive_when_normalizer_dominates(self, micro_scenario, micro_initial):
        cfg = EvidenceConfig.from_scenario(micro_scenario)
        theta = micro_scenario.candidate_thetas[1]
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(3, 0, [0.3, 0.3])])
        d = accumulated_evidence(chain, corrections, theta, cfg, micro_scenario)
        assert log_likelihood_sequence(chain, corrections, theta, d + 1.0, cfg, micro_scenario) <= 0


class TestBaselineLikelihoods:
    def test_gamma_zero_returns_reward(self, micro_scenario, micro_initial):
        from corrlearn.rewards import reward

        theta = micro_scenario.candidate_thetas[0]
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(3, 0, [0.0, 0.4])])
        ll = log_likelihood_independent(chain[0], micro_initial, theta, 0.0, micro_scenario)
        assert ll == pytest.approx(reward(chain[0], theta, micro_scenario))

    def test_no_displacement(self, micro_scenario, micro_initial):
        from corrlearn.rewards import reward

        theta = micro_scenario.candidate_thetas[0]
        ll = log_likelihood_independent(micro_initial, micro_initial, theta, 5.0, micro_scenario)
        assert ll == pytest.approx(reward(micro_initial, theta, micro_scenario))

    def test_arithmetic_oracle(self, micro_scenario, micro_initial):
        theta = micro_scenario.candidate_thetas[1]
        gamma = 0.25
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(2, 0, [0.6, -0.1])])
        disp = float(np.sum((chain[0].points - micro_initial.points) ** 2))
        want = float(features_oracle(chain[0].points, micro_scenario) @ theta) - gamma * disp
        got = log_likelihood_independent(chain[0], micro_initial, theta, gamma, micro_scenario)
        assert got == pytest.approx(want, abs=1e-9)

    def test_final_without_corrections(self, micro_scenario, micro_initial):
        from corrlearn.rewards import reward

        theta = micro_scenario.candidate_thetas[2]
        ll = log_likelihood_final(micro_initial, micro_initial, theta, 3.0, micro_scenario)
        assert ll == pytest.approx(reward(micro_initial, theta, micro_scenario))

    def test_large_gamma_displacement_cancels_across_candidates(
        self, micro_scenario, micro_initial
    ):
        # the displacement term carries no information about the weights, so
        # the posterior it induces is the same whatever gamma is
        corrections, chain, _ = make_chain(micro_scenario, micro_initial, [(3, 0, [0.0, 0.9])])
        prior = Belief.uniform(3)

        def posterior(gamma):
            ll = np.array(
                [
                    log_likelihood_final(chain[-1], micro_initial, th, gamma, micro_scenario)
                    for th in micro_scenario.candidate_thetas
                ]
            )
            return posterior_update(prior, ll).probabilities()

        np.testing.assert_allclose(posterior(0.0), posterior(1e6), atol=1e-9)

    def test_episode_factorization(self, micro_scenario, micro_initial):
        theta = micro_scenario.candidate_thetas[1]
        gamma = micro_scenario.hyperparameters.gamma
        corrections, chain, _ = make_chain(
            micro_scenario,
            micro_initial,
            [(1, 0, [0.1, 0.5]), (3, 0, [0.4, -0.2]), (5, 0, [-0.3, 0.3])],
        )
        total = episode_log_likelihood_independent(
            chain, micro_initial, theta, gamma, micro_scenario
        )
        previous = micro_initial
        per_correction = 0.0
        for t in chain:
            per_correction += log_likelihood_independent(t, previous, theta, gamma, micro_scenario)
            previous = t
        assert total == pytest.approx(per_correction, abs=1e-9)

    def test_displacement_shape_check(self, micro_scenario, micro_initial):
        from corrlearn.trajectory import ShapeError

        small = Trajectory(points=micro_initial.points[:4], dt=0.5)
        with pytest.raises(ShapeError):
            trajectory_displacement_sq(micro_initial, small)


class TestBelief:
    def test_uniform_update_stays_uniform(self):
        prior = Belief.uniform(4)
        post = posterior_update(prior, np.full(4, -2.3))
        np.testing.assert_allclose(post.probabilities(), 0.25, atol=1e-12)

    def test_log_two_doubles_odds(self):
        prior = Belief.from_probabilities(np.array([0.4, 0.6]))
        post = posterior_update(prior, np.array([np.log(2.0), 0.0]))
        odds_before = 0.4 / 0.6
        odds_after = post.probabilities()[0] / post.probabilities()[1]
        assert odds_after == pytest.approx(2 * odds_before, rel=1e-12)

    def test_three_candidate_oracle(self):
        prior = Belief.from_probabilities(np.array([0.2, 0.5, 0.3]))
        ll = np.array([0.7, -0.4, 1.3])
        post = posterior_update(prior, ll)
        want = softmax_oracle(np.log([0.2, 0.5, 0.3]) + ll)
        np.testing.assert_allclose(post.probabilities(), want, atol=1e-12)

    def test_constant_shift_leaves_posterior_unchanged(self):
        prior = Belief.from_probabilities(np.array([0.1, 0.2, 0.7]))
        ll = np.array([0.5, 0.1, -0.9])
        a = posterior_update(prior, ll).probabilities()
        b = posterior_update(prior, ll + 123.456).probabilities()
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_normalization_after_many_updates(self):
        rng = np.random.default_rng(0)
        belief = Belief.uniform(5)
        for _ in range(200):
            belief = posterior_update(belief, rng.normal(0, 3, 5))
            assert belief.probabilities().sum() == pytest.approx(1.0, abs=1e-9)

    def test_extreme_updates_stay_recoverable(self):
        belief = Belief.uniform(3)
        belief = posterior_update(belief, np.array([0.0, -5000.0, -5000.0]))
        assert belief.probabilities()[0] == pytest.approx(1.0, abs=1e-9)
        # a later reversal must still be able to resurrect the others
        belief = posterior_update(belief, np.array([-5000.0, 0.0, 0.0]))
        assert belief.probabilities()[1] > 0.4

    def test_degenerate_error(self):
        prior = Belief.uniform(2)
        with pytest.raises(DegenerateBeliefError):
            posterior_update(prior, np.array([-np.inf, -np.inf]))

    def test_argmax_tie_breaks_low(self):
        assert Belief.uniform(3).argmax() == 0

    def test_wire_format(self):
        b = Belief.from_probabilities(np.array([0.25, 0.75]))
        assert b.to_json() == [
            {"theta_index": 0, "probability": pytest.approx(0.25)},
            {"theta_index": 1, "probability": pytest.approx(0.75)},
        ]

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            EvidenceConfig(alpha=0.0)
        with pytest.raises(ValueError):
            EvidenceConfig(alpha=1.2)
        with pytest.raises(ValueError):
            EvidenceConfig(gamma=-0.1)
