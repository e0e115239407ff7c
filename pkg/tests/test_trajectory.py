import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrlearn.trajectory import (
    Correction,
    InvalidHyperparameterError,
    InvalidScenarioError,
    ShapeError,
    Trajectory,
    deform,
    make_kernel,
    propagate_sequence,
)

from oracles import SMOOTH_5_ORDER2_INV, deform_chain_oracle


def straight_line(num_waypoints=5, num_agents=1, dt=0.1):
    pts = np.zeros((num_waypoints, 2 * num_agents))
    for a in range(num_agents):
        pts[:, 2 * a] = np.linspace(0.0, num_waypoints - 1.0, num_waypoints)
        pts[:, 2 * a + 1] = float(a)
    return Trajectory(points=pts, dt=dt)


class TestKernel:
    def test_three_waypoints_order1_single_interior(self):
        k = make_kernel(3, 1.0, order=1)
        profile = k.profile(1)
        assert profile[0] == 0.0 and profile[2] == 0.0
        assert profile[1] == pytest.approx(0.5)

    def test_order2_center_column_golden_values(self):
        # the 3-interior-point operator [[6,-4,1],[-4,6,-4],[1,-4,6]] is
        # inverted independently in oracles.py; centre column scaled by mu
        k = make_kernel(5, 0.5, order=2)
        expected = np.zeros(5)
        expected[1:4] = 0.5 * SMOOTH_5_ORDER2_INV[:, 1]
        np.testing.assert_allclose(k.profile(2), expected, atol=1e-12)
        np.testing.assert_allclose(k.profile(2), [0.0, 0.2, 0.35, 0.2, 0.0], atol=1e-12)

    def test_linearity_in_mu(self):
        k1 = make_kernel(5, 1.0, order=2)
        k2 = make_kernel(5, 2.0, order=2)
        for t in (1, 2, 3):
            np.testing.assert_allclose(k2.profile(t), 2.0 * k1.profile(t), rtol=1e-12)

    @pytest.mark.parametrize("order", [1, 2])
    @pytest.mark.parametrize("num_waypoints", [3, 4, 5, 8, 15, 25])
    def test_profile_invariants(self, order, num_waypoints):
        k = make_kernel(num_waypoints, 0.7, order=order)
        horizon = num_waypoints - 1
        for t in range(1, horizon):
            p = k.profile(t)
            assert p[0] == 0.0 and p[-1] == 0.0
            assert p[t] >= p.max() - 1e-12  # peak at the correction timestep
            assert np.all(np.diff(p[: t + 1]) >= -1e-12)
            assert np.all(np.diff(p[t:]) <= 1e-12)
            assert np.all(p >= 0.0)

    def test_determinism(self):
        a = make_kernel(9, 0.3, order=2)
        b = make_kernel(9, 0.3, order=2)
        np.testing.assert_array_equal(a.base_profile, b.base_profile)

    def test_errors(self):
        with pytest.raises(InvalidScenarioError):
            make_kernel(2, 1.0)
        with pytest.raises(InvalidHyperparameterError):
            make_kernel(5, 0.0)
        with pytest.raises(InvalidHyperparameterError):
            make_kernel(5, -1.0)
        with pytest.raises(InvalidHyperparameterError):
            make_kernel(5, 1.0, order=3)


class TestDeform:
    def test_zero_force_is_identity(self):
        traj = straight_line(7)
        k = make_kernel(7, 1.0)
        out = deform(traj, Correction(3, 0, np.zeros(2)), k)
        np.testing.assert_array_equal(out.points, traj.points)

    def test_single_interior_waypoint(self):
        traj = Trajectory(points=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), dt=0.1)
        k = make_kernel(3, 1.0, order=1)
        out = deform(traj, Correction(1, 0, np.array([0.0, 1.0])), k)
        y1 = k.profile(1)[1]
        np.testing.assert_allclose(out.points, [[0.0, 0.0], [1.0, y1], [2.0, 0.0]])

    def test_force_additivity_at_same_timestep(self):
        traj = straight_line(9)
        k = make_kernel(9, 0.5)
        a = np.array([0.3, -0.2])
        b = np.array([-0.1, 0.7])
        via_two = deform(deform(traj, Correction(4, 0, a), k), Correction(4, 0, b), k)
        via_sum = deform(traj, Correction(4, 0, a + b), k)
        np.testing.assert_allclose(via_two.points, via_sum.points, rtol=0, atol=1e-12)

    def test_locality_other_agents_bit_identical(self):
        traj = straight_line(9, num_agents=3)
        k = make_kernel(9, 1.0)
        out = deform(traj, Correction(4, 1, np.array([1.0, 2.0])), k)
        np.testing.assert_array_equal(out.points[:, 0:2], traj.points[:, 0:2])
        np.testing.assert_array_equal(out.points[:, 4:6], traj.points[:, 4:6])
        assert not np.array_equal(out.points[:, 2:4], traj.points[:, 2:4])

    def test_endpoints_pinned(self):
        traj = straight_line(9, num_agents=2)
        k = make_kernel(9, 1.0)
        out = deform(traj, Correction(4, 0, np.array([5.0, -3.0])), k)
        np.testing.assert_array_equal(out.points[0], traj.points[0])
        np.testing.assert_array_equal(out.points[-1], traj.points[-1])

    def test_shape_errors(self):
        traj = straight_line(9)
        k = make_kernel(7, 1.0)
        with pytest.raises(ShapeError):
            deform(traj, Correction(3, 0, np.ones(2)), k)
        k9 = make_kernel(9, 1.0)
        with pytest.raises(ShapeError):
            deform(traj, Correction(8, 0, np.ones(2)), k9)  # endpoint
        with pytest.raises(ShapeError):
            deform(traj, Correction(3, 1, np.ones(2)), k9)  # agent out of range
        with pytest.raises(ShapeError):
            Correction(0, 0, np.ones(2))  # start never moves
        with pytest.raises(ShapeError):
            Correction(3, 0, np.ones(3))


class TestPropagate:
    def test_empty_sequence(self):
        k = make_kernel(5, 1.0)
        assert propagate_sequence(straight_line(5), [], k) == []

    def test_identical_corrections_double_displacement(self):
        traj = straight_line(9)
        k = make_kernel(9, 0.5)
        c = Correction(4, 0, np.array([0.0, 1.0]))
        chain = propagate_sequence(traj, [c, c], k)
        d1 = chain[0].points - traj.points
        d2 = chain[1].points - traj.points
        np.testing.assert_allclose(d2, 2.0 * d1, rtol=0, atol=1e-12)

    def test_three_corrections_match_hand_rolled_oracle(self):
        traj = straight_line(5, num_agents=2)
        k = make_kernel(5, 0.8, order=2)
        corrections = [
            Correction(1, 0, np.array([0.2, 0.9])),
            Correction(2, 1, np.array([-0.5, 0.1])),
            Correction(3, 0, np.array([0.0, -0.4])),
        ]
        chain = propagate_sequence(traj, corrections, k)
        oracle = deform_chain_oracle(traj.points, corrections, k.profile)
        for got, want in zip(chain, oracle):
            np.testing.assert_allclose(got.points, want, rtol=0, atol=1e-12)

    def test_order_count(self):
        traj = straight_line(9)
        k = make_kernel(9, 1.0)
        cs = [Correction(t, 0, np.array([0.1, 0.0])) for t in (2, 4, 6)]
        assert len(propagate_sequence(traj, cs, k)) == 3


@st.composite
def correction_pairs(draw):
    t1 = draw(st.integers(min_value=1, max_value=7))
    t2 = draw(st.integers(min_value=1, max_value=7).filter(lambda v: v != t1))
    f = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
    return (
        Correction(t1, 0, np.array([draw(f), draw(f)])),
        Correction(t2, 0, np.array([draw(f), draw(f)])),
    )


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        scale=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
        fx=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
        fy=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
        t=st.integers(min_value=1, max_value=7),
    )
    def test_linearity_in_force(self, scale, fx, fy, t):
        traj = straight_line(9)
        k = make_kernel(9, 0.5)
        base = deform(traj, Correction(t, 0, np.array([fx, fy])), k).points - traj.points
        scaled = deform(traj, Correction(t, 0, scale * np.array([fx, fy])), k).points - traj.points
        np.testing.assert_allclose(scaled, scale * base, rtol=1e-12, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(pair=correction_pairs())
    def test_commutativity_distinct_timesteps(self, pair):
        a, b = pair
        traj = straight_line(9)
        k = make_kernel(9, 0.5)
        ab = deform(deform(traj, a, k), b, k)
        ba = deform(deform(traj, b, k), a, k)
        np.testing.assert_allclose(ab.points, ba.points, rtol=1e-12, atol=1e-12)


class TestSerialization:
    def test_round_trip(self):
        traj = straight_line(6, num_agents=2, dt=0.25)
        again = Trajectory.from_json(traj.to_json())
        np.testing.assert_array_equal(again.points, traj.points)
        assert again.dt == traj.dt

    def test_wire_shape(self):
        obj = straight_line(4, num_agents=2).to_json()
        assert len(obj["waypoints"]) == 4
        assert len(obj["waypoints"][0]) == 2  # one [x, y] pair per agent
        assert len(obj["waypoints"][0][0]) == 2

    def test_invariants_enforced(self):
        with pytest.raises(ShapeError):
            Trajectory(points=np.zeros((1, 2)))
        with pytest.raises(ShapeError):
            Trajectory(points=np.full((4, 2), np.nan))
        with pytest.raises(ShapeError):
            Trajectory(points=np.zeros((4, 3)))
