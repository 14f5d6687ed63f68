import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conplan.errors import DimensionMismatchError, InvalidArgumentError
from conplan.geometry import PlanarPose, wrap_angle
from conplan.kinematics import (
    ChainSpec,
    forward_kinematics,
    ik_2r_analytic,
    jacobian,
    nullspace_basis,
    solve_ik,
)

from conftest import fd_jacobian, make_chain


class TestWrapAngle:
    @given(st.floats(-50.0, 50.0))
    def test_range(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi

    @given(st.floats(-50.0, 50.0))
    def test_idempotent(self, theta):
        w = wrap_angle(theta)
        assert wrap_angle(w) == w

    def test_boundary(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


class TestForwardKinematics:
    def test_straight_chain(self, two_link):
        pose = forward_kinematics(two_link, [0.0, 0.0])
        assert pose.as_array() == pytest.approx([2.0, 0.0, 0.0])

    def test_rigid_rotation(self, two_link):
        pose = forward_kinematics(two_link, [math.pi / 2, 0.0])
        assert pose.as_array() == pytest.approx([0.0, 2.0, math.pi / 2], abs=1e-12)

    def test_elbow_bend(self, two_link):
        # hand evaluation of the two-link transform product
        pose = forward_kinematics(two_link, [0.0, math.pi / 2])
        assert pose.as_array() == pytest.approx([1.0, 1.0, math.pi / 2], abs=1e-12)

    def test_base_pose_offset(self):
        chain = make_chain([1.0], base=(2.0, 3.0, math.pi / 2))
        pose = forward_kinematics(chain, [0.0])
        assert pose.as_array() == pytest.approx([2.0, 4.0, math.pi / 2], abs=1e-12)

    def test_dimension_mismatch(self, two_link):
        with pytest.raises(DimensionMismatchError):
            forward_kinematics(two_link, [0.0, 0.0, 0.0])


class TestJacobian:
    def test_theta_row_all_ones(self, three_link):
        q = np.array([0.3, -1.1, 0.9])
        J = jacobian(three_link, q)
        assert np.all(J[2] == 1.0)

    def test_straight_chain_columns(self, two_link):
        J = jacobian(two_link, [0.0, 0.0])
        assert J[:, 0] == pytest.approx([0.0, 2.0, 1.0])
        assert J[:, 1] == pytest.approx([0.0, 1.0, 1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, three_link, seed):
        rng = np.random.default_rng(seed)
        q = rng.uniform(-2.5, 2.5, size=3)

        def fk_vec(qq):
            p = forward_kinematics(three_link, qq)
            return np.array([p.x, p.y])  # theta row checked separately (wraps)

        J = jacobian(three_link, q)
        J_fd = fd_jacobian(fk_vec, q)
        assert np.max(np.abs(J[:2] - J_fd)) / max(1.0, np.abs(J_fd).max()) < 1e-4

    def test_first_order_prediction(self, three_link):
        rng = np.random.default_rng(42)
        for _ in range(10):
            q = rng.uniform(-2.0, 2.0, size=3)
            dq = rng.normal(size=3) * 1e-6
            p0 = forward_kinematics(three_link, q).as_array()
            p1 = forward_kinematics(three_link, q + dq).as_array()
            dp = p1 - p0
            dp[2] = wrap_angle(dp[2])
            pred = jacobian(three_link, q) @ dq
            assert np.linalg.norm(dp - pred) / np.linalg.norm(pred) < 1e-4


class TestNullspaceBasis:
    def test_identity_has_empty_kernel(self):
        B = nullspace_basis(np.eye(3))
        assert B.shape == (3, 0)

    def test_axis_aligned_kernel(self):
        J = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        B = nullspace_basis(J)
        assert B.shape == (3, 1)
        assert np.abs(B[:, 0]) == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_position_constrained_three_link(self, three_link, seed):
        rng = np.random.default_rng(100 + seed)
        q = rng.uniform(-2.5, 2.5, size=3)
        J = jacobian(three_link, q)[:2]  # position rows only
        B = nullspace_basis(J)
        assert B.shape == (3, 1)
        assert np.linalg.norm(J @ B) <= 1e-9
        assert abs(np.linalg.norm(B[:, 0]) - 1.0) <= 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_orthonormal_and_annihilating(self, seed):
        rng = np.random.default_rng(seed)
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 7))
        J = rng.normal(size=(m, n))
        B = nullspace_basis(J)
        if B.shape[1]:
            assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-9)
            assert np.linalg.norm(J @ B) <= 1e-9
        assert B.shape[1] == n - np.linalg.matrix_rank(J)


class TestSolveIK:
    def test_two_branches_match_analytic(self, two_link):
        sols = solve_ik(two_link, PlanarPose(1.0, 1.0), mask=(True, True, False),
                        n_restarts=60, tol=1e-8, seed=3)
        expected = ik_2r_analytic(two_link, (1.0, 1.0))
        assert len(sols) == 2 == len(expected)
        for got, exp in zip(sols, expected):
            assert got == pytest.approx(exp, abs=1e-5)
        # the two known branches of this classic target
        assert sols[0] == pytest.approx([0.0, math.pi / 2], abs=1e-5)
        assert sols[1] == pytest.approx([math.pi / 2, -math.pi / 2], abs=1e-5)

    def test_unreachable_target_empty(self, two_link):
        assert solve_ik(two_link, PlanarPose(3.0, 0.0), mask=(True, True, False),
                        n_restarts=20, tol=1e-8) == []

    def test_redundant_chain_spans_branches(self, three_link):
        sols = solve_ik(three_link, PlanarPose(1.5, 0.0), mask=(True, True, False),
                        n_restarts=200, tol=1e-8, seed=11, max_solutions=64)
        assert len(sols) >= 4
        elbow_signs = {np.sign(q[1]) for q in sols if abs(q[1]) > 0.1}
        assert elbow_signs == {-1.0, 1.0}

    def test_solutions_verify_through_fk(self, three_link):
        target = PlanarPose(1.2, 0.8)
        for q in solve_ik(three_link, target, mask=(True, True, False),
                          n_restarts=40, tol=1e-8, seed=5):
            pose = forward_kinematics(three_link, q)
            assert math.hypot(pose.x - 1.2, pose.y - 0.8) <= 1e-8
            assert three_link.inside_limits(q)

    def test_solutions_distinct(self, three_link):
        sols = solve_ik(three_link, PlanarPose(1.5, 0.0), mask=(True, True, False),
                        n_restarts=100, tol=1e-8, seed=2)
        for a in range(len(sols)):
            for b in range(a + 1, len(sols)):
                assert np.linalg.norm(sols[a] - sols[b]) > 0.05

    def test_full_pose_mask(self, three_link):
        target = PlanarPose(1.0, 1.0, math.pi / 2)
        sols = solve_ik(three_link, target, n_restarts=80, tol=1e-8, seed=9)
        assert sols
        for q in sols:
            pose = forward_kinematics(three_link, q)
            err = np.array([pose.x - target.x, pose.y - target.y,
                            wrap_angle(pose.theta - target.theta)])
            assert np.linalg.norm(err) <= 1e-8

    def test_mask_must_constrain_something(self, two_link):
        with pytest.raises(InvalidArgumentError):
            solve_ik(two_link, PlanarPose(1.0, 1.0), mask=(False, False, False))


class TestIK2RAnalyticOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_solutions_reach_target(self, two_link, seed):
        rng = np.random.default_rng(seed)
        r = rng.uniform(0.2, 1.8)
        phi = rng.uniform(-math.pi, math.pi)
        x, y = r * math.cos(phi), r * math.sin(phi)
        sols = ik_2r_analytic(two_link, (x, y))
        assert sols
        for q in sols:
            pose = forward_kinematics(two_link, q)
            assert math.hypot(pose.x - x, pose.y - y) < 1e-9


class TestChainSpecValidation:
    def test_rejects_nonpositive_lengths(self):
        with pytest.raises(InvalidArgumentError):
            ChainSpec(link_lengths=(1.0, 0.0), joint_limits=((-1, 1), (-1, 1)))

    def test_rejects_bad_limits(self):
        with pytest.raises(InvalidArgumentError):
            ChainSpec(link_lengths=(1.0,), joint_limits=((1.0, -1.0),))

    def test_rejects_limit_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            ChainSpec(link_lengths=(1.0, 1.0), joint_limits=((-1, 1),))
