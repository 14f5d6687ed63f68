import math

import numpy as np
import pytest

from conplan.constraints import SystemSpec, sample_on_manifold
from conplan.dataset import ik_candidates, sample_object_pose
from conplan.errors import InvalidEndpointError
from conplan.planner import (
    Obstacle,
    PlanningProblem,
    collision_free,
    local_path_valid,
    plan,
    validate_path,
)

from conftest import dual_arm_system, make_chain


def bench_system():
    return dual_arm_system(limit=2.2, base_gap=2.6, bar=1.2)


@pytest.fixture(scope="module")
def regime_split():
    """Deterministic candidate sets spanning the two arm-winding regimes."""
    sys_ = bench_system()
    rng = np.random.default_rng(123)
    while True:
        pose, targets = sample_object_pose(sys_, rng)
        if pose is None:
            continue
        cands = ik_candidates(sys_, targets, seed=int(rng.integers(1 << 30)),
                              restarts=40, cap=10)
        pos = [q for q in cands if q[5:].sum() > 0.3]
        neg = [q for q in cands if q[5:].sum() < -0.3]
        if len(pos) >= 2 and len(neg) >= 1:
            return sys_, pos, neg


class TestPlan:
    def test_simple_arm_connects(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        prob = PlanningProblem(system=sys_, q_start=np.zeros(2),
                               q_goal=np.array([0.3, 0.3]), time_limit=5.0, seed=0)
        res = plan(prob)
        assert res.success
        assert len(res.path) >= 2
        assert validate_path(sys_, (), res.path)

    def test_identity_query(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        q = np.array([0.5, -0.2])
        res = plan(PlanningProblem(system=sys_, q_start=q, q_goal=q,
                                   time_limit=1.0, seed=0))
        assert res.success
        assert len(res.path) == 1
        assert np.array_equal(res.path[0], q)

    def test_same_regime_succeeds_and_validates(self, regime_split):
        sys_, pos, _neg = regime_split
        prob = PlanningProblem(system=sys_, q_start=pos[0], q_goal=pos[1],
                               time_limit=5.0, seed=1)
        res = plan(prob)
        assert res.success
        assert validate_path(sys_, (), res.path)
        steps = [np.linalg.norm(b - a) for a, b in zip(res.path, res.path[1:])]
        assert max(steps) <= prob.step_size + 1e-12

    def test_cross_regime_fails_within_budget(self, regime_split):
        sys_, pos, neg = regime_split
        prob = PlanningProblem(system=sys_, q_start=pos[0], q_goal=neg[0],
                               time_limit=1.5, seed=1)
        res = plan(prob)
        assert not res.success
        assert res.virtual_time == prob.time_limit

    def test_monotone_budget(self, regime_split):
        sys_, pos, _neg = regime_split
        short = plan(PlanningProblem(system=sys_, q_start=pos[0], q_goal=pos[1],
                                     time_limit=1.0, seed=7))
        longer = plan(PlanningProblem(system=sys_, q_start=pos[0], q_goal=pos[1],
                                      time_limit=4.0, seed=7))
        if short.success:
            assert longer.success
            assert len(short.path) == len(longer.path)
            for a, b in zip(short.path, longer.path):
                assert np.array_equal(a, b)

    def test_deterministic_result(self, regime_split):
        sys_, pos, _neg = regime_split
        kw = dict(system=sys_, q_start=pos[0], q_goal=pos[1],
                  time_limit=2.0, seed=3)
        r1 = plan(PlanningProblem(**kw))
        r2 = plan(PlanningProblem(**kw))
        assert r1.success == r2.success
        assert r1.nodes_expanded == r2.nodes_expanded
        assert r1.virtual_time == r2.virtual_time
        for a, b in zip(r1.path, r2.path):
            assert np.array_equal(a, b)

    def test_off_manifold_endpoint_rejected(self, dual_4r):
        q = np.full(8, 0.3)  # generic config violates the grasp constraint
        with pytest.raises(InvalidEndpointError):
            plan(PlanningProblem(system=dual_4r, q_start=q, q_goal=q,
                                 time_limit=1.0, seed=0))

    def test_colliding_endpoint_rejected(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        blocking = (Obstacle(center=(1.0, 0.0), radius=0.4),)
        with pytest.raises(InvalidEndpointError):
            plan(PlanningProblem(system=sys_, q_start=np.zeros(2),
                                 q_goal=np.array([0.3, 0.3]),
                                 obstacles=blocking, time_limit=1.0, seed=0))

    def test_obstacle_detour(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        obstacles = (Obstacle(center=(1.6, 0.8), radius=0.25),)
        q_start = np.array([0.0, 0.0])
        q_goal = np.array([1.4, 0.0])
        prob = PlanningProblem(system=sys_, q_start=q_start, q_goal=q_goal,
                               obstacles=obstacles, time_limit=5.0, seed=2)
        res = plan(prob)
        assert res.success
        assert validate_path(sys_, obstacles, res.path)


class TestCollisionFree:
    def test_far_obstacle(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        assert collision_free(sys_, (Obstacle(center=(50.0, 50.0), radius=1.0),),
                              np.zeros(2))

    def test_obstacle_on_link(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        assert not collision_free(sys_, (Obstacle(center=(0.5, 0.0), radius=0.5),),
                                  np.zeros(2))

    def test_grazing_contact_is_free(self):
        chain = make_chain([1.0])
        sys_ = SystemSpec(chains=(chain,))
        # link along x from (0,0) to (1,0); obstacle center exactly at
        # radius + margin above the midpoint
        margin = 0.02
        obstacle = Obstacle(center=(0.5, 0.3 + margin), radius=0.3)
        assert collision_free(sys_, (obstacle,), np.zeros(1), margin=margin)
        closer = Obstacle(center=(0.5, 0.3 + margin - 1e-9), radius=0.3)
        assert not collision_free(sys_, (closer,), np.zeros(1), margin=margin)


class TestLocalPathValid:
    def test_zero_length(self, dual_4r):
        from conplan.dataset import self_collision_free
        q = next(q for q in sample_on_manifold(dual_4r, rng_seed=0, n=20)
                 if self_collision_free(dual_4r, q))
        assert local_path_valid(dual_4r, (), q, q)

    def test_unconstrained_always_valid(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.uniform(-2.0, 2.0, size=2)
            b = rng.uniform(-2.0, 2.0, size=2)
            assert local_path_valid(sys_, (), a, b, drift_bound=10.0)

    def test_cross_regime_interpolant_invalid(self, regime_split):
        sys_, pos, neg = regime_split
        assert not local_path_valid(sys_, (), pos[0], neg[0], resolution=0.01)

    def test_blocked_by_obstacle(self, two_link):
        sys_ = SystemSpec(chains=(two_link,))
        a = np.array([0.0, 0.0])
        b = np.array([1.2, 0.0])
        # the sweep of the elbow passes through this disk
        obstacles = (Obstacle(center=(1.2, 0.9), radius=0.3),)
        assert local_path_valid(sys_, (), a, b, drift_bound=10.0)
        assert not local_path_valid(sys_, obstacles, a, b, drift_bound=10.0)


class TestCompletenessSmoke:
    def test_same_regime_runs_mostly_succeed(self, regime_split):
        sys_, pos, _neg = regime_split
        ok = 0
        for seed in range(6):
            res = plan(PlanningProblem(system=sys_, q_start=pos[0], q_goal=pos[1],
                                       time_limit=5.0, seed=seed))
            ok += res.success
        assert ok >= 5
