import numpy as np
import pytest

from conplan.constraints import ConstraintSpec, SystemSpec
from conplan.geometry import PlanarPose
from conplan.kinematics import ChainSpec


def make_chain(lengths, limit=np.pi, base=(0.0, 0.0, 0.0)):
    return ChainSpec(
        link_lengths=tuple(lengths),
        joint_limits=tuple((-limit, limit) for _ in lengths),
        base_pose=PlanarPose(*base),
    )


@pytest.fixture
def two_link():
    return make_chain([1.0, 1.0])


@pytest.fixture
def three_link():
    return make_chain([1.0, 1.0, 1.0])


def dual_arm_system(link=0.5, n_links=4, limit=2.7, base_gap=2.0, bar=0.4,
                    fixed_orientation=()):
    """Two facing n-link arms holding a rigid bar of length ``bar``."""
    left = ChainSpec(
        link_lengths=(link,) * n_links,
        joint_limits=((-limit, limit),) * n_links,
        base_pose=PlanarPose(-base_gap / 2.0, 0.0, 0.0),
    )
    right = ChainSpec(
        link_lengths=(link,) * n_links,
        joint_limits=((-limit, limit),) * n_links,
        base_pose=PlanarPose(base_gap / 2.0, 0.0, 0.0),
    )
    constraint = ConstraintSpec(
        grasp_pairs=((0, 1, PlanarPose(bar, 0.0, np.pi)),),
        fixed_orientation=tuple(fixed_orientation),
    )
    return SystemSpec(chains=(left, right), constraint=constraint)


@pytest.fixture
def dual_2r():
    return dual_arm_system(link=1.0, n_links=2, limit=np.pi - 1e-6, base_gap=3.0, bar=0.5)


@pytest.fixture
def dual_4r():
    return dual_arm_system()


def adjusted_rand_index(a, b):
    """ARI between two labelings (contingency-table formula)."""
    a = np.asarray(a)
    b = np.asarray(b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ua), len(ub)), dtype=np.int64)
    for x, y in zip(ia, ib):
        table[x, y] += 1

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    n = comb2(len(a))
    expected = sum_a * sum_b / n
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def fd_jacobian(f, q, step=1e-6):
    """Central finite-difference Jacobian of vector function f at q."""
    q = np.asarray(q, dtype=float)
    f0 = np.asarray(f(q), dtype=float)
    J = np.zeros((f0.size, q.size))
    for k in range(q.size):
        qp = q.copy()
        qm = q.copy()
        qp[k] += step
        qm[k] -= step
        J[:, k] = (np.asarray(f(qp)) - np.asarray(f(qm))) / (2.0 * step)
    return J
