"""Planar n-link serial chains: forward kinematics, Jacobians, IK.

Joint configurations are plain float64 ndarrays of angles (radians), one
entry per joint; higher-level modules concatenate the chains of a system
into a single vector. The inverse-kinematics solver is damped least squares
with uniform random restarts inside the joint limits; ``ik_2r_analytic``
gives the closed-form two-link solutions used as an independent oracle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, InvalidArgumentError
from .geometry import PlanarPose, wrap_angle

DEFAULT_DLS_DAMPING = 1e-3
DEFAULT_DEDUPE_TOL = 0.05
DEFAULT_RANK_RTOL = 1e-8


@dataclass(frozen=True)
class ChainSpec:
    """Geometry and limits of one planar revolute chain.

    link_lengths are meters (all > 0); joint_limits are per-joint
    (lo, hi) radian intervals with lo < hi, one per link.
    """

    link_lengths: tuple
    joint_limits: tuple
    base_pose: PlanarPose = field(default_factory=lambda: PlanarPose(0.0, 0.0, 0.0))

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        if len(lengths) == 0:
            raise InvalidArgumentError("chain needs at least one link")
        if any(v <= 0.0 for v in lengths):
            raise InvalidArgumentError(f"link lengths must be positive, got {lengths}")
        if len(limits) != len(lengths):
            raise InvalidArgumentError(
                f"{len(limits)} joint limits for {len(lengths)} links")
        if any(lo >= hi for lo, hi in limits):
            raise InvalidArgumentError(f"joint limits need lo < hi, got {limits}")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "joint_limits", limits)

    @property
    def n_joints(self):
        return len(self.link_lengths)

    def lengths_array(self):
        return np.array(self.link_lengths, dtype=float)

    def limits_arrays(self):
        lims = np.array(self.joint_limits, dtype=float)
        return lims[:, 0].copy(), lims[:, 1].copy()

    def reach(self):
        return float(sum(self.link_lengths))

    def inside_limits(self, q):
        lo, hi = self.limits_arrays()
        return bool(np.all(q >= lo) and np.all(q <= hi))


def check_config(q, dof):
    """Validate and coerce a joint configuration to a float64 vector."""
    q = np.asarray(q, dtype=float)
    if q.shape != (dof,):
        raise DimensionMismatchError(f"expected {dof} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentError("joint configuration contains non-finite entries")
    return q


def forward_kinematics(chain, q):
    """End-effector pose of ``chain`` at configuration ``q``."""
    q = check_config(q, chain.n_joints)
    pose = _kernels.chain_fk(chain.lengths_array(), chain.base_pose.as_array(), q)
    return PlanarPose(pose[0], pose[1], pose[2])


def link_points(chain, q):
    """Base and joint/tip positions, (n+1) x 2."""
    q = check_config(q, chain.n_joints)
    return _kernels.chain_points(chain.lengths_array(), chain.base_pose.as_array(), q)


def jacobian(chain, q):
    """3 x n Jacobian of the end-effector (x, y, theta) w.r.t. q.

    The heading row is identically 1 for a planar revolute chain.
    """
    q = check_config(q, chain.n_joints)
    return _kernels.chain_jacobian(chain.lengths_array(), chain.base_pose.as_array(), q)


def nullspace_basis(J, rank_rtol=DEFAULT_RANK_RTOL):
    """Orthonormal basis of ker(J) as an n x m matrix (m may be 0).

    Singular values below ``rank_rtol`` times the largest are treated as
    zero when detecting rank.
    """
    J = np.asarray(J, dtype=float)
    if J.size == 0:
        return np.eye(J.shape[1] if J.ndim == 2 else 0)
    _u, s, vt = np.linalg.svd(J)
    smax = s[0] if len(s) else 0.0
    rank = int(np.sum(s > rank_rtol * smax)) if smax > 0.0 else 0
    return vt[rank:].T.copy()


def solve_ik(chain, target, mask=(True, True, True), n_restarts=50, tol=1e-6,
             seed=0, max_solutions=32, max_iters=100,
             damping=DEFAULT_DLS_DAMPING, dedupe_tol=DEFAULT_DEDUPE_TOL):
    """Enumerate IK solutions by damped least squares with random restarts.

    ``mask`` selects which of (x, y, theta) are constrained. Solutions are
    deduplicated at ``dedupe_tol`` in joint-space L2 distance, verified to
    satisfy the masked task error within ``tol``, kept inside the joint
    limits, and returned sorted lexicographically. Empty list means no
    solution was found (e.g. unreachable target).
    """
    if isinstance(target, PlanarPose):
        target = target.as_array()
    target = np.asarray(target, dtype=float)
    if target.shape != (3,):
        raise DimensionMismatchError(f"target must be (x, y, theta), got {target.shape}")
    mask_arr = np.array([1 if m else 0 for m in mask], dtype=np.int64)
    if mask_arr.shape != (3,) or mask_arr.sum() == 0:
        raise InvalidArgumentError("mask must enable at least one of x, y, theta")
    lengths = chain.lengths_array()
    base = chain.base_pose.as_array()
    lo, hi = chain.limits_arrays()
    rng = np.random.default_rng(seed)
    solutions = []
    for _ in range(n_restarts):
        q0 = rng.uniform(lo, hi)
        q, ok = _kernels.dls_ik(lengths, base, lo, hi, target, mask_arr, q0,
                                tol, damping, max_iters)
        if not ok:
            continue
        if any(np.linalg.norm(q - s) < dedupe_tol for s in solutions):
            continue
        solutions.append(q)
        if len(solutions) >= max_solutions:
            break
    solutions.sort(key=tuple)
    return solutions


def ik_2r_analytic(chain, target_xy):
    """Closed-form position IK for a two-link chain (elbow-down, elbow-up).

    Returns the solutions that lie inside the joint limits; used as the
    independent oracle for :func:`solve_ik`. Raises if the chain is not 2R.
    """
    if chain.n_joints != 2:
        raise InvalidArgumentError("analytic IK requires a 2-link chain")
    l1, l2 = chain.link_lengths
    # express the target in the chain's base frame
    rel = PlanarPose(float(target_xy[0]), float(target_xy[1]), 0.0).relative_to(chain.base_pose)
    x, y = rel.x, rel.y
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0 or c2 < -1.0:
        return []
    q2a = math.acos(c2)
    branches = [q2a, -q2a] if q2a != 0.0 else [q2a]
    sols = []
    for q2 in branches:
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        q = np.array([wrap_angle(q1), wrap_angle(q2)], dtype=float)
        if chain.inside_limits(q):
            sols.append(q)
    sols.sort(key=tuple)
    return sols
