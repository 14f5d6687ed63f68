"""Closed-chain constraints over multi-arm planar systems.

A system is a list of chains plus a :class:`ConstraintSpec`: grasp pairs
pinning the relative pose between two end-effectors, and optional fixed
heading terms. The feasible manifold is the set of in-limit configurations
with zero constraint residual; :func:`project` moves a configuration onto
it by Gauss-Newton, and :func:`sample_on_manifold` combines uniform
sampling with projection.

System-level joint configurations concatenate the chains' joints in order.
"""

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, InvalidArgumentError
from .geometry import PlanarPose
from .kinematics import ChainSpec, check_config

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_PROJECT_ITERS = 50
DEFAULT_PROJECT_DAMPING = 1e-6


@dataclass(frozen=True)
class ConstraintSpec:
    """Grasp pairs (i, j, desired relative pose of j's tip in i's tip frame)
    plus optional fixed-heading terms (chain index, target theta)."""

    grasp_pairs: tuple = ()
    fixed_orientation: tuple = ()
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        pairs = tuple((int(i), int(j), rel if isinstance(rel, PlanarPose)
                       else PlanarPose(*rel)) for i, j, rel in self.grasp_pairs)
        fixed = tuple((int(i), float(th)) for i, th in self.fixed_orientation)
        for i, j, _rel in pairs:
            if i == j:
                raise InvalidArgumentError(f"grasp pair ({i}, {j}) must join two chains")
        keys = [(i, j) for i, j, _ in pairs]
        if len(set(keys)) != len(keys):
            raise InvalidArgumentError("duplicate grasp pairs")
        if self.tol <= 0.0:
            raise InvalidArgumentError("constraint tol must be positive")
        object.__setattr__(self, "grasp_pairs", pairs)
        object.__setattr__(self, "fixed_orientation", fixed)
        object.__setattr__(self, "tol", float(self.tol))

    @property
    def residual_dim(self):
        return 3 * len(self.grasp_pairs) + len(self.fixed_orientation)


@dataclass(frozen=True)
class SystemSpec:
    """A multi-chain system and its constraint."""

    chains: tuple
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)

    def __post_init__(self):
        chains = tuple(self.chains)
        if not chains:
            raise InvalidArgumentError("system needs at least one chain")
        if not all(isinstance(c, ChainSpec) for c in chains):
            raise InvalidArgumentError("chains must be ChainSpec instances")
        n = len(chains)
        for i, j, _ in self.constraint.grasp_pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgumentError(f"grasp pair ({i}, {j}) references a missing chain")
        for i, _ in self.constraint.fixed_orientation:
            if not (0 <= i < n):
                raise InvalidArgumentError(f"fixed-orientation chain {i} does not exist")
        object.__setattr__(self, "chains", chains)

    @property
    def dof(self):
        return sum(c.n_joints for c in self.chains)

    def chain_slice(self, c):
        start = sum(ch.n_joints for ch in self.chains[:c])
        return slice(start, start + self.chains[c].n_joints)


class PackedSystem:
    """Flat-array view of a SystemSpec for the numerical kernels."""

    def __init__(self, sys):
        self.spec = sys
        self.lengths = np.concatenate([c.lengths_array() for c in sys.chains])
        off = np.zeros(len(sys.chains) + 1, dtype=np.int64)
        for c, chain in enumerate(sys.chains):
            off[c + 1] = off[c] + chain.n_joints
        self.off = off
        self.bases = np.stack([c.base_pose.as_array() for c in sys.chains])
        self.lo = np.concatenate([c.limits_arrays()[0] for c in sys.chains])
        self.hi = np.concatenate([c.limits_arrays()[1] for c in sys.chains])
        pairs = sys.constraint.grasp_pairs
        self.gi = np.array([p[0] for p in pairs], dtype=np.int64)
        self.gj = np.array([p[1] for p in pairs], dtype=np.int64)
        self.grel = (np.stack([p[2].as_array() for p in pairs])
                     if pairs else np.zeros((0, 3), dtype=float))
        fixed = sys.constraint.fixed_orientation
        self.fci = np.array([f[0] for f in fixed], dtype=np.int64)
        self.fth = np.array([f[1] for f in fixed], dtype=float)
        self.tol = sys.constraint.tol
        self.dof = int(off[-1])

    def fk(self, q):
        return _kernels.system_fk(self.lengths, self.off, self.bases, q)

    def residual_values(self, q):
        return _kernels.residual(self.lengths, self.off, self.bases,
                                 self.gi, self.gj, self.grel, self.fci, self.fth, q)

    def residual_and_jacobian(self, q):
        return _kernels.residual_jacobian(self.lengths, self.off, self.bases,
                                          self.gi, self.gj, self.grel,
                                          self.fci, self.fth, q)

    def project(self, q, max_iters=DEFAULT_PROJECT_ITERS,
                damping=DEFAULT_PROJECT_DAMPING):
        return _kernels.project(self.lengths, self.off, self.bases, self.lo, self.hi,
                                self.gi, self.gj, self.grel, self.fci, self.fth,
                                q, self.tol, damping, max_iters)

    def self_collision_free(self, q, margin):
        return _kernels.self_collision_free(self.lengths, self.off, self.bases, q, margin)

    def collision_free(self, q, obstacles, margin):
        return _kernels.config_collision_free(self.lengths, self.off, self.bases,
                                              q, obstacles, margin)

    def edge_waypoints(self, qa, qb, resolution, obstacles, margin, drift_bound,
                       max_gap=None, max_iters=DEFAULT_PROJECT_ITERS,
                       damping=DEFAULT_PROJECT_DAMPING):
        if max_gap is None:
            max_gap = drift_bound
        return _kernels.edge_waypoints(self.lengths, self.off, self.bases,
                                       self.lo, self.hi, self.gi, self.gj, self.grel,
                                       self.fci, self.fth, qa, qb, resolution,
                                       obstacles, margin, self.tol, damping,
                                       max_iters, drift_bound, max_gap)


@functools.lru_cache(maxsize=64)
def pack(sys):
    """Cached PackedSystem for a SystemSpec (specs are frozen/hashable)."""
    return PackedSystem(sys)


@dataclass(frozen=True)
class ConstraintResidual:
    """Residual vector and its Jacobian at one configuration."""

    values: np.ndarray
    jacobian: np.ndarray


def residual(sys, q):
    """Constraint residual of ``sys`` at ``q``: (dx, dy, dtheta) per grasp
    pair, wrapped heading error per fixed-orientation term."""
    p = pack(sys)
    q = check_config(q, p.dof)
    values, jac = p.residual_and_jacobian(q)
    return ConstraintResidual(values=values, jacobian=jac)


def residual_norm(sys, q):
    p = pack(sys)
    q = check_config(q, p.dof)
    v = p.residual_values(q)
    return float(np.linalg.norm(v)) if v.size else 0.0


def project(sys, q, max_iters=DEFAULT_PROJECT_ITERS):
    """Project ``q`` onto the constraint manifold; None on failure.

    A configuration already on the manifold is returned unchanged (zero
    iterations). Joint limits are enforced by clamping after each step.
    """
    p = pack(sys)
    q = check_config(q, p.dof)
    q_out, status, _iters = p.project(q, max_iters=max_iters)
    if status != _kernels.PROJECT_OK:
        return None
    return q_out


def sample_on_manifold(sys, rng_seed, n, max_attempts=None):
    """Uniform joint-limit samples projected onto the manifold.

    Deterministic given ``rng_seed``. May return fewer than ``n`` samples
    when the projection acceptance rate is low; the rate is logged.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    p = pack(sys)
    rng = np.random.default_rng(rng_seed)
    if p.grel.shape[0] == 0 and len(p.fci) == 0:
        return [rng.uniform(p.lo, p.hi) for _ in range(n)]
    if max_attempts is None:
        max_attempts = 60 * n
    out = []
    attempts = 0
    while len(out) < n and attempts < max_attempts:
        attempts += 1
        q0 = rng.uniform(p.lo, p.hi)
        q_out, status, _ = p.project(q0)
        if status == _kernels.PROJECT_OK:
            out.append(q_out)
    log.debug("sample_on_manifold: %d/%d accepted (%d attempts)", len(out), n, attempts)
    return out


def task_masks_default(sys):
    """Per-chain (x, y, theta) task masks for pose-conditioned IK.

    Chains in a grasp pair get a full pose task; chains under a fixed
    heading get full pose as well (theta pinned by the constraint); other
    chains get a position-only task.
    """
    grasped = set()
    for i, j, _ in sys.constraint.grasp_pairs:
        grasped.add(i)
        grasped.add(j)
    fixed = {i for i, _ in sys.constraint.fixed_orientation}
    masks = []
    for c in range(len(sys.chains)):
        if c in grasped or c in fixed:
            masks.append((True, True, True))
        else:
            masks.append((True, True, False))
    return tuple(masks)


def task_jacobian(sys, q, masks=None):
    """Stacked masked end-effector Jacobian of every chain at ``q``.

    Its kernel spans the joint motions that keep all chain tasks fixed to
    first order (the self-motion directions recorded with dataset configs).
    """
    from .kinematics import jacobian as chain_jacobian_of
    p = pack(sys)
    q = check_config(q, p.dof)
    if masks is None:
        masks = task_masks_default(sys)
    rows = []
    for c, chain in enumerate(sys.chains):
        sl = sys.chain_slice(c)
        Jc = chain_jacobian_of(chain, q[sl])
        keep = [k for k in range(3) if masks[c][k]]
        block = np.zeros((len(keep), p.dof), dtype=float)
        block[:, sl] = Jc[keep, :]
        rows.append(block)
    return np.vstack(rows) if rows else np.zeros((0, p.dof))
