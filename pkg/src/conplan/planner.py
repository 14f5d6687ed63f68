"""Projection-based bidirectional RRT on the constraint manifold.

Two trees grow from start and goal: each iteration samples a uniform
joint-limit target, extends one tree a single projected step toward it,
then greedily extends the other tree toward the new node; trees join when
nodes come within one step and the bridging edge validates. Every edge is
interpolation-checked (projection success, bounded drift, collisions) at
the configured resolution.

Expansion order depends only on the seed, never on timing: the budget is a
deterministic iteration count derived from the time limit via
``iters_per_second`` (the virtual-time clock reported in benchmarks), with
the wall clock kept as a hard safety cut. Success at a budget T with a
given seed therefore implies success at any larger budget.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .constraints import pack
from .errors import InvalidArgumentError, InvalidEndpointError

log = logging.getLogger(__name__)

DEFAULT_STEP_SIZE = 0.1
DEFAULT_RESOLUTION = 0.02
DEFAULT_MARGIN = 0.02
DEFAULT_ITERS_PER_SECOND = 800.0
WALL_CLOCK_SLACK = 1.25


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise InvalidArgumentError("obstacle radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))


def obstacle_array(obstacles):
    if not obstacles:
        return np.zeros((0, 3))
    return np.array([[o.center[0], o.center[1], o.radius] for o in obstacles])


@dataclass(frozen=True)
class PlanningProblem:
    system: object
    q_start: np.ndarray
    q_goal: np.ndarray
    obstacles: tuple = ()
    step_size: float = DEFAULT_STEP_SIZE
    resolution: float = DEFAULT_RESOLUTION
    margin: float = DEFAULT_MARGIN
    time_limit: float = 5.0
    seed: int = 0
    iters_per_second: float = DEFAULT_ITERS_PER_SECOND
    connect_every: int = 10


@dataclass
class PlanResult:
    success: bool
    path: list
    elapsed: float
    nodes_expanded: int
    virtual_time: float


def collision_free(sys, obstacles, q, margin=DEFAULT_MARGIN):
    """No link segment intersects an obstacle disk (clearance ``margin``,
    grazing contact counts as free) and the system is self-collision-free."""
    p = pack(sys)
    return bool(p.collision_free(np.asarray(q, dtype=float),
                                 obstacle_array(obstacles), margin))


def local_path_valid(sys, obstacles, q_a, q_b, resolution=DEFAULT_RESOLUTION,
                     margin=DEFAULT_MARGIN, drift_bound=DEFAULT_STEP_SIZE):
    """Straight joint-space segment check: interpolate at ``resolution``,
    project each interior point, require projection success, drift within
    ``drift_bound`` of the interpolant, and collision freedom throughout."""
    p = pack(sys)
    W = p.edge_waypoints(np.asarray(q_a, dtype=float), np.asarray(q_b, dtype=float),
                         resolution, obstacle_array(obstacles), margin, drift_bound)
    return W is not None


class _Tree:
    def __init__(self, root, capacity, dof):
        self.nodes = np.empty((capacity, dof))
        self.nodes[0] = root
        self.parents = np.empty(capacity, dtype=np.int64)
        self.parents[0] = -1
        self.size = 1

    def nearest(self, q):
        diff = self.nodes[:self.size] - q
        d2 = np.einsum("ij,ij->i", diff, diff)
        idx = int(np.argmin(d2))
        return idx, math.sqrt(float(d2[idx]))

    def add(self, q, parent):
        if self.size == self.nodes.shape[0]:
            self.nodes = np.vstack([self.nodes, np.empty_like(self.nodes)])
            self.parents = np.concatenate([self.parents,
                                           np.empty_like(self.parents)])
        self.nodes[self.size] = q
        self.parents[self.size] = parent
        self.size += 1
        return self.size - 1

    def path_to_root(self, idx):
        out = []
        while idx != -1:
            out.append(self.nodes[idx].copy())
            idx = int(self.parents[idx])
        return out


def _try_extend(pk, tree, target, prob, obs):
    """One projected step from the tree's nearest node toward ``target``;
    returns the new node index or None. Steps that make less than one
    interpolation resolution of progress are treated as obstructed."""
    near_idx, dist = tree.nearest(target)
    if dist < 1e-12:
        return None
    q_near = tree.nodes[near_idx]
    step = min(prob.step_size * 0.8, dist)
    q_try = q_near + (target - q_near) * (step / dist)
    q_new, status, _ = pk.project(q_try)
    if status != 0:
        return None
    gap = float(np.linalg.norm(q_new - q_near))
    if gap > prob.step_size or gap < prob.resolution:
        return None
    W = pk.edge_waypoints(q_near, q_new, prob.resolution, obs, prob.margin,
                          prob.step_size)
    if W is None:
        return None
    return tree.add(q_new, near_idx)


def _try_bridge(pk, tree_a, ia, tree_b, ib, prob, obs):
    gap = float(np.linalg.norm(tree_a.nodes[ia] - tree_b.nodes[ib]))
    if gap > prob.step_size:
        return False
    W = pk.edge_waypoints(tree_a.nodes[ia], tree_b.nodes[ib], prob.resolution,
                          obs, prob.margin, prob.step_size)
    return W is not None


MAX_CONNECT_MARCH = 256


def _closest_pair(tree_a, tree_b):
    A = tree_a.nodes[:tree_a.size]
    B = tree_b.nodes[:tree_b.size]
    d2 = (np.einsum("ij,ij->i", A, A)[:, None]
          + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * (A @ B.T))
    flat = int(np.argmin(d2))
    ia, ib = flat // B.shape[0], flat % B.shape[0]
    return ia, ib, math.sqrt(max(float(d2[ia, ib]), 0.0))


def validate_path(sys, obstacles, path, step_size=DEFAULT_STEP_SIZE,
                  margin=DEFAULT_MARGIN, tol=None):
    """Re-check a returned path: on-manifold waypoints, collision freedom,
    consecutive steps within ``step_size``."""
    p = pack(sys)
    tol = tol if tol is not None else p.tol
    obs = obstacle_array(obstacles)
    for q in path:
        r = p.residual_values(np.asarray(q, dtype=float))
        if r.size and float(np.linalg.norm(r)) > tol:
            return False
        if not p.collision_free(np.asarray(q, dtype=float), obs, margin):
            return False
    for a, b in zip(path, path[1:]):
        if float(np.linalg.norm(np.asarray(b) - np.asarray(a))) > step_size + 1e-12:
            return False
    return True


def plan(prob):
    """Solve one planning problem; see the module docstring.

    Raises InvalidEndpointError when an endpoint is off-manifold, outside
    the joint limits, or in collision.
    """
    pk = pack(prob.system)
    obs = obstacle_array(prob.obstacles)
    q_start = np.asarray(prob.q_start, dtype=float)
    q_goal = np.asarray(prob.q_goal, dtype=float)
    t0 = time.perf_counter()
    for name, q in (("start", q_start), ("goal", q_goal)):
        if q.shape != (pk.dof,):
            raise InvalidEndpointError(f"{name} has wrong dimension {q.shape}")
        r = pk.residual_values(q)
        if r.size and float(np.linalg.norm(r)) > pk.tol:
            raise InvalidEndpointError(f"{name} configuration is off-manifold")
        if np.any(q < pk.lo) or np.any(q > pk.hi):
            raise InvalidEndpointError(f"{name} configuration violates joint limits")
        if not pk.collision_free(q, obs, prob.margin):
            raise InvalidEndpointError(f"{name} configuration is in collision")
    if np.array_equal(q_start, q_goal):
        return PlanResult(success=True, path=[q_start.copy()],
                          elapsed=time.perf_counter() - t0, nodes_expanded=0,
                          virtual_time=0.0)
    max_iters = max(1, int(prob.time_limit * prob.iters_per_second))
    rng = np.random.default_rng(prob.seed)
    tree_a = _Tree(q_start, 256, pk.dof)
    tree_b = _Tree(q_goal, 256, pk.dof)
    a_is_start = True
    hard_limit = WALL_CLOCK_SLACK * prob.time_limit

    def finish(join_a, join_b):
        part_a = tree_a.path_to_root(join_a)[::-1]
        part_b = tree_b.path_to_root(join_b)
        path = part_a + part_b if a_is_start else part_b[::-1] + part_a[::-1]
        return path

    # direct start-goal bridge for trivially close endpoints
    if _try_bridge(pk, tree_a, 0, tree_b, 0, prob, obs):
        path = finish(0, 0)
        return PlanResult(success=True, path=path,
                          elapsed=time.perf_counter() - t0,
                          nodes_expanded=0, virtual_time=0.0)
    for it in range(max_iters):
        if time.perf_counter() - t0 > hard_limit:
            log.debug("wall-clock safety cut after %d iterations", it)
            break
        q_rand = rng.uniform(pk.lo, pk.hi)
        new_a = _try_extend(pk, tree_a, q_rand, prob, obs)
        if new_a is not None:
            # greedy connect: march tree_b toward the fresh node
            target = tree_a.nodes[new_a]
            for _march in range(MAX_CONNECT_MARCH):
                new_b = _try_extend(pk, tree_b, target, prob, obs)
                if new_b is None:
                    break
                if _try_bridge(pk, tree_a, new_a, tree_b, new_b, prob, obs):
                    path = finish(new_a, new_b)
                    vt = min((it + 1) / prob.iters_per_second, prob.time_limit)
                    return PlanResult(success=True, path=path,
                                      elapsed=time.perf_counter() - t0,
                                      nodes_expanded=tree_a.size + tree_b.size - 2,
                                      virtual_time=vt)
        if prob.connect_every and (it + 1) % prob.connect_every == 0:
            ia, ib, gap = _closest_pair(tree_a, tree_b)
            if gap <= prob.step_size and _try_bridge(pk, tree_a, ia, tree_b, ib,
                                                     prob, obs):
                path = finish(ia, ib)
                vt = min((it + 1) / prob.iters_per_second, prob.time_limit)
                return PlanResult(success=True, path=path,
                                  elapsed=time.perf_counter() - t0,
                                  nodes_expanded=tree_a.size + tree_b.size - 2,
                                  virtual_time=vt)
        tree_a, tree_b = tree_b, tree_a
        a_is_start = not a_is_start
    return PlanResult(success=False, path=[],
                      elapsed=time.perf_counter() - t0,
                      nodes_expanded=tree_a.size + tree_b.size - 2,
                      virtual_time=prob.time_limit)
