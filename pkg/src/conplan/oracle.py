"""Ground-truth connectivity via a dense validated roadmap.

Samples the constraint manifold, validates every within-radius pair with
the same local-path check the planner uses (so edges are certificates:
each stores its projected waypoints), and takes union-find components.
``same_component`` answers reachability queries by attaching each query
configuration to its nearest validated sample. Evaluation-only: selection
strategies never see this module's output.

``with_obstacles`` cheaply re-filters a base (obstacle-free) graph for one
scene: samples and stored edge waypoints are collision-rechecked, no
re-projection needed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import container
from .configfile import system_hash
from .constraints import pack, sample_on_manifold
from .errors import GenerationError, ParseError, UnattachableQueryError
from .planner import DEFAULT_MARGIN, DEFAULT_RESOLUTION, DEFAULT_STEP_SIZE

log = logging.getLogger(__name__)

# oracle edges may wander far from the straight-line interpolant (large
# drift) but their projected waypoint chain must stay continuous
DEFAULT_ORACLE_RESOLUTION = 0.05
DEFAULT_ORACLE_GAP = 0.25


class UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, x):
        root = int(x)
        while self.parent[root] != root:
            root = int(self.parent[root])
        while self.parent[x] != root:
            self.parent[x], x = root, int(self.parent[x])
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def components(self):
        """Labels 0..C-1 in order of first appearance."""
        n = len(self.parent)
        labels = np.full(n, -1, dtype=np.int64)
        nxt = 0
        for i in range(n):
            r = self.find(i)
            if labels[r] == -1:
                labels[r] = nxt
                nxt += 1
            labels[i] = labels[r]
        return labels


@dataclass
class OracleGraph:
    system: object
    samples: np.ndarray          # n x dof
    radius: float
    edges: list                  # (i, j) validated pairs
    edge_waypoints: dict         # (i, j) -> waypoint array
    component: np.ndarray        # per-sample component label
    obstacles: np.ndarray        # m x 3 array used for validation
    margin: float = DEFAULT_MARGIN
    resolution: float = DEFAULT_RESOLUTION
    drift_bound: float = DEFAULT_STEP_SIZE
    max_gap: float = DEFAULT_ORACLE_GAP

    @property
    def n_components(self):
        return int(self.component.max()) + 1 if len(self.component) else 0


def build_from_samples(sys, samples, radius, obstacles=None,
                       margin=DEFAULT_MARGIN, resolution=DEFAULT_ORACLE_RESOLUTION,
                       drift_bound=None, max_gap=DEFAULT_ORACLE_GAP):
    """Validate all within-radius pairs of an explicit sample pool and
    label components. Colliding samples are dropped first."""
    pk = pack(sys)
    if drift_bound is None:
        drift_bound = radius
    obs = np.zeros((0, 3)) if obstacles is None else np.asarray(obstacles, dtype=float)
    kept = [np.asarray(q, dtype=float) for q in samples
            if pk.collision_free(np.asarray(q, dtype=float), obs, margin)]
    if len(kept) < 2:
        raise GenerationError(
            f"only {len(kept)} usable oracle samples out of {len(samples)}")
    S = np.array(kept)
    n = len(S)
    uf = UnionFind(n)
    edges = []
    waypoints = {}
    for i in range(n):
        diff = S[i + 1:] - S[i]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        for off in np.flatnonzero(dist <= radius):
            j = i + 1 + int(off)
            W = pk.edge_waypoints(S[i], S[j], resolution, obs, margin,
                                  drift_bound, max_gap=max_gap)
            if W is not None:
                edges.append((i, j))
                waypoints[(i, j)] = W
                uf.union(i, j)
    comp = uf.components()
    log.info("oracle: %d samples, %d edges, %d components",
             n, len(edges), int(comp.max()) + 1)
    return OracleGraph(system=sys, samples=S, radius=radius, edges=edges,
                       edge_waypoints=waypoints, component=comp, obstacles=obs,
                       margin=margin, resolution=resolution,
                       drift_bound=drift_bound, max_gap=max_gap)


def stratified_pool(sys, n_uniform, n_pose, seed, margin=DEFAULT_MARGIN,
                    ik_restarts=16, ik_cap=3):
    """Mixed sample pool: uniform manifold samples plus IK solutions of
    uniformly sampled task poses. Pose-space stratification represents
    thin manifold regions (narrow passages) that joint-space rejection
    sampling rarely hits."""
    from .dataset import ik_candidates, sample_object_pose
    pk = pack(sys)
    pool = [q for q in sample_on_manifold(sys, rng_seed=seed, n=n_uniform)
            if pk.self_collision_free(q, margin)]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    guard = 0
    n_target = len(pool) + n_pose
    while len(pool) < n_target and guard < 8 * n_pose:
        guard += 1
        pose, targets = sample_object_pose(sys, rng)
        if pose is None:
            continue
        pool.extend(ik_candidates(sys, targets, seed=seed + 100_000 + guard,
                                  restarts=ik_restarts, cap=ik_cap, margin=margin))
    return pool


def build_oracle(sys, n_samples, radius, obstacles=None, seed=0,
                 margin=DEFAULT_MARGIN, resolution=DEFAULT_ORACLE_RESOLUTION,
                 drift_bound=None, max_gap=DEFAULT_ORACLE_GAP,
                 extra_samples=None):
    """Sample the manifold, validate within-radius pairs, label components.

    Deterministic given ``seed``. ``extra_samples`` (e.g. pose-stratified
    IK solutions or benchmark candidates) join the uniform pool so thin
    manifold regions and query points are represented. Raises
    GenerationError when fewer than two collision-free samples survive.
    """
    if n_samples < 2:
        raise GenerationError("oracle needs n_samples >= 2")
    pool = list(sample_on_manifold(sys, rng_seed=seed, n=n_samples))
    if extra_samples is not None:
        pool.extend(np.asarray(q, dtype=float) for q in extra_samples)
    return build_from_samples(sys, pool, radius, obstacles=obstacles,
                              margin=margin, resolution=resolution,
                              drift_bound=drift_bound, max_gap=max_gap)


def with_obstacles(base, obstacles):
    """Re-filter a base graph for a scene: drop colliding samples and
    edges whose stored waypoints collide; recompute components. No
    re-projection happens, so this is cheap per scene."""
    from . import _kernels
    pk = pack(base.system)
    obs = np.asarray(obstacles, dtype=float) if obstacles is not None \
        else np.zeros((0, 3))
    n = len(base.samples)
    alive = np.array([pk.collision_free(base.samples[i], obs, base.margin)
                      for i in range(n)])
    uf = UnionFind(n)
    edges = []
    waypoints = {}
    for (i, j) in base.edges:
        if not (alive[i] and alive[j]):
            continue
        W = base.edge_waypoints[(i, j)]
        if _kernels.waypoints_collision_free(pk.lengths, pk.off, pk.bases,
                                             W, obs, base.margin):
            edges.append((i, j))
            waypoints[(i, j)] = W
            uf.union(i, j)
    comp = uf.components()
    comp[~alive] = -1
    return OracleGraph(system=base.system, samples=base.samples,
                       radius=base.radius, edges=edges, edge_waypoints=waypoints,
                       component=comp, obstacles=obs, margin=base.margin,
                       resolution=base.resolution, drift_bound=base.drift_bound,
                       max_gap=base.max_gap)


def attach(g, q, max_candidates=12):
    """Component label of the nearest sample reachable from ``q`` by a
    validated local path; UnattachableQueryError when none works."""
    pk = pack(g.system)
    q = np.asarray(q, dtype=float)
    diff = g.samples - q
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.argsort(dist, kind="stable")
    tried = 0
    for idx in order:
        if dist[idx] > g.radius or tried >= max_candidates:
            break
        if g.component[idx] == -1:
            continue
        tried += 1
        W = pk.edge_waypoints(q, g.samples[idx], g.resolution, g.obstacles,
                              g.margin, g.drift_bound, max_gap=g.max_gap)
        if W is not None:
            return int(g.component[idx])
    raise UnattachableQueryError(
        f"configuration not attachable within radius {g.radius}")


def same_component(g, q_a, q_b):
    """True iff both configurations attach to the same oracle component."""
    return attach(g, q_a) == attach(g, q_b)


def graph_path(g, i, j):
    """Sample-index path between samples i and j through validated edges,
    or None when disconnected (BFS; used to certify soundness)."""
    if g.component[i] != g.component[j] or g.component[i] == -1:
        return None
    adj = {}
    for (a, b) in g.edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    prev = {int(i): None}
    queue = [int(i)]
    while queue:
        x = queue.pop(0)
        if x == int(j):
            path = []
            while x is not None:
                path.append(x)
                x = prev[x]
            return path[::-1]
        for y in adj.get(x, []):
            if y not in prev:
                prev[y] = x
                queue.append(y)
    return None


def save_oracle(g, path):
    """Persist samples + component labels ('oracle' section); edges are
    cheap to revalidate and are not stored."""
    meta = [("system_hash", system_hash(g.system)),
            ("radius", container.fmt_float(g.radius)),
            ("margin", container.fmt_float(g.margin)),
            ("resolution", container.fmt_float(g.resolution)),
            ("drift_bound", container.fmt_float(g.drift_bound)),
            ("max_gap", container.fmt_float(g.max_gap))]
    rows = [[container.fmt_floats(g.samples[i]), str(int(g.component[i]))]
            for i in range(len(g.samples))]
    container.write_container(path, "oracle", meta, [("oracle", [], rows)])


def load_oracle(sys, path):
    _kind, meta, sections = container.read_container(path, expect_kind="oracle")
    meta_d = dict(meta)
    if meta_d.get("system_hash") != system_hash(sys):
        raise ParseError("oracle file belongs to a different system", path=path)
    if "oracle" not in sections:
        raise ParseError("oracle container has no oracle section", path=path)
    _extra, rows = sections["oracle"]
    samples = []
    comp = []
    for lineno, row in enumerate(rows):
        try:
            samples.append(container.parse_floats(row[0]))
            comp.append(int(row[1]))
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad oracle row: {exc}", path=path,
                             line=lineno + 1) from None
    return OracleGraph(system=sys, samples=np.array(samples),
                       radius=float(meta_d["radius"]), edges=[],
                       edge_waypoints={}, component=np.array(comp, dtype=np.int64),
                       obstacles=np.zeros((0, 3)),
                       margin=float(meta_d["margin"]),
                       resolution=float(meta_d["resolution"]),
                       drift_bound=float(meta_d["drift_bound"]),
                       max_gap=float(meta_d.get("max_gap", DEFAULT_ORACLE_GAP)))
