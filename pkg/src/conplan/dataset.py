"""Configuration datasets: task-space pose sampling + IK enumeration with
self-collision filtering and self-motion (null-space) recording, plus the
modified Swiss-Roll synthetic manifold and text-container persistence.

Generation samples poses for the lead end-effector over its reach disk,
derives the other grasped chains' targets through the grasp relations,
enumerates per-chain IK solutions, polishes the combined configuration with
the manifold projector, and keeps self-collision-free results. Everything
is deterministic given the seed (per-pose derived seeds).
"""

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import container
from .configfile import system_from_items, system_hash, system_to_items
from .constraints import pack, project, task_jacobian, task_masks_default
from .errors import GenerationError, InvalidArgumentError, ParseError
from .geometry import PlanarPose, wrap_angle
from .kinematics import nullspace_basis, solve_ik

log = logging.getLogger(__name__)

DEFAULT_COLLISION_MARGIN = 0.02


@dataclass
class ConfigRecord:
    """One retained IK solution: configuration, its pose group, the
    orthonormal self-motion basis at it, and the collision verdict."""

    q: np.ndarray
    pose_id: int
    nullspace: np.ndarray
    collision_free: bool = True


@dataclass
class ConfigDataset:
    system: object
    records: list
    meta: dict = field(default_factory=dict)

    def joint_matrix(self):
        """N x dof matrix of the collision-free configurations."""
        rows = [r.q for r in self.records if r.collision_free]
        return np.array(rows, dtype=float) if rows else np.zeros((0, self.system.dof))

    def content_hash(self):
        """Digest binding labels/models to this dataset's contents."""
        h = hashlib.sha256()
        h.update(system_hash(self.system).encode())
        for r in self.records:
            h.update(np.ascontiguousarray(r.q, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


def self_collision_free(sys, q, margin=DEFAULT_COLLISION_MARGIN):
    """True iff no two non-adjacent link segments come within ``margin``
    (consecutive links of a chain are exempt)."""
    p = pack(sys)
    return bool(p.self_collision_free(np.asarray(q, dtype=float), margin))


def _grasp_targets(sys, object_pose):
    """Chain index -> target pose, propagated from the lead chain through
    the grasp pairs; chains outside the grasp graph are absent."""
    pairs = sys.constraint.grasp_pairs
    targets = {}
    if pairs:
        targets[pairs[0][0]] = object_pose
    else:
        targets[0] = object_pose
    changed = True
    while changed:
        changed = False
        for i, j, rel in pairs:
            if i in targets and j not in targets:
                targets[j] = targets[i].compose(rel)
                changed = True
            elif j in targets and i not in targets:
                targets[i] = targets[j].compose(rel.inverse())
                changed = True
    return targets


def _object_theta(sys, rng):
    """Sample the lead-pose heading, honoring fixed-orientation terms that
    are reachable through the grasp graph."""
    probe = _grasp_targets(sys, PlanarPose(0.0, 0.0, 0.0))
    for c, theta_d in sys.constraint.fixed_orientation:
        if c in probe:
            return wrap_angle(theta_d - probe[c].theta)
    return rng.uniform(-math.pi, math.pi)


def target_reachable(chain, tgt, full_pose):
    """Analytic reachability of a chain target.

    For a full SE(2) pose the wrist point (tip minus the last link along
    the tip heading) must lie within the remaining links' reach; for a
    position-only task the plain reach disk suffices.
    """
    base = chain.base_pose
    if not full_pose:
        return math.hypot(tgt.x - base.x, tgt.y - base.y) <= chain.reach()
    L = chain.link_lengths
    wx = tgt.x - L[-1] * math.cos(tgt.theta)
    wy = tgt.y - L[-1] * math.sin(tgt.theta)
    return math.hypot(wx - base.x, wy - base.y) <= sum(L[:-1])


def sample_object_pose(sys, rng, max_attempts=200, masks=None):
    """Uniform pose over the lead chain's reach disk, rejected until every
    grasped chain's derived target is analytically reachable."""
    if masks is None:
        masks = task_masks_default(sys)
    pairs = sys.constraint.grasp_pairs
    lead = pairs[0][0] if pairs else 0
    lead_chain = sys.chains[lead]
    base = lead_chain.base_pose
    reach = lead_chain.reach()
    for _ in range(max_attempts):
        theta = _object_theta(sys, rng)
        r = reach * math.sqrt(rng.uniform())
        phi = rng.uniform(-math.pi, math.pi)
        pose = PlanarPose(base.x + r * math.cos(phi), base.y + r * math.sin(phi), theta)
        targets = _grasp_targets(sys, pose)
        if all(target_reachable(sys.chains[c], tgt, masks[c][2])
               for c, tgt in targets.items()):
            return pose, targets
    return None, None


def ik_candidates(sys, targets, seed, masks=None, restarts=24, cap=8,
                  ik_tol=1e-6, margin=DEFAULT_COLLISION_MARGIN,
                  obstacles=None, dedupe_tol=0.05):
    """Constraint-consistent, self-collision-free IK solutions for one pose.

    ``targets`` maps chain index -> pose (see :func:`_grasp_targets`);
    chains without a target get one sampled-in-place full configuration.
    Per-chain solutions are combined breadth-first, polished with the
    projector, deduplicated, and filtered.
    """
    if masks is None:
        masks = task_masks_default(sys)
    p = pack(sys)
    seeds = np.random.SeedSequence(seed).generate_state(len(sys.chains) + 1)
    per_chain = []
    for c, chain in enumerate(sys.chains):
        if c in targets:
            sols = solve_ik(chain, targets[c], mask=masks[c], n_restarts=restarts,
                            tol=ik_tol, seed=int(seeds[c]), max_solutions=cap,
                            dedupe_tol=dedupe_tol)
        else:
            rng_c = np.random.default_rng(int(seeds[c]))
            lo, hi = chain.limits_arrays()
            sols = [rng_c.uniform(lo, hi)]
        if not sols:
            return []
        per_chain.append(sols)
    combos = sorted(itertools.product(*(range(len(s)) for s in per_chain)),
                    key=lambda t: (sum(t), t))
    out = []
    for combo in combos:
        if len(out) >= cap:
            break
        q = np.concatenate([per_chain[c][k] for c, k in enumerate(combo)])
        q_proj = project(sys, q)
        if q_proj is None:
            continue
        if any(np.linalg.norm(q_proj - prev) < dedupe_tol for prev in out):
            continue
        if not p.self_collision_free(q_proj, margin):
            continue
        if obstacles is not None and obstacles.shape[0] and \
                not p.collision_free(q_proj, obstacles, margin):
            continue
        out.append(q_proj)
    return out


def generate_dataset(sys, n_poses, seed, restarts=24, cap=8, ik_tol=1e-6,
                     margin=DEFAULT_COLLISION_MARGIN, max_attempt_factor=60):
    """Collect ``n_poses`` accepted task poses and their filtered IK records.

    Pose sampling rejects until a pose yields at least one retained
    solution, so every pose_id groups >= 1 record. Raises GenerationError
    (with acceptance-rate diagnostics) when nothing survives; returns a
    partial dataset with a warning when the attempt budget runs out first.
    Byte-identical output for identical arguments.
    """
    if n_poses < 1:
        raise InvalidArgumentError("n_poses must be >= 1")
    masks = task_masks_default(sys)
    records = []
    stats = {"poses_attempted": 0, "poses_unreachable": 0, "poses_without_ik": 0}
    accepted = 0
    max_attempts = max_attempt_factor * n_poses
    for attempt in range(max_attempts):
        if accepted >= n_poses:
            break
        ss = np.random.SeedSequence(seed, spawn_key=(attempt,))
        rng = np.random.default_rng(ss)
        pose, targets = sample_object_pose(sys, rng)
        stats["poses_attempted"] += 1
        if pose is None:
            stats["poses_unreachable"] += 1
            continue
        sols = ik_candidates(sys, targets, seed=int(ss.generate_state(1)[0]),
                             masks=masks, restarts=restarts, cap=cap,
                             ik_tol=ik_tol, margin=margin)
        if not sols:
            stats["poses_without_ik"] += 1
            continue
        for q in sols:
            B = nullspace_basis(task_jacobian(sys, q, masks))
            records.append(ConfigRecord(q=q, pose_id=accepted, nullspace=B,
                                        collision_free=True))
        accepted += 1
    if not records:
        raise GenerationError("dataset generation produced no records", stats)
    if accepted < n_poses:
        log.warning("accepted only %d/%d poses within the attempt budget",
                    accepted, n_poses)
    stats["poses_accepted"] = accepted
    stats["records"] = len(records)
    log.info("generated %d records (%s)", len(records), stats)
    meta = {"seed": str(seed), "n_poses": str(n_poses),
            "poses_accepted": str(accepted), "ik_cap": str(cap),
            "ik_restarts": str(restarts), "margin": container.fmt_float(margin)}
    return ConfigDataset(system=sys, records=records, meta=meta)


# ---------------------------------------------------------------------------
# modified Swiss Roll
# ---------------------------------------------------------------------------

@dataclass
class SwissRollSet:
    points: np.ndarray
    piece_label: np.ndarray
    passage_label: np.ndarray

    # intrinsic coordinates kept for diagnostics and plots
    t: np.ndarray = None
    y: np.ndarray = None


def generate_swissroll(n, n_pieces, passage_width, seed, gap=6.0, height=30.0,
                       bridge_overlap=0.3):
    """Swiss-Roll surface split into axial pieces with optional bridges.

    Pieces are bands along the roll axis separated by ``gap``; when
    ``passage_width`` > 0 a thin strip of that intrinsic width connects
    consecutive pieces (a narrow passage), sampled densely enough that a
    k=10 neighborhood graph crosses it.
    """
    if n_pieces < 1:
        raise InvalidArgumentError("n_pieces must be >= 1")
    if passage_width < 0:
        raise InvalidArgumentError("passage_width must be >= 0")
    rng = np.random.default_rng(seed)
    t_lo, t_hi = 1.5 * math.pi, 4.5 * math.pi
    usable = height - (n_pieces - 1) * gap
    piece_h = usable / n_pieces
    starts = [k * (piece_h + gap) for k in range(n_pieces)]

    n_bridges = n_pieces - 1 if passage_width > 0 else 0
    per_bridge = max(8, int(round(0.01 * n))) if n_bridges else 0
    n_regular = n - n_bridges * per_bridge
    if n_regular < n_pieces:
        raise InvalidArgumentError("n too small for the requested pieces")

    t = np.empty(n, dtype=float)
    y = np.empty(n, dtype=float)
    piece = np.empty(n, dtype=np.int64)
    passage = np.zeros(n, dtype=bool)

    piece_choice = rng.integers(0, n_pieces, size=n_regular)
    t[:n_regular] = rng.uniform(t_lo, t_hi, size=n_regular)
    u = rng.uniform(0.0, 1.0, size=n_regular)
    for i in range(n_regular):
        p = int(piece_choice[i])
        y[i] = starts[p] + u[i] * piece_h
        piece[i] = p

    idx = n_regular
    t_mid = 0.5 * (t_lo + t_hi)
    for b in range(n_bridges):
        y_lo = starts[b] + piece_h - bridge_overlap
        y_hi = starts[b + 1] + bridge_overlap
        t[idx:idx + per_bridge] = rng.uniform(t_mid - passage_width / 2.0,
                                              t_mid + passage_width / 2.0,
                                              size=per_bridge)
        y[idx:idx + per_bridge] = np.sort(rng.uniform(y_lo, y_hi, size=per_bridge))
        piece[idx:idx + per_bridge] = b
        passage[idx:idx + per_bridge] = True
        idx += per_bridge

    points = np.column_stack([t * np.cos(t), y, t * np.sin(t)])
    return SwissRollSet(points=points, piece_label=piece, passage_label=passage,
                        t=t.copy(), y=y.copy())


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_dataset(ds, path):
    """Write the dataset container (system, meta, one record per line)."""
    meta = [("system_hash", system_hash(ds.system))]
    meta += system_to_items(ds.system)
    meta += [(f"gen.{k}", v) for k, v in sorted(ds.meta.items())]
    rows = []
    for r in ds.records:
        m = r.nullspace.shape[1] if r.nullspace.size else 0
        rows.append([
            str(r.pose_id),
            "1" if r.collision_free else "0",
            container.fmt_floats(r.q),
            str(m),
            container.fmt_floats(r.nullspace.reshape(-1)) if m else "",
        ])
    container.write_container(path, "dataset", meta, [("records", [], rows)])


def load_dataset(path):
    _kind, meta, sections = container.read_container(path, expect_kind="dataset")
    meta_d = dict(meta)
    sys_items = [(k, v) for k, v in meta if k.startswith(("system.", "chain.", "constraint."))]
    try:
        sys = system_from_items(sys_items)
    except ParseError:
        raise
    if "records" not in sections:
        raise ParseError("dataset container has no records section", path=path)
    _extra, rows = sections["records"]
    dof = sys.dof
    records = []
    for lineno, row in enumerate(rows):
        try:
            pose_id = int(row[0])
            collision_free = row[1] == "1"
            q = np.array(container.parse_floats(row[2]), dtype=float)
            m = int(row[3])
            flat = container.parse_floats(row[4]) if m else []
            B = np.array(flat, dtype=float).reshape(dof, m) if m else np.zeros((dof, 0))
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad record row: {exc}", path=path, line=lineno + 1) from None
        if q.shape != (dof,):
            raise ParseError(f"record has {q.size} joints, system has {dof}",
                             path=path, line=lineno + 1)
        records.append(ConfigRecord(q=q, pose_id=pose_id, nullspace=B,
                                    collision_free=collision_free))
    gen_meta = {k[4:]: v for k, v in meta_d.items() if k.startswith("gen.")}
    ds = ConfigDataset(system=sys, records=records, meta=gen_meta)
    if meta_d.get("system_hash") not in (None, system_hash(sys)):
        raise ParseError("system hash does not match the serialized system", path=path)
    return ds
