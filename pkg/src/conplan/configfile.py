"""Flat ``key = value`` config files with one section per module.

The same format describes both the toolkit configuration (every tunable,
dumpable via ``conplan --print-config``) and system files (chains plus
constraint). Values are scalars, comma-separated lists, or ``a:b`` pairs;
floats are written with shortest round-trip ``repr``.
"""

import hashlib
import io

from .constraints import ConstraintSpec, SystemSpec
from .errors import ParseError
from .geometry import PlanarPose
from .kinematics import ChainSpec

DEFAULTS = {
    "kinematics": {
        "ik_restarts": 50,
        "ik_tol": 1e-6,
        "ik_max_solutions": 32,
        "ik_max_iters": 100,
        "dls_damping": 1e-3,
        "dedupe_tol": 0.05,
    },
    "constraints": {
        "project_max_iters": 50,
        "project_damping": 1e-6,
    },
    "dataset": {
        "n_poses": 400,
        "seed": 0,
        "ik_cap_per_pose": 8,
        "ik_restarts_per_chain": 24,
        "collision_margin": 0.02,
    },
    "embedder": {
        "out_dim": 2,
        "n_epochs": 300,
        "negative_sample_rate": 5,
        "spread": 1.0,
    },
    "clusterer": {
        "min_cluster_size": 20,
        "min_samples": 10,
    },
    "pseudolabels": {
        # n_neighbors:min_dist pairs, finest to coarsest
        "scales": "3:0.1,10:0.1,25:0.2,50:0.2",
        "seed": 0,
    },
    "encoder": {
        "hidden_dim": 64,
        "feature_dim": 32,
        "projector_dim": 16,
        "lr": 1e-4,
        "batch_size": 1024,
        "epochs": 5000,
        "tau": 0.5,
        "aug_sigma": 0.1,
        "seed": 0,
        "use_projector_features": False,
    },
    "planner": {
        "step_size": 0.1,
        "resolution": 0.02,
        "collision_margin": 0.02,
        "connect_every": 10,
        "iters_per_second": 800.0,
    },
    "oracle": {
        "n_samples": 600,
        "radius": 1.2,
        "seed": 0,
    },
    "bench": {
        "n_scenes": 100,
        "n_obstacles": 3,
        "time_limit": 5.0,
        "strategies": "random,joint-space,feature-space",
        "seed": 0,
        "obstacle_radius_min": 0.08,
        "obstacle_radius_max": 0.25,
        "ik_candidates": 8,
        "with_oracle": False,
    },
}


def default_config():
    return {s: dict(kv) for s, kv in DEFAULTS.items()}


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(section, key, raw, template):
    t = type(template)
    raw = raw.strip()
    try:
        if t is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if t is int:
            return int(raw)
        if t is float:
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"bad value for [{section}] {key}: {raw!r}") from None


def dump_config(cfg=None):
    """Render a config dict (defaults when None) in the file format."""
    cfg = cfg or default_config()
    buf = io.StringIO()
    for section in cfg:
        buf.write(f"[{section}]\n")
        for key, value in cfg[section].items():
            buf.write(f"{key} = {_format_value(value)}\n")
        buf.write("\n")
    return buf.getvalue()


def _parse_items(text, path=None):
    """Yield (section, key, value, lineno) from key = value text."""
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if not section:
                raise ParseError("empty section name", path=path, line=lineno)
            continue
        if "=" not in stripped:
            raise ParseError(f"expected 'key = value', got {stripped!r}",
                             path=path, line=lineno)
        key, _, value = stripped.partition("=")
        if section is None:
            raise ParseError("key outside any [section]", path=path, line=lineno)
        yield section, key.strip(), value.strip(), lineno


def load_config(path):
    """Read a config file, merging over the defaults; unknown keys fail."""
    cfg = default_config()
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    for section, key, value, lineno in _parse_items(text, path=path):
        if section not in cfg or key not in cfg[section]:
            raise ParseError(f"unknown config key [{section}] {key}",
                             path=path, line=lineno)
        cfg[section][key] = _coerce(section, key, value, cfg[section][key])
    return cfg


def parse_scales(spec_str):
    """Parse the pseudolabels scale list: 'n:min_dist,...' pairs."""
    out = []
    for part in spec_str.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            n_str, _, d_str = part.partition(":")
            out.append((int(n_str), float(d_str)))
        except ValueError:
            raise ParseError(f"bad scale entry {part!r}") from None
    if not out:
        raise ParseError("scale list is empty")
    return out


# ---------------------------------------------------------------------------
# system serialization
# ---------------------------------------------------------------------------

def system_to_items(sys):
    """Flatten a SystemSpec to ordered (key, value) string pairs."""
    items = [("system.n_chains", str(len(sys.chains))),
             ("system.tol", repr(sys.constraint.tol))]
    for c, chain in enumerate(sys.chains):
        items.append((f"chain.{c}.link_lengths",
                      ",".join(repr(v) for v in chain.link_lengths)))
        items.append((f"chain.{c}.joint_limits",
                      ",".join(f"{repr(lo)}:{repr(hi)}" for lo, hi in chain.joint_limits)))
        bp = chain.base_pose
        items.append((f"chain.{c}.base_pose",
                      f"{repr(bp.x)},{repr(bp.y)},{repr(bp.theta)}"))
    for k, (i, j, rel) in enumerate(sys.constraint.grasp_pairs):
        items.append((f"constraint.grasp.{k}",
                      f"{i}:{j}:{repr(rel.x)},{repr(rel.y)},{repr(rel.theta)}"))
    for k, (i, th) in enumerate(sys.constraint.fixed_orientation):
        items.append((f"constraint.fixed.{k}", f"{i}:{repr(th)}"))
    return items


def system_from_items(items):
    """Rebuild a SystemSpec from :func:`system_to_items` output."""
    d = dict(items)
    try:
        n_chains = int(d["system.n_chains"])
        tol = float(d.get("system.tol", "1e-8"))
        chains = []
        for c in range(n_chains):
            lengths = tuple(float(v) for v in d[f"chain.{c}.link_lengths"].split(","))
            limits = []
            for pair in d[f"chain.{c}.joint_limits"].split(","):
                lo, _, hi = pair.partition(":")
                limits.append((float(lo), float(hi)))
            bx, by, bt = (float(v) for v in d[f"chain.{c}.base_pose"].split(","))
            chains.append(ChainSpec(link_lengths=lengths, joint_limits=tuple(limits),
                                    base_pose=PlanarPose(bx, by, bt)))
        pairs = []
        k = 0
        while f"constraint.grasp.{k}" in d:
            i_s, j_s, pose_s = d[f"constraint.grasp.{k}"].split(":")
            x, y, th = (float(v) for v in pose_s.split(","))
            pairs.append((int(i_s), int(j_s), PlanarPose(x, y, th)))
            k += 1
        fixed = []
        k = 0
        while f"constraint.fixed.{k}" in d:
            i_s, _, th_s = d[f"constraint.fixed.{k}"].partition(":")
            fixed.append((int(i_s), float(th_s)))
            k += 1
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed system description: {exc}") from None
    return SystemSpec(chains=tuple(chains),
                      constraint=ConstraintSpec(grasp_pairs=tuple(pairs),
                                                fixed_orientation=tuple(fixed), tol=tol))


def system_hash(sys):
    """Stable hex digest of the system's canonical serialization."""
    h = hashlib.sha256()
    for k, v in system_to_items(sys):
        h.update(k.encode())
        h.update(b"=")
        h.update(v.encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def write_system(sys, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("[system]\n")
        for key, value in system_to_items(sys):
            fh.write(f"{key} = {value}\n")


def read_system(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    items = [(k, v) for _sec, k, v, _ln in _parse_items(text, path=path)]
    return system_from_items(items)
