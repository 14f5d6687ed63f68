"""Multi-scale pseudo-labels: K embed+cluster runs aggregated into an
N x K label matrix (noise = -1) used as contrastive supervision.

Each scale pairs an embedding parameterization with clustering parameters;
scales are ordered from local (small neighborhoods) to global. Column k of
the matrix is the cluster assignment of every configuration at scale k.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import container
from .clusterer import ClusterParams, cluster
from .embedder import EmbedParams, embed
from .errors import InvalidArgumentError, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScaleSchedule:
    """Ordered (EmbedParams, ClusterParams) pairs, finest to coarsest."""

    scales: tuple

    def __post_init__(self):
        scales = tuple(self.scales)
        if not scales:
            raise InvalidArgumentError("schedule needs at least one scale")
        ks = [e.n_neighbors for e, _c in scales]
        if any(b < a for a, b in zip(ks, ks[1:])):
            raise InvalidArgumentError(
                f"scales must be ordered by increasing n_neighbors, got {ks}")
        object.__setattr__(self, "scales", scales)

    def __len__(self):
        return len(self.scales)


@dataclass
class PseudoLabelMatrix:
    labels: np.ndarray
    schedule: ScaleSchedule
    dataset_hash: str = ""

    @property
    def n_scales(self):
        return self.labels.shape[1]


def default_schedule(scale_pairs, cluster_params=None, seed=0, out_dim=2,
                     n_epochs=300):
    """Schedule from (n_neighbors, min_dist) pairs with per-scale seeds
    derived from ``seed``."""
    cluster_params = cluster_params or ClusterParams()
    seeds = np.random.SeedSequence(seed).generate_state(len(scale_pairs))
    scales = []
    for k, (n_nb, min_dist) in enumerate(scale_pairs):
        scales.append((EmbedParams(n_neighbors=n_nb, min_dist=min_dist,
                                   out_dim=out_dim, n_epochs=n_epochs,
                                   seed=int(seeds[k])),
                       cluster_params))
    return ScaleSchedule(scales=tuple(scales))


def build(X, schedule, dataset_hash=""):
    """Run every scale's embed+cluster and aggregate the label columns.

    Deterministic given the schedule's seeds; per-scale diagnostics
    (cluster count, noise fraction) are logged.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    labels = np.empty((n, len(schedule)), dtype=np.int64)
    for k, (ep, cp) in enumerate(schedule.scales):
        if n <= ep.n_neighbors or n < cp.min_cluster_size:
            raise InvalidArgumentError(
                f"scale {k}: N={n} too small for n_neighbors={ep.n_neighbors}, "
                f"min_cluster_size={cp.min_cluster_size}")
        try:
            emb = embed(X, ep)
            out = cluster(emb.coords, cp)
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"scale {k}: {exc}") from exc
        labels[:, k] = out.labels
        n_clusters = len([v for v in np.unique(out.labels) if v != -1])
        noise_frac = float(np.mean(out.labels == -1))
        log.info("scale %d (k=%d, min_dist=%.2f): %d clusters, %.1f%% noise",
                 k, ep.n_neighbors, ep.min_dist, n_clusters, 100 * noise_frac)
    return PseudoLabelMatrix(labels=labels, schedule=schedule,
                             dataset_hash=dataset_hash)


def positives(m, i, k):
    """Indices sharing configuration i's cluster at scale k (excluding i);
    empty for noise points."""
    col = m.labels[:, k]
    if col[i] == -1:
        return np.empty(0, dtype=np.int64)
    out = np.flatnonzero(col == col[i])
    return out[out != i].astype(np.int64)


def scale_cluster_counts(m):
    """Number of clusters per scale column."""
    return [len([v for v in np.unique(m.labels[:, k]) if v != -1])
            for k in range(m.n_scales)]


def save_labels(m, path):
    meta = [("dataset_hash", m.dataset_hash),
            ("n_scales", str(m.n_scales))]
    for k, (ep, cp) in enumerate(m.schedule.scales):
        meta.append((f"scale.{k}",
                     f"{ep.n_neighbors}:{container.fmt_float(ep.min_dist)}:"
                     f"{ep.out_dim}:{ep.n_epochs}:{ep.seed}:"
                     f"{cp.min_cluster_size}:{cp.min_samples}"))
    rows = [[str(v) for v in row] for row in m.labels]
    container.write_container(path, "labels", meta, [("labels", [], rows)])


def load_labels(path):
    _kind, meta, sections = container.read_container(path, expect_kind="labels")
    meta_d = dict(meta)
    try:
        n_scales = int(meta_d["n_scales"])
        scales = []
        for k in range(n_scales):
            parts = meta_d[f"scale.{k}"].split(":")
            ep = EmbedParams(n_neighbors=int(parts[0]), min_dist=float(parts[1]),
                             out_dim=int(parts[2]), n_epochs=int(parts[3]),
                             seed=int(parts[4]))
            cp = ClusterParams(min_cluster_size=int(parts[5]), min_samples=int(parts[6]))
            scales.append((ep, cp))
    except (KeyError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed labels metadata: {exc}", path=path) from None
    if "labels" not in sections:
        raise ParseError("labels container has no labels section", path=path)
    _extra, rows = sections["labels"]
    try:
        labels = np.array([[int(v) for v in row] for row in rows], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"bad label row: {exc}", path=path) from None
    if labels.size and labels.shape[1] != n_scales:
        raise ParseError(
            f"label rows have {labels.shape[1]} columns, expected {n_scales}",
            path=path)
    return PseudoLabelMatrix(labels=labels, schedule=ScaleSchedule(tuple(scales)),
                             dataset_hash=meta_d.get("dataset_hash", ""))
