"""Neighborhood-preserving embedding of configuration vectors.

Implements the standard fuzzy-neighborhood pipeline: exact kNN graph,
per-point connectivity radius rho_i and bandwidth sigma_i (binary search so
the smoothed neighborhood cardinality hits log2(k)), probabilistic t-conorm
symmetrization, then a seeded stochastic attract/repulse layout whose inner
loop lives in the compiled kernels. Embeddings are bit-reproducible for a
fixed seed and backend.

Only the latent coordinates are consumed downstream (density clustering);
out_dim therefore defaults to 2.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg
from scipy.optimize import curve_fit

from . import _kernels
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3


@dataclass(frozen=True)
class EmbedParams:
    """One embedding scale: neighborhood size and packing distance."""

    n_neighbors: int
    min_dist: float = 0.1
    out_dim: int = 2
    n_epochs: int = 300
    seed: int = 0
    negative_sample_rate: int = 5
    spread: float = 1.0
    init: str = "spectral"

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise InvalidArgumentError("n_neighbors must be >= 2")
        if not (0.0 <= self.min_dist < 1.0):
            raise InvalidArgumentError("min_dist must be in [0, 1)")
        if self.out_dim not in (2, 3):
            raise InvalidArgumentError("out_dim must be 2 or 3")
        if self.init not in ("spectral", "random"):
            raise InvalidArgumentError("init must be 'spectral' or 'random'")


@dataclass
class LatentEmbedding:
    coords: np.ndarray
    params: EmbedParams


def knn_graph(X, k, block=512):
    """Exact k nearest neighbors under Euclidean distance, self excluded.

    Ties are broken by lower index. Returns (indices, distances), each
    N x k, rows sorted by (distance, index).
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k >= n:
        raise InvalidArgumentError(f"k={k} must be smaller than N={n}")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    sq = np.einsum("ij,ij->i", X, X)
    indices = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=float)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        for r in range(stop - start):
            d2[r, start + r] = np.inf
        # stable selection: order by (distance, index)
        idx = np.lexsort((np.broadcast_to(np.arange(n), d2.shape), d2), axis=1)[:, :k]
        indices[start:stop] = idx
        dists[start:stop] = np.sqrt(np.take_along_axis(d2, idx, axis=1))
    return indices, dists


def _smooth_knn(dists, n_neighbors):
    """Per-point (sigma, rho): rho is the nearest nonzero-neighbor distance,
    sigma solves sum_j exp(-(d_j - rho)/sigma) = log2(n_neighbors)."""
    n = dists.shape[0]
    target = math.log2(n_neighbors)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = float(np.mean(dists)) if dists.size else 0.0
    for i in range(n):
        row = dists[i]
        nonzero = row[row > 0.0]
        if nonzero.size:
            rho[i] = nonzero[0]
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(64):
            psum = 0.0
            for d in row:
                gap = d - rho[i]
                psum += math.exp(-gap / mid) if gap > 0.0 else 1.0
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid
        if rho[i] > 0.0:
            mean_row = float(np.mean(row))
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * mean_row)
        else:
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * mean_all)
    return sigma, rho


def fuzzy_graph(X, n_neighbors):
    """Symmetrized fuzzy neighborhood graph (sparse CSR of edge weights)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    indices, dists = knn_graph(X, n_neighbors - 1)
    sigma, rho = _smooth_knn(dists, n_neighbors)
    rows = np.repeat(np.arange(n), n_neighbors - 1)
    cols = indices.reshape(-1)
    gap = dists - rho[:, None]
    vals = np.where(gap <= 0.0, 1.0,
                    np.exp(-np.maximum(gap, 0.0) / sigma[:, None])).reshape(-1)
    P = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    Pt = P.T.tocsr()
    # probabilistic t-conorm: P + Pt - P o Pt
    S = P + Pt - P.multiply(Pt)
    S.sort_indices()
    return S.tocsr()


def fit_curve_params(spread, min_dist):
    """Least-squares (a, b) so 1/(1 + a d^(2b)) matches the offset
    exponential with the requested min_dist/spread."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.ones_like(xv)
    tail = xv >= min_dist
    yv[tail] = np.exp(-(xv[tail] - min_dist) / spread)
    (a, b), _cov = curve_fit(curve, xv, yv)
    return float(a), float(b)


def _epochs_per_sample(weights, n_epochs):
    result = -1.0 * np.ones(weights.shape[0])
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return result


def _component_eigvectors(W, out_dim, rng):
    """First nontrivial eigenvectors of the normalized graph Laplacian."""
    m = W.shape[0]
    deg = np.asarray(W.sum(axis=1)).reshape(-1)
    deg[deg == 0.0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    D = scipy.sparse.diags(inv_sqrt)
    L = scipy.sparse.identity(m) - D @ W @ D
    k = out_dim + 1
    if m <= 1500:
        vals, vecs = np.linalg.eigh(L.toarray())
        return vecs[:, 1:k]
    v0 = np.ones(m) + 1e-8 * rng.standard_normal(m)
    try:
        # shift-invert around a slightly negative sigma: L is PSD so this
        # targets the smallest eigenvalues with a nonsingular factorization
        _vals, vecs = scipy.sparse.linalg.eigsh(L.tocsc(), k=k, sigma=-1e-3, v0=v0)
        return vecs[:, 1:k]
    except Exception:  # ARPACK failures fall back to a random start
        log.warning("spectral init failed for a %d-point component; using random", m)
        return rng.uniform(-1.0, 1.0, size=(m, out_dim))


def spectral_init(graph, out_dim, rng):
    """Laplacian-eigenmap initialization, one layout per connected
    component; components are spread on a coarse grid so disconnected
    regions start separated."""
    n = graph.shape[0]
    n_comp, comp = scipy.sparse.csgraph.connected_components(graph, directed=False)
    coords = np.empty((n, out_dim))
    grid = int(math.ceil(math.sqrt(n_comp)))
    for c in range(n_comp):
        idx = np.flatnonzero(comp == c)
        offset = np.zeros(out_dim)
        offset[0] = 20.0 * (c % grid)
        offset[1] = 20.0 * (c // grid)
        if len(idx) <= out_dim + 1:
            coords[idx] = offset + rng.uniform(-1.0, 1.0, size=(len(idx), out_dim))
            continue
        W = graph[idx][:, idx]
        vecs = _component_eigvectors(W, out_dim, rng)
        peak = np.abs(vecs).max()
        if peak == 0.0 or not np.all(np.isfinite(vecs)):
            vecs = rng.uniform(-1.0, 1.0, size=(len(idx), out_dim))
            peak = 1.0
        coords[idx] = offset + vecs * (5.0 / peak)
    coords += rng.normal(scale=1e-4, size=coords.shape)
    return coords


def embed(X, p):
    """Embed X (N x n) into p.out_dim dimensions.

    Deterministic given p.seed. Degenerate input (all rows identical) maps
    every point to the origin.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n <= p.n_neighbors:
        raise InvalidArgumentError(f"need N > n_neighbors, got N={n}, k={p.n_neighbors}")
    if np.all(X == X[0]):
        return LatentEmbedding(coords=np.zeros((n, p.out_dim)), params=p)
    graph = fuzzy_graph(X, p.n_neighbors)
    coo = graph.tocoo()
    # edges too weak to be sampled even once are dropped
    keep = coo.data >= coo.data.max() / float(p.n_epochs)
    head = coo.row[keep].astype(np.int64)
    tail = coo.col[keep].astype(np.int64)
    weights = coo.data[keep]
    a, b = fit_curve_params(p.spread, p.min_dist)
    eps = _epochs_per_sample(weights, p.n_epochs)
    rng = np.random.default_rng(p.seed)
    if p.init == "spectral":
        emb = spectral_init(graph, p.out_dim, rng)
    else:
        emb = rng.uniform(-10.0, 10.0, size=(n, p.out_dim))
    state = int(np.random.SeedSequence(p.seed).generate_state(1, dtype=np.uint64)[0])
    _kernels.umap_optimize(emb, head, tail, eps, a, b, 1.0, 1.0,
                           int(p.n_epochs), float(p.negative_sample_rate), state)
    log.debug("embedded N=%d k=%d min_dist=%.2f: %d edges", n, p.n_neighbors,
              p.min_dist, len(head))
    return LatentEmbedding(coords=emb, params=p)


def neighborhood_jaccard(X, coords, k):
    """Mean Jaccard overlap between input-space and latent k-neighborhoods."""
    idx_in, _ = knn_graph(X, k)
    idx_lat, _ = knn_graph(coords, k)
    scores = np.empty(len(idx_in))
    for i in range(len(idx_in)):
        a = set(idx_in[i].tolist())
        b = set(idx_lat[i].tolist())
        scores[i] = len(a & b) / len(a | b)
    return float(scores.mean())
