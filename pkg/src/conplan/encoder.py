"""Connectivity-aware representation: MLP feature encoder + projection
head trained with a multi-scale InfoNCE objective.

Architecture: four affine layers with ReLU between (input -> h -> h -> h ->
feature d), then a two-layer projection head with one ReLU (d -> d -> p).
The contrastive loss on the projected batch treats same-pseudo-label
configurations (per scale) and each sample's constraint-preserving
augmentation as positives, every other batch member as a negative:

    loss_i = -log [ sum_{j in P_i + {aug_i}} exp(sim_ij / tau)
                    / sum_{j != i} exp(sim_ij / tau) ]

with cosine similarity, summed over anchors and weighted across scales by
a convex combination. Gradients are computed analytically (no autograd);
optimization is Adam. Training is single-threaded and bit-reproducible for
a fixed seed and kernel backend.
"""

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .constraints import pack, project
from .errors import (
    DatasetHashMismatchError,
    DimensionMismatchError,
    InvalidArgumentError,
    ModelIOError,
)

log = logging.getLogger(__name__)

MODEL_MAGIC = b"CPLN"
MODEL_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class EncoderModel:
    """Affine layers: encoder W1..W4/b1..b4, projector P1..P2/c1..c2."""

    layers: list  # [(W, b), ...] -- 6 pairs
    n_in: int
    hidden_dim: int
    feature_dim: int
    projector_dim: int

    def parameters(self):
        out = []
        for W, b in self.layers:
            out.append(W)
            out.append(b)
        return out


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 1024
    epochs: int = 5000
    tau: float = 0.5
    lambdas: tuple = None  # None -> uniform over scales
    aug_sigma: float = 0.1
    seed: int = 0
    hidden_dim: int = 64
    feature_dim: int = 32
    projector_dim: int = 16

    def __post_init__(self):
        if self.tau <= 0.0:
            raise InvalidArgumentError("tau must be positive")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            if np.any(lam < 0.0) or abs(lam.sum() - 1.0) > 1e-9:
                raise InvalidArgumentError(
                    "lambdas must be nonnegative and sum to 1")
            object.__setattr__(self, "lambdas", tuple(float(v) for v in lam))


@dataclass
class AugmentedSample:
    source_index: int
    q_tilde: np.ndarray
    degenerate: bool = False


def init_model(n_in, hidden_dim=64, feature_dim=32, projector_dim=16, seed=0):
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(seed)
    dims = [(n_in, hidden_dim), (hidden_dim, hidden_dim), (hidden_dim, hidden_dim),
            (hidden_dim, feature_dim), (feature_dim, feature_dim),
            (feature_dim, projector_dim)]
    layers = []
    for fan_in, fan_out in dims:
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return EncoderModel(layers=layers, n_in=n_in, hidden_dim=hidden_dim,
                        feature_dim=feature_dim, projector_dim=projector_dim)


def _forward_batch(model, X, want_cache=False):
    """Returns (features, projections[, cache]); ReLU after encoder layers
    1-3 and projector layer 1."""
    acts = [X]
    zs = []
    a = X
    for k, (W, b) in enumerate(model.layers):
        z = a @ W.T + b
        zs.append(z)
        if k in (0, 1, 2, 4):
            a = np.maximum(z, 0.0)
        else:
            a = z
        acts.append(a)
    features = zs[3]
    projections = zs[5]
    if want_cache:
        return features, projections, (acts, zs)
    return features, projections


def forward(model, q):
    """Single-configuration forward pass -> (feature, projection)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_in,):
        raise DimensionMismatchError(
            f"model expects {model.n_in} inputs, got shape {q.shape}")
    f, z = _forward_batch(model, q[None, :])
    return f[0], z[0]


def batch_features(model, X, use_projector=False):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_in:
        raise DimensionMismatchError(
            f"model expects (N, {model.n_in}) inputs, got {X.shape}")
    f, z = _forward_batch(model, X)
    return z if use_projector else f


def _backward_batch(model, cache, dproj):
    """Parameter gradients from d(loss)/d(projections)."""
    acts, zs = cache
    grads = [None] * len(model.layers)
    delta = dproj
    for k in range(len(model.layers) - 1, -1, -1):
        W, _b = model.layers[k]
        gW = delta.T @ acts[k]
        gb = delta.sum(axis=0)
        grads[k] = (gW, gb)
        if k > 0:
            delta = delta @ W
            if (k - 1) in (0, 1, 2, 4):
                delta = delta * (zs[k - 1] > 0.0)
    return grads


def loss_nce(projections, pos_sets, tau):
    """Contrastive loss over a batch of projections; see module docstring.

    ``pos_sets[i]`` is the positive index set of anchor row i (rows beyond
    ``len(pos_sets)`` are non-anchor batch members, e.g. augmentations).
    Anchors with empty positive sets contribute zero. Zero-norm projections
    have similarity 0 with everything.
    """
    loss, _ = _loss_nce_impl(np.asarray(projections, dtype=float),
                             pos_sets, tau, want_grad=False)
    return loss


def _nce_precompute(Z, tau):
    """Scale-independent quantities shared by every pseudo-label column:
    normalized rows, the exp-similarity matrix (diagonal zeroed) and its
    row sums (the common denominators)."""
    norms = np.linalg.norm(Z, axis=1)
    safe = norms.copy()
    safe[safe == 0.0] = 1.0
    Zh = Z / safe[:, None]
    E = np.exp((Zh @ Zh.T) / tau)
    np.fill_diagonal(E, 0.0)
    den = E.sum(axis=1)
    return Zh, norms, safe, E, den


def _nce_scale(E, den, pos_sets, tau, G=None, weight=1.0):
    """Loss of one scale given the shared E/den; accumulates the gradient
    w.r.t. similarities into G (scaled by ``weight``) when provided."""
    loss = 0.0
    for i, pos in enumerate(pos_sets):
        pos = np.asarray(pos, dtype=np.int64)
        if pos.size == 0:
            continue
        row = E[i]
        num = row[pos].sum()
        loss += np.log(den[i]) - np.log(num)
        if G is not None:
            G[i] += (weight / (den[i] * tau)) * row
            G[i, pos] -= (weight / (num * tau)) * row[pos]
    return float(loss)


def _nce_grad_from_G(G, Zh, norms, safe):
    dZh = (G + G.T) @ Zh
    # back through the row normalization; zero-norm rows get no gradient
    dot = np.einsum("ij,ij->i", dZh, Zh)
    dZ = (dZh - dot[:, None] * Zh) / safe[:, None]
    dZ[norms == 0.0] = 0.0
    return dZ


def _loss_nce_impl(Z, pos_sets, tau, want_grad):
    Zh, norms, safe, E, den = _nce_precompute(np.asarray(Z, dtype=float), tau)
    G = np.zeros_like(E) if want_grad else None
    loss = _nce_scale(E, den, pos_sets, tau, G=G)
    if not want_grad:
        return loss, None
    return loss, _nce_grad_from_G(G, Zh, norms, safe)


def augment(sys, q, sigma, seed, basis=None):
    """One constraint-preserving perturbation of ``q``.

    Steps uniformly inside the recorded self-motion basis (columns of
    ``basis``; recomputed from the task Jacobian when absent), then
    re-projects onto the constraint manifold. Falls back to the unperturbed
    configuration (flagged degenerate) after 5 failed tries.
    """
    rng = np.random.default_rng(seed)
    return _augment_rng(sys, np.asarray(q, dtype=float), sigma, rng, basis)


def _augment_rng(sys, q, sigma, rng, basis=None):
    if basis is None:
        from .constraints import task_jacobian
        from .kinematics import nullspace_basis
        basis = nullspace_basis(task_jacobian(sys, q))
    m = basis.shape[1]
    if m == 0 or sigma == 0.0:
        return AugmentedSample(source_index=-1, q_tilde=q.copy(), degenerate=False)
    bound = 3.0 * sigma * np.sqrt(m)
    for _try in range(5):
        u = rng.uniform(-sigma, sigma, size=m)
        q_t = project(sys, q + basis @ u)
        if q_t is None:
            continue
        if np.linalg.norm(q_t - q) > bound:
            continue
        return AugmentedSample(source_index=-1, q_tilde=q_t, degenerate=False)
    return AugmentedSample(source_index=-1, q_tilde=q.copy(), degenerate=True)


def _batch_pos_sets(batch_idx, labels_col, n_anchors):
    """Positive sets for one scale (anchor a's augmentation is row
    n_anchors + a): same-cluster batch members, originals and
    augmentations alike (augmentations inherit their source's label), plus
    always the anchor's own augmentation. Noise anchors keep only their
    augmentation."""
    lab = labels_col[batch_idx[:n_anchors]]
    groups = {}
    for b, l in enumerate(lab):
        if l != -1:
            groups.setdefault(int(l), []).append(b)
    sets = []
    for a in range(n_anchors):
        l = int(lab[a])
        if l == -1:
            pos = [n_anchors + a]
        else:
            same = [b for b in groups[l] if b != a]
            pos = same + [n_anchors + b for b in same] + [n_anchors + a]
        sets.append(np.array(pos, dtype=np.int64))
    return sets


def train(dataset, labels, cfg):
    """Train the encoder on a dataset with its pseudo-label matrix.

    Refuses to run when ``labels.dataset_hash`` does not match the dataset.
    Returns (model, history) where history is the per-epoch total loss.
    """
    if labels.dataset_hash and labels.dataset_hash != dataset.content_hash():
        raise DatasetHashMismatchError(
            "pseudo-labels were built for a different dataset")
    recs = [r for r in dataset.records if r.collision_free]
    X = np.array([r.q for r in recs], dtype=float)
    bases = [r.nullspace for r in recs]
    n, dof = X.shape
    if labels.labels.shape[0] != n:
        raise DatasetHashMismatchError(
            f"label matrix has {labels.labels.shape[0]} rows, dataset has {n}")
    n_scales = labels.labels.shape[1]
    lam = (np.full(n_scales, 1.0 / n_scales) if cfg.lambdas is None
           else np.asarray(cfg.lambdas, dtype=float))
    if lam.shape != (n_scales,):
        raise InvalidArgumentError(
            f"{lam.size} lambdas for {n_scales} scales")
    model = init_model(dof, cfg.hidden_dim, cfg.feature_dim, cfg.projector_dim,
                       seed=cfg.seed)
    params = model.parameters()
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    t = 0
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    history = []
    sys = dataset.system
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            B = len(idx)
            Xa = X[idx]
            Xt = np.empty_like(Xa)
            for a, i in enumerate(idx):
                Xt[a] = _augment_rng(sys, X[i], cfg.aug_sigma, rng,
                                     basis=bases[i]).q_tilde
            Xb = np.vstack([Xa, Xt])
            _f, Zp, cache = _forward_batch(model, Xb, want_cache=True)
            Zh, norms, safe, E, den = _nce_precompute(Zp, cfg.tau)
            G = np.zeros_like(E)
            batch_loss = 0.0
            for k in range(n_scales):
                if lam[k] == 0.0:
                    continue
                sets = _batch_pos_sets(idx, labels.labels[:, k], B)
                batch_loss += lam[k] * _nce_scale(E, den, sets, cfg.tau,
                                                  G=G, weight=lam[k])
            dproj = _nce_grad_from_G(G, Zh, norms, safe)
            grads = _backward_batch(model, cache, dproj)
            t += 1
            corr1 = 1.0 - ADAM_BETA1 ** t
            corr2 = 1.0 - ADAM_BETA2 ** t
            gi = 0
            for li, (gW, gb) in enumerate(grads):
                for p, g in ((model.layers[li][0], gW), (model.layers[li][1], gb)):
                    m_state[gi] = ADAM_BETA1 * m_state[gi] + (1 - ADAM_BETA1) * g
                    v_state[gi] = ADAM_BETA2 * v_state[gi] + (1 - ADAM_BETA2) * g * g
                    p -= cfg.lr * (m_state[gi] / corr1) / (
                        np.sqrt(v_state[gi] / corr2) + ADAM_EPS)
                    gi += 1
            epoch_loss += batch_loss
        history.append(epoch_loss)
        if epoch == 0 or (epoch + 1) % max(1, cfg.epochs // 10) == 0:
            log.info("epoch %d/%d: loss %.4f", epoch + 1, cfg.epochs, epoch_loss)
    return model, history


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

def save_model(model, path):
    """Versioned little-endian binary: magic, version, dims, then per layer
    row-major float64 weights followed by the bias."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<5I", MODEL_VERSION, model.n_in, model.hidden_dim,
                             model.feature_dim, model.projector_dim))
        for W, b in model.layers:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ModelIOError(f"{path}: not a model file")
    try:
        version, n_in, h, d, p = struct.unpack_from("<5I", blob, 4)
    except struct.error:
        raise ModelIOError(f"{path}: truncated header") from None
    if version != MODEL_VERSION:
        raise ModelIOError(f"{path}: unsupported model version {version}")
    dims = [(n_in, h), (h, h), (h, h), (h, d), (d, d), (d, p)]
    off = 4 + 20
    layers = []
    for fan_in, fan_out in dims:
        nW = fan_out * fan_in * 8
        nb = fan_out * 8
        if off + nW + nb > len(blob):
            raise ModelIOError(f"{path}: truncated weight block")
        W = np.frombuffer(blob, dtype="<f8", count=fan_out * fan_in,
                          offset=off).reshape(fan_out, fan_in).copy()
        off += nW
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off).copy()
        off += nb
        layers.append((W, b))
    if off != len(blob):
        raise ModelIOError(f"{path}: {len(blob) - off} trailing bytes")
    if not all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in layers):
        raise ModelIOError(f"{path}: non-finite weights")
    return EncoderModel(layers=layers, n_in=n_in, hidden_dim=h,
                        feature_dim=d, projector_dim=p)
