"""Feature-space connectivity scoring and start/goal IK-pair selection.

The connectivity measure between two configurations is
``exp(-||phi(q_s) - phi(q_g)||_2)`` over the frozen encoder's features
(pre-projector by default). Three selection strategies are supported:
seeded random, joint-space nearest, and feature-space nearest; ties break
lexicographically on (start index, goal index) so benchmarks reproduce.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import batch_features, forward
from .errors import InvalidArgumentError

STRATEGIES = ("random", "joint-space", "feature-space")


@dataclass(frozen=True)
class PairScore:
    start_index: int
    goal_index: int
    feature_distance: float

    @property
    def p_conn(self):
        return float(np.exp(-self.feature_distance))


def p_conn(model, q_s, q_g, use_projector=False):
    """Connectivity score in (0, 1]: exp(-feature distance)."""
    f_s, z_s = forward(model, q_s)
    f_g, z_g = forward(model, q_g)
    a, b = (z_s, z_g) if use_projector else (f_s, f_g)
    return float(np.exp(-np.linalg.norm(a - b)))


def _feature_distances(model, starts, goals, use_projector):
    Fs = batch_features(model, np.asarray(starts, dtype=float), use_projector)
    Fg = batch_features(model, np.asarray(goals, dtype=float), use_projector)
    diff = Fs[:, None, :] - Fg[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def rank_pairs(model, starts, goals, use_projector=False):
    """All |starts| x |goals| pairs, best (highest p_conn) first.

    Sorted ascending by feature distance with lexicographic (start, goal)
    tie-breaking; equivalent to descending p_conn.
    """
    if len(starts) == 0 or len(goals) == 0:
        raise InvalidArgumentError("candidate lists must be non-empty")
    D = _feature_distances(model, starts, goals, use_projector)
    scored = [PairScore(s, g, float(D[s, g]))
              for s in range(len(starts)) for g in range(len(goals))]
    scored.sort(key=lambda ps: (ps.feature_distance, ps.start_index, ps.goal_index))
    return scored


def select_pair(model, starts, goals, strategy, seed=0, use_projector=False):
    """Pick one (start_index, goal_index) under the given strategy."""
    if len(starts) == 0 or len(goals) == 0:
        raise InvalidArgumentError("candidate lists must be non-empty")
    if strategy == "random":
        rng = np.random.default_rng(seed)
        return int(rng.integers(len(starts))), int(rng.integers(len(goals)))
    if strategy == "joint-space":
        S = np.asarray(starts, dtype=float)
        G = np.asarray(goals, dtype=float)
        diff = S[:, None, :] - G[None, :, :]
        D = np.sqrt((diff * diff).sum(axis=2))
    elif strategy == "feature-space":
        if model is None:
            raise InvalidArgumentError("feature-space strategy needs a model")
        D = _feature_distances(model, starts, goals, use_projector)
    else:
        raise InvalidArgumentError(
            f"unknown strategy {strategy!r} (expected one of {STRATEGIES})")
    # argmin with lexicographic (start, goal) tie-break: flat argmin scans
    # row-major, which is exactly that order
    flat = int(np.argmin(D))
    return flat // D.shape[1], flat % D.shape[1]
