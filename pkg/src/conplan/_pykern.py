"""Pure-Python/NumPy implementations of the numerical kernels.

This module is the reference semantics for ``conplan._ckern`` (the compiled
twin). Both expose the same functions with the same array signatures; the
backend in use is selected in :mod:`conplan._kernels`. Keep the arithmetic
order identical between the two when editing either.

Conventions shared by all kernels:
  * a multi-chain system is passed as packed flat arrays:
    ``lengths`` (all link lengths concatenated), ``off`` (int64 prefix
    offsets, ``off[c]:off[c+1]`` are chain ``c``'s joints), ``bases``
    (n_chains x 3 poses), ``lo``/``hi`` (joint limits, total dof),
    grasp pairs ``gi``/``gj`` (int64) with desired relative poses ``grel``
    (n_pairs x 3), fixed-orientation terms ``fci`` (int64 chain index) and
    ``fth`` (target heading).
  * all floats are float64, all index arrays int64, C-contiguous.
  * angles are wrapped to (-pi, pi] with the same op sequence everywhere.
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi

_MASK64 = (1 << 64) - 1
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_MULT1 = 0xBF58476D1CE4E5B9
_SM64_MULT2 = 0x94D049BB133111EB


def backend_name():
    return "python"


def _wrap(t):
    r = math.fmod(t + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    if r <= -math.pi:
        r += TWO_PI
    return r


def splitmix64_next(state):
    """Advance a SplitMix64 state; returns (new_state, 64-bit output)."""
    state = (state + _SM64_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SM64_MULT1) & _MASK64
    z = ((z ^ (z >> 27)) * _SM64_MULT2) & _MASK64
    z = z ^ (z >> 31)
    return state, z


# ---------------------------------------------------------------------------
# single-chain forward kinematics
# ---------------------------------------------------------------------------

def chain_fk(lengths, base, q):
    """End-effector pose (x, y, theta) of one planar revolute chain."""
    x = base[0]
    y = base[1]
    t = base[2]
    for k in range(len(lengths)):
        t += q[k]
        x += lengths[k] * math.cos(t)
        y += lengths[k] * math.sin(t)
    return np.array([x, y, _wrap(t)], dtype=float)


def chain_points(lengths, base, q):
    """Positions of the base and every joint/tip: (n+1) x 2 array."""
    n = len(lengths)
    pts = np.empty((n + 1, 2), dtype=float)
    x = base[0]
    y = base[1]
    t = base[2]
    pts[0, 0] = x
    pts[0, 1] = y
    for k in range(n):
        t += q[k]
        x += lengths[k] * math.cos(t)
        y += lengths[k] * math.sin(t)
        pts[k + 1, 0] = x
        pts[k + 1, 1] = y
    return pts


def chain_jacobian(lengths, base, q):
    """3 x n Jacobian of (x, y, theta) w.r.t. the chain's joints."""
    n = len(lengths)
    pts = chain_points(lengths, base, q)
    J = np.empty((3, n), dtype=float)
    ex = pts[n, 0]
    ey = pts[n, 1]
    for j in range(n):
        J[0, j] = -(ey - pts[j, 1])
        J[1, j] = ex - pts[j, 0]
        J[2, j] = 1.0
    return J


def dls_ik(lengths, base, lo, hi, target, mask, q0, tol, damping, max_iters):
    """Damped-least-squares IK for one chain from a single seed.

    ``mask`` is a 3-vector of 0/1 selecting which of (x, y, theta) are
    constrained. Iterates are clamped to the joint limits after every step.
    Returns (q, converged).
    """
    n = len(lengths)
    q = np.array(q0, dtype=float, copy=True)
    rows = [k for k in range(3) if mask[k] != 0]
    m = len(rows)
    if m == 0:
        return q, True
    for _ in range(max_iters):
        pose = chain_fk(lengths, base, q)
        e = np.empty(m, dtype=float)
        for r, k in enumerate(rows):
            d = target[k] - pose[k]
            e[r] = _wrap(d) if k == 2 else d
        if math.sqrt(float(np.dot(e, e))) <= tol:
            return q, True
        J = chain_jacobian(lengths, base, q)[rows, :]
        A = J @ J.T + damping * np.eye(m)
        step = J.T @ np.linalg.solve(A, e)
        q += step
        np.clip(q, lo, hi, out=q)
        if float(np.dot(step, step)) < 1e-28:
            break
    pose = chain_fk(lengths, base, q)
    err2 = 0.0
    for k in rows:
        d = target[k] - pose[k]
        if k == 2:
            d = _wrap(d)
        err2 += d * d
    return q, math.sqrt(err2) <= tol


# ---------------------------------------------------------------------------
# multi-chain constraint residuals and projection
# ---------------------------------------------------------------------------

def system_fk(lengths, off, bases, q):
    """End-effector poses of every chain: n_chains x 3."""
    n_chains = len(off) - 1
    out = np.empty((n_chains, 3), dtype=float)
    for c in range(n_chains):
        out[c] = chain_fk(lengths[off[c]:off[c + 1]], bases[c], q[off[c]:off[c + 1]])
    return out


def residual(lengths, off, bases, gi, gj, grel, fci, fth, q):
    """Constraint residual: 3 entries per grasp pair + 1 per fixed heading."""
    poses = system_fk(lengths, off, bases, q)
    n_pairs = len(gi)
    n_fix = len(fci)
    r = np.empty(3 * n_pairs + n_fix, dtype=float)
    for p in range(n_pairs):
        a = poses[gi[p]]
        b = poses[gj[p]]
        c = math.cos(a[2])
        s = math.sin(a[2])
        ux = b[0] - a[0]
        uy = b[1] - a[1]
        r[3 * p + 0] = (c * ux + s * uy) - grel[p, 0]
        r[3 * p + 1] = (-s * ux + c * uy) - grel[p, 1]
        r[3 * p + 2] = _wrap(b[2] - a[2] - grel[p, 2])
    for f in range(n_fix):
        r[3 * n_pairs + f] = _wrap(poses[fci[f]][2] - fth[f])
    return r


def residual_jacobian(lengths, off, bases, gi, gj, grel, fci, fth, q):
    """Residual and its analytic Jacobian (rows = residual dims, cols = dof)."""
    n_chains = len(off) - 1
    dof = int(off[-1])
    poses = np.empty((n_chains, 3), dtype=float)
    jacs = []
    for c in range(n_chains):
        seg = slice(int(off[c]), int(off[c + 1]))
        poses[c] = chain_fk(lengths[seg], bases[c], q[seg])
        jacs.append(chain_jacobian(lengths[seg], bases[c], q[seg]))
    n_pairs = len(gi)
    n_fix = len(fci)
    rdim = 3 * n_pairs + n_fix
    r = np.empty(rdim, dtype=float)
    J = np.zeros((rdim, dof), dtype=float)
    for p in range(n_pairs):
        i = int(gi[p])
        j = int(gj[p])
        a = poses[i]
        b = poses[j]
        c = math.cos(a[2])
        s = math.sin(a[2])
        ux = b[0] - a[0]
        uy = b[1] - a[1]
        r[3 * p + 0] = (c * ux + s * uy) - grel[p, 0]
        r[3 * p + 1] = (-s * ux + c * uy) - grel[p, 1]
        r[3 * p + 2] = _wrap(b[2] - a[2] - grel[p, 2])
        si = slice(int(off[i]), int(off[i + 1]))
        sj = slice(int(off[j]), int(off[j + 1]))
        Ji = jacs[i]
        Jj = jacs[j]
        # d/dq of R(-theta_i) (p_j - p_i): chain j moves p_j, chain i moves
        # p_i and theta_i; dR(-t)/dt u = R(-t) (u_y, -u_x).
        J[3 * p + 0, sj] = c * Jj[0] + s * Jj[1]
        J[3 * p + 1, sj] = -s * Jj[0] + c * Jj[1]
        J[3 * p + 2, sj] = Jj[2]
        rux = c * uy - s * ux   # first row of R(-t) @ (u_y, -u_x)
        ruy = -s * uy - c * ux  # second row
        J[3 * p + 0, si] = -(c * Ji[0] + s * Ji[1]) + rux * Ji[2]
        J[3 * p + 1, si] = -(-s * Ji[0] + c * Ji[1]) + ruy * Ji[2]
        J[3 * p + 2, si] = -Ji[2]
    for f in range(n_fix):
        i = int(fci[f])
        r[3 * n_pairs + f] = _wrap(poses[i][2] - fth[f])
        J[3 * n_pairs + f, off[i]:off[i + 1]] = jacs[i][2]
    return r, J


PROJECT_OK = 0
PROJECT_MAXITER = 1


def project(lengths, off, bases, lo, hi, gi, gj, grel, fci, fth, q,
            tol, damping, max_iters):
    """Gauss-Newton projection onto the constraint manifold.

    Returns (q_out, status, iters). q_out is clamped to the joint limits
    after each step; status is PROJECT_OK on ``|r| <= tol`` else
    PROJECT_MAXITER. A zero-dimensional residual is an immediate fixed point.
    """
    q = np.array(q, dtype=float, copy=True)
    rdim = 3 * len(gi) + len(fci)
    if rdim == 0:
        return q, PROJECT_OK, 0
    for it in range(max_iters + 1):
        r, J = residual_jacobian(lengths, off, bases, gi, gj, grel, fci, fth, q)
        nrm = math.sqrt(float(np.dot(r, r)))
        if nrm <= tol:
            return q, PROJECT_OK, it
        if not math.isfinite(nrm) or it == max_iters:
            return q, PROJECT_MAXITER, it
        A = J @ J.T + damping * np.eye(rdim)
        try:
            step = J.T @ np.linalg.solve(A, r)
        except np.linalg.LinAlgError:
            return q, PROJECT_MAXITER, it
        q -= step
        np.clip(q, lo, hi, out=q)
    return q, PROJECT_MAXITER, max_iters


# ---------------------------------------------------------------------------
# collision predicates
# ---------------------------------------------------------------------------

def _seg_point_dist2(ax, ay, bx, by, px, py):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    if L2 <= 0.0:
        ex = px - ax
        ey = py - ay
        return ex * ex + ey * ey
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return ex * ex + ey * ey


def _orient(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _seg_seg_dist2(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and \
       ((d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)):
        return 0.0
    m = _seg_point_dist2(ax, ay, bx, by, cx, cy)
    m = min(m, _seg_point_dist2(ax, ay, bx, by, dx, dy))
    m = min(m, _seg_point_dist2(cx, cy, dx, dy, ax, ay))
    m = min(m, _seg_point_dist2(cx, cy, dx, dy, bx, by))
    return m


def _all_points(lengths, off, bases, q):
    n_chains = len(off) - 1
    return [chain_points(lengths[off[c]:off[c + 1]], bases[c], q[off[c]:off[c + 1]])
            for c in range(n_chains)]


def self_collision_free(lengths, off, bases, q, margin):
    """True iff no two non-adjacent link segments come within ``margin``.

    Segments sharing a joint (consecutive links of one chain) are exempt.
    Touching at exactly the margin counts as free.
    """
    pts = _all_points(lengths, off, bases, q)
    m2 = margin * margin
    n_chains = len(pts)
    for ca in range(n_chains):
        pa = pts[ca]
        na = pa.shape[0] - 1
        for cb in range(ca, n_chains):
            pb = pts[cb]
            nb = pb.shape[0] - 1
            for i in range(na):
                j0 = i + 2 if cb == ca else 0
                for j in range(j0, nb):
                    d2 = _seg_seg_dist2(pa[i, 0], pa[i, 1], pa[i + 1, 0], pa[i + 1, 1],
                                        pb[j, 0], pb[j, 1], pb[j + 1, 0], pb[j + 1, 1])
                    if d2 < m2:
                        return False
    return True


def obstacles_collision_free(lengths, off, bases, q, obstacles, margin):
    """True iff every link segment clears every disk by at least ``margin``.

    ``obstacles`` is an m x 3 array of (cx, cy, radius). Distance exactly
    equal to radius + margin counts as free.
    """
    if obstacles.shape[0] == 0:
        return True
    pts = _all_points(lengths, off, bases, q)
    for pa in pts:
        for i in range(pa.shape[0] - 1):
            for o in range(obstacles.shape[0]):
                lim = obstacles[o, 2] + margin
                d2 = _seg_point_dist2(pa[i, 0], pa[i, 1], pa[i + 1, 0], pa[i + 1, 1],
                                      obstacles[o, 0], obstacles[o, 1])
                if d2 < lim * lim:
                    return False
    return True


def config_collision_free(lengths, off, bases, q, obstacles, margin):
    return (self_collision_free(lengths, off, bases, q, margin)
            and obstacles_collision_free(lengths, off, bases, q, obstacles, margin))


def edge_waypoints(lengths, off, bases, lo, hi, gi, gj, grel, fci, fth,
                   qa, qb, resolution, obstacles, margin,
                   tol, damping, max_iters, drift_bound, max_gap):
    """Validate the straight joint-space segment qa->qb against the manifold.

    Interpolates at ``resolution``, projects every interior point, and
    requires projection success, drift <= ``drift_bound`` from the
    interpolant, consecutive projected waypoints within ``max_gap`` (the
    chain must stay continuous; projection may otherwise hop between
    disconnected manifold arcs), and collision freedom of every waypoint
    (endpoints included). Returns the (n_steps+1) x dof array, or None.
    """
    dof = len(qa)
    diff = np.asarray(qb, dtype=float) - np.asarray(qa, dtype=float)
    dist = math.sqrt(float(np.dot(diff, diff)))
    n_steps = max(1, int(math.ceil(dist / resolution)))
    W = np.empty((n_steps + 1, dof), dtype=float)
    W[0] = qa
    W[n_steps] = qb
    if not config_collision_free(lengths, off, bases, np.asarray(qa, float), obstacles, margin):
        return None
    if not config_collision_free(lengths, off, bases, np.asarray(qb, float), obstacles, margin):
        return None
    for s in range(1, n_steps + 1):
        if s == n_steps:
            qp = W[n_steps]
        else:
            alpha = s / n_steps
            qi = np.asarray(qa, float) + alpha * diff
            qp, status, _ = project(lengths, off, bases, lo, hi, gi, gj, grel, fci, fth,
                                    qi, tol, damping, max_iters)
            if status != PROJECT_OK:
                return None
            d = qp - qi
            if math.sqrt(float(np.dot(d, d))) > drift_bound:
                return None
            if not config_collision_free(lengths, off, bases, qp, obstacles, margin):
                return None
        g = qp - W[s - 1]
        if math.sqrt(float(np.dot(g, g))) > max_gap:
            return None
        W[s] = qp
    return W


def waypoints_collision_free(lengths, off, bases, W, obstacles, margin):
    """True iff every waypoint row of W clears all obstacle disks."""
    for s in range(W.shape[0]):
        if not obstacles_collision_free(lengths, off, bases, W[s], obstacles, margin):
            return False
    return True


# ---------------------------------------------------------------------------
# neighborhood-embedding SGD layout
# ---------------------------------------------------------------------------

def umap_optimize(emb, head, tail, epochs_per_sample, a, b, gamma,
                  initial_alpha, n_epochs, negative_sample_rate, rng_state):
    """Stochastic layout optimization over a weighted neighbor graph.

    ``emb`` (N x d, float64) is updated in place. Edge e attracts
    ``emb[head[e]]`` toward ``emb[tail[e]]`` on its sampling schedule and
    applies ``negative_sample_rate`` uniform repulsions per attraction.
    Single-threaded, fixed iteration order; negative indices come from an
    explicit SplitMix64 stream so runs are reproducible. Returns the final
    RNG state.
    """
    n = emb.shape[0]
    dim = emb.shape[1]
    n_edges = len(head)
    epoch_of_next_sample = epochs_per_sample.copy()
    epns = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative = epns.copy()
    state = int(rng_state) & _MASK64
    alpha = initial_alpha
    for epoch in range(n_epochs):
        for e in range(n_edges):
            if epoch_of_next_sample[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            d2 = 0.0
            for d in range(dim):
                diff = emb[i, d] - emb[j, d]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2 ** b + 1.0)
            else:
                coeff = 0.0
            for d in range(dim):
                g = coeff * (emb[i, d] - emb[j, d])
                if g > 4.0:
                    g = 4.0
                elif g < -4.0:
                    g = -4.0
                emb[i, d] += g * alpha
                emb[j, d] -= g * alpha
            epoch_of_next_sample[e] += epochs_per_sample[e]
            n_neg = int((epoch - epoch_of_next_negative[e]) / epns[e])
            for _p in range(n_neg):
                state, z = splitmix64_next(state)
                k = int(z % n)
                d2 = 0.0
                for d in range(dim):
                    diff = emb[i, d] - emb[k, d]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = (2.0 * gamma * b) / ((0.001 + d2) * (a * d2 ** b + 1.0))
                elif j == k:
                    continue
                else:
                    coeff = 0.0
                for d in range(dim):
                    if coeff > 0.0:
                        g = coeff * (emb[i, d] - emb[k, d])
                        if g > 4.0:
                            g = 4.0
                        elif g < -4.0:
                            g = -4.0
                    else:
                        g = 4.0
                    emb[i, d] += g * alpha
            epoch_of_next_negative[e] += n_neg * epns[e]
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
    return state
