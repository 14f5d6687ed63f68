# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels (Cython twin of ``conplan._pykern``).

Function signatures and arithmetic order mirror the pure-Python module;
see its docstring for the packed-array conventions. Keep both in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, cos, fmod, isfinite, pow, sin, sqrt

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef unsigned long long u64

cdef double PI = 3.14159265358979323846264338327950288
cdef double TWO_PI = 2.0 * PI

cdef u64 SM64_GAMMA = 0x9E3779B97F4A7C15ULL
cdef u64 SM64_MULT1 = 0xBF58476D1CE4E5B9ULL
cdef u64 SM64_MULT2 = 0x94D049BB133111EBULL

DEF MAX_JOINTS = 64
DEF MAX_RDIM = 24

PROJECT_OK = 0
PROJECT_MAXITER = 1


def backend_name():
    return "c"


cdef inline double _wrap(double t) noexcept nogil:
    cdef double r = fmod(t + PI, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= PI
    if r <= -PI:
        r += TWO_PI
    return r


cdef inline u64 _sm64(u64* state) noexcept nogil:
    state[0] = state[0] + SM64_GAMMA
    cdef u64 z = state[0]
    z = (z ^ (z >> 30)) * SM64_MULT1
    z = (z ^ (z >> 27)) * SM64_MULT2
    return z ^ (z >> 31)


def splitmix64_next(state):
    cdef u64 s = <u64> (state & 0xFFFFFFFFFFFFFFFF)
    cdef u64 z = _sm64(&s)
    return int(s), int(z)


# ---------------------------------------------------------------------------
# single-chain forward kinematics
# ---------------------------------------------------------------------------

cdef inline void _chain_fk(const double* lengths, Py_ssize_t n, const double* base,
                           const double* q, double* out) noexcept nogil:
    cdef double x = base[0]
    cdef double y = base[1]
    cdef double t = base[2]
    cdef Py_ssize_t k
    for k in range(n):
        t += q[k]
        x += lengths[k] * cos(t)
        y += lengths[k] * sin(t)
    out[0] = x
    out[1] = y
    out[2] = _wrap(t)


cdef inline void _chain_points(const double* lengths, Py_ssize_t n, const double* base,
                               const double* q, double* pts) noexcept nogil:
    # pts: (n+1) x 2 row-major
    cdef double x = base[0]
    cdef double y = base[1]
    cdef double t = base[2]
    cdef Py_ssize_t k
    pts[0] = x
    pts[1] = y
    for k in range(n):
        t += q[k]
        x += lengths[k] * cos(t)
        y += lengths[k] * sin(t)
        pts[2 * (k + 1)] = x
        pts[2 * (k + 1) + 1] = y


cdef inline void _chain_jac(const double* lengths, Py_ssize_t n, const double* base,
                            const double* q, double* pts, double* J) noexcept nogil:
    # J: 3 x n row-major; pts is an (n+1) x 2 scratch buffer
    cdef Py_ssize_t j
    _chain_points(lengths, n, base, q, pts)
    cdef double ex = pts[2 * n]
    cdef double ey = pts[2 * n + 1]
    for j in range(n):
        J[j] = -(ey - pts[2 * j + 1])
        J[n + j] = ex - pts[2 * j]
        J[2 * n + j] = 1.0


def chain_fk(double[::1] lengths, double[::1] base, double[::1] q):
    out = np.empty(3, dtype=np.float64)
    cdef double[::1] o = out
    _chain_fk(&lengths[0], lengths.shape[0], &base[0], &q[0], &o[0])
    return out


def chain_points(double[::1] lengths, double[::1] base, double[::1] q):
    cdef Py_ssize_t n = lengths.shape[0]
    pts = np.empty((n + 1, 2), dtype=np.float64)
    cdef double[:, ::1] p = pts
    _chain_points(&lengths[0], n, &base[0], &q[0], &p[0, 0])
    return pts


def chain_jacobian(double[::1] lengths, double[::1] base, double[::1] q):
    cdef Py_ssize_t n = lengths.shape[0]
    if n > MAX_JOINTS:
        raise ValueError("chain too long for compiled kernel")
    J = np.empty((3, n), dtype=np.float64)
    cdef double[:, ::1] Jv = J
    cdef double pts[2 * (MAX_JOINTS + 1)]
    _chain_jac(&lengths[0], n, &base[0], &q[0], pts, &Jv[0, 0])
    return J


cdef int _solve_small(double* A, double* b, Py_ssize_t m) noexcept nogil:
    """Gaussian elimination with partial pivoting; A (m x m) and b are
    destroyed, solution left in b. Returns 0 on success, -1 if singular."""
    cdef Py_ssize_t i, j, k, piv
    cdef double amax, v, f, tmp
    for k in range(m):
        piv = k
        amax = A[k * m + k]
        if amax < 0.0:
            amax = -amax
        for i in range(k + 1, m):
            v = A[i * m + k]
            if v < 0.0:
                v = -v
            if v > amax:
                amax = v
                piv = i
        if amax == 0.0:
            return -1
        if piv != k:
            for j in range(m):
                tmp = A[k * m + j]
                A[k * m + j] = A[piv * m + j]
                A[piv * m + j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        for i in range(k + 1, m):
            f = A[i * m + k] / A[k * m + k]
            if f != 0.0:
                for j in range(k + 1, m):
                    A[i * m + j] -= f * A[k * m + j]
                b[i] -= f * b[k]
            A[i * m + k] = 0.0
    for k in range(m - 1, -1, -1):
        v = b[k]
        for j in range(k + 1, m):
            v -= A[k * m + j] * b[j]
        b[k] = v / A[k * m + k]
    return 0


def dls_ik(double[::1] lengths, double[::1] base, double[::1] lo, double[::1] hi,
           double[::1] target, i64[::1] mask, double[::1] q0,
           double tol, double damping, int max_iters):
    cdef Py_ssize_t n = lengths.shape[0]
    if n > MAX_JOINTS:
        raise ValueError("chain too long for compiled kernel")
    q_arr = np.array(q0, dtype=np.float64, copy=True)
    cdef double[::1] q = q_arr
    cdef int rows[3]
    cdef Py_ssize_t m = 0
    cdef Py_ssize_t k, r, it, j, i2
    for k in range(3):
        if mask[k] != 0:
            rows[m] = <int> k
            m += 1
    if m == 0:
        return q_arr, True
    cdef double pose[3]
    cdef double pts[2 * (MAX_JOINTS + 1)]
    cdef double Jfull[3 * MAX_JOINTS]
    cdef double Jm[3 * MAX_JOINTS]
    cdef double A[9]
    cdef double e[3]
    cdef double err2, d, s2, step
    cdef bint converged = False
    with nogil:
        for it in range(max_iters):
            _chain_fk(&lengths[0], n, &base[0], &q[0], pose)
            err2 = 0.0
            for r in range(m):
                k = rows[r]
                d = target[k] - pose[k]
                if k == 2:
                    d = _wrap(d)
                e[r] = d
                err2 += d * d
            if sqrt(err2) <= tol:
                converged = True
                break
            _chain_jac(&lengths[0], n, &base[0], &q[0], pts, Jfull)
            for r in range(m):
                for j in range(n):
                    Jm[r * n + j] = Jfull[rows[r] * n + j]
            for r in range(m):
                for i2 in range(m):
                    d = 0.0
                    for j in range(n):
                        d += Jm[r * n + j] * Jm[i2 * n + j]
                    A[r * m + i2] = d
                A[r * m + r] += damping
            if _solve_small(A, e, m) != 0:
                break
            s2 = 0.0
            for j in range(n):
                step = 0.0
                for r in range(m):
                    step += Jm[r * n + j] * e[r]
                q[j] += step
                if q[j] < lo[j]:
                    q[j] = lo[j]
                elif q[j] > hi[j]:
                    q[j] = hi[j]
                s2 += step * step
            if s2 < 1e-28:
                break
        if not converged:
            _chain_fk(&lengths[0], n, &base[0], &q[0], pose)
            err2 = 0.0
            for r in range(m):
                k = rows[r]
                d = target[k] - pose[k]
                if k == 2:
                    d = _wrap(d)
                err2 += d * d
            converged = sqrt(err2) <= tol
    return q_arr, bool(converged)


# ---------------------------------------------------------------------------
# multi-chain constraint residuals and projection
# ---------------------------------------------------------------------------

def system_fk(double[::1] lengths, i64[::1] off, double[:, ::1] bases, double[::1] q):
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    out = np.empty((n_chains, 3), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t c
    for c in range(n_chains):
        _chain_fk(&lengths[off[c]], off[c + 1] - off[c], &bases[c, 0], &q[off[c]], &o[c, 0])
    return out


cdef void _residual_core(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                         i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
                         i64[::1] fci, double[::1] fth, double[::1] q,
                         double* poses, double* r) noexcept nogil:
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t n_pairs = gi.shape[0]
    cdef Py_ssize_t n_fix = fci.shape[0]
    cdef Py_ssize_t c, p, f
    cdef double cth, sth, ux, uy
    cdef double* a
    cdef double* b
    for c in range(n_chains):
        _chain_fk(&lengths[off[c]], off[c + 1] - off[c], &bases[c, 0], &q[off[c]],
                  poses + 3 * c)
    for p in range(n_pairs):
        a = poses + 3 * gi[p]
        b = poses + 3 * gj[p]
        cth = cos(a[2])
        sth = sin(a[2])
        ux = b[0] - a[0]
        uy = b[1] - a[1]
        r[3 * p + 0] = (cth * ux + sth * uy) - grel[p, 0]
        r[3 * p + 1] = (-sth * ux + cth * uy) - grel[p, 1]
        r[3 * p + 2] = _wrap(b[2] - a[2] - grel[p, 2])
    for f in range(n_fix):
        r[3 * n_pairs + f] = _wrap(poses[3 * fci[f] + 2] - fth[f])


def residual(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
             i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
             i64[::1] fci, double[::1] fth, double[::1] q):
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t rdim = 3 * gi.shape[0] + fci.shape[0]
    out = np.empty(rdim, dtype=np.float64)
    poses = np.empty(3 * n_chains, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] pv = poses
    cdef double dummy
    if rdim == 0:
        _residual_core(lengths, off, bases, gi, gj, grel, fci, fth, q, &pv[0], &dummy)
        return out
    _residual_core(lengths, off, bases, gi, gj, grel, fci, fth, q, &pv[0], &o[0])
    return out


cdef void _residual_jac_core(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                             i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
                             i64[::1] fci, double[::1] fth, double[::1] q,
                             double* poses, double* jacs, double* pts,
                             double* r, double* J) noexcept nogil:
    # jacs: per-chain 3 x n_c blocks, laid out at 3*off[c] doubles... each
    # chain block starts at 3 * off[c] within `jacs`.
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t dof = off[n_chains]
    cdef Py_ssize_t n_pairs = gi.shape[0]
    cdef Py_ssize_t n_fix = fci.shape[0]
    cdef Py_ssize_t rdim = 3 * n_pairs + n_fix
    cdef Py_ssize_t c, p, f, k, nc, ci, cj, ni, nj
    cdef double cth, sth, ux, uy, rux, ruy
    cdef double* a
    cdef double* b
    cdef double* Ji
    cdef double* Jj
    for c in range(n_chains):
        nc = off[c + 1] - off[c]
        _chain_fk(&lengths[off[c]], nc, &bases[c, 0], &q[off[c]], poses + 3 * c)
        _chain_jac(&lengths[off[c]], nc, &bases[c, 0], &q[off[c]], pts,
                   jacs + 3 * off[c])
    for k in range(rdim * dof):
        J[k] = 0.0
    for p in range(n_pairs):
        ci = gi[p]
        cj = gj[p]
        a = poses + 3 * ci
        b = poses + 3 * cj
        cth = cos(a[2])
        sth = sin(a[2])
        ux = b[0] - a[0]
        uy = b[1] - a[1]
        r[3 * p + 0] = (cth * ux + sth * uy) - grel[p, 0]
        r[3 * p + 1] = (-sth * ux + cth * uy) - grel[p, 1]
        r[3 * p + 2] = _wrap(b[2] - a[2] - grel[p, 2])
        ni = off[ci + 1] - off[ci]
        nj = off[cj + 1] - off[cj]
        Ji = jacs + 3 * off[ci]
        Jj = jacs + 3 * off[cj]
        rux = cth * uy - sth * ux
        ruy = -sth * uy - cth * ux
        for k in range(nj):
            J[(3 * p + 0) * dof + off[cj] + k] = cth * Jj[k] + sth * Jj[nj + k]
            J[(3 * p + 1) * dof + off[cj] + k] = -sth * Jj[k] + cth * Jj[nj + k]
            J[(3 * p + 2) * dof + off[cj] + k] = Jj[2 * nj + k]
        for k in range(ni):
            J[(3 * p + 0) * dof + off[ci] + k] = \
                -(cth * Ji[k] + sth * Ji[ni + k]) + rux * Ji[2 * ni + k]
            J[(3 * p + 1) * dof + off[ci] + k] = \
                -(-sth * Ji[k] + cth * Ji[ni + k]) + ruy * Ji[2 * ni + k]
            J[(3 * p + 2) * dof + off[ci] + k] = -Ji[2 * ni + k]
    for f in range(n_fix):
        ci = fci[f]
        ni = off[ci + 1] - off[ci]
        r[3 * n_pairs + f] = _wrap(poses[3 * ci + 2] - fth[f])
        Ji = jacs + 3 * off[ci]
        for k in range(ni):
            J[(3 * n_pairs + f) * dof + off[ci] + k] = Ji[2 * ni + k]


def residual_jacobian(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                      i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
                      i64[::1] fci, double[::1] fth, double[::1] q):
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t dof = off[n_chains]
    cdef Py_ssize_t rdim = 3 * gi.shape[0] + fci.shape[0]
    r = np.empty(rdim, dtype=np.float64)
    J = np.zeros((rdim, dof), dtype=np.float64)
    poses = np.empty(3 * n_chains, dtype=np.float64)
    jacs = np.empty(3 * dof, dtype=np.float64)
    cdef double pts[2 * (MAX_JOINTS + 1)]
    cdef double[::1] rv = r
    cdef double[::1] pv = poses
    cdef double[::1] jv = jacs
    cdef double[:, ::1] Jv2
    cdef double dummy_r, dummy_J
    if rdim == 0:
        return r, J
    Jv2 = J
    _residual_jac_core(lengths, off, bases, gi, gj, grel, fci, fth, q,
                       &pv[0], &jv[0], pts, &rv[0], &Jv2[0, 0])
    return r, J


def project(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
            double[::1] lo, double[::1] hi,
            i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
            i64[::1] fci, double[::1] fth, double[::1] q,
            double tol, double damping, int max_iters):
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t dof = off[n_chains]
    cdef Py_ssize_t rdim = 3 * gi.shape[0] + fci.shape[0]
    q_arr = np.array(q, dtype=np.float64, copy=True)
    if rdim == 0:
        return q_arr, 0, 0
    if dof > MAX_JOINTS or rdim > MAX_RDIM:
        raise ValueError("system too large for compiled kernel")
    cdef double[::1] qv = q_arr
    r_buf = np.empty(rdim, dtype=np.float64)
    J_buf = np.empty(rdim * dof, dtype=np.float64)
    poses = np.empty(3 * n_chains, dtype=np.float64)
    jacs = np.empty(3 * dof, dtype=np.float64)
    cdef double[::1] rv = r_buf
    cdef double[::1] Jv = J_buf
    cdef double[::1] pv = poses
    cdef double[::1] jv = jacs
    cdef double pts[2 * (MAX_JOINTS + 1)]
    cdef double A[MAX_RDIM * MAX_RDIM]
    cdef double y[MAX_RDIM]
    cdef double nrm, acc, step
    cdef Py_ssize_t it, i, j, k
    cdef int status = 1
    cdef int iters_done = 0
    with nogil:
        for it in range(max_iters + 1):
            iters_done = <int> it
            _residual_jac_core(lengths, off, bases, gi, gj, grel, fci, fth, qv,
                               &pv[0], &jv[0], pts, &rv[0], &Jv[0])
            acc = 0.0
            for i in range(rdim):
                acc += rv[i] * rv[i]
            nrm = sqrt(acc)
            if nrm <= tol:
                status = 0
                break
            if not isfinite(nrm) or it == max_iters:
                status = 1
                break
            for i in range(rdim):
                for j in range(rdim):
                    acc = 0.0
                    for k in range(dof):
                        acc += Jv[i * dof + k] * Jv[j * dof + k]
                    A[i * rdim + j] = acc
                A[i * rdim + i] += damping
                y[i] = rv[i]
            if _solve_small(A, y, rdim) != 0:
                status = 1
                break
            for k in range(dof):
                step = 0.0
                for i in range(rdim):
                    step += Jv[i * dof + k] * y[i]
                qv[k] -= step
                if qv[k] < lo[k]:
                    qv[k] = lo[k]
                elif qv[k] > hi[k]:
                    qv[k] = hi[k]
    return q_arr, status, iters_done


# ---------------------------------------------------------------------------
# collision predicates
# ---------------------------------------------------------------------------

cdef inline double _seg_point_dist2(double ax, double ay, double bx, double by,
                                    double px, double py) noexcept nogil:
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double L2 = dx * dx + dy * dy
    cdef double t, ex, ey
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


cdef inline double _orient(double ax, double ay, double bx, double by,
                           double px, double py) noexcept nogil:
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


cdef inline double _seg_seg_dist2(double ax, double ay, double bx, double by,
                                  double cx, double cy, double dx, double dy) noexcept nogil:
    cdef double d1 = _orient(cx, cy, dx, dy, ax, ay)
    cdef double d2 = _orient(cx, cy, dx, dy, bx, by)
    cdef double d3 = _orient(ax, ay, bx, by, cx, cy)
    cdef double d4 = _orient(ax, ay, bx, by, dx, dy)
    cdef double m, v
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and \
       ((d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)):
        return 0.0
    m = _seg_point_dist2(ax, ay, bx, by, cx, cy)
    v = _seg_point_dist2(ax, ay, bx, by, dx, dy)
    if v < m:
        m = v
    v = _seg_point_dist2(cx, cy, dx, dy, ax, ay)
    if v < m:
        m = v
    v = _seg_point_dist2(cx, cy, dx, dy, bx, by)
    if v < m:
        m = v
    return m


cdef void _all_points(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                      double[::1] q, double* pts) noexcept nogil:
    # flat buffer: chain c occupies rows [off[c] + c, off[c+1] + c] inclusive
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t c
    for c in range(n_chains):
        _chain_points(&lengths[off[c]], off[c + 1] - off[c], &bases[c, 0],
                      &q[off[c]], pts + 2 * (off[c] + c))


cdef bint _self_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                     double[::1] q, double margin, double* pts) noexcept nogil:
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef double m2 = margin * margin
    cdef Py_ssize_t ca, cb, i, j, j0, ra, rb, na, nb
    _all_points(lengths, off, bases, q, pts)
    for ca in range(n_chains):
        na = off[ca + 1] - off[ca]
        ra = off[ca] + ca
        for cb in range(ca, n_chains):
            nb = off[cb + 1] - off[cb]
            rb = off[cb] + cb
            for i in range(na):
                if cb == ca:
                    j0 = i + 2
                else:
                    j0 = 0
                for j in range(j0, nb):
                    if _seg_seg_dist2(pts[2 * (ra + i)], pts[2 * (ra + i) + 1],
                                      pts[2 * (ra + i + 1)], pts[2 * (ra + i + 1) + 1],
                                      pts[2 * (rb + j)], pts[2 * (rb + j) + 1],
                                      pts[2 * (rb + j + 1)], pts[2 * (rb + j + 1) + 1]) < m2:
                        return False
    return True


cdef bint _obstacles_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                          double[::1] q, double[:, ::1] obstacles, double margin,
                          double* pts) noexcept nogil:
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t c, i, o, rc, nc
    cdef double lim
    if obstacles.shape[0] == 0:
        return True
    _all_points(lengths, off, bases, q, pts)
    for c in range(n_chains):
        nc = off[c + 1] - off[c]
        rc = off[c] + c
        for i in range(nc):
            for o in range(obstacles.shape[0]):
                lim = obstacles[o, 2] + margin
                if _seg_point_dist2(pts[2 * (rc + i)], pts[2 * (rc + i) + 1],
                                    pts[2 * (rc + i + 1)], pts[2 * (rc + i + 1) + 1],
                                    obstacles[o, 0], obstacles[o, 1]) < lim * lim:
                    return False
    return True


def self_collision_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                        double[::1] q, double margin):
    cdef double pts[2 * (MAX_JOINTS + 8)]
    if off[off.shape[0] - 1] + off.shape[0] - 1 > MAX_JOINTS + 7:
        raise ValueError("system too large for compiled kernel")
    return bool(_self_free(lengths, off, bases, q, margin, pts))


def obstacles_collision_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                             double[::1] q, double[:, ::1] obstacles, double margin):
    cdef double pts[2 * (MAX_JOINTS + 8)]
    if off[off.shape[0] - 1] + off.shape[0] - 1 > MAX_JOINTS + 7:
        raise ValueError("system too large for compiled kernel")
    return bool(_obstacles_free(lengths, off, bases, q, obstacles, margin, pts))


def config_collision_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                          double[::1] q, double[:, ::1] obstacles, double margin):
    cdef double pts[2 * (MAX_JOINTS + 8)]
    if off[off.shape[0] - 1] + off.shape[0] - 1 > MAX_JOINTS + 7:
        raise ValueError("system too large for compiled kernel")
    if not _self_free(lengths, off, bases, q, margin, pts):
        return False
    return bool(_obstacles_free(lengths, off, bases, q, obstacles, margin, pts))


def edge_waypoints(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                   double[::1] lo, double[::1] hi,
                   i64[::1] gi, i64[::1] gj, double[:, ::1] grel,
                   i64[::1] fci, double[::1] fth,
                   double[::1] qa, double[::1] qb, double resolution,
                   double[:, ::1] obstacles, double margin,
                   double tol, double damping, int max_iters, double drift_bound,
                   double max_gap):
    cdef Py_ssize_t n_chains = off.shape[0] - 1
    cdef Py_ssize_t dof = off[n_chains]
    cdef Py_ssize_t rdim = 3 * gi.shape[0] + fci.shape[0]
    if dof > MAX_JOINTS or rdim > MAX_RDIM:
        raise ValueError("system too large for compiled kernel")
    cdef double pts[2 * (MAX_JOINTS + 8)]
    cdef double cpts[2 * (MAX_JOINTS + 1)]
    cdef double A[MAX_RDIM * MAX_RDIM]
    cdef double y[MAX_RDIM]
    cdef Py_ssize_t k, s, it, i, j
    cdef double dist = 0.0
    cdef double diff_k, acc, nrm, step, alpha
    for k in range(dof):
        diff_k = qb[k] - qa[k]
        dist += diff_k * diff_k
    dist = sqrt(dist)
    cdef Py_ssize_t n_steps = <Py_ssize_t> ceil(dist / resolution)
    if n_steps < 1:
        n_steps = 1
    W = np.empty((n_steps + 1, dof), dtype=np.float64)
    cdef double[:, ::1] Wv = W
    r_buf = np.empty(max(rdim, 1), dtype=np.float64)
    J_buf = np.empty(max(rdim * dof, 1), dtype=np.float64)
    poses = np.empty(3 * n_chains, dtype=np.float64)
    jacs = np.empty(3 * dof, dtype=np.float64)
    qi_arr = np.empty(dof, dtype=np.float64)
    qp_arr = np.empty(dof, dtype=np.float64)
    cdef double[::1] rv = r_buf
    cdef double[::1] Jv = J_buf
    cdef double[::1] pv = poses
    cdef double[::1] jv = jacs
    cdef double[::1] qi = qi_arr
    cdef double[::1] qp = qp_arr
    cdef bint ok = True
    cdef int st
    with nogil:
        for k in range(dof):
            Wv[0, k] = qa[k]
            Wv[n_steps, k] = qb[k]
        if not _self_free(lengths, off, bases, qa, margin, pts) or \
           not _obstacles_free(lengths, off, bases, qa, obstacles, margin, pts):
            ok = False
        if ok and (not _self_free(lengths, off, bases, qb, margin, pts) or
                   not _obstacles_free(lengths, off, bases, qb, obstacles, margin, pts)):
            ok = False
        if ok:
            for s in range(1, n_steps):
                alpha = (<double> s) / (<double> n_steps)
                for k in range(dof):
                    qi[k] = qa[k] + alpha * (qb[k] - qa[k])
                    qp[k] = qi[k]
                # Gauss-Newton projection of the interpolant
                st = 1
                for it in range(max_iters + 1):
                    if rdim == 0:
                        st = 0
                        break
                    _residual_jac_core(lengths, off, bases, gi, gj, grel, fci, fth,
                                       qp, &pv[0], &jv[0], cpts, &rv[0], &Jv[0])
                    acc = 0.0
                    for i in range(rdim):
                        acc += rv[i] * rv[i]
                    nrm = sqrt(acc)
                    if nrm <= tol:
                        st = 0
                        break
                    if not isfinite(nrm) or it == max_iters:
                        break
                    for i in range(rdim):
                        for j in range(rdim):
                            acc = 0.0
                            for k in range(dof):
                                acc += Jv[i * dof + k] * Jv[j * dof + k]
                            A[i * rdim + j] = acc
                        A[i * rdim + i] += damping
                        y[i] = rv[i]
                    if _solve_small(A, y, rdim) != 0:
                        break
                    for k in range(dof):
                        step = 0.0
                        for i in range(rdim):
                            step += Jv[i * dof + k] * y[i]
                        qp[k] -= step
                        if qp[k] < lo[k]:
                            qp[k] = lo[k]
                        elif qp[k] > hi[k]:
                            qp[k] = hi[k]
                if st != 0:
                    ok = False
                    break
                acc = 0.0
                for k in range(dof):
                    diff_k = qp[k] - qi[k]
                    acc += diff_k * diff_k
                if sqrt(acc) > drift_bound:
                    ok = False
                    break
                if not _self_free(lengths, off, bases, qp, margin, pts) or \
                   not _obstacles_free(lengths, off, bases, qp, obstacles, margin, pts):
                    ok = False
                    break
                acc = 0.0
                for k in range(dof):
                    diff_k = qp[k] - Wv[s - 1, k]
                    acc += diff_k * diff_k
                if sqrt(acc) > max_gap:
                    ok = False
                    break
                for k in range(dof):
                    Wv[s, k] = qp[k]
            if ok:
                # continuity of the final hop onto qb
                acc = 0.0
                for k in range(dof):
                    diff_k = Wv[n_steps, k] - Wv[n_steps - 1, k]
                    acc += diff_k * diff_k
                if sqrt(acc) > max_gap:
                    ok = False
    if not ok:
        return None
    return W


def waypoints_collision_free(double[::1] lengths, i64[::1] off, double[:, ::1] bases,
                             double[:, ::1] W, double[:, ::1] obstacles, double margin):
    cdef double pts[2 * (MAX_JOINTS + 8)]
    cdef Py_ssize_t s
    cdef bint ok = True
    if off[off.shape[0] - 1] + off.shape[0] - 1 > MAX_JOINTS + 7:
        raise ValueError("system too large for compiled kernel")
    with nogil:
        for s in range(W.shape[0]):
            if not _obstacles_free(lengths, off, bases, W[s], obstacles, margin, pts):
                ok = False
                break
    return bool(ok)


# ---------------------------------------------------------------------------
# neighborhood-embedding SGD layout
# ---------------------------------------------------------------------------

def umap_optimize(double[:, ::1] emb, i64[::1] head, i64[::1] tail,
                  double[::1] epochs_per_sample, double a, double b, double gamma,
                  double initial_alpha, int n_epochs, double negative_sample_rate,
                  rng_state):
    cdef Py_ssize_t n = emb.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t n_edges = head.shape[0]
    eons_arr = np.array(epochs_per_sample, dtype=np.float64, copy=True)
    epns_arr = np.asarray(epochs_per_sample) / negative_sample_rate
    eonn_arr = epns_arr.copy()
    cdef double[::1] epoch_of_next_sample = eons_arr
    cdef double[::1] epns = epns_arr
    cdef double[::1] epoch_of_next_negative = eonn_arr
    cdef u64 state = <u64> (int(rng_state) & 0xFFFFFFFFFFFFFFFF)
    cdef double alpha = initial_alpha
    cdef Py_ssize_t epoch, e, d, k, p
    cdef i64 i, j
    cdef double d2, coeff, g, diff
    cdef int n_neg
    with nogil:
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
                    coeff = (-2.0 * a * b * pow(d2, b - 1.0)) / (a * pow(d2, b) + 1.0)
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
                n_neg = <int> ((epoch - epoch_of_next_negative[e]) / epns[e])
                for p in range(n_neg):
                    k = <Py_ssize_t> (_sm64(&state) % (<u64> n))
                    d2 = 0.0
                    for d in range(dim):
                        diff = emb[i, d] - emb[k, d]
                        d2 += diff * diff
                    if d2 > 0.0:
                        coeff = (2.0 * gamma * b) / ((0.001 + d2) * (a * pow(d2, b) + 1.0))
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
            alpha = initial_alpha * (1.0 - (<double> epoch) / (<double> n_epochs))
    return int(state)
