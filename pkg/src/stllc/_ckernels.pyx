# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. See ``_pykernels`` for the reference semantics."""
import numpy as np

from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dposv

DEF NBINS = 12
DEF POLISH_EVERY = 5


def pixel_votes(const double[:, :, ::1] volume, int delta,
                const double[:, ::1] centers, double psi):
    cdef Py_ssize_t T = volume.shape[0], H = volume.shape[1], W = volume.shape[2]
    if centers.shape[0] != NBINS or centers.shape[1] != 3:
        raise ValueError("centers must be 12x3")
    out = np.zeros((T, H, W, NBINS))
    cdef double[:, :, :, ::1] q = out
    cdef Py_ssize_t t, y, x, i
    cdef double gx, gy, gt, mag, dv, s, scale
    cdef double dh[NBINS]
    with nogil:
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    gx = (volume[t, y, x] - volume[t, y, x + delta]) / delta if x + delta < W else 0.0
                    gy = (volume[t, y, x] - volume[t, y + delta, x]) / delta if y + delta < H else 0.0
                    gt = (volume[t, y, x] - volume[t + delta, y, x]) / delta if t + delta < T else 0.0
                    mag = gx * gx + gy * gy + gt * gt
                    if mag == 0.0:
                        continue
                    mag = sqrt(mag)
                    s = 0.0
                    for i in range(NBINS):
                        dv = (gx * centers[i, 0] + gy * centers[i, 1] + gt * centers[i, 2]) / mag
                        dh[i] = dv - psi if dv > psi else 0.0
                        s += dh[i] * dh[i]
                    if s == 0.0:
                        continue
                    scale = mag / sqrt(s)
                    for i in range(NBINS):
                        q[t, y, x, i] = dh[i] * scale
    return out


def box_sums(const double[:, :, :, ::1] votes, origins, int ct, int cy, int cx):
    cdef Py_ssize_t[:, ::1] org = np.ascontiguousarray(origins, dtype=np.intp)
    cdef Py_ssize_t n = org.shape[0], nb = votes.shape[3]
    out = np.zeros((n, nb))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t j, t, y, x, i, t0, y0, x0
    with nogil:
        for j in range(n):
            t0 = org[j, 0]
            y0 = org[j, 1]
            x0 = org[j, 2]
            for t in range(t0, t0 + ct):
                for y in range(y0, y0 + cy):
                    for x in range(x0, x0 + cx):
                        for i in range(nb):
                            o[j, i] += votes[t, y, x, i]
    return out


cdef bint _gap_ok(const double* z, const double* g, const double* c, double bb,
                  double lam, double tol, Py_ssize_t K) noexcept nogil:
    cdef double zc = 0.0, zgz = 0.0, l1 = 0.0, gmax = 0.0
    cdef double rr, rb, primal, scale, dual
    cdef Py_ssize_t k
    for k in range(K):
        zc += z[k] * c[k]
        zgz += z[k] * (c[k] - g[k])
        l1 += fabs(z[k])
        if fabs(g[k]) > gmax:
            gmax = fabs(g[k])
    rr = bb - 2.0 * zc + zgz
    if rr < 0.0:
        rr = 0.0
    rb = bb - zc
    primal = 0.5 * rr + lam * l1
    scale = 1.0 if gmax <= lam else lam / gmax
    dual = scale * rb - 0.5 * scale * scale * rr
    return primal - dual <= tol * primal + 1e-14 * bb


cdef bint _polish(double* z, double* g, const double* c, const double[:, ::1] G,
                  double bb, double lam, double tol, Py_ssize_t K,
                  double* A, double* rhs, Py_ssize_t* idx,
                  double* zt, double* gt) noexcept nogil:
    cdef Py_ssize_t m = 0, a, b, k
    cdef int n_, nrhs = 1, info = 0
    cdef char uplo = b'U'
    cdef double sgn
    for k in range(K):
        if z[k] != 0.0:
            idx[m] = k
            m += 1
    if m == 0:
        return False
    for a in range(m):
        for b in range(m):
            A[a + b * m] = G[idx[a], idx[b]]
        sgn = 1.0 if z[idx[a]] > 0.0 else -1.0
        rhs[a] = c[idx[a]] - lam * sgn
    n_ = <int>m
    dposv(&uplo, &n_, &nrhs, A, &n_, rhs, &n_, &info)
    if info != 0:
        return False
    for a in range(m):
        if rhs[a] * z[idx[a]] <= 0.0:
            return False
    for k in range(K):
        zt[k] = 0.0
    for a in range(m):
        zt[idx[a]] = rhs[a]
    for k in range(K):
        gt[k] = c[k]
        for a in range(m):
            gt[k] -= G[k, idx[a]] * rhs[a]
    if not _gap_ok(zt, gt, c, bb, lam, tol, K):
        return False
    for k in range(K):
        z[k] = zt[k]
        g[k] = gt[k]
    return True


cdef double _restricted_obj(const double[:, ::1] G, const double* c, const Py_ssize_t* idx,
                           const double* x, Py_ssize_t m, double lam) noexcept nogil:
    cdef double f = 0.0, q
    cdef Py_ssize_t a, b
    for a in range(m):
        q = 0.0
        for b in range(m):
            q += G[idx[a], idx[b]] * x[b]
        f += 0.5 * x[a] * q - c[idx[a]] * x[a] + lam * fabs(x[a])
    return f


cdef int _feature_sign(const double[:, ::1] G, const double* c, double lam, Py_ssize_t K,
                       double* z, double* g, double* A, double* xn, double* xt,
                       double* xa, Py_ssize_t* idx, int max_steps) noexcept nogil:
    """Active-set LASSO solve from z = 0. Returns 1 on success, 0 on failure."""
    cdef Py_ssize_t m = 0, a, b, k, best, nm
    cdef int step, n_, nrhs = 1, info = 0
    cdef char uplo = b'U'
    cdef double cmax = 0.0, atol, bestv, t, best_t, f, best_f, sgn
    cdef bint a_ok
    for k in range(K):
        z[k] = 0.0
        g[k] = c[k]
        if fabs(c[k]) > cmax:
            cmax = fabs(c[k])
    atol = 1e-11 * (lam + cmax)
    for step in range(max_steps):
        a_ok = True
        for a in range(m):
            sgn = 1.0 if z[idx[a]] > 0.0 else -1.0
            if fabs(g[idx[a]] - lam * sgn) > atol:
                a_ok = False
                break
        if a_ok:
            best = -1
            bestv = lam + atol
            for k in range(K):
                if z[k] == 0.0 and fabs(g[k]) > bestv:
                    bestv = fabs(g[k])
                    best = k
            if best < 0:
                return 1
            idx[m] = best
            m += 1
        # restricted solve with the sign of each active coordinate fixed
        for a in range(m):
            k = idx[a]
            xa[a] = z[k]
            if z[k] > 0.0:
                sgn = 1.0
            elif z[k] < 0.0:
                sgn = -1.0
            else:
                sgn = 1.0 if g[k] > 0.0 else -1.0
            for b in range(m):
                A[a + b * m] = G[k, idx[b]]
            xn[a] = c[k] - lam * sgn
        n_ = <int>m
        dposv(&uplo, &n_, &nrhs, A, &n_, xn, &n_, &info)
        if info != 0:
            return 0
        best_t = 1.0
        best_f = _restricted_obj(G, c, idx, xn, m, lam)
        for a in range(m):
            if xa[a] != 0.0 and xa[a] * xn[a] < 0.0:
                t = xa[a] / (xa[a] - xn[a])
                for b in range(m):
                    xt[b] = xa[b] + t * (xn[b] - xa[b])
                xt[a] = 0.0
                f = _restricted_obj(G, c, idx, xt, m, lam)
                if f < best_f:
                    best_f = f
                    best_t = t
        if best_f >= _restricted_obj(G, c, idx, xa, m, lam):
            return 0
        for a in range(m):
            t = xa[a] + best_t * (xn[a] - xa[a])
            if best_t < 1.0 and xa[a] != 0.0 and xa[a] * xn[a] < 0.0 and xa[a] / (xa[a] - xn[a]) == best_t:
                t = 0.0
            z[idx[a]] = t
        nm = 0
        for a in range(m):
            if z[idx[a]] != 0.0:
                idx[nm] = idx[a]
                nm += 1
        m = nm
        for k in range(K):
            g[k] = c[k]
            for a in range(m):
                g[k] -= G[k, idx[a]] * z[idx[a]]
    return 0


def lasso_solve(const double[:, ::1] G, const double[:, ::1] C, const double[::1] bb,
             double lam, double tol, int max_passes):
    cdef Py_ssize_t n = C.shape[0], K = C.shape[1]
    if K < 1 or G.shape[0] != K or G.shape[1] != K or bb.shape[0] != n:
        raise ValueError("shape mismatch")
    Z_arr = np.zeros((n, K))
    passes_arr = np.full(n, max_passes, dtype=np.intp)
    cdef double[:, ::1] Z = Z_arr
    cdef Py_ssize_t[::1] passes = passes_arr
    cdef double* g = <double*>malloc(K * sizeof(double))
    cdef double* A = <double*>malloc(K * K * sizeof(double) + sizeof(double))
    cdef double* rhs = <double*>malloc(K * sizeof(double) + sizeof(double))
    cdef double* zt = <double*>malloc(K * sizeof(double) + sizeof(double))
    cdef double* gt = <double*>malloc(K * sizeof(double) + sizeof(double))
    cdef Py_ssize_t* idx = <Py_ssize_t*>malloc(K * sizeof(Py_ssize_t) + sizeof(Py_ssize_t))
    if g == NULL or A == NULL or rhs == NULL or zt == NULL or gt == NULL or idx == NULL:
        free(g); free(A); free(rhs); free(zt); free(gt); free(idx)
        raise MemoryError()
    cdef Py_ssize_t j, k, i
    cdef int p
    cdef double gkk, zk, rho, new, d
    cdef double* z
    try:
        with nogil:
            for j in range(n):
                z = &Z[j, 0]
                for k in range(K):
                    g[k] = C[j, k]
                if _gap_ok(z, g, &C[j, 0], bb[j], lam, tol, K):
                    passes[j] = 0
                    continue
                if _feature_sign(G, &C[j, 0], lam, K, z, g, A, rhs, zt, gt, idx, 20 * <int>K + 20) \
                        and _gap_ok(z, g, &C[j, 0], bb[j], lam, tol, K):
                    passes[j] = 0
                    continue
                # coordinate descent from a clean start
                for k in range(K):
                    z[k] = 0.0
                    g[k] = C[j, k]
                for p in range(max_passes):
                    for k in range(K):
                        gkk = G[k, k]
                        if gkk <= 0.0:
                            continue
                        zk = z[k]
                        rho = g[k] + gkk * zk
                        if rho > lam:
                            new = (rho - lam) / gkk
                        elif rho < -lam:
                            new = (rho + lam) / gkk
                        else:
                            new = 0.0
                        d = new - zk
                        if d != 0.0:
                            for i in range(K):
                                g[i] -= d * G[k, i]
                            z[k] = new
                    if _gap_ok(z, g, &C[j, 0], bb[j], lam, tol, K):
                        passes[j] = p + 1
                        break
                    if (p + 1) % POLISH_EVERY == 0 and _polish(
                            z, g, &C[j, 0], G, bb[j], lam, tol, K, A, rhs, idx, zt, gt):
                        passes[j] = p + 1
                        break
    finally:
        free(g); free(A); free(rhs); free(zt); free(gt); free(idx)
    return Z_arr, passes_arr
