"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. Results
agree with the compiled path to rounding, not bit for bit.
"""
import numpy as np

def pixel_votes(volume, delta, centers, psi):
    """Quantized, magnitude-scaled dodecahedral votes for every pixel.

    ``volume`` is (T, H, W) float64; returns (T, H, W, 12).
    """
    volume = np.asarray(volume, dtype=np.float64)
    grads = np.zeros(volume.shape + (3,))
    # value minus forward neighbour; zero where the neighbour is out of range
    if volume.shape[2] > delta:
        grads[:, :, :-delta, 0] = (volume[:, :, :-delta] - volume[:, :, delta:]) / delta
    if volume.shape[1] > delta:
        grads[:, :-delta, :, 1] = (volume[:, :-delta, :] - volume[:, delta:, :]) / delta
    if volume.shape[0] > delta:
        grads[:-delta, :, :, 2] = (volume[:-delta] - volume[delta:]) / delta
    return quantize(grads, centers, psi)


def quantize(grads, centers, psi):
    """Vectorized projection/threshold/rescale of gradients with shape (..., 3)."""
    grads = np.asarray(grads, dtype=np.float64)
    mag = np.sqrt(np.sum(grads * grads, axis=-1))
    nonzero = mag > 0
    out = np.zeros(grads.shape[:-1] + (centers.shape[0],))
    g = grads[nonzero]
    m = mag[nonzero]
    proj = (g @ centers.T) / m[:, None]
    dhat = np.where(proj > psi, proj - psi, 0.0)
    dnorm = np.sqrt(np.sum(dhat * dhat, axis=-1))
    ok = dnorm > 0
    votes = np.zeros_like(dhat)
    votes[ok] = dhat[ok] * (m[ok] / dnorm[ok])[:, None]
    out[nonzero] = votes
    return out


def box_sums(votes, origins, ct, cy, cx):
    """Sum ``votes`` over boxes of extent (ct, cy, cx) anchored at ``origins`` (t, y, x)."""
    origins = np.asarray(origins, dtype=np.intp)
    out = np.empty((origins.shape[0], votes.shape[-1]))
    for i, (t0, y0, x0) in enumerate(origins):
        box = votes[t0:t0 + ct, y0:y0 + cy, x0:x0 + cx]
        out[i] = box.reshape(-1, votes.shape[-1]).sum(axis=0)
    return out


def _gap_ok(z, g, c, bb, lam, tol):
    zc = np.sum(z * c, axis=-1)
    zgz = np.sum(z * (c - g), axis=-1)
    rr = np.maximum(bb - 2.0 * zc + zgz, 0.0)
    rb = bb - zc
    primal = 0.5 * rr + lam * np.sum(np.abs(z), axis=-1)
    gmax = np.max(np.abs(g), axis=-1) if g.shape[-1] else np.zeros(g.shape[:-1])
    scale = np.where(gmax <= lam, 1.0, lam / np.maximum(gmax, lam))
    dual = scale * rb - 0.5 * scale * scale * rr
    return primal - dual <= tol * primal + 1e-14 * bb


def _restricted_obj(Gs, cs, x, lam):
    return 0.5 * x @ Gs @ x - cs @ x + lam * np.sum(np.abs(x))


def feature_sign(G, c, lam, max_steps):
    """Active-set (feature-sign) LASSO solve for one column, starting at zero.

    Returns (z, g) with g = c - G z, or None if the search stalls or hits a
    singular active set.
    """
    K = c.shape[0]
    z = np.zeros(K)
    g = c.copy()
    atol = 1e-11 * (lam + np.max(np.abs(c), initial=0.0))
    active = []
    for _ in range(max_steps):
        act = np.array(active, dtype=np.intp)
        if np.all(np.abs(g[act] - lam * np.sign(z[act])) <= atol):
            free = np.abs(g) * (z == 0)
            best = int(np.argmax(free))
            if free[best] <= lam + atol:
                return z, g
            active.append(best)
            act = np.array(active, dtype=np.intp)
        xa = z[act]
        signs = np.where(xa != 0, np.sign(xa), np.where(g[act] > 0, 1.0, -1.0))
        Gs = G[np.ix_(act, act)]
        cs = c[act]
        try:
            xn = np.linalg.solve(Gs, cs - lam * signs)
        except np.linalg.LinAlgError:
            return None
        best_t, best_f = 1.0, _restricted_obj(Gs, cs, xn, lam)
        crossing = np.flatnonzero((xa != 0) & (xa * xn < 0))
        for a in crossing:
            t = xa[a] / (xa[a] - xn[a])
            xt = xa + t * (xn - xa)
            xt[a] = 0.0
            f = _restricted_obj(Gs, cs, xt, lam)
            if f < best_f:
                best_t, best_f = t, f
        if best_f >= _restricted_obj(Gs, cs, xa, lam):
            return None
        x = xa + best_t * (xn - xa)
        if best_t < 1.0:
            for a in crossing:
                if xa[a] / (xa[a] - xn[a]) == best_t:
                    x[a] = 0.0
        z[act] = x
        active = [k for k in active if z[k] != 0.0]
        act = np.array(active, dtype=np.intp)
        g = c - G[:, act] @ z[act]
    return None


def _cd_column(G, c, bb, lam, tol, max_passes):
    K = c.shape[0]
    z = np.zeros(K)
    g = c.copy()
    diag = np.diag(G)
    for p in range(max_passes):
        for k in range(K):
            if diag[k] <= 0:
                continue
            rho = g[k] + diag[k] * z[k]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / diag[k]
            d = new - z[k]
            if d != 0.0:
                g -= d * G[k]
                z[k] = new
        if _gap_ok(z, g, c, bb, lam, tol):
            return z, p + 1
    return z, max_passes


def lasso_solve(G, C, bb, lam, tol, max_passes):
    """Solve many LASSO problems sharing one Gram matrix.

    Minimizes 0.5*||b - D z||^2 + lam*||z||_1 per row of ``C`` (= (D^T b)^T),
    with ``G`` = D^T D and ``bb`` = ||b||^2. Each row is solved by an
    active-set search; rows where that fails, or whose duality gap exceeds
    ``tol`` times the objective, fall back to cyclic coordinate descent.
    Returns the codes (n, K) and the coordinate-descent passes per row
    (0 when the active-set search sufficed, ``max_passes`` on failure).
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    bb = np.asarray(bb, dtype=np.float64)
    n, K = C.shape
    Z = np.zeros((n, K))
    passes = np.zeros(n, dtype=np.intp)
    for j in range(n):
        c = C[j]
        if _gap_ok(Z[j], c, c, bb[j], lam, tol):
            continue
        res = feature_sign(G, c, lam, 20 * K + 20)
        if res is not None and _gap_ok(res[0], res[1], c, bb[j], lam, tol):
            Z[j] = res[0]
            continue
        Z[j], passes[j] = _cd_column(G, c, bb[j], lam, tol, max_passes)
    return Z, passes
