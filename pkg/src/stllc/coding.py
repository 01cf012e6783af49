"""Sparse coding and locality-constrained linear coding of block descriptors,
and max pooling of the codes into subsequence descriptors.

Codes are laid out one column per block descriptor, i.e. shape (n_s, N_T).
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ConvergenceError,
    DataError,
    DimensionMismatchError,
    EmptyCodeMatrixError,
    NonFiniteError,
)

SC = "sc"
LLC = "llc"
METHODS = (SC, LLC)
DEFAULT_LAMBDA = 0.15
DEFAULT_SIGMA = 1.0
SC_TOL = 1e-8
SC_MAX_PASSES = 10_000
LLC_RESIDUAL_TOL = 1e-10
_CHUNK = 512
_CANCEL = 1e-4  # relative squared distance below which differences are taken directly


@dataclass(frozen=True)
class CodeMatrix:
    codes: np.ndarray  # (n_s, N_T)
    method: str
    lam: float
    sigma: float = None


@dataclass(frozen=True)
class SubsequenceDescriptor:
    beta: np.ndarray  # (n_s,)
    location: int = None


def _columns(a):
    return np.asarray(getattr(a, "columns", a), dtype=np.float64)


def _atoms(d):
    return np.asarray(getattr(d, "atoms", d), dtype=np.float64)


def _check(A, D):
    if A.ndim != 2 or D.ndim != 2:
        raise DimensionMismatchError("block matrix and dictionary must be 2-D")
    if A.shape[0] != D.shape[0]:
        raise DimensionMismatchError(
            f"descriptor dim {A.shape[0]} does not match dictionary dim {D.shape[0]}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(D))):
        raise NonFiniteError("block matrix or dictionary contains NaN or Inf")


def sc_objective(A, D, Z, lam):
    """Per-column 0.5*||b - Dz||^2 + lam*||z||_1."""
    R = A - D @ Z
    return 0.5 * np.sum(R * R, axis=0) + lam * np.sum(np.abs(Z), axis=0)


def llc_objective(A, D, Z, lam, R):
    """Per-column 0.5*||b - Dz||^2 + lam*||r * z||^2."""
    E = A - D @ Z
    return 0.5 * np.sum(E * E, axis=0) + lam * np.sum((R * Z) ** 2, axis=0)


def sc_encode(a, d, lam=DEFAULT_LAMBDA, tol=SC_TOL, max_passes=SC_MAX_PASSES):
    """LASSO code of every column of ``a`` against the dictionary ``d``.

    Each column is solved on the Gram form by an active-set search, falling
    back to cyclic coordinate descent; a column is accepted only once its
    duality gap is below ``tol`` times its objective, so the attained
    objective is within that relative distance of the minimum.
    """
    A, D = _columns(a), _atoms(d)
    _check(A, D)
    if not lam > 0:
        raise DataError("lambda must be > 0")
    G = D.T @ D
    C = np.ascontiguousarray((D.T @ A).T)
    bb = np.sum(A * A, axis=0)
    Z, passes = kernels.lasso_solve(G, C, bb, float(lam), float(tol), int(max_passes))
    if np.any(passes >= max_passes):
        raise ConvergenceError(
            f"sparse coding did not converge for {int(np.sum(passes >= max_passes))} columns")
    return CodeMatrix(codes=np.ascontiguousarray(Z.T), method=SC, lam=float(lam))


def llc_weights(a, d, sigma=DEFAULT_SIGMA):
    """Locality adapter: exp(||b_j - e_i|| / sigma), shape (n_s, N_T)."""
    A, D = _columns(a), _atoms(d)
    _check(A, D)
    if not sigma > 0:
        raise DataError("sigma must be > 0")
    a_sq = np.sum(A * A, axis=0)
    d_sq = np.sum(D * D, axis=0)
    scale = d_sq[:, None] + a_sq[None, :]
    sq = np.maximum(scale - 2.0 * (D.T @ A), 0.0)
    # the expansion cancels badly for near-coincident pairs; redo those directly
    close = np.nonzero(sq <= _CANCEL * scale)
    if close[0].size:
        diff = A[:, close[1]] - D[:, close[0]]
        sq[close] = np.sum(diff * diff, axis=0)
    with np.errstate(over="ignore"):
        R = np.exp(np.sqrt(sq) / sigma)
    if not np.all(np.isfinite(R)):
        raise NonFiniteError(f"locality weights overflow for sigma={sigma}")
    return R


def _llc_direct(G, DtA, M):
    out = np.empty_like(DtA)
    for s in range(0, DtA.shape[1], _CHUNK):
        Ms = M[:, s:s + _CHUNK]
        sys = np.broadcast_to(G, (Ms.shape[1],) + G.shape).copy()
        idx = np.arange(G.shape[0])
        sys[:, idx, idx] += Ms.T
        out[:, s:s + _CHUNK] = np.linalg.solve(sys, DtA[:, s:s + _CHUNK].T[:, :, None])[:, :, 0].T
    return out


def _llc_woodbury(D, A, M):
    # (D^T D + M)^-1 D^T b = M^-1 D^T (I + D M^-1 D^T)^-1 b, with M diagonal
    dim = D.shape[0]
    iu = np.triu_indices(dim)
    outer = np.ascontiguousarray((D[iu[0]] * D[iu[1]]).T)  # upper triangle of every d_k d_k^T
    pos = np.empty((dim, dim), dtype=np.intp)
    pos[iu] = np.arange(iu[0].size)
    pos.T[iu] = pos[iu]
    pos = pos.ravel()
    diag = np.arange(dim)
    out = np.empty((D.shape[1], A.shape[1]))
    for s in range(0, A.shape[1], _CHUNK):
        Minv = 1.0 / M[:, s:s + _CHUNK]
        K = np.take(Minv.T @ outer, pos, axis=1).reshape(-1, dim, dim)
        K[:, diag, diag] += 1.0
        y = np.linalg.solve(K, A[:, s:s + _CHUNK].T[:, :, None])[:, :, 0]
        out[:, s:s + _CHUNK] = Minv * (D.T @ y.T)
    return out


def llc_encode(a, d, lam=DEFAULT_LAMBDA, sigma=DEFAULT_SIGMA, weights=None):
    """Exact minimizer of 0.5*||b - Dz||^2 + lam*||r * z||^2 for every column.

    Solves (D^T D + 2*lam*diag(r^2)) z = D^T b; the relative residual of
    every column is checked against ``LLC_RESIDUAL_TOL``. ``lam = 0`` gives
    the minimum-norm least-squares code.
    """
    A, D = _columns(a), _atoms(d)
    _check(A, D)
    if lam < 0:
        raise DataError("lambda must be >= 0")
    R = llc_weights(A, D, sigma) if weights is None else np.asarray(weights, dtype=np.float64)
    if R.shape != (D.shape[1], A.shape[1]):
        raise DimensionMismatchError("locality weights do not match the codes' shape")
    if lam == 0:
        Z = np.linalg.lstsq(D, A, rcond=None)[0]
        return CodeMatrix(codes=Z, method=LLC, lam=0.0, sigma=float(sigma))

    G = D.T @ D
    DtA = D.T @ A
    M = 2.0 * lam * R * R
    Z = _llc_woodbury(D, A, M) if D.shape[0] < D.shape[1] else _llc_direct(G, DtA, M)

    bad = _llc_residual(G, DtA, M, Z) > LLC_RESIDUAL_TOL
    if np.any(bad):
        Z[:, bad] = _llc_direct(G, DtA[:, bad], M[:, bad])
        bad = _llc_residual(G, DtA, M, Z) > LLC_RESIDUAL_TOL
        if np.any(bad):
            raise ConvergenceError(f"LLC system solve inaccurate for {int(bad.sum())} columns")
    return CodeMatrix(codes=Z, method=LLC, lam=float(lam), sigma=float(sigma))


def _llc_residual(G, DtA, M, Z):
    res = G @ Z + M * Z - DtA
    scale = np.maximum(np.sqrt(np.sum(DtA * DtA, axis=0)), np.finfo(float).tiny)
    return np.sqrt(np.sum(res * res, axis=0)) / scale


def encode(a, d, method=LLC, lam=DEFAULT_LAMBDA, sigma=DEFAULT_SIGMA, sc_tol=SC_TOL):
    if method == SC:
        return sc_encode(a, d, lam=lam, tol=sc_tol)
    if method == LLC:
        return llc_encode(a, d, lam=lam, sigma=sigma)
    raise DataError(f"unknown coding method {method!r}; expected one of {METHODS}")


def max_pool(z, location=None):
    codes = np.asarray(getattr(z, "codes", z), dtype=np.float64)
    if codes.ndim != 2 or codes.shape[1] == 0 or codes.shape[0] == 0:
        raise EmptyCodeMatrixError("cannot pool an empty code matrix")
    return SubsequenceDescriptor(beta=np.max(np.abs(codes), axis=1), location=location)
