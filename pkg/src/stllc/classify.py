"""Per-location one-vs-rest logistic regression, sequence-descriptor assembly
and the final one-vs-rest linear SVM.

Both classifiers fold the bias into the weight vector by appending a
constant 1 feature, so the bias is regularized together with the weights.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import expit

from .errors import (
    ConvergenceError,
    DataError,
    DimensionMismatchError,
    NonFiniteError,
    TooFewClassesError,
)

DEFAULT_GAMMA = 1.0
DEFAULT_C = 1.0
LOGREG_TOL = 1e-6
SVM_TOL = 1e-6


def _augment(X):
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _prepare(X, y, classes):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatchError("X must be (n_samples, n_features) with one label per row")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("training features contain NaN or Inf")
    y = list(y)
    classes = tuple(sorted(set(y))) if classes is None else tuple(classes)
    present = set(y)
    if len(present) < 2:
        raise TooFewClassesError(f"need at least 2 classes, got {sorted(present)}")
    unknown = present - set(classes)
    if unknown:
        raise DataError(f"labels {sorted(unknown)} are not in the class list")
    return X, y, classes


# ---------------------------------------------------------------- logistic


def logreg_objective(w, Xa, y, gamma):
    """0.5*w'w + gamma*sum(log(1 + exp(-y_i w'x_i))) on augmented inputs."""
    return 0.5 * w @ w + gamma * np.sum(np.logaddexp(0.0, -y * (Xa @ w)))


def logreg_gradient(w, Xa, y, gamma):
    return w - gamma * (Xa.T @ (y * expit(-y * (Xa @ w))))


def _logreg_binary(Xa, y, gamma, tol, max_iter):
    """Damped Newton with Armijo backtracking. Returns (w, objective history)."""
    d = Xa.shape[1]
    w = np.zeros(d)
    f = logreg_objective(w, Xa, y, gamma)
    g = logreg_gradient(w, Xa, y, gamma)
    stop = tol * (1.0 + np.linalg.norm(g))
    history = [f]
    for _ in range(max_iter):
        if np.linalg.norm(g) <= stop:
            return w, history
        s = expit(Xa @ w)
        H = gamma * (Xa.T * (s * (1.0 - s))) @ Xa
        H[np.diag_indices(d)] += 1.0
        step = -cho_solve(cho_factor(H), g)
        slope = g @ step
        t = 1.0
        while True:
            w_new = w + t * step
            f_new = logreg_objective(w_new, Xa, y, gamma)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if not f_new < f:
            # no representable decrease left
            break
        w, f = w_new, f_new
        g = logreg_gradient(w, Xa, y, gamma)
        history.append(f)
    if np.linalg.norm(g) > stop:
        raise ConvergenceError(
            f"logistic regression stopped with gradient norm {np.linalg.norm(g):.3g} > {stop:.3g}")
    return w, history


@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray  # (m, n_features + 1); last column is the bias
    gamma: float
    class_labels: tuple
    histories: tuple = field(default=(), repr=False)

    @property
    def n_features(self):
        return self.weights.shape[1] - 1

    def scores(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        return X @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict_proba(self, X):
        """Per-class sigmoids normalized to sum to one, shape (n, m)."""
        log_s = -np.logaddexp(0.0, -self.scores(X))
        log_s -= log_s.max(axis=1, keepdims=True)
        p = np.exp(log_s)
        return p / p.sum(axis=1, keepdims=True)


def logreg_train(X, y, gamma=DEFAULT_GAMMA, tol=LOGREG_TOL, classes=None, max_iter=200):
    """One binary L2-regularized logistic regression per class (class vs rest)."""
    if not gamma > 0:
        raise DataError("gamma must be > 0")
    X, y, classes = _prepare(X, y, classes)
    Xa = _augment(X)
    labels = np.array(y, dtype=object)
    weights = np.zeros((len(classes), Xa.shape[1]))
    histories = []
    for i, c in enumerate(classes):
        target = np.where(labels == c, 1.0, -1.0)
        weights[i], hist = _logreg_binary(Xa, target, gamma, tol, max_iter)
        histories.append(tuple(hist))
    return LogRegModel(weights=weights, gamma=float(gamma), class_labels=classes,
                       histories=tuple(histories))


def logreg_predict_proba(model, beta):
    beta = getattr(beta, "beta", beta)
    return model.predict_proba(np.asarray(beta, dtype=np.float64)[None, :])[0]


def assemble_sequence_descriptor(per_location_probs, n_locations=None, n_classes=None):
    """Concatenate per-location class probabilities in location order."""
    probs = [np.asarray(p, dtype=np.float64) for p in per_location_probs]
    if not probs:
        raise DimensionMismatchError("no location probabilities")
    if n_locations is not None and len(probs) != n_locations:
        raise DimensionMismatchError(f"expected {n_locations} locations, got {len(probs)}")
    m = probs[0].shape[0] if n_classes is None else n_classes
    for p in probs:
        if p.shape != (m,):
            raise DimensionMismatchError(f"every probability vector must have length {m}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DataError("probability vectors must sum to 1")
    return np.concatenate(probs)


# ---------------------------------------------------------------- SVM


def svm_objective(w, Xa, y, C):
    """0.5*||w||^2 + C*sum(hinge) on augmented inputs."""
    return 0.5 * w @ w + C * np.sum(np.maximum(0.0, 1.0 - y * (Xa @ w)))


def _svm_dual_refine(A, alpha, C):
    """Box-constrained quasi-Newton on the dual, warm-started from ``alpha``.

    Coordinate descent crawls along near-flat dual directions, which appear
    when training descriptors are nearly collinear; L-BFGS-B does not.
    """
    def fun(a):
        w = A.T @ a
        return 0.5 * w @ w - a.sum(), A @ w - 1.0

    res = minimize(fun, alpha, jac=True, method="L-BFGS-B", bounds=[(0.0, C)] * len(alpha),
                   options={"ftol": 1e-16, "gtol": 1e-14, "maxiter": 10_000})
    return np.clip(res.x, 0.0, C)


def _svm_binary(Xa, y, C, tol, max_passes, refine_every=100):
    """Dual coordinate descent for the L1-loss SVM; stops on the duality gap.

    Every ``refine_every`` passes without convergence the dual is polished
    with L-BFGS-B; the stopping rule is the same for both.
    """
    n = Xa.shape[0]
    A = Xa * y[:, None]
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    qii = np.einsum("ij,ij->i", Xa, Xa)

    def gap_of(alpha):
        w = A.T @ alpha
        primal = svm_objective(w, Xa, y, C)
        return w, primal, primal - (alpha.sum() - 0.5 * w @ w)

    for p in range(max_passes):
        for i in range(n):
            if qii[i] <= 0:
                continue
            grad = y[i] * (w @ Xa[i]) - 1.0
            a = alpha[i]
            if (a == 0.0 and grad >= 0.0) or (a == C and grad <= 0.0):
                continue
            new = min(max(a - grad / qii[i], 0.0), C)
            if new != a:
                w += (new - a) * A[i]
                alpha[i] = new
        w, primal, gap = gap_of(alpha)
        if gap <= tol * max(1.0, primal):
            return w, gap
        if (p + 1) % refine_every == 0:
            alpha = _svm_dual_refine(A, alpha, C)
            w, primal, gap = gap_of(alpha)
            if gap <= tol * max(1.0, primal):
                return w, gap
    raise ConvergenceError(f"SVM duality gap {gap:.3g} above {tol:g}")


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray  # (m, d)
    bias: np.ndarray  # (m,)
    c: float
    class_labels: tuple
    gaps: tuple = field(default=(), repr=False)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights.shape[1]:
            raise DimensionMismatchError(
                f"expected descriptors of length {self.weights.shape[1]}, got {X.shape[1]}")
        return X @ self.weights.T + self.bias

    def predict(self, X):
        # argmax keeps the first maximum, i.e. ties go to the earlier class
        idx = np.argmax(self.decision_function(X), axis=1)
        return [self.class_labels[i] for i in idx]


def svm_train(descriptors, y, c=DEFAULT_C, tol=SVM_TOL, classes=None, max_passes=100_000):
    """One-vs-rest linear soft-margin SVMs, each solved to relative duality gap ``tol``."""
    if not c > 0:
        raise DataError("C must be > 0")
    X, y, classes = _prepare(descriptors, y, classes)
    Xa = _augment(X)
    labels = np.array(y, dtype=object)
    W = np.zeros((len(classes), Xa.shape[1]))
    gaps = []
    for i, cls in enumerate(classes):
        target = np.where(labels == cls, 1.0, -1.0)
        W[i], gap = _svm_binary(Xa, target, float(c), tol, max_passes)
        gaps.append(gap)
    return SvmModel(weights=W[:, :-1].copy(), bias=W[:, -1].copy(), c=float(c),
                    class_labels=classes, gaps=tuple(gaps))


def svm_predict(model, d):
    return model.predict(np.asarray(d, dtype=np.float64)[None, :])[0]
