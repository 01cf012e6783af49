"""k-means codebook learned from training block descriptors."""
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from ._binary import checksum
from .errors import (
    ChecksumMismatchError,
    DataError,
    ModelFormatError,
    NonFiniteError,
    TooFewDescriptorsError,
    UnknownVersionError,
)

DEFAULT_N_S = 200


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: np.ndarray  # (dim, n_s), one atom per column
    config_digest: str = ""
    labels: np.ndarray = field(default=None, repr=False)  # final assignment, fit-time only
    inertia_history: tuple = field(default=(), repr=False)

    @property
    def n_s(self):
        return self.atoms.shape[1]

    @property
    def source_dim(self):
        return self.atoms.shape[0]

    @property
    def inertia(self):
        return self.inertia_history[-1] if self.inertia_history else float("nan")

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return self.config_digest == other.config_digest and np.array_equal(self.atoms, other.atoms)


def config_digest(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _sq_dists(X, centers, x_sq):
    c_sq = np.sum(centers * centers, axis=1)
    d = x_sq[:, None] - 2.0 * (X @ centers.T) + c_sq[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X, k, rng, x_sq):
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(X, X[idx], x_sq)[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a centre
            raise TooFewDescriptorsError("fewer distinct descriptors than atoms")
        pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        pick = min(pick, n - 1)
        while closest[pick] == 0:  # cumsum plateau: step to the next point with mass
            pick = (pick + 1) % n
        idx.append(pick)
        closest = np.minimum(closest, _sq_dists(X, X[pick:pick + 1], x_sq)[:, 0])
    return X[idx].copy()


def _assign(X, centers, x_sq):
    d = _sq_dists(X, centers, x_sq)
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(X.shape[0]), labels]


def _update(X, labels, dist, centers):
    k, dim = centers.shape
    sums = np.zeros((k, dim))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k)
    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    empty = np.flatnonzero(~filled)
    if empty.size:
        # farthest points from their centroid become the new atoms
        picked = []
        for i in np.argsort(-dist, kind="stable"):
            if dist[i] <= 0 or len(picked) == empty.size:
                break
            if not any(np.array_equal(X[i], X[j]) for j in picked):
                picked.append(i)
        if len(picked) < empty.size:
            raise TooFewDescriptorsError("fewer distinct descriptors than atoms")
        new[empty] = X[picked]
    return new, empty.size


def kmeans_fit(descriptors, n_s=DEFAULT_N_S, seed=0, max_iters=100, rel_tol=1e-4, digest=""):
    """Lloyd's k-means from a seeded k-means++ start.

    ``descriptors`` holds one descriptor per row. The rows are put into
    lexicographic order before anything else, so the result does not depend
    on the input order. Stops after ``max_iters`` iterations or once the
    relative inertia improvement falls below ``rel_tol``.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("descriptors must be a 2-D array with one descriptor per row")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("descriptors contain NaN or Inf")
    if X.shape[0] < n_s or n_s < 1:
        raise TooFewDescriptorsError(f"need at least {n_s} descriptors, got {X.shape[0]}")
    X = X[np.lexsort(X.T[::-1])]
    distinct = 1 + int(np.count_nonzero(np.any(X[1:] != X[:-1], axis=1)))
    if distinct < n_s:
        raise TooFewDescriptorsError(f"{distinct} distinct descriptors cannot make {n_s} atoms")

    rng = np.random.default_rng(seed)
    x_sq = np.sum(X * X, axis=1)
    centers = _kmeanspp(X, n_s, rng, x_sq)
    labels, dist = _assign(X, centers, x_sq)
    history = [float(dist.sum())]
    for _ in range(max_iters):
        centers, _ = _update(X, labels, dist, centers)
        new_labels, dist = _assign(X, centers, x_sq)
        inertia = float(dist.sum())
        prev = history[-1]
        history.append(inertia)
        unchanged = np.array_equal(new_labels, labels)
        labels = new_labels
        if unchanged or prev - inertia <= rel_tol * prev:
            break
    # final atoms are exactly the means of the final assignment
    centers, reseeded = _update(X, labels, dist, centers)
    if reseeded:
        labels, dist = _assign(X, centers, x_sq)
    history.append(float(np.sum((X - centers[labels]) ** 2)))
    atoms = np.ascontiguousarray(centers.T)
    atoms.setflags(write=False)
    return Dictionary(atoms=atoms, config_digest=digest, labels=labels,
                      inertia_history=tuple(history))


def sorted_descriptors(descriptors):
    """The canonical row order used by :func:`kmeans_fit` (for inspecting ``labels``)."""
    X = np.asarray(descriptors, dtype=np.float64)
    return X[np.lexsort(X.T[::-1])]


# binary section shared by the model file and standalone dictionary export
def encode_dictionary(d):
    digest = d.config_digest.encode("utf-8")
    head = struct.pack("<III", d.source_dim, d.n_s, len(digest)) + digest
    return head + np.asarray(d.atoms, dtype="<f8").tobytes(order="F")


def decode_dictionary(buf):
    dim, n_s, dlen = struct.unpack_from("<III", buf, 0)
    off = 12
    digest = bytes(buf[off:off + dlen]).decode("utf-8")
    off += dlen
    need = off + 8 * dim * n_s
    if len(buf) != need:
        raise DataError(f"dictionary section has {len(buf)} bytes, expected {need}")
    atoms = np.frombuffer(buf, dtype="<f8", offset=off).reshape((dim, n_s), order="F")
    atoms = np.ascontiguousarray(atoms, dtype=np.float64)
    atoms.setflags(write=False)
    return Dictionary(atoms=atoms, config_digest=digest)


DICT_MAGIC = b"STLD"
DICT_VERSION = 1


def save_dictionary(d, path):
    body = DICT_MAGIC + struct.pack("<I", DICT_VERSION) + encode_dictionary(d)
    with open(path, "wb") as fh:
        fh.write(body + checksum(body))


def load_dictionary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != DICT_MAGIC:
        raise ModelFormatError(f"{path}: not a dictionary file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != DICT_VERSION:
        raise UnknownVersionError(f"{path}: dictionary version {version} is not supported")
    if checksum(data[:-8]) != data[-8:]:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")
    return decode_dictionary(data[8:-8])
