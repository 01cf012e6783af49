"""Dodecahedral HOG3D: per-pixel votes, cell histograms, block descriptors
and the subsequence/block/cell decomposition of a sequence.

Axis conventions: ``x`` runs along the frame width, ``y`` along the height
and ``t`` over frames; sample arrays are indexed ``[t, y, x]``. Cells inside
a block are ordered y-major, then x, then t (t varies fastest).
"""
import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import DataError, DimensionMismatchError, InvalidSequenceError

NBINS = 12


@dataclass(frozen=True)
class ProjectionBasis:
    centers: np.ndarray  # (12, 3), row i is v_{i+1}
    psi: float
    phi: float
    l_v: float


@lru_cache(maxsize=None)
def dodecahedron_basis():
    """Face-centre directions of the regular dodecahedron, in the fixed bin order."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    l_v = math.sqrt(1.0 + phi * phi)
    raw = np.array([
        [0.0, 1.0, phi], [0.0, -1.0, phi], [0.0, -1.0, -phi], [0.0, 1.0, -phi],
        [1.0, phi, 0.0], [-1.0, phi, 0.0], [-1.0, -phi, 0.0], [1.0, -phi, 0.0],
        [phi, 0.0, 1.0], [-phi, 0.0, 1.0], [-phi, 0.0, -1.0], [phi, 0.0, -1.0],
    ])
    centers = raw / l_v
    centers.setflags(write=False)
    return ProjectionBasis(centers=centers, psi=phi / (l_v * l_v), phi=phi, l_v=l_v)


@dataclass(frozen=True)
class DecompositionConfig:
    b_x: int = 16
    b_y: int = 16
    b_t: int = 1
    c_x: int = 8
    c_y: int = 8
    c_t: int = 1
    stride_xy: int = 8
    sigmoid_a: float = 1.0
    grad_delta: int = 1

    def __post_init__(self):
        for name in ("b_x", "b_y", "b_t", "c_x", "c_y", "c_t", "stride_xy", "grad_delta"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.b_x % self.c_x or self.b_y % self.c_y or self.b_t % self.c_t:
            raise DataError("block extents must be multiples of the cell extents")
        if not self.sigmoid_a > 0:
            raise DataError("sigmoid_a must be > 0")

    @property
    def cells_per_block(self):
        return (self.b_x * self.b_y * self.b_t) // (self.c_x * self.c_y * self.c_t)

    @property
    def descriptor_dim(self):
        return NBINS * self.cells_per_block


@dataclass(frozen=True)
class BlockMatrix:
    """Block descriptors of one subsequence, one column per temporal block."""

    columns: np.ndarray  # (12 * N_C, N_T)
    location: int
    anchor: tuple  # (x, y) of the subsequence's top-left pixel


def _volume(seq):
    samples = seq.samples if hasattr(seq, "samples") else np.asarray(seq)
    return np.ascontiguousarray(samples, dtype=np.float64)


def gradient(seq, x, y, t, delta=1):
    """Gradient at one pixel as ``(d - forward neighbour) / delta`` per axis.

    A component is 0 where the forward neighbour lies outside the sequence.
    """
    vol = _volume(seq)
    T, H, W = vol.shape
    if not (0 <= x < W and 0 <= y < H and 0 <= t < T):
        raise IndexError(f"pixel ({x}, {y}, {t}) outside a {W}x{H}x{T} sequence")
    d = vol[t, y, x]
    gx = (d - vol[t, y, x + delta]) / delta if x + delta < W else 0.0
    gy = (d - vol[t, y + delta, x]) / delta if y + delta < H else 0.0
    gt = (d - vol[t + delta, y, x]) / delta if t + delta < T else 0.0
    return np.array([gx, gy, gt])


def project_and_quantize(g, basis=None):
    """Vote vector for one gradient; the zero gradient casts no vote."""
    basis = basis or dodecahedron_basis()
    return kernels.quantize(np.asarray(g, dtype=np.float64), basis.centers, basis.psi)


def pixel_votes(seq, delta=1, basis=None):
    """Votes for every pixel, shape (T, H, W, 12)."""
    basis = basis or dodecahedron_basis()
    return kernels.pixel_votes(_volume(seq), int(delta), np.ascontiguousarray(basis.centers), basis.psi)


def cell_histogram(votes):
    """Mean vote over a cell; ``votes`` has shape (..., 12)."""
    votes = np.asarray(votes, dtype=np.float64)
    return votes.reshape(-1, votes.shape[-1]).mean(axis=0)


def symmetric_sigmoid(x, a):
    return (1.0 - np.exp(-a * x)) / (1.0 + np.exp(-a * x))


def block_descriptor(cells, sigmoid_a=1.0, n_cells=None):
    """Concatenate cell histograms, normalize, squash and renormalize.

    An all-zero block yields the all-zero descriptor.
    """
    cells = [np.asarray(h, dtype=np.float64) for h in cells]
    if n_cells is not None and len(cells) != n_cells:
        raise DimensionMismatchError(f"expected {n_cells} cell histograms, got {len(cells)}")
    if not cells or any(h.shape != (NBINS,) for h in cells):
        raise DimensionMismatchError("cell histograms must be non-empty vectors of length 12")
    return normalize_blocks(np.concatenate(cells)[:, None], sigmoid_a)[:, 0]


def normalize_blocks(b, sigmoid_a):
    """Column-wise version of :func:`block_descriptor` for raw concatenations."""
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros_like(b)
    live = np.any(b != 0, axis=0)
    if np.any(live):
        squashed = symmetric_sigmoid(_unit_columns(b[:, live]), sigmoid_a)
        out[:, live] = _unit_columns(squashed)
    return out


def _unit_columns(b):
    # rescale by the column max first so tiny entries do not underflow when squared
    scaled = b / np.max(np.abs(b), axis=0)
    return scaled / np.sqrt(np.sum(scaled * scaled, axis=0))


def anchors(extent, block, stride):
    """Start positions 0, stride, ... plus the last valid one if not already hit."""
    last = extent - block
    pos = list(range(0, last + 1, stride))
    if pos[-1] != last:
        pos.append(last)
    return pos


def grid(width, height, cfg):
    """Subsequence anchors (x, y) in location order (row-major)."""
    if width < cfg.b_x or height < cfg.b_y:
        raise InvalidSequenceError(
            f"{width}x{height} frame is smaller than a {cfg.b_x}x{cfg.b_y} block")
    xs = anchors(width, cfg.b_x, cfg.stride_xy)
    ys = anchors(height, cfg.b_y, cfg.stride_xy)
    return [(x, y) for y in ys for x in xs]


def num_locations(width, height, cfg):
    return len(grid(width, height, cfg))


def _cell_offsets(cfg):
    # y-major, then x, then t
    return [
        (ct * cfg.c_t, cy * cfg.c_y, cx * cfg.c_x)
        for cy in range(cfg.b_y // cfg.c_y)
        for cx in range(cfg.b_x // cfg.c_x)
        for ct in range(cfg.b_t // cfg.c_t)
    ]


def decompose(seq, cfg=None, basis=None):
    """Split a sequence into subsequence block matrices, ordered by location."""
    cfg = cfg or DecompositionConfig()
    basis = basis or dodecahedron_basis()
    vol = _volume(seq)
    T, H, W = vol.shape
    if T < cfg.b_t:
        raise InvalidSequenceError(f"{T} frames is fewer than a block's {cfg.b_t}")
    locs = grid(W, H, cfg)
    n_t = T // cfg.b_t
    offsets = np.array(_cell_offsets(cfg), dtype=np.intp)
    n_c = len(offsets)

    # every (location, temporal block, cell) origin, in output order
    starts = np.array([(k * cfg.b_t, y, x) for (x, y) in locs for k in range(n_t)], dtype=np.intp)
    origins = (starts[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
    # cells shared between overlapping blocks are summed once
    uniq, inverse = np.unique(origins, axis=0, return_inverse=True)

    votes = kernels.pixel_votes(vol, cfg.grad_delta, np.ascontiguousarray(basis.centers), basis.psi)
    sums = kernels.box_sums(votes, uniq, cfg.c_t, cfg.c_y, cfg.c_x)
    hist = sums[inverse.reshape(-1)] / float(cfg.c_x * cfg.c_y * cfg.c_t)

    raw = hist.reshape(len(locs), n_t, n_c * NBINS)
    out = []
    for p, (x, y) in enumerate(locs):
        cols = normalize_blocks(raw[p].T, cfg.sigmoid_a)
        out.append(BlockMatrix(columns=cols, location=p, anchor=(x, y)))
    return out


_DUMP_HEADER = struct.Struct("<III")


def write_feature_dump(blocks, path):
    """Dump block matrices: u32 location count, dim, N_T; then float64
    column-major per location, little-endian."""
    if not blocks:
        raise DataError("nothing to dump")
    dim, n_t = blocks[0].columns.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(len(blocks), dim, n_t))
        for bm in blocks:
            if bm.columns.shape != (dim, n_t):
                raise DimensionMismatchError("block matrices differ in shape")
            fh.write(np.asarray(bm.columns, dtype="<f8").tobytes(order="F"))


def read_feature_dump(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _DUMP_HEADER.size:
        raise DataError("feature dump shorter than its header")
    n_loc, dim, n_t = _DUMP_HEADER.unpack_from(data, 0)
    need = _DUMP_HEADER.size + 8 * n_loc * dim * n_t
    if len(data) != need:
        raise DataError(f"feature dump has {len(data)} bytes, header implies {need}")
    arr = np.frombuffer(data, dtype="<f8", offset=_DUMP_HEADER.size)
    return [
        arr[p * dim * n_t:(p + 1) * dim * n_t].reshape((dim, n_t), order="F").astype(np.float64)
        for p in range(n_loc)
    ]
