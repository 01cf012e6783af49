"""Scalar video sequences: the ``.dvs`` container, ROI crop/resize, manifests
and the synthetic action generator.

Container layout (little-endian)::

    0   4s  magic b"DVS1"
    4   u32 version (1)
    8   u32 width
    12  u32 height
    16  u32 num_frames
    20  u16[num_frames][height][width] samples
"""
import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptHeaderError,
    InvalidRoiError,
    InvalidSequenceError,
    ManifestError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"DVS1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size

SYNTH_CLASSES = ("up", "down", "left")
SYNTH_WIDTH = 64
SYNTH_HEIGHT = 48
SYNTH_FRAMES = 20
SYNTH_SQUARE = 12
SYNTH_BRIGHTNESS = 1000
SYNTH_NOISE = 4  # object noise: uniform integers in [0, SYNTH_NOISE)


class ScalarSequence:
    """A (num_frames, height, width) raster of uint16 samples.

    The array is copied on construction and made read-only.
    """

    __slots__ = ("_samples",)

    def __init__(self, samples):
        arr = np.asarray(samples)
        if arr.ndim != 3:
            raise InvalidSequenceError(f"samples must be 3-D (frames, height, width), got {arr.ndim}-D")
        if min(arr.shape) < 1:
            raise InvalidSequenceError(f"every dimension must be >= 1, got {arr.shape}")
        if arr.dtype != np.uint16:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise InvalidSequenceError("samples must be finite")
            if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
                raise InvalidSequenceError("samples must fit in uint16")
            arr = arr.astype(np.uint16)
        arr = np.array(arr, dtype=np.uint16, order="C", copy=True)
        arr.setflags(write=False)
        self._samples = arr

    @property
    def samples(self):
        return self._samples

    @property
    def num_frames(self):
        return self._samples.shape[0]

    @property
    def height(self):
        return self._samples.shape[1]

    @property
    def width(self):
        return self._samples.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ScalarSequence):
            return NotImplemented
        return np.array_equal(self._samples, other._samples)

    def __repr__(self):
        return f"ScalarSequence(width={self.width}, height={self.height}, num_frames={self.num_frames})"


@dataclass(frozen=True)
class Roi:
    x0: int
    y0: int
    w: int
    h: int

    def check(self, width, height):
        if self.w < 1 or self.h < 1 or self.x0 < 0 or self.y0 < 0:
            raise InvalidRoiError(f"{self} has a negative origin or empty extent")
        if self.x0 + self.w > width or self.y0 + self.h > height:
            raise InvalidRoiError(f"{self} exceeds a {width}x{height} frame")


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: str
    subject: str


def encode_sequence(seq):
    header = _HEADER.pack(MAGIC, VERSION, seq.width, seq.height, seq.num_frames)
    return header + seq.samples.astype("<u2", copy=False).tobytes()


def decode_sequence(data):
    if len(data) < HEADER_SIZE:
        raise CorruptHeaderError(f"header needs {HEADER_SIZE} bytes, file has {len(data)}", len(data))
    magic, version, width, height, frames = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptHeaderError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported", 4)
    for offset, name, value in ((8, "width", width), (12, "height", height), (16, "num_frames", frames)):
        if value < 1:
            raise CorruptHeaderError(f"{name} must be >= 1", offset)
    expected = 2 * width * height * frames
    payload = len(data) - HEADER_SIZE
    if payload < expected:
        raise TruncatedPayloadError(
            f"payload has {payload} bytes, header declares {expected}", len(data))
    if payload > expected:
        raise CorruptHeaderError(
            f"{payload - expected} trailing bytes after the declared payload", HEADER_SIZE + expected)
    samples = np.frombuffer(data, dtype="<u2", count=width * height * frames, offset=HEADER_SIZE)
    return ScalarSequence(samples.reshape(frames, height, width))


def read_sequence(path):
    with open(path, "rb") as fh:
        return decode_sequence(fh.read())


def write_sequence(seq, path):
    if not isinstance(seq, ScalarSequence):
        seq = ScalarSequence(seq)
    with open(path, "wb") as fh:
        fh.write(encode_sequence(seq))


def extract_roi(seq):
    """Tight bounding box of positive samples over all frames.

    Falls back to the full frame when nothing is positive.
    """
    mask = np.any(seq.samples > 0, axis=0)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return Roi(0, 0, seq.width, seq.height)
    return Roi(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def _bilinear_axis(n_in, n_out):
    # half-pixel centres, clamped to the valid sample range
    scale = n_in / n_out
    pos = (np.arange(n_out) + 0.5) * scale - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_sequence(seq, roi, out_w, out_h):
    """Crop every frame to ``roi`` and resample bilinearly to ``out_h`` x ``out_w``."""
    roi.check(seq.width, seq.height)
    if out_w < 1 or out_h < 1:
        raise InvalidRoiError(f"target size {out_w}x{out_h} is empty")
    crop = seq.samples[:, roi.y0:roi.y0 + roi.h, roi.x0:roi.x0 + roi.w].astype(np.float64)
    ylo, yhi, fy = _bilinear_axis(roi.h, out_h)
    xlo, xhi, fx = _bilinear_axis(roi.w, out_w)
    rows = crop[:, ylo, :] * (1.0 - fy)[None, :, None] + crop[:, yhi, :] * fy[None, :, None]
    out = rows[:, :, xlo] * (1.0 - fx) + rows[:, :, xhi] * fx
    return ScalarSequence(np.clip(np.rint(out), 0, 0xFFFF).astype(np.uint16))


def read_manifest(path):
    """Parse a ``path,label,subject`` CSV; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label", "subject"]:
            raise ManifestError(f"{path}: header must be 'path,label,subject', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            p, label, subject = (field.strip() for field in row)
            if not p or not label or not subject:
                raise ManifestError(f"{path}:{lineno}: empty field")
            p = Path(p)
            entries.append(ManifestEntry(p if p.is_absolute() else base / p, label, subject))
    return entries


def write_manifest(entries, path):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "subject"])
        for e in entries:
            p = Path(e.path)
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            writer.writerow([p.as_posix(), e.label, e.subject])


def synth_generate(class_id, seed):
    """Deterministic 64x48x20 sequence of a bright square moving one pixel per frame.

    ``class_id`` is the direction: ``"up"``, ``"down"`` or ``"left"``. The seed
    picks the start position and the additive noise on the square; the
    background stays exactly zero, as in a segmented depth map.
    """
    if class_id not in SYNTH_CLASSES:
        raise ValueError(f"class_id must be one of {SYNTH_CLASSES}, got {class_id!r}")
    rng = np.random.default_rng(seed)
    travel = SYNTH_FRAMES - 1
    s = SYNTH_SQUARE
    if class_id == "up":
        y0 = int(rng.integers(travel, SYNTH_HEIGHT - s + 1))
        x0 = int(rng.integers(0, SYNTH_WIDTH - s + 1))
        dy, dx = -1, 0
    elif class_id == "down":
        y0 = int(rng.integers(0, SYNTH_HEIGHT - s - travel + 1))
        x0 = int(rng.integers(0, SYNTH_WIDTH - s + 1))
        dy, dx = 1, 0
    else:
        y0 = int(rng.integers(0, SYNTH_HEIGHT - s + 1))
        x0 = int(rng.integers(travel, SYNTH_WIDTH - s + 1))
        dy, dx = 0, -1
    noise = rng.integers(0, SYNTH_NOISE, size=(SYNTH_FRAMES, s, s))
    frames = np.zeros((SYNTH_FRAMES, SYNTH_HEIGHT, SYNTH_WIDTH), dtype=np.uint16)
    for t in range(SYNTH_FRAMES):
        y, x = y0 + dy * t, x0 + dx * t
        frames[t, y:y + s, x:x + s] = SYNTH_BRIGHTNESS + noise[t]
    return ScalarSequence(frames)


def synth_square_position(seq):
    """(row, col) of the top-left corner of the bright square in every frame."""
    out = []
    for frame in seq.samples:
        rows, cols = np.nonzero(frame >= SYNTH_BRIGHTNESS)
        out.append((int(rows.min()), int(cols.min())))
    return out


def synth_dataset(out_dir, per_class, seed):
    """Write ``per_class`` videos of every synthetic class plus ``manifest.csv``.

    Video ``i`` of every class is attributed to subject ``s{i:02d}``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for ci, cls in enumerate(SYNTH_CLASSES):
        for i in range(per_class):
            video_seed = int(np.random.SeedSequence([seed, ci, i]).generate_state(1)[0])
            path = out_dir / f"{cls}_{i:03d}.dvs"
            write_sequence(synth_generate(cls, video_seed), path)
            entries.append(ManifestEntry(path, cls, f"s{i:02d}"))
    write_manifest(entries, out_dir / "manifest.csv")
    return entries
