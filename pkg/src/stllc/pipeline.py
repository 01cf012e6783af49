"""End-to-end training, prediction, evaluation and model persistence.

Model file layout (little-endian)::

    magic b"STLM" | u32 version
    5 sections, each u64 length + payload, in this order:
        config text (UTF-8 key=value lines)
        dictionary  (u32 dim, u32 n_s, u32 digest length, digest, f64 atoms column-major)
        regressors  (u32 locations, u32 classes, u32 weights per class, f64 gamma,
                     f64 weights[location][class][feature..., bias])
        svm         (u32 classes, u32 dim, f64 C, f64 weights[class][dim], f64 bias[class])
        labels      (u32 count, then u32 length + UTF-8 per label)
    8-byte BLAKE2b checksum of every preceding byte
"""
import dataclasses
import json
import struct
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coding
from ._binary import checksum, pack_section, unpack_sections
from .classify import LogRegModel, SvmModel, logreg_train, svm_train
from .dictionary import (
    Dictionary,
    config_digest,
    decode_dictionary,
    encode_dictionary,
    kmeans_fit,
)
from .errors import (
    ChecksumMismatchError,
    ConfigError,
    DataError,
    ModelFormatError,
    TooFewClassesError,
    UnknownLabelError,
    UnknownVersionError,
    VideoError,
)
from .hog3d import DecompositionConfig, decompose, num_locations
from .sequence_io import ScalarSequence, extract_roi, read_sequence, resize_sequence

MODEL_MAGIC = b"STLM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    target_w: int = 64
    target_h: int = 48
    b_x: int = 16
    b_y: int = 16
    b_t: int = 1
    c_x: int = 8
    c_y: int = 8
    c_t: int = 1
    stride_xy: int = 8
    sigmoid_a: float = 1.0
    grad_delta: int = 1
    n_s: int = 200
    method: str = coding.LLC
    lam: float = coding.DEFAULT_LAMBDA
    sigma: float = coding.DEFAULT_SIGMA
    gamma: float = 1.0
    svm_c: float = 1.0
    seed: int = 0
    kmeans_max_iters: int = 100
    kmeans_rel_tol: float = 1e-4
    sc_tol: float = coding.SC_TOL
    logreg_tol: float = 1e-6
    svm_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in coding.METHODS:
            raise ConfigError(f"method must be one of {coding.METHODS}, got {self.method!r}")
        if self.target_w < 1 or self.target_h < 1:
            raise ConfigError("target size must be positive")
        if self.n_s < 1:
            raise ConfigError("n_s must be >= 1")
        for name in ("lam", "sigma", "gamma", "svm_c", "sc_tol", "logreg_tol", "svm_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        try:
            self.decomposition
        except DataError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def decomposition(self):
        return DecompositionConfig(
            b_x=self.b_x, b_y=self.b_y, b_t=self.b_t, c_x=self.c_x, c_y=self.c_y,
            c_t=self.c_t, stride_xy=self.stride_xy, sigmoid_a=self.sigmoid_a,
            grad_delta=self.grad_delta)

    @property
    def n_locations(self):
        return num_locations(self.target_w, self.target_h, self.decomposition)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            kind = types[key]
            try:
                values[key] = kind(value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        return cls(**values)

    def feature_digest(self):
        """Digest of every setting that shapes block descriptors."""
        keys = ("target_w", "target_h", "b_x", "b_y", "b_t", "c_x", "c_y", "c_t",
                "stride_xy", "sigmoid_a", "grad_delta")
        return config_digest("".join(f"{k}={_fmt(getattr(self, k))}\n" for k in keys))


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_text(fh.read())


@dataclass(frozen=True, eq=False)
class TrainedModel:
    config: PipelineConfig
    dictionary: Dictionary
    location_models: tuple  # LogRegModel per location index
    svm: SvmModel
    class_labels: tuple
    version: int = MODEL_VERSION

    @property
    def n_locations(self):
        return len(self.location_models)


class _Progress:
    """Serializes calls into a user progress callback."""

    def __init__(self, callback):
        self._callback = callback
        self._lock = threading.Lock()

    def __call__(self, stage, done, total):
        if self._callback is not None:
            with self._lock:
                self._callback(stage, done, total)


def sequence_features(seq, cfg):
    """ROI crop, resize and decomposition of one sequence."""
    roi = extract_roi(seq)
    resized = resize_sequence(seq, roi, cfg.target_w, cfg.target_h)
    return decompose(resized, cfg.decomposition)


def _load_features(item, cfg):
    if isinstance(item, ScalarSequence):
        return sequence_features(item, cfg)
    path = getattr(item, "path", item)
    try:
        return sequence_features(read_sequence(path), cfg)
    except DataError as exc:
        raise VideoError(str(path), exc) from exc


def extract_features(items, cfg, workers=1, progress=None):
    """Block matrices for every item (a path, manifest entry or sequence), in order."""
    progress = progress or _Progress(None)
    items = list(items)
    total = len(items)
    out = [None] * total
    done = [0]

    def run(i):
        out[i] = _load_features(items[i], cfg)
        with lock:
            done[0] += 1
            n = done[0]
        progress("features", n, total)

    lock = threading.Lock()
    if workers > 1 and total > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(total)))
    else:
        for i in range(total):
            run(i)
    return out


def _stack_columns(features):
    return np.concatenate([bm.columns for blocks in features for bm in blocks], axis=1)


def fit_dictionary(features, cfg):
    X = _stack_columns(features).T
    return kmeans_fit(X, n_s=cfg.n_s, seed=cfg.seed, max_iters=cfg.kmeans_max_iters,
                      rel_tol=cfg.kmeans_rel_tol, digest=cfg.feature_digest())


def pooled_descriptors(features, dictionary, cfg):
    """Max-pooled codes, shape (n_videos, n_locations, n_s)."""
    n_videos = len(features)
    n_loc = len(features[0])
    n_t = features[0][0].columns.shape[1]
    A = _stack_columns(features)
    codes = coding.encode(A, dictionary, method=cfg.method, lam=cfg.lam, sigma=cfg.sigma,
                          sc_tol=cfg.sc_tol).codes
    codes = codes.reshape(dictionary.n_s, n_videos, n_loc, n_t)
    return np.max(np.abs(codes), axis=3).transpose(1, 2, 0)


def sequence_descriptors(betas, location_models):
    """Concatenated per-location class probabilities, shape (n_videos, N_P * m)."""
    parts = [model.predict_proba(betas[:, p, :]) for p, model in enumerate(location_models)]
    return np.concatenate(parts, axis=1)


def _check_classes(labels):
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise TooFewClassesError(f"training needs at least 2 classes, got {list(classes)}")
    return classes


def train(entries, cfg=None, workers=1, progress=None, dictionary=None):
    """Train the full pipeline on manifest entries. Deterministic given ``cfg.seed``."""
    cfg = cfg or PipelineConfig()
    entries = list(entries)
    if not entries:
        raise DataError("empty training manifest")
    labels = [e.label for e in entries]
    classes = _check_classes(labels)
    progress = _Progress(progress)

    features = extract_features(entries, cfg, workers=workers, progress=progress)
    if dictionary is None:
        progress("dictionary", 0, 1)
        dictionary = fit_dictionary(features, cfg)
        progress("dictionary", 1, 1)
    elif dictionary.config_digest != cfg.feature_digest():
        raise ConfigError("dictionary was built with a different feature configuration")

    progress("coding", 0, 1)
    betas = pooled_descriptors(features, dictionary, cfg)
    progress("coding", 1, 1)

    location_models = []
    for p in range(betas.shape[1]):
        location_models.append(
            logreg_train(betas[:, p, :], labels, gamma=cfg.gamma, tol=cfg.logreg_tol, classes=classes))
        progress("locations", p + 1, betas.shape[1])

    descriptors = sequence_descriptors(betas, location_models)
    svm = svm_train(descriptors, labels, c=cfg.svm_c, tol=cfg.svm_tol, classes=classes)
    progress("svm", 1, 1)
    return TrainedModel(config=cfg, dictionary=dictionary,
                        location_models=tuple(location_models), svm=svm, class_labels=classes)


def build_dictionary(entries, cfg=None, workers=1, progress=None):
    cfg = cfg or PipelineConfig()
    features = extract_features(entries, cfg, workers=workers, progress=_Progress(progress))
    return fit_dictionary(features, cfg)


def describe(model, items, workers=1):
    """Sequence descriptors of sequences/paths/entries, shape (n, N_P * m)."""
    features = extract_features(items, model.config, workers=workers)
    betas = pooled_descriptors(features, model.dictionary, model.config)
    return sequence_descriptors(betas, model.location_models)


def predict(model, item):
    """(label, sequence descriptor) for one sequence, path or manifest entry."""
    desc = describe(model, [item])[0]
    return model.svm.predict(desc[None, :])[0], desc


def predict_many(model, items, workers=1):
    items = list(items)
    if not items:
        return []
    return model.svm.predict(describe(model, items, workers=workers))


# ---------------------------------------------------------------- evaluation


@dataclass
class EvaluationReport:
    class_labels: tuple
    confusion: np.ndarray  # rows: true class, columns: predicted class
    records: list = field(default_factory=list)  # (path, true, predicted)

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.confusion)) / self.total if self.total else float("nan")

    @property
    def per_class_accuracy(self):
        out = OrderedDict()
        for i, c in enumerate(self.class_labels):
            n = self.confusion[i].sum()
            out[c] = float(self.confusion[i, i] / n) if n else float("nan")
        return out

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "total": self.total,
            "per_class_accuracy": dict(self.per_class_accuracy),
            "class_labels": list(self.class_labels),
            "confusion": self.confusion.tolist(),
            "predictions": [
                {"path": str(p), "true": t, "predicted": q} for p, t, q in self.records
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self):
        lines = ["path,true,predicted"]
        lines += [f"{p},{t},{q}" for p, t, q in self.records]
        lines.append(f"# accuracy,{self.accuracy!r}")
        for c, a in self.per_class_accuracy.items():
            lines.append(f"# class_accuracy,{c},{a!r}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self):
        lines = ["true\\predicted," + ",".join(self.class_labels)]
        for c, row in zip(self.class_labels, self.confusion):
            lines.append(c + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def build_report(class_labels, paths, truth, predicted):
    index = {c: i for i, c in enumerate(class_labels)}
    unknown = [t for t in truth if t not in index]
    if unknown:
        raise UnknownLabelError(unknown)
    confusion = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    for t, q in zip(truth, predicted):
        confusion[index[t], index[q]] += 1
    return EvaluationReport(class_labels=tuple(class_labels), confusion=confusion,
                            records=list(zip(paths, truth, predicted)))


def evaluate(model, entries, workers=1):
    entries = list(entries)
    unknown = [e.label for e in entries if e.label not in model.class_labels]
    if unknown:
        raise UnknownLabelError(unknown)
    predicted = predict_many(model, entries, workers=workers)
    return build_report(model.class_labels, [e.path for e in entries],
                        [e.label for e in entries], predicted)


def loso_folds(entries):
    """[(subject, train, test)] with one fold per distinct subject, sorted by subject."""
    entries = list(entries)
    subjects = sorted({e.subject for e in entries})
    return [
        (s, [e for e in entries if e.subject != s], [e for e in entries if e.subject == s])
        for s in subjects
    ]


def subject_split(entries, train_subjects):
    train_subjects = set(train_subjects)
    entries = list(entries)
    return ([e for e in entries if e.subject in train_subjects],
            [e for e in entries if e.subject not in train_subjects])


def half_subject_split(entries):
    """First half of the sorted subjects for training, the rest for testing."""
    subjects = sorted({e.subject for e in entries})
    return subject_split(entries, subjects[: (len(subjects) + 1) // 2])


def fraction_split(entries, test_fraction, seed=None):
    """Per-class split; the last ``round(n * test_fraction)`` videos of each class
    (in manifest order, or a seeded shuffle of it) form the test set."""
    entries = list(entries)
    rng = None if seed is None else np.random.default_rng(seed)
    train_set, test_set = [], []
    for label in sorted({e.label for e in entries}):
        group = [e for e in entries if e.label == label]
        if rng is not None:
            group = [group[i] for i in rng.permutation(len(group))]
        k = int(round(len(group) * test_fraction))
        train_set += group[:len(group) - k]
        test_set += group[len(group) - k:]
    return train_set, test_set


def run_loso(entries, cfg=None, workers=1, progress=None):
    """Leave-one-subject-out driver. Returns a JSON-ready dict."""
    cfg = cfg or PipelineConfig()
    entries = list(entries)
    classes = _check_classes([e.label for e in entries])
    folds = []
    paths, truth, predicted = [], [], []
    for subject, train_set, test_set in loso_folds(entries):
        model = train(train_set, cfg, workers=workers)
        report = evaluate(model, test_set, workers=workers)
        folds.append({"subject": subject, "n_test": report.total, "accuracy": report.accuracy})
        paths += [e.path for e in test_set]
        truth += [e.label for e in test_set]
        predicted += [r[2] for r in report.records]
        if progress is not None:
            progress("folds", len(folds), len({e.subject for e in entries}))
    overall = build_report(classes, paths, truth, predicted)
    return {
        "folds": folds,
        "mean_fold_accuracy": float(np.mean([f["accuracy"] for f in folds])),
        "overall": overall.to_dict(),
    }


# ---------------------------------------------------------------- persistence


def _encode_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def encode_model(model):
    m = len(model.class_labels)
    n_loc = model.n_locations
    width = model.location_models[0].weights.shape[1]
    regs = struct.pack("<IIId", n_loc, m, width, model.location_models[0].gamma)
    regs += np.stack([lm.weights for lm in model.location_models]).astype("<f8").tobytes()
    svm = model.svm
    svm_blob = struct.pack("<IId", m, svm.weights.shape[1], svm.c)
    svm_blob += svm.weights.astype("<f8").tobytes() + svm.bias.astype("<f8").tobytes()
    labels = struct.pack("<I", m) + b"".join(_encode_str(c) for c in model.class_labels)
    body = MODEL_MAGIC + struct.pack("<I", MODEL_VERSION)
    for section in (model.config.to_text().encode("utf-8"), encode_dictionary(model.dictionary),
                    regs, svm_blob, labels):
        body += pack_section(section)
    return body + checksum(body)


def decode_model(data):
    if len(data) < 16 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != MODEL_VERSION:
        raise UnknownVersionError(f"model format version {version} is not supported")
    if checksum(data[:-8]) != data[-8:]:
        raise ChecksumMismatchError("model checksum mismatch")
    sections, end = unpack_sections(data, 8, 5)
    if end != len(data) - 8:
        raise ModelFormatError("unexpected bytes after the last section")
    cfg_raw, dict_raw, regs, svm_raw, labels_raw = sections
    try:
        cfg = PipelineConfig.from_text(bytes(cfg_raw).decode("utf-8"))
        dictionary = decode_dictionary(dict_raw)

        n_loc, m, width, gamma = struct.unpack_from("<IIId", regs, 0)
        w = np.frombuffer(regs, dtype="<f8", offset=20).astype(np.float64)
        if w.size != n_loc * m * width:
            raise ModelFormatError("regressor section has the wrong size")
        w = w.reshape(n_loc, m, width)

        m2, d, c = struct.unpack_from("<IId", svm_raw, 0)
        sv = np.frombuffer(svm_raw, dtype="<f8", offset=16).astype(np.float64)
        if sv.size != m2 * d + m2:
            raise ModelFormatError("svm section has the wrong size")

        (count,) = struct.unpack_from("<I", labels_raw, 0)
        off, labels = 4, []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", labels_raw, off)
            labels.append(bytes(labels_raw[off + 4:off + 4 + n]).decode("utf-8"))
            off += 4 + n
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ModelFormatError(f"malformed model section: {exc}") from exc
    labels = tuple(labels)

    if n_loc != cfg.n_locations:
        raise ModelFormatError(f"model has {n_loc} location models, config implies {cfg.n_locations}")
    if m != len(labels) or m2 != len(labels) or d != n_loc * m or width != dictionary.n_s + 1:
        raise ModelFormatError("model sections disagree on dimensions")
    if dictionary.config_digest != cfg.feature_digest():
        raise ModelFormatError("dictionary does not match the stored feature configuration")
    for arr in (w, sv):
        arr.setflags(write=False)
    location_models = tuple(
        LogRegModel(weights=w[p], gamma=gamma, class_labels=labels) for p in range(n_loc))
    svm = SvmModel(weights=sv[:m2 * d].reshape(m2, d), bias=sv[m2 * d:], c=c, class_labels=labels)
    return TrainedModel(config=cfg, dictionary=dictionary, location_models=location_models,
                        svm=svm, class_labels=labels, version=version)


def save_model(model, path):
    data = encode_model(model)
    Path(path).write_bytes(data)
    return len(data)


def load_model(path):
    return decode_model(Path(path).read_bytes())
