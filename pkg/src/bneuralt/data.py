"""Datasets: CSV and IDX ingestion, min-max scaling, splitting, Friedman #1."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .tree import Task

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_IDX_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_IDX_CODES = {np.dtype(v).char: k for k, v in _IDX_DTYPES.items()}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class MinMaxRecord:
    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float | None = None
    target_max: float | None = None

    def denormalize_targets(self, y):
        if self.target_min is None:
            raise DataError("no target scaling recorded")
        return np.asarray(y) * (self.target_max - self.target_min) + self.target_min


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    task: Task
    feature_names: tuple[str, ...] | None = None
    class_labels: tuple[str, ...] | None = None
    normalization: MinMaxRecord | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        y = np.asarray(self.targets, dtype=np.int64 if self.task.is_classification else np.float64)
        if y.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} rows but {y.shape} targets")
        if self.task.is_classification and (y.min() < 0 or y.max() >= self.task.n_classes):
            raise DataError(f"class indices outside [0, {self.task.n_classes})")
        object.__setattr__(self, "features", np.ascontiguousarray(X))
        object.__setattr__(self, "targets", np.ascontiguousarray(y))

    def __len__(self):
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows)
        return replace(self, features=self.features[rows], targets=self.targets[rows])


# -- CSV ---------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, target_column: int | str = -1, task: str = "classification") -> Dataset:
    """Read a numeric CSV; the header row is detected by a non-numeric first line.

    Classification labels (any text) are numbered by first appearance.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    header = None
    first = rows[0][1]
    if not all(_is_number(c) for c in first):
        header = [c.strip() for c in first]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    width = len(header) if header else len(rows[0][1])
    if isinstance(target_column, str):
        if header is None or target_column not in header:
            raise DataError(f"{path}: unknown target column {target_column!r}")
        tcol = header.index(target_column)
    else:
        tcol = target_column if target_column >= 0 else width + target_column
        if not 0 <= tcol < width:
            raise DataError(f"{path}: target column {target_column} out of range for {width} columns")
    feats, raw_targets = [], []
    for line, row in rows:
        if len(row) != width:
            raise DataError(f"{path}:{line}: expected {width} cells, found {len(row)}")
        vals = []
        for k, cell in enumerate(row):
            if k == tcol:
                continue
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}:{line}: missing value in column {k}")
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value {cell!r} in column {k}") from None
        feats.append(vals)
        raw_targets.append(row[tcol].strip())
    names = None
    if header:
        names = tuple(h for k, h in enumerate(header) if k != tcol)
    X = np.asarray(feats, dtype=np.float64).reshape(len(feats), width - 1)
    if task == "classification":
        labels: dict[str, int] = {}
        y = np.array([labels.setdefault(t, len(labels)) for t in raw_targets], dtype=np.int64)
        if len(labels) < 2:
            raise DataError(f"{path}: classification needs at least two distinct labels")
        return Dataset(X, y, Task.classification(len(labels)), names, tuple(labels))
    if task == "regression":
        try:
            y = np.array([float(t) for t in raw_targets])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric regression target ({exc})") from None
        return Dataset(X, y, Task.regression(), names)
    raise DataError(f"unknown task {task!r}")


def load_builtin(name: str) -> Dataset:
    """Raw (unscaled) copies of the UCI Iris and Wine tables shipped with the package."""
    if name not in ("iris", "wine"):
        raise DataError(f"no bundled dataset {name!r}")
    with resources.as_file(resources.files("bneuralt") / "datasets" / f"{name}.csv") as p:
        return load_csv(p, target_column="class", task="classification")


# -- scaling and splitting ---------------------------------------------------


def fit_minmax(data: Dataset) -> MinMaxRecord:
    tmin = tmax = None
    if not data.task.is_classification:
        tmin, tmax = float(data.targets.min()), float(data.targets.max())
    return MinMaxRecord(data.features.min(axis=0), data.features.max(axis=0), tmin, tmax)


def _scale(values, lo, hi):
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - lo) / safe, 0.0)


def apply_minmax(data: Dataset, record: MinMaxRecord) -> Dataset:
    """Scale with a given record, e.g. train-set statistics applied to a test set."""
    X = _scale(data.features, record.feature_min, record.feature_max)
    y = data.targets
    if not data.task.is_classification and record.target_min is not None:
        y = _scale(y, record.target_min, record.target_max)
    return replace(data, features=X, targets=y, normalization=record)


def minmax_normalize(data: Dataset) -> Dataset:
    """Map every feature (and a regression target) onto [0, 1]; constant columns become 0."""
    return apply_minmax(data, fit_minmax(data))


def shuffle_split(data: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    n = len(data)
    n_train = math.floor(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DataError(f"a {train_fraction} split of {n} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


# -- IDX (MNIST) -------------------------------------------------------------


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    with _open(path) as fh:
        payload = fh.read()
    if len(payload) < 4:
        raise DataError(f"{path}: truncated header")
    magic = struct.unpack(">I", payload[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if magic >> 16 != 0 or code not in _IDX_DTYPES:
        raise DataError(f"{path}: bad magic 0x{magic:08x}")
    head = 4 + 4 * ndim
    if len(payload) < head:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", payload[4:head])
    dtype = np.dtype(_IDX_DTYPES[code])
    need = int(np.prod(dims)) * dtype.itemsize
    if len(payload) - head != need:
        raise DataError(f"{path}: payload has {len(payload) - head} bytes, header implies {need}")
    return np.frombuffer(payload, dtype=dtype, offset=head).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = _IDX_CODES.get(array.dtype.char)
    if code is None:
        raise DataError(f"dtype {array.dtype} has no IDX code")
    be = np.dtype(_IDX_DTYPES[code])
    header = struct.pack(">I", (code << 8) | array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header + array.astype(be).tobytes())


def load_idx(images_path, labels_path) -> Dataset:
    """MNIST image/label pair, flattened to 784 features and scaled by 1/255."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataError(f"{images_path}: expected [count, rows, cols], got {images.shape}")
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), Task.classification(10),
                   class_labels=tuple(str(d) for d in range(10)))


def load_mnist(directory, split: str = "train") -> Dataset:
    directory = Path(directory)
    prefix = {"train": "train", "test": "t10k"}[split]
    for suffix in ("", ".gz"):
        img = directory / f"{prefix}-images-idx3-ubyte{suffix}"
        lab = directory / f"{prefix}-labels-idx1-ubyte{suffix}"
        if img.exists() and lab.exists():
            return load_idx(img, lab)
    raise DataError(f"no MNIST {split} files under {directory}")


# -- synthetic regression ----------------------------------------------------


def friedman1(X: np.ndarray) -> np.ndarray:
    """Noise-free Friedman #1 response on the first five columns."""
    X = np.asarray(X, dtype=np.float64)
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def generate_friedman(n: int = 1200, noise_seed: int = 0, noise: float = 1.0) -> Dataset:
    """Friedman #1 sample with unit Gaussian noise and a min-max scaled target."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(noise_seed)
    X = rng.uniform(0.0, 1.0, size=(n, 5))
    y = friedman1(X) + noise * rng.standard_normal(n)
    raw = Dataset(X, y, Task.regression(), tuple(f"x{i + 1}" for i in range(5)))
    rec = fit_minmax(raw)
    return replace(raw, targets=_scale(y, rec.target_min, rec.target_max), normalization=rec)
