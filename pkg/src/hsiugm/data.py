"""Hyperspectral cube and ground-truth handling: file I/O, train/test
split sampling, and synthetic scene generation.

All randomness flows through :func:`rng`, a PCG64 generator keyed by an
integer seed, so splits and scenes are reproducible bit-for-bit.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .rasterfile import (
    DataError,
    FormatError,
    load_pgm,
    load_raster,
    save_pgm,
    save_raster,
)

__all__ = [
    "HsiCube",
    "LabelMap",
    "SplitSet",
    "SceneSpec",
    "rng",
    "load_cube",
    "save_cube",
    "load_labels",
    "save_labels",
    "sample_split",
    "save_split",
    "load_split",
    "synth_scene",
]


def rng(seed):
    """The package-wide PRNG: NumPy's PCG64 keyed by an integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class HsiCube:
    """H x W x B stack of spectral samples (radiance or reflectance)."""

    values: np.ndarray  # float64, H x W x B

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"cube values must be H x W x B, got shape {v.shape}")
        if v.shape[2] < 1 or v.shape[0] * v.shape[1] < 1:
            raise ValueError(f"cube dimensions must be positive, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """H x W class indices; 0 marks unlabeled pixels, classes are 1..M."""

    labels: np.ndarray  # int64, H x W

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 2:
            raise ValueError(f"label map must be H x W, got shape {lab.shape}")
        if lab.min(initial=0) < 0:
            raise FormatError("labels must be nonnegative")
        object.__setattr__(self, "labels", lab)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def n_classes(self):
        """M = the largest label present."""
        return int(self.labels.max(initial=0))


@dataclass(frozen=True)
class SplitSet:
    """Disjoint train/test pixel sets sampled from a label map.

    ``train`` and ``test`` are arrays of (flat pixel index, class) rows,
    with flat index = row * width + col.
    """

    train: np.ndarray  # int64, n x 2
    test: np.ndarray  # int64, n x 2
    seed: int
    width: int  # needed to recover (row, col) from flat indices

    def train_pixels(self):
        return self.train[:, 0], self.train[:, 1]

    def test_pixels(self):
        return self.test[:, 0], self.test[:, 1]


def load_cube(header_path):
    """Read a cube in the header + raw format; rejects non-finite samples."""
    values, fields = load_raster(header_path)
    if fields.get("dtype") != "f32":
        raise FormatError(f"{header_path}: cube dtype must be f32")
    bad = ~np.isfinite(values)
    if bad.any():
        r, c, b = (int(x[0]) for x in np.nonzero(bad))
        raise DataError(
            f"{header_path}: non-finite value at pixel ({r}, {c}), band {b}"
        )
    return HsiCube(values)


def save_cube(header_path, cube, extra_fields=None):
    save_raster(header_path, cube.values, extra_fields=extra_fields, dtype="f32")


def load_labels(path, require_labeled=False):
    """Read a label map from PGM (P5) or CSV of (row, col, label) lines."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        labels = load_pgm(path)
    else:
        labels = _load_labels_csv(path)
    if labels.min(initial=0) < 0:
        raise FormatError(f"{path}: negative label")
    lm = LabelMap(labels)
    if require_labeled and lm.n_classes == 0:
        raise DataError(f"{path}: no labeled pixels")
    return lm


def _load_labels_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() in ("row", ""):
                continue
            if len(rec) != 3:
                raise FormatError(f"{path}: expected row,col,label rows")
            rows.append((int(rec[0]), int(rec[1]), int(rec[2])))
    if not rows:
        raise FormatError(f"{path}: empty label CSV")
    arr = np.asarray(rows, dtype=np.int64)
    h, w = arr[:, 0].max() + 1, arr[:, 1].max() + 1
    labels = np.zeros((h, w), dtype=np.int64)
    labels[arr[:, 0], arr[:, 1]] = arr[:, 2]
    return labels


def save_labels(path, label_map):
    """Write a label map; .csv extension selects CSV, anything else PGM."""
    if os.path.splitext(path)[1].lower() == ".csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "label"])
            for r in range(label_map.height):
                for c in range(label_map.width):
                    writer.writerow([r, c, int(label_map.labels[r, c])])
    else:
        save_pgm(path, label_map.labels)


def sample_split(labels, n_train_per_class, n_test_per_class, seed):
    """Sample disjoint train/test pixels uniformly per class.

    Deterministic for a given seed; label-0 pixels are never sampled.
    """
    lm = labels.labels
    m = labels.n_classes
    if m == 0:
        raise DataError("no labeled pixels to sample from")
    gen = rng(seed)
    flat = lm.ravel()
    train_rows, test_rows = [], []
    for cls in range(1, m + 1):
        pool = np.flatnonzero(flat == cls)
        need = n_train_per_class + n_test_per_class
        if pool.size < need:
            raise DataError(
                f"class {cls} has {pool.size} labeled pixels, "
                f"but {need} were requested"
            )
        picked = gen.choice(pool, size=need, replace=False)
        for idx in picked[:n_train_per_class]:
            train_rows.append((idx, cls))
        for idx in picked[n_train_per_class:]:
            test_rows.append((idx, cls))
    return SplitSet(
        train=np.asarray(train_rows, dtype=np.int64).reshape(-1, 2),
        test=np.asarray(test_rows, dtype=np.int64).reshape(-1, 2),
        seed=int(seed),
        width=labels.width,
    )


def save_split(path, split):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pixel_row", "pixel_col", "class", "role"])
        for arr, role in ((split.train, "train"), (split.test, "test")):
            for idx, cls in arr:
                writer.writerow([idx // split.width, idx % split.width, cls, role])


def load_split(path, width, seed=0):
    train_rows, test_rows = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() in ("pixel_row", ""):
                continue
            r, c, cls, role = int(rec[0]), int(rec[1]), int(rec[2]), rec[3].strip()
            row = (r * width + c, cls)
            if role == "train":
                train_rows.append(row)
            elif role == "test":
                test_rows.append(row)
            else:
                raise FormatError(f"{path}: unknown role {role!r}")
    return SplitSet(
        train=np.asarray(train_rows, dtype=np.int64).reshape(-1, 2),
        test=np.asarray(test_rows, dtype=np.int64).reshape(-1, 2),
        seed=int(seed),
        width=width,
    )


@dataclass(frozen=True)
class SceneSpec:
    """Blocky synthetic scene: a coarse layout of class regions stretched
    to the image size, one mean spectrum per class, i.i.d. Gaussian noise.
    """

    height: int
    width: int
    layout: np.ndarray = field(default=None)  # R x C class ids in 1..M
    means: np.ndarray = field(default=None)  # M x B mean spectra
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layout", np.asarray(self.layout, dtype=np.int64))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        if self.layout.ndim != 2 or self.layout.min() < 1:
            raise ValueError("layout must be a 2-D array of class ids >= 1")
        if self.layout.max() > self.means.shape[0]:
            raise ValueError("layout references a class with no mean spectrum")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def synth_scene(spec, seed):
    """Generate (cube, labels): each pixel is its class mean plus
    zero-mean Gaussian noise with the given sigma, deterministic per seed.
    """
    h, w = spec.height, spec.width
    rgrid, cgrid = spec.layout.shape
    rows = np.arange(h) * rgrid // h
    cols = np.arange(w) * cgrid // w
    labels = spec.layout[np.ix_(rows, cols)]
    bands = spec.means.shape[1]
    values = spec.means[labels - 1].astype(np.float64)
    if spec.sigma > 0:
        values = values + spec.sigma * rng(seed).standard_normal((h, w, bands))
    return HsiCube(values), LabelMap(labels)
