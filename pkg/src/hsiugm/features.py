"""Spatial-spectral feature extraction: per-band standardization, PCA,
grayscale morphology with disk structuring elements, and the extended
morphological profile (EMP).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import HsiCube

__all__ = [
    "FeatureCube",
    "EmpParams",
    "standardize",
    "pca",
    "disk_offsets",
    "morph_open",
    "morph_close",
    "emp",
]

VARIANCE_GRID = (0.84, 0.89, 0.94, 0.99)
LEVELS_GRID = (2, 4, 8)
STEP_GRID = (2, 4, 8)
BASE_DIAMETER = 2


@dataclass(frozen=True)
class FeatureCube:
    """H x W x F stack of per-pixel feature vectors."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] < 1:
            raise ValueError(f"feature cube must be H x W x F, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def dims(self):
        return self.values.shape[2]


@dataclass(frozen=True)
class EmpParams:
    """EMP hyperparameters; tuning draws them from the published grids
    but the API accepts any positive values.
    """

    variance_fraction: float = 0.99
    n_levels: int = 4
    size_step: int = 2

    def diameters(self):
        """Structuring-element diameters: 2, 2+s, 2+2s, ..."""
        return [BASE_DIAMETER + j * self.size_step for j in range(self.n_levels)]


def standardize(cube):
    """Shift/scale every band to zero mean and unit population std.

    Constant bands map to all zeros instead of dividing by zero.
    """
    v = cube.values
    mean = v.mean(axis=(0, 1), keepdims=True)
    std = v.std(axis=(0, 1), keepdims=True)
    out = np.where(std > 0, (v - mean) / np.where(std > 0, std, 1.0), 0.0)
    return HsiCube(out)


def pca(cube, variance_fraction):
    """Project onto the fewest leading principal components whose
    eigenvalue sum reaches the requested fraction of total variance.

    Eigenvectors are sign-fixed so the largest-magnitude entry is
    positive; near-zero eigenvalues (< 1e-12 of the trace) are dropped.
    """
    if not 0 < variance_fraction <= 1:
        raise ValueError(f"variance fraction must be in (0, 1], got {variance_fraction}")
    v = cube.values
    h, w, b = v.shape
    flat = v.reshape(-1, b)
    centered = flat - flat.mean(axis=0)
    cov = centered.T @ centered / flat.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    keep = eigvals > 1e-12 * max(cov.trace(), np.finfo(float).tiny)
    eigvals, eigvecs = eigvals[keep], eigvecs[:, keep]
    if eigvals.size == 0:
        # zero-variance input: keep one all-zero score image
        return FeatureCube(np.zeros((h, w, 1)))
    total = eigvals.sum()
    cum = np.cumsum(eigvals)
    n_pc = int(np.searchsorted(cum, variance_fraction * total - 1e-12) + 1)
    n_pc = min(n_pc, eigvals.size)
    vecs = eigvecs[:, :n_pc].copy()
    for k in range(n_pc):
        pivot = np.argmax(np.abs(vecs[:, k]))
        if vecs[pivot, k] < 0:
            vecs[:, k] = -vecs[:, k]
    scores = centered @ vecs
    return FeatureCube(scores.reshape(h, w, n_pc))


def disk_offsets(diameter):
    """Integer offsets (dy, dx) with dy^2 + dx^2 <= (d/2)^2, as a boolean
    footprint for grayscale morphology.
    """
    r = diameter / 2.0
    half = int(np.floor(r))
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1]
    return (ys * ys + xs * xs) <= r * r + 1e-9


def morph_open(img, diameter):
    """Grayscale opening (erosion then dilation) with a disk structuring
    element; replicate padding at the borders.
    """
    footprint = disk_offsets(diameter)
    eroded = ndimage.grey_erosion(img, footprint=footprint, mode="nearest")
    return ndimage.grey_dilation(eroded, footprint=footprint, mode="nearest")


def morph_close(img, diameter):
    """Grayscale closing (dilation then erosion) with a disk SE."""
    footprint = disk_offsets(diameter)
    dilated = ndimage.grey_dilation(img, footprint=footprint, mode="nearest")
    return ndimage.grey_erosion(dilated, footprint=footprint, mode="nearest")


def emp(cube, params):
    """Extended morphological profile: PCA scores of the standardized
    cube, each stacked with openings and closings at increasing SE size.

    Output dimension is n_pc * (2 * n_levels + 1).
    """
    scores = pca(standardize(cube), params.variance_fraction)
    diameters = params.diameters()
    channels = []
    for k in range(scores.dims):
        base = scores.values[:, :, k]
        channels.append(base)
        for d in diameters:
            channels.append(morph_open(base, d))
        for d in diameters:
            channels.append(morph_close(base, d))
    return FeatureCube(np.stack(channels, axis=2))
