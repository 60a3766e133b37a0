"""SLIC superpixel segmentation, superpixel adjacency graphs, unary
aggregation, and projection of superpixel labels back onto pixels.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .classifiers import DEFAULT_EPS
from .data import LabelMap
from .energy import Graph
from .features import standardize

__all__ = [
    "SuperpixelSegmentation",
    "SlicParams",
    "slic",
    "adjacency",
    "aggregate_unary",
    "project_labels",
    "identity_segmentation",
]

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SuperpixelSegmentation:
    """Pixel -> superpixel assignment with contiguous ids 0..K-1; every
    superpixel is 4-connected.
    """

    assignment: np.ndarray  # H x W int64

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 2:
            raise ValueError("assignment must be H x W")
        k = a.max() + 1
        if not np.array_equal(np.unique(a), np.arange(k)):
            raise ValueError("superpixel ids must be contiguous 0..K-1")
        object.__setattr__(self, "assignment", a)

    @property
    def height(self):
        return self.assignment.shape[0]

    @property
    def width(self):
        return self.assignment.shape[1]

    @property
    def n_superpixels(self):
        return int(self.assignment.max()) + 1

    def sizes(self):
        return np.bincount(self.assignment.ravel(), minlength=self.n_superpixels)


@dataclass(frozen=True)
class SlicParams:
    requested_superpixels: int
    regularizer: float = 100.0
    min_region_size: int = 9
    kmeans_iters: int = 10

    def __post_init__(self):
        if (
            self.requested_superpixels < 1
            or self.regularizer <= 0
            or self.min_region_size < 1
            or self.kmeans_iters < 1
        ):
            raise ValueError("SLIC parameters must be positive")


def slic(cube, params):
    """Localized k-means over (spectrum, weighted coordinates).

    The cube is standardized internally; cluster seeds start on a regular
    grid with spacing S = sqrt(H*W / requested); each pixel only competes
    for centers within a 2S x 2S window; squared distance is
    d_spectral^2 + (regularizer / S)^2 * d_spatial^2. After the k-means
    iterations, connectivity is enforced and fragments below
    min_region_size are merged into their largest adjacent superpixel.
    """
    h, w = cube.height, cube.width
    if params.requested_superpixels > h * w:
        raise ValueError(
            f"requested {params.requested_superpixels} superpixels for {h * w} pixels"
        )
    values = standardize(cube).values
    s = float(np.sqrt(h * w / params.requested_superpixels))
    spatial_w = (params.regularizer / s) ** 2
    rows = _grid_positions(h, s)
    cols = _grid_positions(w, s)
    centers_rc = np.array([(r, c) for r in rows for c in cols], dtype=np.float64)
    centers_spec = values[rows][:, cols].reshape(-1, cube.bands)
    ys, xs = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.inf)
    assign = np.zeros((h, w), dtype=np.int64)
    for _ in range(params.kmeans_iters):
        best[:] = np.inf
        for k in range(centers_rc.shape[0]):
            r0 = max(int(centers_rc[k, 0] - s), 0)
            r1 = min(int(centers_rc[k, 0] + s) + 1, h)
            c0 = max(int(centers_rc[k, 1] - s), 0)
            c1 = min(int(centers_rc[k, 1] + s) + 1, w)
            spec = values[r0:r1, c0:c1]
            d_spec = ((spec - centers_spec[k]) ** 2).sum(axis=2)
            d_xy = (ys[r0:r1, c0:c1] - centers_rc[k, 0]) ** 2 + (
                xs[r0:r1, c0:c1] - centers_rc[k, 1]
            ) ** 2
            dist = d_spec + spatial_w * d_xy
            window_best = best[r0:r1, c0:c1]
            better = dist < window_best
            window_best[better] = dist[better]
            assign[r0:r1, c0:c1][better] = k
        # recompute centers from their members; empty clusters keep position
        flat = assign.ravel()
        counts = np.bincount(flat, minlength=centers_rc.shape[0]).astype(float)
        nonempty = counts > 0
        sums_r = np.bincount(flat, weights=ys.ravel(), minlength=counts.size)
        sums_c = np.bincount(flat, weights=xs.ravel(), minlength=counts.size)
        centers_rc[nonempty, 0] = sums_r[nonempty] / counts[nonempty]
        centers_rc[nonempty, 1] = sums_c[nonempty] / counts[nonempty]
        for b in range(cube.bands):
            sums = np.bincount(flat, weights=values[:, :, b].ravel(), minlength=counts.size)
            centers_spec[nonempty, b] = sums[nonempty] / counts[nonempty]
    assign = _enforce_connectivity(assign, params.min_region_size)
    return SuperpixelSegmentation(assignment=assign)


def _grid_positions(extent, spacing):
    n = max(int(round(extent / spacing)), 1)
    return np.minimum(
        ((np.arange(n) + 0.5) * extent / n).astype(np.int64), extent - 1
    )


def _enforce_connectivity(assign, min_region_size):
    """Split disconnected clusters into components, then merge fragments
    below the size floor into their largest 4-adjacent neighbor,
    smallest fragments first (ties by component id).
    """
    h, w = assign.shape
    components = np.zeros((h, w), dtype=np.int64)
    next_id = 0
    for cluster in np.unique(assign):
        mask = assign == cluster
        labeled, n_comp = ndimage.label(mask, structure=_FOUR_CONN)
        components[mask] = labeled[mask] + next_id - 1
        next_id += n_comp
    region = components
    while True:
        sizes = np.bincount(region.ravel(), minlength=next_id)
        roots = np.flatnonzero(sizes > 0)
        small = roots[sizes[roots] < min_region_size]
        if small.size == 0 or roots.size == 1:
            break
        cid = min(small.tolist(), key=lambda c: (sizes[c], c))
        mask = region == cid
        ring = ndimage.binary_dilation(mask, structure=_FOUR_CONN) & ~mask
        neighbors = np.unique(region[ring]).tolist()
        if not neighbors:
            break
        target = max(neighbors, key=lambda t: (sizes[t], -t))
        region = np.where(mask, target, region)
    _, contiguous = np.unique(region, return_inverse=True)
    return contiguous.reshape(region.shape)


def adjacency(seg):
    """Superpixel adjacency graph: edge (a, b) iff some pixel of a is
    4-adjacent to some pixel of b. Edges are sorted with a < b.
    """
    a = seg.assignment
    pairs = set()
    for left, right in ((a[:, :-1], a[:, 1:]), (a[:-1, :], a[1:, :])):
        diff = left != right
        lo = np.minimum(left[diff], right[diff])
        hi = np.maximum(left[diff], right[diff])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    edges = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return Graph(n_nodes=seg.n_superpixels, edges=edges)


def aggregate_unary(proba, seg, eps=DEFAULT_EPS):
    """K x M unary energies: -ln of the mean member-pixel probability,
    floored at eps.
    """
    if (proba.height, proba.width) != (seg.height, seg.width):
        raise ValueError("probability field and segmentation sizes differ")
    flat_p = proba.values.reshape(-1, proba.n_classes)
    flat_a = seg.assignment.ravel()
    k = seg.n_superpixels
    sums = np.zeros((k, proba.n_classes))
    np.add.at(sums, flat_a, flat_p)
    means = sums / seg.sizes()[:, None]
    return -np.log(np.maximum(means, eps))


def project_labels(seg, sp_labels):
    """Pixel label map where every pixel takes its superpixel's label."""
    sp_labels = np.asarray(sp_labels, dtype=np.int64)
    if sp_labels.shape != (seg.n_superpixels,):
        raise ValueError(
            f"expected {seg.n_superpixels} superpixel labels, got {sp_labels.shape}"
        )
    return LabelMap(sp_labels[seg.assignment])


def identity_segmentation(height, width):
    """Degenerate segmentation with one superpixel per pixel; its
    adjacency graph equals the 4-connected pixel grid.
    """
    return SuperpixelSegmentation(
        assignment=np.arange(height * width, dtype=np.int64).reshape(height, width)
    )
