"""Pixel-wise classifiers and unary-energy adapters.

The logistic regression is the only trained classifier; the spectral
angle mapper is training-free. External classifier outputs (SVM, RF, GP)
enter the pipeline through :func:`ingest_proba`.
"""

from dataclasses import dataclass

import numpy as np

from .rasterfile import DataError, load_raster

__all__ = [
    "ProbabilityField",
    "LrModel",
    "AngleField",
    "train_lr",
    "lr_objective_and_grad",
    "predict_proba",
    "sam_angles",
    "unary_from_proba",
    "unary_from_angles",
    "exp_neg_angles",
    "ingest_proba",
    "save_proba",
]

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class ProbabilityField:
    """H x W x M per-pixel class probabilities; each pixel's row sums to 1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"probability field must be H x W x M, got {v.shape}")
        if v.min() < 0:
            raise DataError("negative probability")
        sums = v.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise DataError(
                f"pixel probabilities must sum to 1, worst sum {sums.ravel()[np.abs(sums - 1).argmax()]}"
            )
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def n_classes(self):
        return self.values.shape[2]


@dataclass(frozen=True)
class LrModel:
    """Multinomial logistic regression weights, one row per class.

    ``weights`` is M x (F + 1); the last column is the unpenalized bias.
    """

    weights: np.ndarray
    lam: float

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def n_features(self):
        return self.weights.shape[1] - 1


@dataclass(frozen=True)
class AngleField:
    """H x W x M minimum spectral angles (radians) to each class."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.min() < -1e-12 or v.max() > np.pi + 1e-12:
            raise DataError("angles must lie in [0, pi]")
        object.__setattr__(self, "values", np.clip(v, 0.0, np.pi))


def _gather_training(features, split):
    idx, classes = split.train[:, 0], split.train[:, 1]
    flat = features.values.reshape(-1, features.dims)
    return flat[idx], classes


def lr_objective_and_grad(weights, x, y, lam):
    """Mean multinomial cross-entropy + (lam/2)*||W||^2 (bias excluded),
    with its analytic gradient. ``x`` already carries the bias column.
    """
    n = x.shape[0]
    scores = x @ weights.T
    scores -= scores.max(axis=1, keepdims=True)
    expo = np.exp(scores)
    probs = expo / expo.sum(axis=1, keepdims=True)
    nll = -np.mean(np.log(probs[np.arange(n), y] + np.finfo(float).tiny))
    penalty = 0.5 * lam * np.sum(weights[:, :-1] ** 2)
    resid = probs.copy()
    resid[np.arange(n), y] -= 1.0
    grad = resid.T @ x / n
    grad[:, :-1] += lam * weights[:, :-1]
    return nll + penalty, grad


def train_lr(features, split, lam, max_iters=5000, grad_tol=1e-6):
    """Fit L2-regularized multinomial logistic regression by full-batch
    gradient descent with backtracking line search.

    Deterministic; stops at gradient norm < grad_tol or the iteration cap.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    x_raw, classes = _gather_training(features, split)
    if not np.isfinite(x_raw).all():
        raise DataError("non-finite training features")
    m = int(classes.max())
    y = classes - 1
    x = np.hstack([x_raw, np.ones((x_raw.shape[0], 1))])
    weights = np.zeros((m, x.shape[1]))
    value, grad = lr_objective_and_grad(weights, x, y, lam)
    step = 1.0
    for _ in range(max_iters):
        gnorm = np.linalg.norm(grad)
        if gnorm < grad_tol:
            break
        # Armijo backtracking; the accepted step seeds the next iteration.
        step = min(step * 2.0, 1e6)
        while True:
            trial = weights - step * grad
            trial_value, trial_grad = lr_objective_and_grad(trial, x, y, lam)
            if trial_value <= value - 1e-4 * step * gnorm**2:
                break
            step *= 0.5
            if step < 1e-18:
                return LrModel(weights=weights, lam=float(lam))
        weights, value, grad = trial, trial_value, trial_grad
    return LrModel(weights=weights, lam=float(lam))


def predict_proba(model, features):
    """Softmax of the linear class scores at every pixel."""
    if features.dims != model.n_features:
        raise ValueError(
            f"feature dim {features.dims} does not match model dim {model.n_features}"
        )
    h, w = features.height, features.width
    flat = features.values.reshape(-1, features.dims)
    scores = flat @ model.weights[:, :-1].T + model.weights[:, -1]
    scores -= scores.max(axis=1, keepdims=True)
    expo = np.exp(scores)
    probs = expo / expo.sum(axis=1, keepdims=True)
    return ProbabilityField(probs.reshape(h, w, model.n_classes))


def sam_angles(features, split):
    """Minimum spectral angle from every pixel to each class's training
    spectra; scale-invariant in both arguments.
    """
    x_train, classes = _gather_training(features, split)
    m = int(classes.max())
    flat = features.values.reshape(-1, features.dims)
    norms = np.linalg.norm(flat, axis=1)
    if (norms == 0).any():
        idx = int(np.flatnonzero(norms == 0)[0])
        raise DataError(
            f"zero-norm spectrum at pixel ({idx // features.width}, {idx % features.width})"
        )
    train_norms = np.linalg.norm(x_train, axis=1)
    if (train_norms == 0).any():
        raise DataError("zero-norm training spectrum")
    unit = flat / norms[:, None]
    unit_train = x_train / train_norms[:, None]
    cos = unit @ unit_train.T
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    out = np.empty((flat.shape[0], m))
    for cls in range(1, m + 1):
        cols = np.flatnonzero(classes == cls)
        if cols.size == 0:
            raise DataError(f"class {cls} has no training spectra")
        out[:, cls - 1] = angles[:, cols].min(axis=1)
    return AngleField(out.reshape(features.height, features.width, m))


def unary_from_proba(proba, eps=DEFAULT_EPS):
    """Unary energies E_i(c) = -ln(max(P_i(c), eps)), flattened to n x M."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    p = proba.values.reshape(-1, proba.n_classes)
    return -np.log(np.maximum(p, eps))


def unary_from_angles(angle_field):
    """Identity adapter: the minimum angle is the unary energy."""
    v = angle_field.values
    return v.reshape(-1, v.shape[2]).copy()


def exp_neg_angles(angle_field):
    """CRF feature adapter: e^(-angle) per class, flattened to n x M."""
    v = angle_field.values
    return np.exp(-v.reshape(-1, v.shape[2]))


def ingest_proba(header_path):
    """Read an externally produced probability field (header + raw,
    kind=proba). Rows summing to 1 within 1e-6 are renormalized; anything
    further off is an error.
    """
    values, fields = load_raster(header_path)
    if fields.get("kind", "proba") != "proba":
        raise DataError(f"{header_path}: kind is {fields.get('kind')!r}, expected proba")
    if values.min() < 0:
        raise DataError(f"{header_path}: negative probability entry")
    sums = values.sum(axis=2)
    if (np.abs(sums - 1.0) > 1e-6).any():
        worst = sums.ravel()[np.abs(sums - 1.0).argmax()]
        raise DataError(f"{header_path}: pixel probabilities sum to {worst}, not 1")
    return ProbabilityField(values / sums[:, :, None])


def save_proba(header_path, proba):
    from .rasterfile import save_raster

    save_raster(header_path, proba.values, extra_fields={"kind": "proba"}, dtype="f32")
