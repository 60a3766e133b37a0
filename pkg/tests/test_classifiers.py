"""Logistic regression, spectral angle mapper, and unary adapters."""

import numpy as np
import pytest

from hsiugm.classifiers import (
    AngleField,
    LrModel,
    ProbabilityField,
    exp_neg_angles,
    ingest_proba,
    lr_objective_and_grad,
    predict_proba,
    sam_angles,
    save_proba,
    train_lr,
    unary_from_angles,
    unary_from_proba,
)
from hsiugm.data import SplitSet, rng
from hsiugm.features import FeatureCube
from hsiugm.rasterfile import DataError, save_raster


def _split_from(labels_flat, width):
    rows = [(i, int(c)) for i, c in enumerate(labels_flat) if c > 0]
    arr = np.asarray(rows, dtype=np.int64)
    return SplitSet(train=arr, test=arr[:0], seed=0, width=width)


def _separable_problem():
    # 1-D feature: x=-1 -> class 1, x=+1 -> class 2
    x = np.array([-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]).reshape(1, 6, 1)
    labels = np.array([1, 1, 1, 2, 2, 2])
    return FeatureCube(x), _split_from(labels, width=6)


def test_train_lr_separable_perfect():
    feats, split = _separable_problem()
    model = train_lr(feats, split, lam=1e-4)
    proba = predict_proba(model, feats)
    pred = np.argmax(proba.values.reshape(-1, 2), axis=1) + 1
    assert np.array_equal(pred, split.train[:, 1])


def test_train_lr_huge_lambda_gives_uniform():
    feats, split = _separable_problem()
    model = train_lr(feats, split, lam=1e9)
    assert np.abs(model.weights[:, :-1]).max() < 1e-6
    proba = predict_proba(model, feats)
    assert np.allclose(proba.values, 0.5, atol=1e-6)


def test_train_lr_descent_and_stationarity():
    gen = rng(0)
    feats = FeatureCube(gen.normal(size=(5, 8, 3)))
    labels = gen.integers(1, 4, size=40)
    split = _split_from(labels, width=8)
    model = train_lr(feats, split, lam=0.1)
    x = feats.values.reshape(-1, 3)[split.train[:, 0]]
    x = np.hstack([x, np.ones((x.shape[0], 1))])
    y = split.train[:, 1] - 1
    v_zero, _ = lr_objective_and_grad(np.zeros_like(model.weights), x, y, 0.1)
    v_fit, grad = lr_objective_and_grad(model.weights, x, y, 0.1)
    assert v_fit <= v_zero
    assert np.linalg.norm(grad) < 1e-6


def test_lr_gradient_matches_finite_differences():
    gen = rng(1)
    x = np.hstack([gen.normal(size=(12, 3)), np.ones((12, 1))])
    y = gen.integers(0, 3, size=12)
    w = gen.normal(size=(3, 4)) * 0.5
    value, grad = lr_objective_and_grad(w, x, y, lam=0.05)
    h = 1e-5
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        fd = (lr_objective_and_grad(wp, x, y, 0.05)[0]
              - lr_objective_and_grad(wm, x, y, 0.05)[0]) / (2 * h)
        assert abs(grad[idx] - fd) <= 1e-5 * max(abs(fd), 1.0)


def test_predict_proba_zero_weights_uniform():
    model = LrModel(weights=np.zeros((4, 3)), lam=0.0)
    proba = predict_proba(model, FeatureCube(rng(2).normal(size=(3, 3, 2))))
    assert np.allclose(proba.values, 0.25)


def test_predict_proba_shift_invariance_and_simplex():
    gen = rng(3)
    feats = FeatureCube(gen.normal(size=(4, 5, 3)))
    w = gen.normal(size=(3, 4))
    base = predict_proba(LrModel(weights=w, lam=0.0), feats)
    shifted = w.copy()
    shifted[:, -1] += 7.25  # same constant added to every class score
    other = predict_proba(LrModel(weights=shifted, lam=0.0), feats)
    assert np.allclose(base.values, other.values, atol=1e-12)
    sums = base.values.sum(axis=2)
    assert np.abs(sums - 1.0).max() < 1e-9


def test_predict_proba_ln3_margin():
    # binary scores differing by ln 3 give probabilities (0.75, 0.25)
    w = np.array([[np.log(3.0), 0.0], [0.0, 0.0]])
    feats = FeatureCube(np.ones((1, 1, 1)))
    proba = predict_proba(LrModel(weights=w, lam=0.0), feats)
    assert np.allclose(proba.values[0, 0], [0.75, 0.25], atol=1e-12)


def test_predict_proba_dim_mismatch():
    model = LrModel(weights=np.zeros((2, 4)), lam=0.0)
    with pytest.raises(ValueError, match="dim"):
        predict_proba(model, FeatureCube(np.zeros((2, 2, 2))))


def test_sam_angle_examples():
    spectra = np.array(
        [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [2.5, 0.0], [0.0, 3.0]]
    ).reshape(5, 1, 2)
    feats = FeatureCube(spectra)
    split = _split_from(np.array([1, 2, 0, 0, 0]), width=1)
    angles = sam_angles(feats, split).values.reshape(-1, 2)
    assert angles[2, 0] == 0.0  # equals a class-1 training spectrum
    assert angles[3, 0] == 0.0  # 2.5x scaling leaves the angle at zero
    assert abs(angles[4, 0] - np.pi / 2) < 1e-12  # orthogonal spectra


def test_sam_scale_invariance_random():
    gen = rng(4)
    base = np.abs(gen.normal(size=(3, 4, 5))) + 0.1
    labels = np.zeros(12, dtype=np.int64)
    labels[[0, 5, 9]] = [1, 2, 2]
    split = _split_from(labels, width=4)
    a = sam_angles(FeatureCube(base), split).values
    b = sam_angles(FeatureCube(3.7 * base), split).values
    # training pixels see themselves at angle ~0 where arccos is noisy;
    # compare the strict tolerance away from those self-angles
    mask = np.ones(12, dtype=bool)
    mask[[0, 5, 9]] = False
    assert np.abs(a.reshape(12, 2)[mask] - b.reshape(12, 2)[mask]).max() < 1e-12
    assert np.array_equal(np.argmin(a, axis=2), np.argmin(b, axis=2))


def test_sam_zero_norm_error_names_pixel():
    values = np.ones((2, 2, 3))
    values[1, 0] = 0.0
    labels = np.array([1, 2, 0, 0])
    with pytest.raises(DataError, match=r"\(1, 0\)"):
        sam_angles(FeatureCube(values), _split_from(labels, width=2))


def test_unary_from_proba_values():
    p = np.zeros((1, 3, 3))
    p[0, 0] = [1.0, 0.0, 0.0]
    p[0, 1] = [np.exp(-1.0), 1 - np.exp(-1.0), 0.0]
    p[0, 2] = [0.0, 0.5, 0.5]
    unary = unary_from_proba(ProbabilityField(p), eps=1e-12)
    assert unary[0, 0] == 0.0
    assert abs(unary[1, 0] - 1.0) < 1e-12
    assert abs(unary[2, 0] - 27.6310) < 5e-5  # -ln 1e-12


def test_unary_from_angles_identity_and_exp_neg():
    values = np.array([[0.0, np.pi / 2]]).reshape(1, 1, 2)
    field = AngleField(values)
    unary = unary_from_angles(field)
    assert unary[0, 0] == 0.0
    assert abs(unary[0, 1] - 1.5708) < 1e-4
    feats = exp_neg_angles(field)
    assert feats[0, 0] == 1.0
    assert abs(feats[0, 1] - np.exp(-np.pi / 2)) < 1e-12


def test_ingest_proba_round_trip_and_tolerance(tmp_path):
    gen = rng(5)
    raw = gen.uniform(0.1, 1.0, size=(4, 5, 3))
    raw /= raw.sum(axis=2, keepdims=True)
    field = ProbabilityField(raw)
    path = tmp_path / "proba.hdr"
    save_proba(str(path), field)
    back = ingest_proba(str(path))
    # storage is f32; the round trip re-normalizes within that precision
    assert np.abs(back.values - field.values).max() < 1e-6
    assert np.abs(back.values.sum(axis=2) - 1.0).max() < 1e-12


def test_ingest_proba_renormalizes_small_drift(tmp_path):
    values = np.array([[[0.25, 0.75 + 3e-7]]])
    path = tmp_path / "drift.hdr"
    save_raster(str(path), values, extra_fields={"kind": "proba"})
    field = ingest_proba(str(path))
    assert abs(field.values.sum() - 1.0) < 1e-12


def test_ingest_proba_bad_sum_and_negative(tmp_path):
    path = tmp_path / "half.hdr"
    save_raster(str(path), np.array([[[0.25, 0.25]]]), extra_fields={"kind": "proba"})
    with pytest.raises(DataError, match="sum"):
        ingest_proba(str(path))
    path2 = tmp_path / "neg.hdr"
    save_raster(str(path2), np.array([[[1.5, -0.5]]]), extra_fields={"kind": "proba"})
    with pytest.raises(DataError, match="negative"):
        ingest_proba(str(path2))
