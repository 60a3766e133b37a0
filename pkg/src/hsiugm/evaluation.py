"""Metrics (overall accuracy, kappa, precision/recall/F1), grid-search
tuning of the smoothing strength and EMP hyperparameters, and the
repeated-trial benchmark harness.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifiers import predict_proba, train_lr, unary_from_proba
from .data import LabelMap, SplitSet, rng, sample_split, synth_scene
from .energy import EnergyModel, Potts, grid_graph
from .features import EmpParams, FeatureCube, LEVELS_GRID, STEP_GRID, VARIANCE_GRID, emp
from .inference import alpha_expansion
from .superpixels import adjacency, aggregate_unary, project_labels, slic, SlicParams

__all__ = [
    "ConfusionMatrix",
    "MetricReport",
    "TrialSummary",
    "BETA_GRID",
    "confusion",
    "metrics",
    "tune_beta",
    "tune_emp",
    "ExperimentConfig",
    "run_trials",
    "write_results_csv",
    "write_summary_csv",
]

BETA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class ConfusionMatrix:
    """M x M counts; rows are ground truth, columns are predictions."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if c.min(initial=0) < 0:
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricReport:
    overall_accuracy: float
    kappa: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    avg_precision: float
    avg_recall: float
    avg_f1: float
    zero_denominator_classes: tuple = ()


@dataclass(frozen=True)
class TrialSummary:
    method: str
    n_trials: int
    mean_oa: float
    sd_oa: float
    best_oa: float
    rows: list  # per-trial metric dicts
    failures: list


def confusion(pred, truth, split):
    """Confusion counts over the test pixels of a split."""
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise ValueError("prediction and truth sizes differ")
    m = truth.n_classes
    idx, classes = split.test[:, 0], split.test[:, 1]
    t = truth.labels.ravel()[idx]
    if (t == 0).any():
        bad = idx[t == 0][0]
        raise ValueError(f"test pixel {bad} is unlabeled in the ground truth")
    p = pred.labels.ravel()[idx]
    m = max(m, int(p.max(initial=0)))
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


def metrics(cm):
    """OA, kappa, and per-class precision/recall/F1 from a confusion
    matrix. Zero-denominator classes score 0 and are flagged.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    m = counts.shape[0]
    diag = np.diag(counts)
    rowsum = counts.sum(axis=1)
    colsum = counts.sum(axis=0)
    oa = float(diag.sum() / total)
    p_e = float(np.dot(rowsum, colsum) / total**2)
    if p_e == 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - p_e) / (1.0 - p_e)
    flagged = []
    precision = np.zeros(m)
    recall = np.zeros(m)
    for c in range(m):
        if colsum[c] > 0:
            precision[c] = diag[c] / colsum[c]
        else:
            flagged.append(c + 1)
        if rowsum[c] > 0:
            recall[c] = diag[c] / rowsum[c]
        else:
            flagged.append(c + 1)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1), 0.0)
    return MetricReport(
        overall_accuracy=oa,
        kappa=float(kappa),
        precision=precision,
        recall=recall,
        f1=f1,
        avg_precision=float(precision.mean()),
        avg_recall=float(recall.mean()),
        avg_f1=float(f1.mean()),
        zero_denominator_classes=tuple(sorted(set(flagged))),
    )


def _validation_split(split, seed):
    """Hold out 30% of the training pixels per class for validation; the
    remaining 70% trains the classifier during tuning.
    """
    gen = rng(seed)
    fit_rows, val_rows = [], []
    classes = np.unique(split.train[:, 1])
    for cls in classes:
        rows = split.train[split.train[:, 1] == cls]
        n_val = max(int(round(0.3 * rows.shape[0])), 1)
        perm = gen.permutation(rows.shape[0])
        val_rows.extend(rows[perm[:n_val]].tolist())
        fit_rows.extend(rows[perm[n_val:]].tolist())
    fit = SplitSet(
        train=np.asarray(fit_rows, dtype=np.int64).reshape(-1, 2),
        test=np.asarray(val_rows, dtype=np.int64).reshape(-1, 2),
        seed=split.seed,
        width=split.width,
    )
    return fit


def _oa_on(pred_labels, truth, eval_split):
    return metrics(confusion(pred_labels, truth, eval_split)).overall_accuracy


def _smooth_grid(proba, beta, max_cycles=15):
    graph = grid_graph(proba.height, proba.width)
    model = EnergyModel(graph=graph, unary=unary_from_proba(proba), pairwise=Potts(beta))
    y = alpha_expansion(model, max_cycles=max_cycles)
    return LabelMap(y.reshape(proba.height, proba.width))


def _smooth_superpixel(proba, seg, beta, max_cycles=15):
    graph = adjacency(seg)
    model = EnergyModel(
        graph=graph, unary=aggregate_unary(proba, seg), pairwise=Potts(beta)
    )
    y = alpha_expansion(model, max_cycles=max_cycles)
    return project_labels(seg, y)


def tune_beta(features, truth, split, lam, betas=BETA_GRID, seed=0, seg=None, max_cycles=15):
    """Grid search for the Potts strength on a 30% validation holdout.

    Ties break to the smallest beta. Returns (beta, records) where
    records holds one (beta, validation OA) pair per grid cell.
    """
    holdout = _validation_split(split, seed)
    model = train_lr(features, holdout, lam)
    proba = predict_proba(model, features)
    records = []
    best_beta, best_oa = None, -1.0
    for beta in betas:
        if seg is None:
            pred = _smooth_grid(proba, beta, max_cycles)
        else:
            pred = _smooth_superpixel(proba, seg, beta, max_cycles)
        oa = _oa_on(pred, truth, holdout)
        records.append((beta, oa))
        if oa > best_oa:  # strict: the smallest beta wins ties
            best_beta, best_oa = beta, oa
    return best_beta, records


def tune_emp(cube, truth, split, lam, seed=0, grids=None):
    """Grid search over the 4 x 3 x 3 EMP hyperparameter grid by
    validation OA; ties break to the lexicographically smallest tuple.
    """
    variance_grid, levels_grid, step_grid = grids or (
        VARIANCE_GRID,
        LEVELS_GRID,
        STEP_GRID,
    )
    holdout = _validation_split(split, seed)
    records = []
    best_params, best_oa = None, -1.0
    for vf in variance_grid:
        for k in levels_grid:
            for s in step_grid:
                params = EmpParams(variance_fraction=vf, n_levels=k, size_step=s)
                feats = emp(cube, params)
                model = train_lr(feats, holdout, lam)
                proba = predict_proba(model, feats)
                pred = LabelMap(
                    (np.argmax(proba.values, axis=2) + 1).astype(np.int64)
                )
                oa = _oa_on(pred, truth, holdout)
                records.append((params, oa))
                if oa > best_oa:  # strict: first (smallest) tuple wins ties
                    best_params, best_oa = params, oa
    return best_params, records


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark experiment over repeated random trials."""

    scene: object = None  # SceneSpec for synthetic data, or None
    cube: object = None  # HsiCube when data is provided directly
    truth: object = None  # LabelMap paired with cube
    features: str = "raw"  # raw | emp
    emp_params: EmpParams = field(default_factory=EmpParams)
    smoother: str = "none"  # none | mrf_grid | mrf_superpixel | crf
    n_train_per_class: int = 50
    n_test_per_class: int = 50
    n_trials: int = 30
    base_seed: int = 0
    lam: float = 1.0
    betas: tuple = BETA_GRID
    fixed_beta: Optional[float] = None  # skips beta tuning when set
    max_cycles: int = 15
    requested_superpixels: int = 400
    slic_regularizer: float = 100.0
    crf_l2: float = 1e-2
    crf_max_iters: int = 60


def _trial_features(cube, cfg):
    if cfg.features == "raw":
        return FeatureCube(cube.values)
    if cfg.features == "emp":
        return emp(cube, cfg.emp_params)
    raise ValueError(f"unknown feature mode {cfg.features!r}")


def run_single_trial(cfg, trial):
    """One trial: split, tune, retrain on the full training set, infer,
    score. Deterministic given (cfg, base_seed, trial index).
    """
    seed = cfg.base_seed + trial
    if cfg.scene is not None:
        cube, truth = synth_scene(cfg.scene, seed)
    else:
        cube, truth = cfg.cube, cfg.truth
    split = sample_split(truth, cfg.n_train_per_class, cfg.n_test_per_class, seed)
    features = _trial_features(cube, cfg)
    timings = {}
    start = time.perf_counter()
    seg = None
    if cfg.smoother == "mrf_superpixel":
        t0 = time.perf_counter()
        seg = slic(
            cube,
            SlicParams(
                requested_superpixels=cfg.requested_superpixels,
                regularizer=cfg.slic_regularizer,
            ),
        )
        timings["slic_ms"] = 1000.0 * (time.perf_counter() - t0)
    beta = cfg.fixed_beta
    if cfg.smoother in ("mrf_grid", "mrf_superpixel") and beta is None:
        beta, _ = tune_beta(
            features, truth, split, cfg.lam, cfg.betas, seed=seed, seg=seg,
            max_cycles=cfg.max_cycles,
        )
    model = train_lr(features, split, cfg.lam)
    proba = predict_proba(model, features)
    t0 = time.perf_counter()
    if cfg.smoother == "none":
        pred = LabelMap((np.argmax(proba.values, axis=2) + 1).astype(np.int64))
    elif cfg.smoother == "mrf_grid":
        pred = _smooth_grid(proba, beta, cfg.max_cycles)
    elif cfg.smoother == "mrf_superpixel":
        pred = _smooth_superpixel(proba, seg, beta, cfg.max_cycles)
    elif cfg.smoother == "crf":
        pred = _crf_smooth(proba, truth, split, cfg)
    else:
        raise ValueError(f"unknown smoother {cfg.smoother!r}")
    timings["smooth_ms"] = 1000.0 * (time.perf_counter() - t0) + timings.get(
        "slic_ms", 0.0
    )
    report = metrics(confusion(pred, truth, split))
    return {
        "trial": trial,
        "seed": seed,
        "beta": beta,
        "oa": report.overall_accuracy,
        "kappa": report.kappa,
        "avg_precision": report.avg_precision,
        "avg_recall": report.avg_recall,
        "avg_f1": report.avg_f1,
        "wall_ms": 1000.0 * (time.perf_counter() - start),
        **timings,
    }


def _crf_smooth(proba, truth, split, cfg):
    from .crf import CrfTrainConfig, crf_predict, train_crf

    graph = grid_graph(proba.height, proba.width)
    features = proba.values.reshape(-1, proba.n_classes)
    observed = np.zeros(graph.n_nodes, dtype=np.int64)
    observed[split.train[:, 0]] = split.train[:, 1]
    train_cfg = CrfTrainConfig(
        objective="mle_bp",
        l2=cfg.crf_l2,
        max_iters=cfg.crf_max_iters,
        inference="bp",
    )
    model = train_crf(features, graph, observed, train_cfg)
    labeling, _ = crf_predict(model, features, graph)
    return LabelMap(labeling.reshape(proba.height, proba.width))


def run_trials(cfg):
    """Run the configured number of trials serially (or via the caller's
    pool) and aggregate mean/SD/best overall accuracy.
    """
    rows, failures = [], []
    for trial in range(cfg.n_trials):
        try:
            rows.append(run_single_trial(cfg, trial))
        except Exception as exc:  # per-trial failures recorded, not fatal
            failures.append({"trial": trial, "error": repr(exc)})
    oas = np.array([r["oa"] for r in rows]) if rows else np.array([np.nan])
    method = f"{cfg.features}-lr" + ("" if cfg.smoother == "none" else f"-{cfg.smoother}")
    return TrialSummary(
        method=method,
        n_trials=len(rows),
        mean_oa=float(np.mean(oas)),
        sd_oa=float(np.std(oas)),
        best_oa=float(np.max(oas)),
        rows=rows,
        failures=failures,
    )


def write_results_csv(path, summary, n_train):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "n_train", "trial", "OA", "kappa", "avgP", "avgR", "avgF1", "wall_ms"]
        )
        for r in summary.rows:
            writer.writerow(
                [
                    summary.method,
                    n_train,
                    r["trial"],
                    f"{r['oa']:.6f}",
                    f"{r['kappa']:.6f}",
                    f"{r['avg_precision']:.6f}",
                    f"{r['avg_recall']:.6f}",
                    f"{r['avg_f1']:.6f}",
                    f"{r['wall_ms']:.1f}",
                ]
            )


def write_summary_csv(path, summaries, n_train):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "n_train", "trials", "best", "mean", "sd"])
        for s in summaries:
            writer.writerow(
                [
                    s.method,
                    n_train,
                    s.n_trials,
                    f"{100 * s.best_oa:.2f}",
                    f"{100 * s.mean_oa:.2f}",
                    f"{100 * s.sd_oa:.2f}",
                ]
            )
