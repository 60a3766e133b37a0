"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line for its criterion (visible on
the terminal even under capture) before asserting.
"""

import os
import time

import numpy as np
import pytest

from helpers import (
    blocky_scene,
    random_binary_submodular,
    random_potts_grid,
    random_tree_model,
)
from hsiugm.classifiers import lr_objective_and_grad, unary_from_proba
from hsiugm.crf import (
    CrfModel,
    CrfTrainConfig,
    negll_and_grad,
    pseudo_likelihood_negll_and_grad,
)
from hsiugm.data import rng, sample_split, synth_scene
from hsiugm.energy import (
    EnergyModel,
    Potts,
    brute_force_map,
    brute_force_marginals,
    grid_graph,
    total_energy,
)
from hsiugm.evaluation import (
    ConfusionMatrix,
    ExperimentConfig,
    LabelMap,
    confusion,
    metrics,
    run_trials,
)
from hsiugm.inference import (
    BpConfig,
    alpha_expansion,
    binary_submodular_map,
    icm,
    loopy_bp,
    map_infer,
)
from hsiugm.superpixels import adjacency, aggregate_unary, identity_segmentation, project_labels
from hsiugm.classifiers import ProbabilityField


def _report(capsys, num, name, ok, detail):
    with capsys.disabled():
        print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} failed: {detail}"


def test_criterion_1_oracle_map_equivalence(capsys):
    start = time.perf_counter()
    betas = (0.1, 1.0, 10.0)
    exact = 0
    worst_ratio = 1.0
    for seed in range(200):
        gen = rng(seed)
        model = random_potts_grid(gen, 3, 3, 3, beta=betas[seed % 3])
        _, best = brute_force_map(model)
        e_exp = total_energy(model, alpha_expansion(model))
        if abs(e_exp - best) < 1e-9:
            exact += 1
        worst_ratio = max(worst_ratio, e_exp / best)
        init = gen.integers(1, 4, size=9)
        e_icm = total_energy(model, icm(model, init))
        assert e_icm <= total_energy(model, init) + 1e-12
    elapsed = time.perf_counter() - start
    ok = exact >= 180 and worst_ratio <= 2.0 and elapsed < 10.0
    _report(capsys, 1, "oracle MAP equivalence", ok,
            f"{exact}/200 exact, worst ratio {worst_ratio:.4f}, {elapsed:.1f}s")


def test_criterion_2_binary_exactness(capsys):
    worst = 0.0
    for seed in range(200):
        gen = rng(1000 + seed)
        if seed % 2 == 0:
            h, w = (3, 4) if seed % 4 == 0 else (4, 4)
            model = random_binary_submodular(gen, grid_graph(h, w))
        else:
            n = int(gen.integers(2, 17))
            model = random_potts_grid(gen, 1, n, 2,
                                      beta=float(gen.uniform(0, 3)))
        y = binary_submodular_map(model)
        _, best = brute_force_map(model)
        worst = max(worst, abs(total_energy(model, y) - best))
    ok = worst <= 1e-12
    _report(capsys, 2, "binary min-cut exactness", ok,
            f"200 instances, max energy gap {worst:.2e}")


def test_criterion_3_tree_bp_exactness(capsys):
    worst_belief = 0.0
    worst_logz = 0.0
    cfg = BpConfig(max_iters=500, tol=1e-12)
    for seed in range(100):
        gen = rng(2000 + seed)
        n = int(gen.integers(2, 9))
        m = int(gen.integers(2, 5))
        model = random_tree_model(gen, n, m)
        marg = loopy_bp(model, cfg)
        node, edge, log_z = brute_force_marginals(model)
        worst_belief = max(worst_belief,
                           np.abs(marg.node_beliefs - node).max(),
                           np.abs(marg.edge_beliefs - edge).max())
        worst_logz = max(worst_logz, abs(marg.bethe_log_z - log_z))
    ok = worst_belief < 1e-8 and worst_logz < 1e-8
    _report(capsys, 3, "BP tree exactness", ok,
            f"100 trees, max belief err {worst_belief:.2e}, "
            f"max logZ err {worst_logz:.2e}")


def _crf_fd_error(value_fn, model, h=1e-5):
    worst = 0.0
    _, g_u, g_p, _ = value_fn(model)
    for grad, attr in ((g_u, "unary_weights"), (g_p, "pairwise_weights")):
        w = getattr(model, attr)
        for idx in np.ndindex(w.shape):
            def at(delta):
                w2 = w.copy()
                w2[idx] += delta
                fields = {"unary_weights": model.unary_weights,
                          "pairwise_weights": model.pairwise_weights}
                fields[attr] = w2
                return value_fn(CrfModel(**fields))[0]

            fd = (at(h) - at(-h)) / (2 * h)
            worst = max(worst, abs(grad[idx] - fd) / max(abs(fd), 1.0))
    return worst


def test_criterion_4_gradient_checks(capsys):
    gen = rng(42)
    graph = grid_graph(2, 2)
    features = gen.normal(size=(4, 3))
    model = CrfModel(unary_weights=0.5 * gen.normal(size=(2, 3)),
                     pairwise_weights=0.5 * gen.normal(size=(2, 2)))
    cfg = CrfTrainConfig(l2=0.01, inference="brute_force")
    labels_latent = np.array([1, 0, 2, 1])
    err_mle = _crf_fd_error(
        lambda m: negll_and_grad(m, graph, features, labels_latent, cfg), model)
    pl_cfg = CrfTrainConfig(objective="pseudo_likelihood", l2=0.01)
    labels_full = gen.integers(1, 3, size=4)
    err_pl = _crf_fd_error(
        lambda m: pseudo_likelihood_negll_and_grad(
            m, graph, features, labels_full, pl_cfg), model)
    # LR gradient against the same central-difference oracle
    x = np.hstack([gen.normal(size=(10, 3)), np.ones((10, 1))])
    y = gen.integers(0, 3, size=10)
    w = 0.5 * gen.normal(size=(3, 4))
    _, g = lr_objective_and_grad(w, x, y, 0.05)
    err_lr = 0.0
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += 1e-5
        wm[idx] -= 1e-5
        fd = (lr_objective_and_grad(wp, x, y, 0.05)[0]
              - lr_objective_and_grad(wm, x, y, 0.05)[0]) / 2e-5
        err_lr = max(err_lr, abs(g[idx] - fd) / max(abs(fd), 1.0))
    ok = err_mle < 1e-5 and err_pl < 1e-5 and err_lr < 1e-5
    _report(capsys, 4, "gradient finite-difference checks", ok,
            f"MLE {err_mle:.2e}, PL {err_pl:.2e}, LR {err_lr:.2e}")


def test_criterion_5_degenerate_equivalences(capsys):
    ok = True
    detail = []
    for seed in range(10):
        gen = rng(3000 + seed)
        model = random_potts_grid(gen, 4, 5, 4, beta=0.0)
        argmin = np.argmin(model.unary, axis=1) + 1
        for method in ("icm", "alpha_expansion"):
            y, _ = map_infer(model, method)
            ok = ok and np.array_equal(y, argmin)
    detail.append("beta=0 equals argmax")
    for seed in range(5):
        cube, _ = synth_scene(blocky_scene(size=8, sigma=0.5, bands=3), seed)
        gen = rng(seed)
        p = gen.uniform(0.05, 1.0, size=(8, 8, 3))
        p /= p.sum(axis=2, keepdims=True)
        proba = ProbabilityField(p)
        beta = float(gen.uniform(0.2, 2.0))
        grid_model = EnergyModel(graph=grid_graph(8, 8),
                                 unary=unary_from_proba(proba),
                                 pairwise=Potts(beta))
        y_grid = alpha_expansion(grid_model)
        seg = identity_segmentation(8, 8)
        sp_model = EnergyModel(graph=adjacency(seg),
                               unary=aggregate_unary(proba, seg),
                               pairwise=Potts(beta))
        y_sp = project_labels(seg, alpha_expansion(sp_model)).labels.ravel()
        ok = ok and np.array_equal(y_grid, y_sp)
    detail.append("pixel-superpixel equivalence on 8x8 scenes")
    _report(capsys, 5, "degenerate equivalences", ok, "; ".join(detail))


def test_criterion_6_metric_correctness(capsys):
    report = metrics(ConfusionMatrix(np.array([[40, 10], [5, 45]])))
    oa_ok = abs(report.overall_accuracy - 0.85) < 1e-12
    kappa_ok = abs(report.kappa - 0.70) < 1e-12
    gen = rng(6)
    truth = LabelMap(gen.integers(1, 5, size=(40, 40)))
    split = sample_split(truth, 1, 60, seed=0)
    pred = LabelMap(gen.integers(1, 5, size=(40, 40)))
    rep = metrics(confusion(pred, truth, split))
    balanced_ok = abs(rep.avg_recall - rep.overall_accuracy) < 1e-12
    ok = oa_ok and kappa_ok and balanced_ok
    _report(capsys, 6, "metric correctness", ok,
            f"OA {report.overall_accuracy}, kappa {report.kappa}, "
            f"balanced recall gap {abs(rep.avg_recall - rep.overall_accuracy):.1e}")


def test_criterion_7_synthetic_end_to_end(capsys):
    start = time.perf_counter()
    scene = blocky_scene(size=64, sigma=0.6)
    base = ExperimentConfig(scene=scene, smoother="none", n_trials=10,
                            base_seed=100, lam=0.01)
    lr = run_trials(base)
    from dataclasses import replace

    mrf = run_trials(replace(base, smoother="mrf_grid"))
    elapsed = time.perf_counter() - start
    gain = 100 * (mrf.mean_oa - lr.mean_oa)
    in_window = 0.70 <= lr.mean_oa <= 0.85
    ok = (not lr.failures and not mrf.failures and in_window
          and gain >= 5.0 and elapsed < 60.0)
    _report(capsys, 7, "synthetic end-to-end MRF gain", ok,
            f"LR {100 * lr.mean_oa:.2f} -> MRF {100 * mrf.mean_oa:.2f} "
            f"(+{gain:.2f} pts, 10 trials, {elapsed:.1f}s)")


def test_criterion_8_superpixel_speed_quality(capsys):
    scene = blocky_scene(size=256, sigma=0.6)
    base = ExperimentConfig(scene=scene, n_trials=1, base_seed=100,
                            lam=0.01, fixed_beta=1.0,
                            requested_superpixels=400)
    from dataclasses import replace

    grid = run_trials(replace(base, smoother="mrf_grid"))
    sp = run_trials(replace(base, smoother="mrf_superpixel"))
    assert not grid.failures and not sp.failures
    grid_ms = grid.rows[0]["smooth_ms"]
    sp_ms = sp.rows[0]["smooth_ms"]  # includes SLIC time
    oa_gap = 100 * abs(grid.rows[0]["oa"] - sp.rows[0]["oa"])
    ok = oa_gap <= 2.0 and sp_ms <= 0.5 * grid_ms
    _report(capsys, 8, "superpixel speed/quality tradeoff", ok,
            f"grid OA {100 * grid.rows[0]['oa']:.2f} in {grid_ms:.0f} ms, "
            f"superpixel OA {100 * sp.rows[0]['oa']:.2f} in {sp_ms:.0f} ms "
            f"(gap {oa_gap:.2f} pts, ratio {sp_ms / grid_ms:.2f})")


def test_criterion_9_crf_sanity(capsys):
    scene = blocky_scene(size=64, sigma=0.6)
    base = ExperimentConfig(scene=scene, n_trials=1, base_seed=100,
                            lam=0.01, n_train_per_class=50,
                            n_test_per_class=50, crf_max_iters=10)
    from dataclasses import replace

    lr = run_trials(base)
    crf = run_trials(replace(base, smoother="crf"))
    assert not lr.failures and not crf.failures
    gap = 100 * (crf.mean_oa - lr.mean_oa)
    ok = crf.mean_oa >= lr.mean_oa - 0.02
    _report(capsys, 9, "small-data CRF sanity", ok,
            f"LR {100 * lr.mean_oa:.2f}, CRF {100 * crf.mean_oa:.2f} "
            f"({gap:+.2f} pts, 200 training pixels)")


def test_criterion_9_indian_pines_optional(capsys):
    path = os.environ.get("HSIUGM_INDIAN_PINES")
    if not path:
        with capsys.disabled():
            print("[criterion 9] Indian Pines reproduction: SKIPPED "
                  "(set HSIUGM_INDIAN_PINES to a converted cube header)")
        pytest.skip("Indian Pines dataset not available")
    from hsiugm.data import load_cube, load_labels

    cube = load_cube(path)
    truth = load_labels(os.path.splitext(path)[0] + ".labels.pgm",
                        require_labeled=True)
    cfg = ExperimentConfig(cube=cube, truth=truth, smoother="none",
                           n_train_per_class=140, n_trials=30, base_seed=0,
                           lam=0.01)
    lr = run_trials(cfg)
    from dataclasses import replace

    mrf = run_trials(replace(cfg, smoother="mrf_grid"))
    lr_ok = abs(100 * lr.mean_oa - 79.49) <= 3.0
    mrf_ok = abs(100 * mrf.mean_oa - 91.49) <= 3.0
    _report(capsys, 9, "Indian Pines reproduction", lr_ok and mrf_ok,
            f"LR {100 * lr.mean_oa:.2f} (target 79.49 +/- 3), "
            f"LR-MRF {100 * mrf.mean_oa:.2f} (target 91.49 +/- 3)")
