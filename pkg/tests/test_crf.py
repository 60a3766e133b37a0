"""Log-linear pairwise CRF: energies, objectives, gradients, training,
and prediction.
"""

import numpy as np
import pytest

from hsiugm.crf import (
    CrfModel,
    CrfTrainConfig,
    crf_energy_model,
    crf_predict,
    load_crf,
    negll_and_grad,
    pseudo_likelihood_negll_and_grad,
    save_crf,
    train_crf,
)
from hsiugm.data import rng
from hsiugm.energy import Graph, Potts, grid_graph, total_energy
from hsiugm.inference import map_infer


def _random_instance(seed, h=2, w=2, m=2, f=3):
    gen = rng(seed)
    graph = grid_graph(h, w)
    features = gen.normal(size=(graph.n_nodes, f))
    model = CrfModel(unary_weights=0.5 * gen.normal(size=(m, f)),
                     pairwise_weights=0.5 * gen.normal(size=(m, m)))
    return graph, features, model, gen


def test_crf_energy_zero_weights():
    graph, features, _, _ = _random_instance(0)
    model = CrfModel(unary_weights=np.zeros((2, 3)),
                     pairwise_weights=np.zeros((2, 2)))
    em = crf_energy_model(model, features, graph)
    assert np.array_equal(em.unary, np.zeros((4, 2)))
    assert np.array_equal(em.pairwise_tables(), np.zeros((4, 2, 2)))


def test_crf_potts_pattern_identity():
    beta = 0.8
    w_pair = -beta * (1.0 - np.eye(3))
    graph = grid_graph(2, 3)
    model = CrfModel(unary_weights=np.zeros((3, 1)), pairwise_weights=w_pair)
    em = crf_energy_model(model, np.ones((6, 1)), graph)
    assert np.allclose(em.pairwise_tables(), Potts(beta).tables(graph.n_edges, 3))


def test_crf_unary_linearity():
    graph, features, model, _ = _random_instance(1)
    em = crf_energy_model(model, features, graph)
    doubled = CrfModel(unary_weights=2.0 * model.unary_weights,
                       pairwise_weights=model.pairwise_weights)
    em2 = crf_energy_model(doubled, features, graph)
    assert np.allclose(em2.unary, 2.0 * em.unary, atol=1e-12)


def test_mle_gradient_uniform_closed_form():
    # zero weights, one observed node: unary gradient is
    # (uniform expectation - one-hot) times the node features
    graph = Graph(n_nodes=1, edges=np.zeros((0, 2)))
    features = np.array([[1.5, -2.0]])
    model = CrfModel(unary_weights=np.zeros((2, 2)),
                     pairwise_weights=np.zeros((2, 2)))
    cfg = CrfTrainConfig(l2=0.0, inference="brute_force")
    _, g_u, _, _ = negll_and_grad(model, graph, features, np.array([1]), cfg)
    expect = np.outer([0.5 - 1.0, 0.5 - 0.0], features[0])
    assert np.allclose(g_u, expect, atol=1e-12)


def _fd_check(value_and_grad, model, h=1e-5, tol=1e-5):
    value, g_u, g_p, _ = value_and_grad(model)
    for grad, attr in ((g_u, "unary_weights"), (g_p, "pairwise_weights")):
        w = getattr(model, attr)
        for idx in np.ndindex(w.shape):
            def shifted(delta):
                w2 = w.copy()
                w2[idx] += delta
                fields = {"unary_weights": model.unary_weights,
                          "pairwise_weights": model.pairwise_weights}
                fields[attr] = w2
                return value_and_grad(CrfModel(**fields))[0]

            fd = (shifted(h) - shifted(-h)) / (2 * h)
            assert abs(grad[idx] - fd) <= tol * max(abs(fd), 1.0)


def test_mle_gradient_finite_differences():
    graph, features, model, _ = _random_instance(2)
    labels = np.array([1, 0, 2, 1])  # one latent node
    cfg = CrfTrainConfig(l2=0.01, inference="brute_force")
    _fd_check(lambda m: negll_and_grad(m, graph, features, labels, cfg), model)


def test_pseudo_likelihood_gradient_finite_differences():
    graph, features, model, gen = _random_instance(3)
    labels = gen.integers(1, 3, size=4)
    cfg = CrfTrainConfig(objective="pseudo_likelihood", l2=0.01)
    _fd_check(
        lambda m: pseudo_likelihood_negll_and_grad(m, graph, features, labels, cfg),
        model,
    )


def test_pseudo_likelihood_edge_free_equals_mle():
    gen = rng(4)
    graph = Graph(n_nodes=5, edges=np.zeros((0, 2)))
    features = gen.normal(size=(5, 3))
    model = CrfModel(unary_weights=gen.normal(size=(2, 3)),
                     pairwise_weights=np.zeros((2, 2)))
    labels = gen.integers(1, 3, size=5)
    cfg = CrfTrainConfig(l2=0.05, inference="brute_force")
    pl_cfg = CrfTrainConfig(objective="pseudo_likelihood", l2=0.05)
    v_mle, gu_mle, _, _ = negll_and_grad(model, graph, features, labels, cfg)
    v_pl, gu_pl, _, _ = pseudo_likelihood_negll_and_grad(
        model, graph, features, labels, pl_cfg)
    assert abs(v_mle - v_pl) < 1e-9
    assert np.abs(gu_mle - gu_pl).max() < 1e-9


def test_pseudo_likelihood_shift_invariance():
    # constant feature: adding a constant to every class's weight shifts
    # all class scores equally at every node, leaving conditionals fixed
    gen = rng(5)
    graph = grid_graph(2, 2)
    features = np.ones((4, 1))
    labels = gen.integers(1, 4, size=4)
    w = gen.normal(size=(3, 1))
    pw = gen.normal(size=(3, 3))
    cfg = CrfTrainConfig(objective="pseudo_likelihood", l2=0.0)
    v1, _, _, _ = pseudo_likelihood_negll_and_grad(
        CrfModel(unary_weights=w, pairwise_weights=pw), graph, features, labels, cfg)
    v2, _, _, _ = pseudo_likelihood_negll_and_grad(
        CrfModel(unary_weights=w + 4.2, pairwise_weights=pw),
        graph, features, labels, cfg)
    assert abs(v1 - v2) < 1e-9


def test_pseudo_likelihood_single_node_is_logistic_loss():
    gen = rng(6)
    graph = Graph(n_nodes=1, edges=np.zeros((0, 2)))
    features = gen.normal(size=(1, 3))
    w = gen.normal(size=(2, 3))
    model = CrfModel(unary_weights=w, pairwise_weights=np.zeros((2, 2)))
    cfg = CrfTrainConfig(objective="pseudo_likelihood", l2=0.0)
    value, _, _, _ = pseudo_likelihood_negll_and_grad(
        model, graph, features, np.array([2]), cfg)
    scores = w @ features[0]
    expect = -(scores[1] - np.log(np.exp(scores).sum()))
    assert abs(value - expect) < 1e-10


def test_train_crf_penalty_only_objective_gives_zero():
    # no edges and all-zero features leave only the l2 penalty
    graph = Graph(n_nodes=3, edges=np.zeros((0, 2)))
    features = np.zeros((3, 2))
    labels = np.array([1, 2, 1])
    cfg = CrfTrainConfig(l2=10.0, inference="brute_force", max_iters=50)
    model = train_crf(features, graph, labels, cfg)
    assert np.abs(model.unary_weights).max() < 1e-8
    assert np.abs(model.pairwise_weights).max() < 1e-8


def test_train_crf_huge_l2_shrinks_weights():
    gen = rng(7)
    graph = grid_graph(2, 2)
    features = gen.normal(size=(4, 2))
    labels = gen.integers(1, 3, size=4)
    cfg = CrfTrainConfig(l2=1e9, inference="brute_force", max_iters=50)
    model = train_crf(features, graph, labels, cfg)
    assert np.abs(model.unary_weights).max() < 1e-6
    assert np.abs(model.pairwise_weights).max() < 1e-6


def test_train_crf_recovers_attractive_coupling():
    # blocky observed labels: most edges join equal labels, so the fitted
    # pairwise table must score same-label pairs above different-label ones
    graph = grid_graph(3, 3)
    features = np.ones((9, 1))
    labels = np.array([1, 1, 2, 1, 1, 2, 1, 1, 2])  # left block 1, right 2
    cfg = CrfTrainConfig(l2=0.1, inference="brute_force", max_iters=100)
    model = train_crf(features, graph, labels, cfg)
    pw = model.pairwise_weights
    diag = np.diag(pw).mean()
    off = pw[~np.eye(2, dtype=bool)].mean()
    assert diag > off


def test_crf_predict_zero_weights_all_ones():
    graph = grid_graph(2, 3)
    model = CrfModel(unary_weights=np.zeros((3, 2)),
                     pairwise_weights=np.zeros((3, 3)))
    labeling, marg = crf_predict(model, np.ones((6, 2)), graph)
    assert np.array_equal(labeling, np.ones(6, dtype=np.int64))
    assert np.allclose(marg.node_beliefs, 1.0 / 3.0, atol=1e-12)


def test_crf_predict_confident_node_spreads_on_chain():
    graph = Graph(n_nodes=4, edges=np.array([[0, 1], [1, 2], [2, 3]]))
    features = np.zeros((4, 2))
    features[0] = [5.0, 0.0]  # only node 0 carries evidence for class 1
    w_u = np.eye(2)
    w_p = 3.0 * np.eye(2)  # strongly attractive
    model = CrfModel(unary_weights=w_u, pairwise_weights=w_p)
    labeling, _ = crf_predict(model, features, graph)
    assert np.array_equal(labeling, np.ones(4, dtype=np.int64))


def test_crf_predict_edge_free_is_per_node_argmax():
    gen = rng(8)
    graph = Graph(n_nodes=6, edges=np.zeros((0, 2)))
    features = gen.normal(size=(6, 3))
    model = CrfModel(unary_weights=gen.normal(size=(3, 3)),
                     pairwise_weights=np.zeros((3, 3)))
    labeling, _ = crf_predict(model, features, graph)
    scores = features @ model.unary_weights.T
    assert np.array_equal(labeling, np.argmax(scores, axis=1) + 1)


def test_crf_potts_pattern_matches_mrf_map():
    gen = rng(9)
    graph = grid_graph(3, 3)
    features = gen.normal(size=(9, 3))
    w_u = gen.normal(size=(2, 3))
    beta = 0.7
    model = CrfModel(unary_weights=w_u,
                     pairwise_weights=-beta * (1.0 - np.eye(2)))
    em = crf_energy_model(model, features, graph)
    from hsiugm.energy import EnergyModel

    mrf = EnergyModel(graph=graph, unary=-features @ w_u.T, pairwise=Potts(beta))
    y_crf, _ = map_infer(em, "alpha_expansion")
    y_mrf, _ = map_infer(mrf, "alpha_expansion")
    assert np.array_equal(y_crf, y_mrf)
    for _ in range(5):
        y = gen.integers(1, 3, size=9)
        assert abs(total_energy(em, y) - total_energy(mrf, y)) < 1e-12


def test_crf_serialization_round_trip(tmp_path):
    gen = rng(10)
    model = CrfModel(unary_weights=gen.normal(size=(3, 4)),
                     pairwise_weights=gen.normal(size=(3, 3)))
    path = tmp_path / "model.hdr"
    save_crf(str(path), model)
    back = load_crf(str(path))
    assert np.array_equal(back.unary_weights, model.unary_weights)
    assert np.array_equal(back.pairwise_weights, model.pairwise_weights)
    assert back.tied == model.tied
