"""Log-linear pairwise CRF: per-class unary weights over node features,
one weight per label pair on every edge (constant pairwise feature),
trained by maximum likelihood or pseudo-likelihood.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import (
    EnergyModel,
    FullPairwise,
    Graph,
    MARGINAL_ENUM_LIMIT,
    brute_force_marginals,
)
from .inference import BpConfig, loopy_bp, max_marginals_decode
from .rasterfile import read_header, write_header

__all__ = [
    "CrfModel",
    "CrfTrainConfig",
    "crf_energy_model",
    "negll_and_grad",
    "pseudo_likelihood_negll_and_grad",
    "train_crf",
    "crf_predict",
    "save_crf",
    "load_crf",
]

# unary offset that pins an observed node to its label; exp(-1e4)
# underflows to exactly 0, so clamping is exact in float64
_CLAMP = 1e4


@dataclass(frozen=True)
class CrfModel:
    """Weights of the log-linear pairwise CRF.

    Unary score of class c at node i is unary_weights[c] . features[i];
    the pairwise score of the label pair (a, b) on any edge is
    pairwise_weights[a, b] (constant pairwise feature of 1).
    """

    unary_weights: np.ndarray  # M x F
    pairwise_weights: np.ndarray  # M x M
    tied: bool = False

    def __post_init__(self):
        u = np.asarray(self.unary_weights, dtype=np.float64)
        p = np.asarray(self.pairwise_weights, dtype=np.float64)
        if p.shape != (u.shape[0], u.shape[0]):
            raise ValueError("pairwise weights must be M x M")
        if not (np.isfinite(u).all() and np.isfinite(p).all()):
            raise ValueError("CRF weights must be finite")
        if self.tied and np.abs(p - p.T).max(initial=0.0) > 1e-12:
            raise ValueError("tied model requires symmetric pairwise weights")
        object.__setattr__(self, "unary_weights", u)
        object.__setattr__(self, "pairwise_weights", p)

    @property
    def n_classes(self):
        return self.unary_weights.shape[0]

    @property
    def n_features(self):
        return self.unary_weights.shape[1]


@dataclass(frozen=True)
class CrfTrainConfig:
    objective: str = "mle_bp"  # or "pseudo_likelihood"
    l2: float = 1e-2
    max_iters: int = 200
    tol: float = 1e-5  # on the gradient norm
    tied: bool = False
    inference: str = "auto"  # auto | brute_force | bp
    bp: BpConfig = field(default_factory=BpConfig)

    def __post_init__(self):
        if self.objective not in ("mle_bp", "pseudo_likelihood"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        if self.inference not in ("auto", "brute_force", "bp"):
            raise ValueError(f"unknown inference choice {self.inference!r}")


def crf_energy_model(model, features, graph):
    """Energy model induced by the weights: E_i(c) = -w1[c].phi_i and a
    shared pairwise table E(a, b) = -w_ab.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (graph.n_nodes, model.n_features):
        raise ValueError(
            f"features must be {graph.n_nodes} x {model.n_features}, got {features.shape}"
        )
    unary = -features @ model.unary_weights.T
    return EnergyModel(
        graph=graph, unary=unary, pairwise=FullPairwise(-model.pairwise_weights)
    )


def _infer(energy_model, cfg):
    """Marginals + logZ, exact when enumerable (or forced), else loopy BP."""
    n, m = energy_model.graph.n_nodes, energy_model.m
    use_brute = cfg.inference == "brute_force" or (
        cfg.inference == "auto" and m**n <= MARGINAL_ENUM_LIMIT
    )
    if use_brute:
        node, edge, log_z = brute_force_marginals(energy_model)
        return node, edge, log_z, True
    marg = loopy_bp(energy_model, cfg.bp)
    return marg.node_beliefs, marg.edge_beliefs, marg.bethe_log_z, marg.converged


def _clamped(energy_model, labels):
    unary = energy_model.unary.copy()
    observed = np.flatnonzero(labels > 0)
    for i in observed:
        keep = labels[i] - 1
        unary[i] += _CLAMP
        unary[i, keep] -= _CLAMP
    return EnergyModel(
        graph=energy_model.graph, unary=unary, pairwise=energy_model.pairwise
    )


def negll_and_grad(model, graph, features, labels, cfg=CrfTrainConfig()):
    """Negative log-likelihood of the observed labels with latent nodes
    marginalized, plus its gradient.

    ``labels`` holds one entry per node; 0 marks a latent node. The
    objective is logZ(free) - logZ(clamped) + (l2/2)||w||^2, and the
    gradient of each weight is the free expectation of its feature minus
    the clamped expectation, plus the l2 term.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not (labels > 0).any():
        raise ValueError("at least one observed node is required")
    energy_model = crf_energy_model(model, features, graph)
    node_f, edge_f, logz_f, conv_f = _infer(energy_model, cfg)
    node_c, edge_c, logz_c, conv_c = _infer(_clamped(energy_model, labels), cfg)
    features = np.asarray(features, dtype=np.float64)
    value = logz_f - logz_c
    value += 0.5 * cfg.l2 * (
        np.sum(model.unary_weights**2) + np.sum(model.pairwise_weights**2)
    )
    grad_unary = (node_f - node_c).T @ features + cfg.l2 * model.unary_weights
    grad_pair = (edge_f - edge_c).sum(axis=0) + cfg.l2 * model.pairwise_weights
    if cfg.tied:
        grad_pair = 0.5 * (grad_pair + grad_pair.T)
    return (
        float(value),
        grad_unary,
        grad_pair,
        bool(conv_f and conv_c),
    )


def _conditional_scores(model, graph, features, labels):
    """Per-node class scores given the observed neighbor labels."""
    n, m = graph.n_nodes, model.n_classes
    scores = np.asarray(features, dtype=np.float64) @ model.unary_weights.T
    for i, j in graph.edges:
        scores[i] += model.pairwise_weights[:, labels[j] - 1]
        scores[j] += model.pairwise_weights[labels[i] - 1, :]
    return scores


def pseudo_likelihood_negll_and_grad(model, graph, features, labels, cfg=CrfTrainConfig()):
    """Sum over nodes of -ln p(y_i | y_neighbors, x) plus the l2 term.

    All nodes must be observed; each per-node conditional is an exact
    M-way softmax, so no global inference is needed.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if (labels <= 0).any():
        raise ValueError("pseudo-likelihood requires fully observed nodes")
    features = np.asarray(features, dtype=np.float64)
    n, m = graph.n_nodes, model.n_classes
    scores = _conditional_scores(model, graph, features, labels)
    shifted = scores - scores.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    probs = expo / expo.sum(axis=1, keepdims=True)
    idx = np.arange(n)
    value = -np.sum(shifted[idx, labels - 1] - np.log(expo.sum(axis=1)))
    value += 0.5 * cfg.l2 * (
        np.sum(model.unary_weights**2) + np.sum(model.pairwise_weights**2)
    )
    resid = probs.copy()
    resid[idx, labels - 1] -= 1.0
    grad_unary = resid.T @ features + cfg.l2 * model.unary_weights
    grad_pair = cfg.l2 * model.pairwise_weights.copy()
    for k, (i, j) in enumerate(graph.edges):
        # the edge enters the conditionals of both of its endpoints
        grad_pair[:, labels[j] - 1] += resid[i]
        grad_pair[labels[i] - 1, :] += resid[j]
    if cfg.tied:
        grad_pair = 0.5 * (grad_pair + grad_pair.T)
    return float(value), grad_unary, grad_pair, True


def _objective(model, graph, features, labels, cfg):
    if cfg.objective == "pseudo_likelihood":
        return pseudo_likelihood_negll_and_grad(model, graph, features, labels, cfg)
    return negll_and_grad(model, graph, features, labels, cfg)


def _induced_observed_subgraph(graph, features, labels):
    """Subgraph on the observed nodes, for pseudo-likelihood training."""
    labels = np.asarray(labels, dtype=np.int64)
    observed = np.flatnonzero(labels > 0)
    remap = -np.ones(graph.n_nodes, dtype=np.int64)
    remap[observed] = np.arange(observed.size)
    e = graph.edges
    keep = (labels[e[:, 0]] > 0) & (labels[e[:, 1]] > 0)
    edges = remap[e[keep]]
    sub = Graph(n_nodes=observed.size, edges=edges)
    return sub, np.asarray(features)[observed], labels[observed]


def train_crf(features, graph, labels, cfg=CrfTrainConfig()):
    """Fit CRF weights by deterministic gradient descent with
    backtracking line search on the configured objective.
    """
    labels = np.asarray(labels, dtype=np.int64)
    features = np.asarray(features, dtype=np.float64)
    m = int(labels.max())
    if m < 1:
        raise ValueError("no observed labels")
    if cfg.objective == "pseudo_likelihood":
        graph, features, labels = _induced_observed_subgraph(graph, features, labels)
    model = CrfModel(
        unary_weights=np.zeros((m, features.shape[1])),
        pairwise_weights=np.zeros((m, m)),
        tied=cfg.tied,
    )
    value, g_u, g_p, _ = _objective(model, graph, features, labels, cfg)
    step = 1.0
    for _ in range(cfg.max_iters):
        gnorm = np.sqrt(np.sum(g_u**2) + np.sum(g_p**2))
        if gnorm < cfg.tol:
            break
        step = min(step * 2.0, 1e4)
        while True:
            trial = CrfModel(
                unary_weights=model.unary_weights - step * g_u,
                pairwise_weights=model.pairwise_weights - step * g_p,
                tied=cfg.tied,
            )
            t_value, t_gu, t_gp, _ = _objective(trial, graph, features, labels, cfg)
            if t_value <= value - 1e-4 * step * gnorm**2:
                break
            step *= 0.5
            if step < 1e-15:
                return model
        model, value, g_u, g_p = trial, t_value, t_gu, t_gp
    return model


def crf_predict(model, features, graph, cfg=None):
    """Max-of-marginals prediction: sum-product beliefs, per-node argmax
    with lowest-index tie-breaking. Returns (labeling, marginals).
    """
    energy_model = crf_energy_model(model, features, graph)
    bp_cfg = cfg or BpConfig()
    n, m = graph.n_nodes, model.n_classes
    if m**n <= MARGINAL_ENUM_LIMIT:
        node, edge, log_z = brute_force_marginals(energy_model)
        from .inference import Marginals

        marg = Marginals(node_beliefs=node, edge_beliefs=edge, bethe_log_z=log_z)
    else:
        marg = loopy_bp(energy_model, bp_cfg)
    return max_marginals_decode(marg), marg


def save_crf(header_path, model):
    """Versioned text header + little-endian f64 weight blob."""
    stem = os.path.splitext(os.path.basename(header_path))[0]
    base = os.path.dirname(os.path.abspath(header_path))
    blob_name = stem + ".weights.raw"
    write_header(
        header_path,
        {
            "kind": "crf_model",
            "version": 1,
            "n_classes": model.n_classes,
            "n_features": model.n_features,
            "tied": int(model.tied),
            "data": blob_name,
        },
    )
    blob = np.concatenate(
        [model.unary_weights.ravel(), model.pairwise_weights.ravel()]
    )
    blob.astype("<f8").tofile(os.path.join(base, blob_name))


def load_crf(header_path):
    fields = read_header(header_path)
    if fields.get("kind") != "crf_model" or int(fields.get("version", 0)) != 1:
        raise ValueError(f"{header_path}: not a version-1 CRF model file")
    m, f = int(fields["n_classes"]), int(fields["n_features"])
    base = os.path.dirname(os.path.abspath(header_path))
    blob = np.fromfile(os.path.join(base, fields["data"]), dtype="<f8")
    return CrfModel(
        unary_weights=blob[: m * f].reshape(m, f),
        pairwise_weights=blob[m * f :].reshape(m, m),
        tied=bool(int(fields.get("tied", 0))),
    )
