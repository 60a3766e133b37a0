"""Pairwise undirected graphical models for spatial-spectral classification
of hyperspectral images.

Submodules
----------
data         cube/label/split I/O, synthetic scenes, split sampling
features     standardization, PCA, morphology, extended morphological profiles
classifiers  L2 logistic regression, spectral angle mapper, unary adapters
energy       graphs, energy models, brute-force MAP/marginal oracles
inference    ICM, max-flow, alpha-expansion, loopy belief propagation
crf          log-linear pairwise CRF with MLE / pseudo-likelihood training
superpixels  SLIC, adjacency graphs, unary aggregation, label projection
evaluation   confusion matrices, metrics, grid-search tuning, trial harness
cli          command-line interface over the file formats
"""

from . import (
    classifiers,
    crf,
    data,
    energy,
    evaluation,
    features,
    inference,
    superpixels,
)

__all__ = [
    "classifiers",
    "crf",
    "data",
    "energy",
    "evaluation",
    "features",
    "inference",
    "superpixels",
]

__version__ = "0.1.0"
