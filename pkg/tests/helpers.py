"""Shared builders for the test suite: synthetic scenes and random
small energy models used against the brute-force oracles.
"""

import numpy as np

from hsiugm.data import SceneSpec
from hsiugm.energy import EnergyModel, FullPairwise, Graph, Potts, grid_graph


def blocky_scene(size=64, m=4, bands=6, blocks=4, sigma=0.6, sep=1.0):
    """Blocky multi-class scene with one dominant band per class.

    sigma=0.6 puts raw-spectrum LR in the 70-85% OA range on the 64x64
    four-class version (calibrated once, frozen here).
    """
    layout = (np.arange(blocks * blocks) % m + 1).reshape(blocks, blocks)
    means = np.zeros((m, bands))
    for c in range(m):
        means[c, c % bands] = sep
        means[c, (c + 1) % bands] = 0.5 * sep
    return SceneSpec(height=size, width=size, layout=layout, means=means, sigma=sigma)


def random_potts_grid(gen, h, w, m, beta):
    graph = grid_graph(h, w)
    unary = gen.uniform(0.0, 1.0, size=(graph.n_nodes, m))
    return EnergyModel(graph=graph, unary=unary, pairwise=Potts(beta))


def random_tree_graph(gen, n):
    """Uniform random tree: node i attaches to a random earlier node."""
    edges = [(int(gen.integers(0, i)), i) for i in range(1, n)]
    return Graph(n_nodes=n, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def random_tree_model(gen, n, m):
    graph = random_tree_graph(gen, n)
    unary = gen.normal(size=(n, m))
    tables = gen.normal(size=(graph.n_edges, m, m))
    return EnergyModel(graph=graph, unary=unary, pairwise=FullPairwise(tables))


def random_binary_submodular(gen, graph):
    """Random binary model whose every edge satisfies submodularity."""
    e = graph.n_edges
    unary = gen.normal(size=(graph.n_nodes, 2))
    tables = np.zeros((e, 2, 2))
    tables[:, 0, 0] = gen.uniform(0, 1, e)
    tables[:, 1, 1] = gen.uniform(0, 1, e)
    tables[:, 0, 1] = gen.uniform(0, 1, e)
    slack = gen.uniform(0, 2, e)
    tables[:, 1, 0] = tables[:, 0, 0] + tables[:, 1, 1] - tables[:, 0, 1] + slack
    return EnergyModel(graph=graph, unary=unary, pairwise=FullPairwise(tables))
