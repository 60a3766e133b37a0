"""Graph and energy representation for pairwise models, energy
evaluation, and brute-force MAP/marginal oracles for small instances.

Labelings use classes 1..M; energies live in the natural-log domain.
"""

import csv
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .rasterfile import read_header, write_header

__all__ = [
    "Graph",
    "Potts",
    "FullPairwise",
    "EnergyModel",
    "grid_graph",
    "total_energy",
    "brute_force_map",
    "brute_force_marginals",
    "save_energy_model",
    "load_energy_model",
]

MAP_ENUM_LIMIT = 10**7
MARGINAL_ENUM_LIMIT = 10**6


@dataclass(frozen=True)
class Graph:
    """Undirected graph; edges are (i, j) pairs with i < j, no duplicates."""

    n_nodes: int
    edges: np.ndarray  # int64, E x 2
    coords: Optional[np.ndarray] = None  # node -> (row, col), for grids

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if (e[:, 0] >= e[:, 1]).any():
                raise ValueError("edges must satisfy i < j")
            if e.max() >= self.n_nodes or e.min() < 0:
                raise ValueError("edge endpoint out of range")
            keys = e[:, 0] * self.n_nodes + e[:, 1]
            if np.unique(keys).size != e.shape[0]:
                raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", e)

    @property
    def n_edges(self):
        return self.edges.shape[0]


@dataclass(frozen=True)
class Potts:
    """Pairwise energy beta iff the two labels differ."""

    beta: float

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"Potts beta must be finite and >= 0, got {self.beta}")

    def tables(self, n_edges, m):
        table = self.beta * (1.0 - np.eye(m))
        return np.broadcast_to(table, (n_edges, m, m))


@dataclass(frozen=True)
class FullPairwise:
    """Per-edge M x M energy tables (or a single shared table)."""

    tables: np.ndarray  # E x M x M or M x M

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=np.float64)
        if not np.isfinite(t).all():
            raise ValueError("pairwise tables must be finite")
        object.__setattr__(self, "tables", t)

    def tables_for(self, n_edges, m):
        if self.tables.ndim == 2:
            return np.broadcast_to(self.tables, (n_edges, m, m))
        return self.tables


PairwiseSpec = Union[Potts, FullPairwise]


@dataclass(frozen=True)
class EnergyModel:
    """Immutable pairwise energy model: graph + unary table + pairwise spec."""

    graph: Graph
    unary: np.ndarray  # n_nodes x M
    pairwise: PairwiseSpec
    m: int = field(default=0)

    def __post_init__(self):
        u = np.asarray(self.unary, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != self.graph.n_nodes:
            raise ValueError(
                f"unary table must be {self.graph.n_nodes} x M, got {u.shape}"
            )
        if not np.isfinite(u).all():
            raise ValueError("unary energies must be finite")
        object.__setattr__(self, "unary", u)
        object.__setattr__(self, "m", u.shape[1])
        if isinstance(self.pairwise, FullPairwise):
            t = self.pairwise.tables
            if t.shape[-2:] != (self.m, self.m):
                raise ValueError(f"pairwise tables must be M x M with M={self.m}")
            if t.ndim == 3 and t.shape[0] != self.graph.n_edges:
                raise ValueError("one pairwise table per edge required")

    def pairwise_tables(self):
        """Materialized E x M x M pairwise energy tables."""
        if isinstance(self.pairwise, Potts):
            return self.pairwise.tables(self.graph.n_edges, self.m)
        return self.pairwise.tables_for(self.graph.n_edges, self.m)


def grid_graph(height, width):
    """4-connected grid; node id = row * width + col, edges sorted."""
    if height < 1 or width < 1:
        raise ValueError("grid dimensions must be >= 1")
    ids = np.arange(height * width).reshape(height, width)
    horiz = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    vert = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    edges = np.vstack([horiz, vert])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    coords = np.stack([ids.ravel() // width, ids.ravel() % width], axis=1)
    return Graph(n_nodes=height * width, edges=edges[order], coords=coords)


def _check_labeling(model, y):
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (model.graph.n_nodes,):
        raise ValueError(f"labeling must have {model.graph.n_nodes} entries")
    if y.size and (y.min() < 1 or y.max() > model.m):
        raise ValueError(f"labels must be in 1..{model.m}")
    return y


def total_energy(model, y):
    """Sum of unary energies plus pairwise energies of the labeling."""
    y = _check_labeling(model, y)
    total = model.unary[np.arange(model.graph.n_nodes), y - 1].sum()
    e = model.graph.edges
    if e.size:
        yi, yj = y[e[:, 0]] - 1, y[e[:, 1]] - 1
        if isinstance(model.pairwise, Potts):
            total += model.pairwise.beta * np.count_nonzero(yi != yj)
        else:
            tables = model.pairwise.tables
            if tables.ndim == 2:
                total += tables[yi, yj].sum()
            else:
                total += tables[np.arange(e.shape[0]), yi, yj].sum()
    return float(total)


def _enumerate_energies(model, chunk=1 << 18):
    """Yield (labelings_chunk, energies_chunk) over all M^N configurations
    in lexicographic order (node 0 most significant).
    """
    n, m = model.graph.n_nodes, model.m
    tables = model.pairwise_tables()
    e = model.graph.edges
    total = m**n
    powers = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % m  # 0-based labels
        energies = model.unary[np.arange(n)[None, :], digits].sum(axis=1)
        for k in range(e.shape[0]):
            i, j = e[k]
            energies += tables[k][digits[:, i], digits[:, j]]
        yield digits + 1, energies


def brute_force_map(model):
    """Exact MAP by enumeration; ties break to the lexicographically
    smallest labeling. Guarded to M^N <= 10^7.
    """
    n, m = model.graph.n_nodes, model.m
    if m**n > MAP_ENUM_LIMIT:
        raise ValueError(f"instance too large for enumeration: {m}^{n}")
    best_energy, best_labeling = np.inf, None
    for labelings, energies in _enumerate_energies(model):
        k = int(np.argmin(energies))
        if energies[k] < best_energy:
            best_energy = float(energies[k])
            best_labeling = labelings[k].copy()
    return best_labeling, best_energy


def brute_force_marginals(model):
    """Exact node marginals, per-edge marginals, and logZ by enumeration.

    Guarded to M^N <= 10^6; logZ uses max-subtraction for stability.
    """
    n, m = model.graph.n_nodes, model.m
    if m**n > MARGINAL_ENUM_LIMIT:
        raise ValueError(f"instance too large for enumeration: {m}^{n}")
    all_energies = np.concatenate([en for _, en in _enumerate_energies(model)])
    e_min = all_energies.min()
    node_marg = np.zeros((n, m))
    edge_marg = np.zeros((model.graph.n_edges, m, m))
    weight_sum = 0.0
    offset = 0
    for labelings, energies in _enumerate_energies(model):
        w = np.exp(-(energies - e_min))
        weight_sum += w.sum()
        for i in range(n):
            np.add.at(node_marg[i], labelings[:, i] - 1, w)
        for k, (i, j) in enumerate(model.graph.edges):
            np.add.at(edge_marg[k], (labelings[:, i] - 1, labelings[:, j] - 1), w)
        offset += labelings.shape[0]
    log_z = float(-e_min + np.log(weight_sum))
    return node_marg / weight_sum, edge_marg / weight_sum, log_z


def save_energy_model(header_path, model):
    """Serialize for tests: unary raw block + edge-list CSV + pairwise
    spec in the header.
    """
    stem = os.path.splitext(os.path.basename(header_path))[0]
    base = os.path.dirname(os.path.abspath(header_path))
    unary_name, edges_name = stem + ".unary.raw", stem + ".edges.csv"
    fields = {
        "kind": "energy_model",
        "n_nodes": model.graph.n_nodes,
        "n_classes": model.m,
        "unary": unary_name,
        "edges": edges_name,
    }
    if isinstance(model.pairwise, Potts):
        fields["pairwise"] = "potts"
        fields["beta"] = repr(model.pairwise.beta)
    else:
        tables_name = stem + ".pairwise.raw"
        fields["pairwise"] = "full"
        fields["tables"] = tables_name
        tables = np.ascontiguousarray(model.pairwise_tables(), dtype="<f8")
        tables.tofile(os.path.join(base, tables_name))
    write_header(header_path, fields)
    model.unary.astype("<f8").tofile(os.path.join(base, unary_name))
    with open(os.path.join(base, edges_name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for i, j in model.graph.edges:
            writer.writerow([int(i), int(j)])


def load_energy_model(header_path):
    fields = read_header(header_path)
    base = os.path.dirname(os.path.abspath(header_path))
    n, m = int(fields["n_nodes"]), int(fields["n_classes"])
    unary = np.fromfile(os.path.join(base, fields["unary"]), dtype="<f8").reshape(n, m)
    edges = []
    with open(os.path.join(base, fields["edges"]), "r", encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh):
            if rec:
                edges.append((int(rec[0]), int(rec[1])))
    graph = Graph(n_nodes=n, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    if fields["pairwise"] == "potts":
        pairwise = Potts(beta=float(fields["beta"]))
    else:
        tables = np.fromfile(os.path.join(base, fields["tables"]), dtype="<f8")
        pairwise = FullPairwise(tables.reshape(graph.n_edges, m, m))
    return EnergyModel(graph=graph, unary=unary, pairwise=pairwise)
