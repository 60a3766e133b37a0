"""MAP inference (ICM, max-flow graph cuts, alpha-expansion) and
probabilistic inference (loopy sum/max-product BP with Bethe logZ).
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .energy import EnergyModel, FullPairwise, Graph, Potts, total_energy

__all__ = [
    "FlowNetwork",
    "max_flow",
    "binary_submodular_map",
    "alpha_expansion",
    "icm",
    "BpConfig",
    "Marginals",
    "loopy_bp",
    "map_infer",
]


class FlowNetwork:
    """Directed flow network over nodes 0..n-1 plus source and sink.

    Arc order is insertion order, which fixes the algorithm's behaviour,
    so results are deterministic for a fixed construction sequence.
    """

    def __init__(self, n_nodes):
        self.n_nodes = int(n_nodes)
        self.source = self.n_nodes
        self.sink = self.n_nodes + 1
        self._tails = []
        self._heads = []
        self._caps = []

    def add_arc(self, u, v, capacity):
        if capacity < 0 or not np.isfinite(capacity):
            raise ValueError(f"arc capacity must be finite and >= 0, got {capacity}")
        # store the arc and its zero-capacity reverse as an even/odd pair
        self._tails.extend((u, v))
        self._heads.extend((v, u))
        self._caps.extend((float(capacity), 0.0))

    def _csr(self):
        n = self.n_nodes + 2
        tails = np.asarray(self._tails, dtype=np.int64)
        heads = np.asarray(self._heads, dtype=np.int64)
        caps = np.asarray(self._caps, dtype=np.float64)
        order = np.argsort(tails, kind="stable")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, tails + 1, 1)
        indptr = np.cumsum(indptr)
        return n, indptr, order, heads, tails, caps


def max_flow(net):
    """Maximum flow via Dinic's algorithm.

    Returns (flow_value, source_side) where source_side is the set of
    node ids (including the source) on the source side of a minimum cut.
    """
    n, indptr, adj, arc_to, arc_tail, caps = net._csr()
    residual = caps.copy()
    value = _kernels.dinic_max_flow(
        n, indptr, adj, arc_to, arc_tail, residual, net.source, net.sink
    )
    seen = _kernels.residual_source_side(n, indptr, adj, arc_to, residual, net.source)
    return float(value), set(np.flatnonzero(seen).tolist())


def _binary_tables(model):
    tables = model.pairwise_tables()
    e = model.graph.edges
    for k in range(e.shape[0]):
        t = tables[k]
        if t[0, 0] + t[1, 1] > t[0, 1] + t[1, 0] + 1e-12:
            raise ValueError(
                f"edge ({e[k, 0]}, {e[k, 1]}) is not submodular: "
                f"{t[0, 0]}+{t[1, 1]} > {t[0, 1]}+{t[1, 0]}"
            )
    return tables


def binary_submodular_map(model):
    """Exact MAP for a binary model with submodular edges via min-cut.

    Uses the standard reparameterization: pairwise tables fold into the
    terminal arcs plus one nonnegative arc per edge.
    """
    if model.m != 2:
        raise ValueError(f"binary MAP needs M=2, got M={model.m}")
    tables = _binary_tables(model)
    n = model.graph.n_nodes
    # per-node costs for label 1 (x=0) and label 2 (x=1)
    cost0 = model.unary[:, 0].copy()
    cost1 = model.unary[:, 1].copy()
    net = FlowNetwork(n)
    edge_caps = np.empty(model.graph.n_edges)
    for k, (i, j) in enumerate(model.graph.edges):
        t = tables[k]
        cost1[i] += t[1, 0] - t[0, 0]
        cost1[j] += t[1, 1] - t[1, 0]
        edge_caps[k] = t[0, 1] + t[1, 0] - t[0, 0] - t[1, 1]
    for i in range(n):
        # source side = x=0: the arc to the sink is cut when x_i = 0
        lo = min(cost0[i], cost1[i])
        if cost0[i] - lo > 0:
            net.add_arc(i, net.sink, cost0[i] - lo)
        if cost1[i] - lo > 0:
            net.add_arc(net.source, i, cost1[i] - lo)
    for k, (i, j) in enumerate(model.graph.edges):
        if edge_caps[k] > 0:
            net.add_arc(i, j, edge_caps[k])
    _, source_side = max_flow(net)
    y = np.ones(n, dtype=np.int64)
    for i in range(n):
        if i not in source_side:
            y[i] = 2
    return y


def _metric_check(tables, edges):
    m = tables.shape[1]
    diag = np.einsum("kaa->ka", tables)
    if np.abs(diag).max(initial=0.0) > 1e-12:
        raise ValueError("metric pairwise requires zero diagonal")
    if np.abs(tables - tables.transpose(0, 2, 1)).max(initial=0.0) > 1e-12:
        raise ValueError("metric pairwise requires symmetric tables")
    for a in range(m):
        for b in range(m):
            for c in range(m):
                if (tables[:, a, b] > tables[:, a, c] + tables[:, c, b] + 1e-12).any():
                    raise ValueError("pairwise tables violate the triangle inequality")


def alpha_expansion(model, init=None, max_cycles=15):
    """Move-making MAP inference for metric pairwise energies.

    Cycles over alpha = 1..M; every alpha-move is a binary submodular
    cut, so the energy never increases. Stops early when a full cycle
    brings no strict decrease. Default init is the per-node unary argmin.
    """
    if max_cycles < 1:
        raise ValueError("max_cycles must be >= 1")
    tables = model.pairwise_tables()
    if not isinstance(model.pairwise, Potts):
        _metric_check(tables, model.graph.edges)
    n, m = model.graph.n_nodes, model.m
    if init is None:
        y = np.argmin(model.unary, axis=1).astype(np.int64) + 1
    else:
        y = np.asarray(init, dtype=np.int64).copy()
    energy = total_energy(model, y)
    edges = model.graph.edges
    is_potts = isinstance(model.pairwise, Potts)
    beta = model.pairwise.beta if is_potts else None
    for _ in range(max_cycles):
        improved = False
        for alpha in range(1, m + 1):
            # binary move: x=0 keeps the current label, x=1 switches to alpha
            cost0 = model.unary[np.arange(n), y - 1].copy()
            cost1 = model.unary[:, alpha - 1].copy()
            net = FlowNetwork(n)
            yi, yj = y[edges[:, 0]], y[edges[:, 1]]
            if is_potts:
                t00 = beta * (yi != yj)
                t01 = beta * (yi != alpha)
                t10 = beta * (yj != alpha)
                t11 = np.zeros(edges.shape[0])
            else:
                ar = np.arange(edges.shape[0])
                t00 = tables[ar, yi - 1, yj - 1]
                t01 = tables[ar, yi - 1, alpha - 1]
                t10 = tables[ar, alpha - 1, yj - 1]
                t11 = tables[ar, alpha - 1, alpha - 1]
            np.add.at(cost1, edges[:, 0], t10 - t00)
            np.add.at(cost1, edges[:, 1], t11 - t10)
            caps = t01 + t10 - t00 - t11
            lo = np.minimum(cost0, cost1)
            to_sink = cost0 - lo
            from_source = cost1 - lo
            for i in range(n):
                if to_sink[i] > 0:
                    net.add_arc(i, net.sink, to_sink[i])
                if from_source[i] > 0:
                    net.add_arc(net.source, i, from_source[i])
            for k in range(edges.shape[0]):
                if caps[k] > 0:
                    net.add_arc(int(edges[k, 0]), int(edges[k, 1]), caps[k])
            _, source_side = max_flow(net)
            proposal = y.copy()
            switch = np.ones(n, dtype=bool)
            keep = np.fromiter(
                (i for i in source_side if i < n), dtype=np.int64, count=-1
            )
            switch[keep] = False
            proposal[switch] = alpha
            new_energy = total_energy(model, proposal)
            if new_energy < energy - 1e-12:
                y, energy, improved = proposal, new_energy, True
            assert new_energy <= energy + 1e-9, "expansion move raised the energy"
        if not improved:
            break
    return y


def _incidence_csr(graph):
    inc_count = np.zeros(graph.n_nodes + 1, dtype=np.int64)
    e = graph.edges
    np.add.at(inc_count, e[:, 0] + 1, 1)
    np.add.at(inc_count, e[:, 1] + 1, 1)
    indptr = np.cumsum(inc_count)
    fill = indptr[:-1].copy()
    inc_edges = np.empty(2 * e.shape[0], dtype=np.int64)
    for k in range(e.shape[0]):
        for node in (e[k, 0], e[k, 1]):
            inc_edges[fill[node]] = k
            fill[node] += 1
    return indptr, inc_edges


def icm(model, init):
    """Iterated conditional modes: raster sweeps to a local minimum."""
    y = np.asarray(init, dtype=np.int64) - 1
    tables = np.ascontiguousarray(model.pairwise_tables())
    indptr, inc_edges = _incidence_csr(model.graph)
    y = y.copy()
    _kernels.icm_sweeps(model.unary, model.graph.edges, tables, indptr, inc_edges, y)
    return y + 1


@dataclass(frozen=True)
class BpConfig:
    mode: str = "sum_product"  # or "max_product"
    max_iters: int = 100
    damping: float = 0.5
    tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("sum_product", "max_product"):
            raise ValueError(f"unknown BP mode {self.mode!r}")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must be in [0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class Marginals:
    node_beliefs: np.ndarray  # n x M
    edge_beliefs: np.ndarray  # E x M x M
    bethe_log_z: float
    converged: bool = True
    iterations: int = 0


def _directed_order(graph):
    """Raster sweep order: directed edges sorted by (source, target)."""
    e = graph.edges
    src = np.empty(2 * e.shape[0], dtype=np.int64)
    dst = np.empty(2 * e.shape[0], dtype=np.int64)
    src[0::2], dst[0::2] = e[:, 0], e[:, 1]
    src[1::2], dst[1::2] = e[:, 1], e[:, 0]
    order = np.lexsort((dst, src)).astype(np.int64)
    return src, dst, order


def _in_csr(n_nodes, dst):
    counts = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(counts, dst + 1, 1)
    indptr = np.cumsum(counts)
    fill = indptr[:-1].copy()
    in_edges = np.empty(dst.shape[0], dtype=np.int64)
    for d in range(dst.shape[0]):
        in_edges[fill[dst[d]]] = d
        fill[dst[d]] += 1
    return indptr, in_edges


def loopy_bp(model, cfg=BpConfig()):
    """Loopy belief propagation with damping on a fixed raster schedule.

    Sum-product returns calibrated node/edge beliefs plus the Bethe logZ
    (exact on trees). Max-product decodes by max-of-marginals with
    lowest-index ties; call through :func:`map_infer` for a labeling.
    """
    n, m = model.graph.n_nodes, model.m
    e = model.graph.edges
    tables = np.ascontiguousarray(model.pairwise_tables())
    src, dst, order = _directed_order(model.graph)
    in_indptr, in_edges = _in_csr(n, dst)
    msg = np.zeros((2 * e.shape[0], m))
    iters, converged = _kernels.bp_sweeps(
        model.unary,
        e,
        tables,
        in_indptr,
        in_edges,
        order,
        msg,
        cfg.mode == "max_product",
        float(cfg.damping),
        float(cfg.tol),
        int(cfg.max_iters),
    )
    # node beliefs from the aggregated incoming messages
    in_sum = np.zeros((n, m))
    np.add.at(in_sum, dst, msg)
    node_log = -model.unary + in_sum
    node_log -= node_log.max(axis=1, keepdims=True)
    node_beliefs = np.exp(node_log)
    node_beliefs /= node_beliefs.sum(axis=1, keepdims=True)
    # edge beliefs exclude the message that travelled along the edge itself
    edge_beliefs = np.empty((e.shape[0], m, m))
    for k in range(e.shape[0]):
        i, j = e[k]
        li = -model.unary[i] + in_sum[i] - msg[2 * k + 1]
        lj = -model.unary[j] + in_sum[j] - msg[2 * k]
        b = li[:, None] + lj[None, :] - tables[k]
        b -= b.max()
        b = np.exp(b)
        edge_beliefs[k] = b / b.sum()
    bethe = _bethe_log_z(model, node_beliefs, edge_beliefs, tables)
    return Marginals(
        node_beliefs=node_beliefs,
        edge_beliefs=edge_beliefs,
        bethe_log_z=bethe,
        converged=bool(converged),
        iterations=int(iters),
    )


def _bethe_log_z(model, node_beliefs, edge_beliefs, tables):
    e = model.graph.edges
    tiny = np.finfo(float).tiny
    avg_energy = float(np.sum(node_beliefs * model.unary))
    avg_energy += float(np.sum(edge_beliefs * tables))
    node_entropy = -np.sum(node_beliefs * np.log(node_beliefs + tiny), axis=1)
    edge_entropy = -np.sum(
        edge_beliefs * np.log(edge_beliefs + tiny), axis=(1, 2)
    )
    degree = np.zeros(model.graph.n_nodes)
    if e.size:
        np.add.at(degree, e[:, 0], 1.0)
        np.add.at(degree, e[:, 1], 1.0)
    entropy = edge_entropy.sum() + np.sum((1.0 - degree) * node_entropy)
    return float(-avg_energy + entropy)


def max_marginals_decode(marginals):
    """Per-node argmax of beliefs with lowest-class tie-breaking."""
    return np.argmax(marginals.node_beliefs, axis=1).astype(np.int64) + 1


def map_infer(model, method, init=None, max_cycles=15, bp_config=None):
    """Dispatch MAP inference and record energy/time in a report dict."""
    start = time.perf_counter()
    if method == "icm":
        if init is None:
            init = np.argmin(model.unary, axis=1).astype(np.int64) + 1
        y = icm(model, init)
        extra = {}
    elif method == "alpha_expansion":
        y = alpha_expansion(model, init=init, max_cycles=max_cycles)
        extra = {"cycles": max_cycles}
    elif method == "max_marginals":
        cfg = bp_config or BpConfig()
        marg = loopy_bp(model, cfg)
        y = max_marginals_decode(marg)
        extra = {"converged": marg.converged, "iterations": marg.iterations}
    else:
        raise ValueError(f"unknown inference method {method!r}")
    report = {
        "method": method,
        "energy": total_energy(model, y),
        "wall_ms": 1000.0 * (time.perf_counter() - start),
    }
    report.update(extra)
    return y, report
