"""Numba-compiled inner loops for max-flow and belief propagation.

Kept separate so the rest of the package stays plain NumPy; every kernel
is deterministic for a fixed input ordering.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def dinic_max_flow(n, indptr, adj, arc_to, arc_tail, cap, source, sink):
    """Dinic's algorithm over a residual arc list.

    ``cap`` is modified in place to the residual capacities; reverse of
    arc ``a`` is ``a ^ 1``. Returns the flow value.
    """
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(len(arc_to) + 1, dtype=np.int64)
    flow = 0.0
    while True:
        # BFS layering on the residual graph
        level[:] = -1
        level[source] = 0
        queue[0] = source
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(indptr[u], indptr[u + 1]):
                a = adj[k]
                v = arc_to[a]
                if cap[a] > 0.0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
        if level[sink] < 0:
            return flow
        it[:] = indptr[:n]
        # repeatedly trace shortest augmenting paths with current-arc pointers
        while True:
            depth = 0
            v = source
            reached = False
            while True:
                if v == sink:
                    reached = True
                    break
                advanced = False
                while it[v] < indptr[v + 1]:
                    a = adj[it[v]]
                    w = arc_to[a]
                    if cap[a] > 0.0 and level[w] == level[v] + 1:
                        path[depth] = a
                        depth += 1
                        v = w
                        advanced = True
                        break
                    it[v] += 1
                if advanced:
                    continue
                if v == source:
                    break
                level[v] = -1  # dead end in this phase
                depth -= 1
                back = path[depth]
                v = arc_tail[back]
                it[v] += 1
            if not reached:
                break
            bottleneck = np.inf
            for k in range(depth):
                a = path[k]
                if cap[a] < bottleneck:
                    bottleneck = cap[a]
            for k in range(depth):
                a = path[k]
                cap[a] -= bottleneck
                cap[a ^ 1] += bottleneck
            flow += bottleneck


@njit(cache=True)
def residual_source_side(n, indptr, adj, arc_to, cap, source):
    """Nodes reachable from the source in the residual graph (the
    source side of a minimum cut once flow is maximal)."""
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[source] = True
    queue[0] = source
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            a = adj[k]
            v = arc_to[a]
            if cap[a] > 0.0 and not seen[v]:
                seen[v] = True
                queue[tail] = v
                tail += 1
    return seen


@njit(cache=True)
def bp_sweeps(
    unary,
    edges,
    tables,
    in_indptr,
    in_edges,
    order,
    msg,
    max_product,
    damping,
    tol,
    max_iters,
):
    """Damped loopy BP message sweeps in the log domain.

    Directed edge 2e is edges[e,0] -> edges[e,1]; 2e+1 is the reverse.
    ``msg`` (2E x M) is updated in place in the fixed ``order``; messages
    are normalized to max entry 0. Returns (iterations, converged).
    """
    m = unary.shape[1]
    s = np.empty(m)
    new = np.empty(m)
    for sweep in range(max_iters):
        delta = 0.0
        for oi in range(order.shape[0]):
            d = order[oi]
            e = d // 2
            if d % 2 == 0:
                src = edges[e, 0]
            else:
                src = edges[e, 1]
            rev = d ^ 1
            # aggregate incoming messages at src, excluding the reverse edge
            for ci in range(m):
                s[ci] = -unary[src, ci]
            for k in range(in_indptr[src], in_indptr[src + 1]):
                dd = in_edges[k]
                if dd != rev:
                    for ci in range(m):
                        s[ci] += msg[dd, ci]
            for cj in range(m):
                if max_product:
                    best = -np.inf
                    for ci in range(m):
                        if d % 2 == 0:
                            val = s[ci] - tables[e, ci, cj]
                        else:
                            val = s[ci] - tables[e, cj, ci]
                        if val > best:
                            best = val
                    new[cj] = best
                else:
                    top = -np.inf
                    for ci in range(m):
                        if d % 2 == 0:
                            val = s[ci] - tables[e, ci, cj]
                        else:
                            val = s[ci] - tables[e, cj, ci]
                        if val > top:
                            top = val
                    acc = 0.0
                    for ci in range(m):
                        if d % 2 == 0:
                            val = s[ci] - tables[e, ci, cj]
                        else:
                            val = s[ci] - tables[e, cj, ci]
                        acc += np.exp(val - top)
                    new[cj] = top + np.log(acc)
            top = new[0]
            for cj in range(1, m):
                if new[cj] > top:
                    top = new[cj]
            for cj in range(m):
                new[cj] -= top
                upd = damping * msg[d, cj] + (1.0 - damping) * new[cj]
                diff = abs(upd - msg[d, cj])
                if diff > delta:
                    delta = diff
                msg[d, cj] = upd
        if delta < tol:
            return sweep + 1, True
    return max_iters, False


@njit(cache=True)
def icm_sweeps(unary, edges, tables, inc_indptr, inc_edges, y):
    """Raster sweeps of iterated conditional modes on 0-based labels.

    ``inc_*`` is a CSR of incident edge ids per node. ``y`` is updated in
    place; returns the number of full sweeps performed.
    """
    n, m = unary.shape
    sweeps = 0
    while True:
        changed = False
        for i in range(n):
            best_c = y[i]
            best_e = np.inf
            for c in range(m):
                e_val = unary[i, c]
                for k in range(inc_indptr[i], inc_indptr[i + 1]):
                    e = inc_edges[k]
                    if edges[e, 0] == i:
                        e_val += tables[e, c, y[edges[e, 1]]]
                    else:
                        e_val += tables[e, y[edges[e, 0]], c]
                if c == y[i] and e_val <= best_e:
                    # the current label wins ties so fixed points stay fixed
                    best_e = e_val
                    best_c = c
                elif e_val < best_e:
                    best_e = e_val
                    best_c = c
            if best_c != y[i]:
                y[i] = best_c
                changed = True
        sweeps += 1
        if not changed:
            return sweeps
