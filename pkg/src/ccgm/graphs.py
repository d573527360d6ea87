"""Learnable adjacency machinery and DAG queries.

Index convention throughout: A[i][j] is the strength of the edge from parent
j into child i, so row i lists the parents of node i. do-style surgery on a
node therefore zeroes its row.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

LN2 = math.log(2.0)


@dataclass
class AdjacencyState:
    """Learnable weight matrix M with learnable threshold gamma.

    `constraints` is an optional k x k float matrix: NaN marks a free entry,
    any other value forces that entry of the masked matrix (0 = forced zero).
    The diagonal is always forced to zero.
    """

    m: np.ndarray
    gamma: float
    constraints: np.ndarray | None = None
    tau: float = 0.1

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        k = self.m.shape[0]
        if self.m.ndim != 2 or self.m.shape[1] != k or k < 1:
            raise ValueError(f"adjacency must be square, got {self.m.shape}")
        np.fill_diagonal(self.m, 0.0)

    @property
    def k(self) -> int:
        return self.m.shape[0]

    def free_mask(self) -> np.ndarray:
        free = 1.0 - np.eye(self.k)
        if self.constraints is not None:
            free = free * np.isnan(self.constraints)
        return free

    def masked(self) -> np.ndarray:
        """Hard-thresholded adjacency A = M * 1[M >= gamma] with constraints applied."""
        return apply_sparsity_mask(self.m, self.gamma, self.constraints)


def apply_sparsity_mask(m: np.ndarray, gamma: float, constraints: np.ndarray | None = None) -> np.ndarray:
    a = np.where((m >= gamma) & (m >= 0.0), m, 0.0)
    np.fill_diagonal(a, 0.0)
    if constraints is not None:
        forced = ~np.isnan(constraints)
        a = np.where(forced, np.nan_to_num(constraints), a)
        np.fill_diagonal(a, 0.0)
    return a


def mask_surrogate(m: np.ndarray, gamma: float, tau: float = 0.1) -> np.ndarray:
    """Soft relaxation M * sigma((M - gamma)/tau); the backward contract of the mask."""
    a = m / (1.0 + np.exp(-(m - gamma) / tau))
    a = a * (1.0 - np.eye(m.shape[0]))
    return a


def entropy_init(labels: np.ndarray) -> np.ndarray:
    """Initial edge weights ln2 - H(v_i | v_j) from empirical counts.

    Add-one smoothing on the 2x2 joint table, natural log, diagonal zero,
    clipped below at zero so weights are nonnegative edge strengths.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n, k = labels.shape
    if n < 2:
        raise ValueError("entropy_init needs at least 2 samples")
    if labels.min() == labels.max():
        raise ValueError("entropy_init needs both label values present")
    m = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            m[i, j] = max(0.0, LN2 - _cond_entropy(labels[:, i], labels[:, j]))
    return m


def _cond_entropy(vi: np.ndarray, vj: np.ndarray) -> float:
    """H(v_i | v_j) with add-one smoothing, natural log."""
    counts = np.ones((2, 2))
    for b in (0, 1):
        for c in (0, 1):
            counts[b, c] += np.sum((vi == b) & (vj == c))
    total = counts.sum()
    h = 0.0
    for c in (0, 1):
        col = counts[:, c]
        colsum = col.sum()
        for b in (0, 1):
            p_joint = counts[b, c] / total
            p_cond = col[b] / colsum
            h -= p_joint * math.log(p_cond)
    return h


def orient_deterministic_pairs(m: np.ndarray, gamma: float,
                               det_level: float = 0.85 * LN2,
                               tie_tol: float = 0.02,
                               reverse_damp: float = 0.6,
                               duplicate_damp: float = 0.2) -> np.ndarray:
    """Canonically orient observationally symmetric deterministic pairs.

    Two variables that determine each other (both directed weights near ln2)
    are indistinguishable from data; entropy weights come out identical both
    ways and so do the weights they induce as parents of any third node.
    To make training reproducible we keep the low-index -> high-index edge,
    damp the reverse one, and damp the redundant duplicate-parent edge from
    the upstream twin below the pruning threshold. Training can still undo
    this if the data disagrees.
    """
    m = m.copy()
    k = m.shape[0]
    for p in range(k):
        for q in range(p + 1, k):
            fwd, rev = m[q, p], m[p, q]
            if fwd >= det_level and rev >= det_level and abs(fwd - rev) <= tie_tol:
                m[p, q] = rev * reverse_damp
                for i in range(k):
                    if i in (p, q):
                        continue
                    if m[i, p] >= gamma and m[i, q] >= gamma and abs(m[i, p] - m[i, q]) <= tie_tol:
                        m[i, p] = m[i, p] * duplicate_damp
    return m


def acyclicity_penalty(a, beta: float = 1.0):
    """Tr((I + (beta/k) * A*A)^k) - k with elementwise square; zero iff the
    nonzero pattern of A is acyclic. Accepts a numpy array or a Tensor."""
    if isinstance(a, ad.Tensor):
        return ad.trace_power_penalty(a, beta)
    a = np.asarray(a, dtype=np.float64)
    k = a.shape[0]
    base = np.eye(k) + (beta / k) * (a * a)
    return float(np.trace(np.linalg.matrix_power(base, k)) - k)


@dataclass
class Dag:
    """An extracted acyclic dependency graph over named nodes."""

    nodes: list[str]
    edges: list[tuple[int, int, float]]  # (parent, child, weight)
    topo_order: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.topo_order:
            self.topo_order = topological_order(self)

    def parents_of(self, i: int) -> list[tuple[int, float]]:
        return [(p, w) for p, c, w in self.edges if c == i]

    def children_of(self, i: int) -> list[int]:
        return sorted({c for p, c, _ in self.edges if p == i})

    def index(self, name: str) -> int:
        try:
            return self.nodes.index(name)
        except ValueError:
            raise KeyError(f"unknown node {name!r}") from None

    def adjacency(self) -> np.ndarray:
        a = np.zeros((len(self.nodes), len(self.nodes)))
        for p, c, w in self.edges:
            a[c, p] = w
        return a

    def drop_incoming(self, nodes: set[int]) -> "Dag":
        kept = [(p, c, w) for p, c, w in self.edges if c not in nodes]
        return Dag(self.nodes, kept)


def extract_dag(a: np.ndarray, names: list[str] | None = None) -> Dag:
    """Break cycles by repeatedly removing the lightest edge lying on a cycle.

    An edge (j -> i) lies on a cycle iff both endpoints are in the same
    strongly connected component. Ties break on the lowest (parent, child)
    index pair. Acyclic inputs pass through unchanged.
    """
    a = np.asarray(a, dtype=np.float64)
    k = a.shape[0]
    if names is None:
        names = [f"v{i}" for i in range(k)]
    if np.any(a < 0):
        raise ValueError("extract_dag expects nonnegative weights")
    weights = {(j, i): a[i, j] for i in range(k) for j in range(k) if i != j and a[i, j] != 0.0}
    while True:
        comp = _scc({p: set() for p in range(k)}, weights)
        cyclic = [(w, p, c) for (p, c), w in weights.items() if comp[p] == comp[c]]
        if not cyclic:
            break
        _, p, c = min(cyclic, key=lambda t: (t[0], t[1], t[2]))
        del weights[(p, c)]
    edges = sorted(((p, c, w) for (p, c), w in weights.items()), key=lambda e: (e[0], e[1]))
    return Dag(list(names), edges)


def _scc(nodes: dict, weights: dict) -> dict[int, int]:
    """Tarjan strongly connected components; returns node -> component id."""
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for (p, c) in weights:
        adj[p].append(c)
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    comp: dict[int, int] = {}
    stack: list[int] = []
    on_stack: set[int] = set()
    counter = [0]
    comp_id = [0]

    def strongconnect(v: int):
        work = [(v, iter(adj[v]))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                elif w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp[w] = comp_id[0]
                    if w == node:
                        break
                comp_id[0] += 1

    for v in nodes:
        if v not in index:
            strongconnect(v)
    return comp


def topological_order(dag: Dag) -> list[int]:
    """Kahn's scheme with a lowest-index tie-break; rejects cyclic input."""
    k = len(dag.nodes)
    indeg = [0] * k
    out: dict[int, list[int]] = {i: [] for i in range(k)}
    for p, c, _ in dag.edges:
        indeg[c] += 1
        out[p].append(c)
    heap = [i for i in range(k) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        node = heapq.heappop(heap)
        order.append(node)
        for c in out[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != k:
        raise ValueError("graph has a directed cycle")
    return order


def reachability(dag: Dag, node: str | int, direction: str) -> set[int]:
    """Transitive closure from `node` (itself excluded); direction is
    'ancestors' or 'descendants'."""
    if isinstance(node, str):
        node = dag.index(node)
    if node < 0 or node >= len(dag.nodes):
        raise KeyError(f"unknown node index {node}")
    if direction not in ("ancestors", "descendants"):
        raise ValueError(f"direction must be ancestors|descendants, got {direction!r}")
    step: dict[int, set[int]] = {i: set() for i in range(len(dag.nodes))}
    for p, c, _ in dag.edges:
        if direction == "descendants":
            step[p].add(c)
        else:
            step[c].add(p)
    seen: set[int] = set()
    frontier = [node]
    while frontier:
        nxt = frontier.pop()
        for other in step[nxt]:
            if other not in seen:
                seen.add(other)
                frontier.append(other)
    return seen


def to_dot(dag: Dag) -> str:
    lines = ["digraph cgm {"]
    for name in dag.nodes:
        lines.append(f'  "{name}";')
    for p, c, w in dag.edges:
        lines.append(f'  "{dag.nodes[p]}" -> "{dag.nodes[c]}" [label="{w:.4f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_structured(dag: Dag) -> dict:
    return {
        "nodes": list(dag.nodes),
        "edges": [
            {"src": dag.nodes[p], "dst": dag.nodes[c], "weight": w}
            for p, c, w in dag.edges
        ],
    }
