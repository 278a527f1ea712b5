"""Time-delay-embedded Markov chains and their unembedding.

A chain ``X_n`` on ``{1..k}`` induces the word chain
``Y_n = X_n X_{n+1} ... X_{n+m-1}``. Its transition graph ``G_Z`` has one node
per admissible ``m``-word and an edge ``a_1..a_m -> a_2..a_m b`` of weight
``P[a_m, b]``. :func:`unembed` goes the other way: given only the topology and
weights of ``G_Z`` it recovers ``G_X`` and the word attached to every node,
up to a relabelling of the alphabet.

Unembedding walks the elementary circuits of ``G_Z`` from shortest to
longest. Each node carries ``m`` symbol slots; the slots are merged in a
union-find structure using the overlap rule (a path of length ``p < m`` from
``u`` to ``v`` forces ``v[j] = u[j + p]``). A slot that no rule determines
receives the next unused symbol.
"""

from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .markov import TransitionMatrix, is_irreducible

__all__ = [
    "WeightedDigraph",
    "Circuit",
    "TupleAssignment",
    "UnembeddingError",
    "transition_graph",
    "embed_mc",
    "elementary_circuits",
    "circuits_by_length",
    "directed_distance",
    "distance_matrix",
    "assign_tuples_to_circuit",
    "unembed",
    "graph_to_matrix",
    "write_graph",
    "read_graph",
    "write_tuple_assignment",
    "read_tuple_assignment",
]

OUT_SUM_TOL = 1e-9
EXACT_WEIGHT_TOL = 1e-6

Node = Hashable


class UnembeddingError(ValueError):
    """The input graph is not a valid delay-embedded chain."""

    def __init__(self, message, circuit=None):
        super().__init__(message)
        self.circuit = circuit


def _sort_key(v):
    return (0, v) if isinstance(v, (int, np.integer)) else (1, str(v))


@dataclass(frozen=True)
class WeightedDigraph:
    """Directed graph with positive edge weights.

    ``counts`` holds the number of observed transitions per edge for graphs
    estimated from data, and is ``None`` for exact graphs. In transition mode
    each node's outgoing weights sum to 1.
    """

    nodes: Tuple[Node, ...]
    edges: Dict[Tuple[Node, Node], float]
    counts: Optional[Dict[Tuple[Node, Node], int]] = None
    transition: bool = True

    def __post_init__(self):
        nodes = tuple(sorted(set(self.nodes), key=_sort_key))
        object.__setattr__(self, "nodes", nodes)
        idx = {v: i for i, v in enumerate(nodes)}
        object.__setattr__(self, "_index", idx)
        edges = {}
        for (u, v), w in self.edges.items():
            if u not in idx or v not in idx:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            w = float(w)
            if not (0.0 < w <= 1.0 + OUT_SUM_TOL) and self.transition:
                raise ValueError(f"edge ({u}, {v}) has weight {w} outside (0, 1]")
            if w <= 0:
                raise ValueError(f"edge ({u}, {v}) has non-positive weight")
            edges[(u, v)] = w
        edges = dict(sorted(edges.items(), key=lambda e: (idx[e[0][0]], idx[e[0][1]])))
        object.__setattr__(self, "edges", edges)
        succ = {v: [] for v in nodes}
        pred = {v: [] for v in nodes}
        for u, v in edges:
            succ[u].append(v)
            pred[v].append(u)
        object.__setattr__(self, "_succ", {v: tuple(s) for v, s in succ.items()})
        object.__setattr__(self, "_pred", {v: tuple(s) for v, s in pred.items()})
        if self.transition:
            for u in nodes:
                s = sum(edges[(u, v)] for v in succ[u])
                if succ[u] and abs(s - 1.0) > OUT_SUM_TOL:
                    raise ValueError(f"outgoing weights of node {u} sum to {s!r}")

    # -- basic queries --------------------------------------------------

    def index(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise KeyError(f"unknown node {v!r}") from None

    def successors(self, v) -> Tuple[Node, ...]:
        self.index(v)
        return self._succ[v]

    def predecessors(self, v) -> Tuple[Node, ...]:
        self.index(v)
        return self._pred[v]

    def weight(self, u, v) -> float:
        return self.edges.get((u, v), 0.0)

    def __len__(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> np.ndarray:
        """Dense weight matrix in node order."""
        n = len(self.nodes)
        A = np.zeros((n, n))
        for (u, v), w in self.edges.items():
            A[self._index[u], self._index[v]] = w
        return A

    def is_strongly_connected(self) -> bool:
        if not self.nodes:
            return False
        root = self.nodes[0]
        for nbrs in (self._succ, self._pred):
            seen = {root}
            queue = deque([root])
            while queue:
                u = queue.popleft()
                for v in nbrs[u]:
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
            if len(seen) != len(self.nodes):
                return False
        return True

    def same_topology(self, other: "WeightedDigraph") -> bool:
        return set(self.nodes) == set(other.nodes) and set(self.edges) == set(other.edges)


@dataclass(frozen=True)
class Circuit:
    """Elementary circuit ``v_1 -> ... -> v_n -> v_1`` in canonical rotation."""

    nodes: Tuple[Node, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def edges(self):
        n = len(self.nodes)
        return [(self.nodes[i], self.nodes[(i + 1) % n]) for i in range(n)]


@dataclass
class TupleAssignment:
    """Map from graph node to ``m``-tuple over the recovered alphabet.

    Slots that are still unknown hold ``0``.
    """

    m: int
    map: Dict[Node, Tuple[int, ...]] = field(default_factory=dict)

    def is_complete(self, nodes: Optional[Iterable[Node]] = None) -> bool:
        keys = self.map.keys() if nodes is None else nodes
        return all(v in self.map and 0 not in self.map[v] for v in keys)

    def is_injective(self) -> bool:
        vals = list(self.map.values())
        return len(set(vals)) == len(vals)

    def overlap_violations(self, g: WeightedDigraph) -> List[Tuple[Node, Node]]:
        bad = []
        for u, v in g.edges:
            a, b = self.map.get(u), self.map.get(v)
            if a is None or b is None or a[1:] != b[:-1]:
                bad.append((u, v))
        return bad

    def beta(self, v) -> int:
        """Last element of the tuple of ``v``."""
        return self.map[v][-1]

    def relabel(self, perm: Dict[int, int]) -> "TupleAssignment":
        return TupleAssignment(self.m, {v: tuple(perm[s] for s in t) for v, t in self.map.items()})


# ---------------------------------------------------------------------------
# construction


def _is_gap(x) -> bool:
    if x is None:
        return True
    if isinstance(x, (int, np.integer)):
        return x <= 0
    if isinstance(x, float):
        return not np.isfinite(x) or x <= 0
    return False


def transition_graph(labels, min_weight: float = 0.0) -> WeightedDigraph:
    """Empirical transition graph of a label sequence with gaps.

    Gaps are ``None`` or integers ``<= 0``; pairs touching a gap are skipped.
    Edges with estimated weight below ``min_weight`` are dropped and their
    rows renormalised, which removes transitions created by isolated
    mislabelled points.
    """
    seq = labels.labels if hasattr(labels, "labels") else labels
    seq = [None if _is_gap(x) else (int(x) if isinstance(x, (int, np.integer)) else x) for x in seq]
    counts: Dict[Tuple[Node, Node], int] = {}
    for a, b in zip(seq[:-1], seq[1:]):
        if a is None or b is None:
            continue
        counts[(a, b)] = counts.get((a, b), 0) + 1
    if not counts:
        raise ValueError("no valid consecutive label pairs after removing gaps")

    def row_totals(cnt):
        tot: Dict[Node, int] = {}
        for (a, _b), c in cnt.items():
            tot[a] = tot.get(a, 0) + c
        return tot

    if min_weight > 0:
        totals = row_totals(counts)
        counts = {e: c for e, c in counts.items() if c / totals[e[0]] >= min_weight}
    totals = row_totals(counts)
    nodes = {a for a, _ in counts} | {b for _, b in counts}
    edges = {e: c / totals[e[0]] for e, c in counts.items()}
    return WeightedDigraph(tuple(nodes), edges, counts=dict(counts))


def embed_mc(P, m: int) -> Tuple[WeightedDigraph, TupleAssignment]:
    """Exact transition graph of the ``m``-word chain of ``P``.

    Nodes are numbered ``1, 2, ...`` in lexicographic order of their words,
    which gives the node numbering I=11, II=12, III=21, IV=22 for a positive
    2-state chain at ``m = 2``.
    """
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(np.asarray(P, dtype=float))
    if m < 1:
        raise ValueError("m must be at least 1")
    if not is_irreducible(P):
        raise ValueError("transition matrix is reducible")
    A = np.asarray(P.entries)
    k = P.k
    words = [(a,) for a in range(1, k + 1)]
    for _ in range(m - 1):
        words = [w + (b,) for w in words for b in range(1, k + 1) if A[w[-1] - 1, b - 1] > 0]
    label = {w: i + 1 for i, w in enumerate(words)}
    edges = {}
    for w in words:
        for b in range(1, k + 1):
            p = A[w[-1] - 1, b - 1]
            if p > 0:
                edges[(label[w], label[w[1:] + (b,)])] = p
    g = WeightedDigraph(tuple(label.values()), edges)
    return g, TupleAssignment(m, {label[w]: w for w in words})


# ---------------------------------------------------------------------------
# circuits and distances


def _johnson(n: int, succ: List[List[int]]) -> Iterator[List[int]]:
    """Johnson's elementary-circuit algorithm on nodes ``0..n-1``.

    Each circuit is yielded once, starting at its smallest node. The search
    is iterative so long circuits do not hit the recursion limit.
    """
    for s in range(n):
        # restrict to the strongly connected component of s within nodes >= s
        fwd = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for v in succ[u]:
                if v >= s and v not in fwd:
                    fwd.add(v)
                    stack.append(v)
        pred_sub: Dict[int, List[int]] = {v: [] for v in fwd}
        for u in fwd:
            for v in succ[u]:
                if v in fwd:
                    pred_sub[v].append(u)
        comp = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for v in pred_sub[u]:
                if v not in comp:
                    comp.add(v)
                    stack.append(v)
        sub = {u: [v for v in succ[u] if v in comp] for u in comp}
        if not sub[s]:
            continue
        blocked = {s}
        B: Dict[int, set] = {v: set() for v in comp}
        path = [s]
        iters = [iter(sub[s])]
        closed = [False]
        while iters:
            try:
                w = next(iters[-1])
            except StopIteration:
                v = path.pop()
                iters.pop()
                c = closed.pop()
                if c:
                    # unblock v and everything waiting on it
                    todo = [v]
                    while todo:
                        x = todo.pop()
                        if x in blocked:
                            blocked.discard(x)
                            todo.extend(B[x])
                            B[x].clear()
                    if closed:
                        closed[-1] = True
                else:
                    for x in sub[v]:
                        B[x].add(v)
                continue
            if w == s:
                yield list(path)
                closed[-1] = True
            elif w not in blocked:
                path.append(w)
                blocked.add(w)
                iters.append(iter(sub[w]))
                closed.append(False)


def _index_succ(g: WeightedDigraph) -> List[List[int]]:
    return [[g.index(v) for v in g.successors(u)] for u in g.nodes]


def elementary_circuits(g: WeightedDigraph, limit: Optional[int] = None) -> List[Circuit]:
    """All elementary circuits, shortest first, ties in lexicographic node order.

    Each circuit starts at its smallest node in the graph's node order.
    ``limit`` raises ``RuntimeError`` once more circuits than that are found,
    as a guard against the exponential blow-up on dense graphs.
    """
    out = []
    for c in _johnson(len(g.nodes), _index_succ(g)):
        out.append(c)
        if limit is not None and len(out) > limit:
            raise RuntimeError(f"more than {limit} elementary circuits")
    out.sort(key=lambda c: (len(c), c))
    return [Circuit(tuple(g.nodes[i] for i in c)) for c in out]


def distance_matrix(g: WeightedDigraph) -> np.ndarray:
    """All-pairs hop distances; ``inf`` where unreachable."""
    n = len(g.nodes)
    if not g.edges:
        D = np.full((n, n), np.inf)
        np.fill_diagonal(D, 0.0)
        return D
    rows = [g.index(u) for u, _ in g.edges]
    cols = [g.index(v) for _, v in g.edges]
    A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return shortest_path(A, method="D", directed=True, unweighted=True)


def circuits_by_length(g: WeightedDigraph, dist: Optional[np.ndarray] = None) -> Iterator[List[Circuit]]:
    """Yield the elementary circuits grouped by length 1, 2, ... (each group sorted).

    Unlike :func:`elementary_circuits` this is lazy, so callers that only need
    the short circuits never pay for the long ones. A depth-bounded search
    from every root, pruned with hop distances back to the root, enumerates
    the circuits of one length at a time.
    """
    n = len(g.nodes)
    succ = _index_succ(g)
    D = distance_matrix(g) if dist is None else dist
    for L in range(1, n + 1):
        found = []
        for r in range(n):
            back = D[:, r]
            path = [r]
            on = {r}
            iters = [iter(succ[r])]
            while iters:
                try:
                    w = next(iters[-1])
                except StopIteration:
                    on.discard(path.pop())
                    iters.pop()
                    continue
                depth = len(path)
                if w == r:
                    if depth == L:
                        found.append(list(path))
                    continue
                if w < r or w in on or depth + back[w] > L:
                    continue
                path.append(w)
                on.add(w)
                iters.append(iter(succ[w]))
        found.sort()
        yield [Circuit(tuple(g.nodes[i] for i in c)) for c in found]


def directed_distance(g: WeightedDigraph, U: Iterable[Node], V: Iterable[Node]) -> float:
    """``min d(u, v)`` over ``u in U, v in V`` in hops; ``inf`` if unreachable."""
    U, V = list(U), list(V)
    if not U or not V:
        raise ValueError("node sets must be non-empty")
    for v in U + V:
        g.index(v)
    target = set(V)
    seen = set(U)
    frontier = list(U)
    d = 0
    while frontier:
        if target.intersection(frontier):
            return d
        nxt = []
        for u in frontier:
            for w in g.successors(u):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
        d += 1
    return float("inf")


# ---------------------------------------------------------------------------
# Algorithm 2: tuple assignment


class _Slots:
    """Union-find over (node index, slot) pairs with an optional symbol per class."""

    def __init__(self, n: int, m: int):
        self.m = m
        self.parent = list(range(n * m))
        self.symbol = [0] * (n * m)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        sa, sb = self.symbol[ra], self.symbol[rb]
        if sa and sb and sa != sb:
            return False
        self.parent[rb] = ra
        self.symbol[ra] = sa or sb
        return True

    def get(self, node: int, j: int) -> int:
        return self.symbol[self.find(node * self.m + j)]

    def set(self, node: int, j: int, s: int) -> None:
        self.symbol[self.find(node * self.m + j)] = s


@dataclass
class _State:
    """Mutable state carried across calls of :func:`assign_tuples_to_circuit`."""

    g: WeightedDigraph
    m: int
    dist: np.ndarray
    slots: _Slots
    assigned: np.ndarray  # bool per node: processed in an earlier circuit


def _new_state(g: WeightedDigraph, m: int, dist=None) -> _State:
    n = len(g.nodes)
    D = distance_matrix(g) if dist is None else dist
    return _State(g, m, D, _Slots(n, m), np.zeros(n, dtype=bool))


def _link(st: _State, u: int, v: int, p: int, circuit) -> None:
    """Apply ``v[j] = u[j + p]`` for ``j = 0 .. m - 1 - p``."""
    m = st.m
    for j in range(m - p):
        if not st.slots.union(u * m + j + p, v * m + j):
            g = st.g
            raise UnembeddingError(
                f"conflicting symbols for {g.nodes[u]!r}[{j + p + 1}] and {g.nodes[v]!r}[{j + 1}] "
                f"while processing circuit {tuple(circuit)}",
                circuit=tuple(circuit),
            )


def _assign(st: _State, circuit: Circuit, next_symbol: int) -> int:
    g, m, D = st.g, st.m, st.dist
    idx = [g.index(v) for v in circuit]
    n = len(idx)
    for i in range(n):
        _link(st, idx[i], idx[(i + 1) % n], 1, circuit)
    # overlap rule at distance d < m, within the circuit and against assigned nodes
    near = st.assigned.copy()
    near[idx] = True
    for c in idx:
        for a in np.flatnonzero(near & (D[c] < m)).tolist():
            if a != c:
                _link(st, c, a, int(D[c, a]), circuit)
        for a in np.flatnonzero(near & (D[:, c] < m)).tolist():
            if a != c:
                _link(st, a, c, int(D[a, c]), circuit)
    for c in idx:
        for j in range(m):
            if st.slots.get(c, j) == 0:
                next_symbol += 1
                st.slots.set(c, j, next_symbol)
    st.assigned[idx] = True
    return next_symbol


def _snapshot(st: _State) -> TupleAssignment:
    g, m = st.g, st.m
    out = {}
    for i, v in enumerate(g.nodes):
        t = tuple(st.slots.get(i, j) for j in range(m))
        if any(t):
            out[v] = t
    return TupleAssignment(m, out)


def assign_tuples_to_circuit(
    circuit: Circuit,
    g: WeightedDigraph,
    m: int,
    partial: Optional[TupleAssignment] = None,
    next_symbol: int = 0,
) -> Tuple[TupleAssignment, int]:
    """Complete the tuples of the nodes on ``circuit``.

    ``partial`` holds the tuples fixed by earlier circuits and
    ``next_symbol`` the number of symbols allocated so far. Returns the
    extended assignment and the updated counter.
    """
    for a, b in circuit.edges():
        if (a, b) not in g.edges:
            raise ValueError(f"({a}, {b}) is not an edge, so the circuit is not in the graph")
    if len(set(circuit.nodes)) != len(circuit):
        raise ValueError("circuit repeats a node")
    st = _new_state(g, m)
    if partial is not None:
        if partial.m != m:
            raise ValueError("partial assignment has a different m")
        for v, t in partial.map.items():
            i = g.index(v)
            for j, s in enumerate(t):
                if s:
                    if st.slots.get(i, j) not in (0, s):
                        raise UnembeddingError(f"partial tuple of {v!r} is inconsistent")
                    st.slots.set(i, j, s)
            if all(t):
                st.assigned[i] = True
        # the partial tuples of assigned nodes are already coupled by their symbols
    nxt = _assign(st, circuit, next_symbol)
    return _snapshot(st), nxt


# ---------------------------------------------------------------------------
# Algorithm 1: unembedding


def _reconcile(samples, counts, exact: bool, edge) -> float:
    w = np.asarray(samples, dtype=float)
    if w.size == 1:
        return float(w[0])
    c = np.asarray(counts, dtype=float)
    mean = float(np.sum(w * c) / np.sum(c))
    tol = EXACT_WEIGHT_TOL if exact else 3.0 / np.sqrt(np.sum(c))
    if np.max(np.abs(w - mean)) > tol:
        warnings.warn(
            f"edge {edge} of the recovered chain gets inconsistent weights {w.tolist()}; using their weighted mean",
            RuntimeWarning,
            stacklevel=3,
        )
    if exact and np.all(w == w[0]):
        return float(w[0])
    return mean


def unembed(g: WeightedDigraph, m: int) -> Tuple[WeightedDigraph, TupleAssignment]:
    """Recover ``G_X`` and the node-to-word map ``phi`` from ``G_Z``.

    Circuits are processed shortest first. Once every node has a complete
    tuple the remaining (longer) circuits cannot change it, so enumeration
    stops there; ``G_X`` then gets one edge ``beta(u) -> beta(v)`` for every
    edge ``u -> v`` of ``G_Z`` with the same weight, where ``beta`` takes the
    last symbol of a tuple.

    Raises
    ------
    UnembeddingError
        If ``g`` is not strongly connected, two rules force different
        symbols into one slot, or the final assignment is not injective or
        violates the shift overlap on some edge.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not g.is_strongly_connected():
        raise UnembeddingError("graph is not strongly connected, so it cannot come from an irreducible chain")
    D = distance_matrix(g)
    st = _new_state(g, m, D)
    nsym = 0
    n = len(g.nodes)
    for group in circuits_by_length(g, D):
        for c in group:
            idx = [g.index(v) for v in c]
            if st.assigned[idx].all():
                continue
            nsym = _assign(st, c, nsym)
        if st.assigned.all():
            break
    phi = _snapshot(st)
    if len(phi.map) != n or not phi.is_complete():
        raise UnembeddingError("some nodes were left without a complete tuple")
    if not phi.is_injective():
        seen = {}
        for v, t in phi.map.items():
            if t in seen:
                raise UnembeddingError(f"nodes {seen[t]!r} and {v!r} both receive the word {t}")
            seen[t] = v
    bad = phi.overlap_violations(g)
    if bad:
        raise UnembeddingError(f"edge {bad[0]} violates the shift overlap of the recovered words")
    exact = g.counts is None
    samples: Dict[Tuple[int, int], list] = {}
    for (u, v), w in g.edges.items():
        e = (phi.beta(u), phi.beta(v))
        c = 1 if exact else g.counts.get((u, v), 1)
        samples.setdefault(e, []).append((w, c))
    edges = {}
    counts = {}
    for e, lst in samples.items():
        edges[e] = _reconcile([w for w, _ in lst], [c for _, c in lst], exact, e)
        counts[e] = sum(c for _, c in lst)
    syms = tuple(range(1, nsym + 1))
    totals = {a: 0.0 for a in syms}
    for (a, _b), w in edges.items():
        totals[a] += w
    if not exact or any(abs(t - 1.0) > OUT_SUM_TOL for t in totals.values()):
        edges = {e: w / totals[e[0]] for e, w in edges.items()}
    gx = WeightedDigraph(syms, edges, counts=None if exact else counts)
    return gx, phi


def graph_to_matrix(g: WeightedDigraph) -> TransitionMatrix:
    """Transition matrix of a graph whose nodes are ``1..k``."""
    k = len(g.nodes)
    if tuple(g.nodes) != tuple(range(1, k + 1)):
        raise ValueError("graph nodes must be the integers 1..k")
    return TransitionMatrix(g.adjacency())


# ---------------------------------------------------------------------------
# text formats


def _parse_node(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def write_graph(g: WeightedDigraph, path) -> None:
    """Header ``# nodes: ...`` then ``u v weight`` lines (plus a count column if known)."""
    lines = ["# nodes: " + " ".join(str(v) for v in g.nodes)]
    for (u, v), w in g.edges.items():
        line = f"{u} {v} {w!r}"
        if g.counts is not None:
            line += f" {g.counts.get((u, v), 0)}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> WeightedDigraph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# nodes:"):
        raise ValueError(f"{path}: missing '# nodes:' header")
    nodes = [_parse_node(t) for t in text[0].split(":", 1)[1].split()]
    edges, counts = {}, {}
    for ln in text[1:]:
        parts = ln.split()
        if not parts:
            continue
        u, v = _parse_node(parts[0]), _parse_node(parts[1])
        edges[(u, v)] = float(parts[2])
        if len(parts) > 3:
            counts[(u, v)] = int(parts[3])
    return WeightedDigraph(tuple(nodes), edges, counts=counts or None)


def write_tuple_assignment(phi: TupleAssignment, path) -> None:
    """``node a,b,c`` per line, preceded by ``# m: <m>``."""
    lines = [f"# m: {phi.m}"] + [f"{v} {','.join(str(s) for s in t)}" for v, t in phi.map.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_tuple_assignment(path) -> TupleAssignment:
    lines = Path(path).read_text().splitlines()
    m = None
    out = {}
    for ln in lines:
        if ln.startswith("# m:"):
            m = int(ln.split(":")[1])
            continue
        if not ln.strip():
            continue
        node, tup = ln.split()
        out[_parse_node(node)] = tuple(int(s) for s in tup.split(","))
    if m is None:
        m = len(next(iter(out.values())))
    return TupleAssignment(m, out)
