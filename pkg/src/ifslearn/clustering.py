"""Multi-manifold clustering of delay vectors.

Delay vectors of a random IFS lie on a finite union of smooth pieces, one per
generator word. The clustering here works in four passes:

1. **Local charts.** Around every point a quadratic chart (principal tangent
   directions plus normal coordinates written as a quadratic in the tangent
   coordinates) is fitted robustly to its nearest neighbours. A point whose
   neighbourhood is almost entirely explained by its chart is *clean*.
2. **Fragments.** Clean points are linked when each lies on the other's
   chart. Connected components of this graph are pure pieces of single
   manifolds, but a manifold is usually split into several of them.
3. **Merging.** Fragments are joined by two kinds of evidence. Consecutive
   delay vectors share ``l - 2`` generator symbols, so transitions between
   fragments tie symbol slots together; fragments whose slots all coincide
   carry the same word (this needs time-ordered data). Independently, two
   fragments are joined when charts fitted on one extend onto the other with
   a small residual and matching tangent planes.
4. **Assignment.** Every point is scored against a chart of each cluster;
   points whose best two scores are too close are marked ambiguous.
"""

from __future__ import annotations

import configparser
import io
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .embedding import DelayVectorSet

__all__ = [
    "ClusterParams",
    "ClusterModel",
    "ClusteringError",
    "LabelSequence",
    "GAP",
    "cluster",
    "label_sequence",
    "estimate_local_dimension",
    "write_cluster_report",
]

log = logging.getLogger(__name__)

GAP = 0
_CHUNK = 4096


class ClusteringError(ValueError):
    """Input cannot be clustered (too few points or degenerate geometry)."""


@dataclass(frozen=True)
class ClusterParams:
    """Tunable settings; ``None`` entries are resolved from the data.

    Attributes
    ----------
    neighbors : int, optional
        Chart neighbourhood size, default ``max(20, 2 l^2)``.
    candidates : int, optional
        Neighbours examined when linking fragments, default ``3 * neighbors``.
    tangent_dim : int, optional
        Fixed manifold dimension; estimated from local PCA when omitted.
    max_tangent_dim : int, optional
        Cap on the estimated dimension.
    sv_ratio : float
        Keep principal directions with ``sigma_j / sigma_1 >= sv_ratio``.
    chart_tol : float
        Relative chart residual below which a neighbour counts as on-chart.
    clean_fraction : float
        Share of on-chart neighbours needed for a point to seed fragments.
    min_transitions : int
        Transitions between two fragments needed before their symbol slots
        are tied together.
    time_ordered : bool
        Rows are consecutive delay vectors of one series. Disable for point
        clouds without time structure.
    merge_residual, merge_angle, merge_gap : float
        Geometric merge thresholds: cross-chart residual, principal angle in
        radians, and distance between fragments in units of the median
        neighbourhood radius.
    min_cluster_fraction : float
        Clusters holding fewer points than this share are dissolved.
    ambiguity_margin : float
        A point is ambiguous when its two best residuals ``r1 <= r2`` satisfy
        ``r2 - r1 < ambiguity_margin * r2``.
    assign_tol : float
        Largest relative residual accepted for a label.
    grow_margin, grow_reach : float
        Ambiguity margin and reach used while clusters are grown from their
        fragments; a small reach makes growth advance in short steps.
    max_reach : float
        A chart may label points up to this many patch radii from its centre.
        Both reach limits are for curves; on a d-dimensional piece they are
        raised to the power ``1/d`` to follow the neighbour spacing.
    """

    neighbors: Optional[int] = None
    candidates: Optional[int] = None
    tangent_dim: Optional[int] = None
    max_tangent_dim: Optional[int] = None
    sv_ratio: float = 0.1
    chart_tol: float = 3e-3
    clean_fraction: float = 0.95
    min_transitions: int = 2
    time_ordered: bool = True
    merge_residual: float = 4e-2
    merge_angle: float = 0.2
    merge_gap: float = 30.0
    merge_probe: int = 15
    min_cluster_fraction: float = 0.01
    ambiguity_margin: float = 0.2
    assign_tol: float = 1e-2
    grow_margin: float = 0.2
    grow_reach: float = 0.25
    max_reach: float = 0.25
    max_merge_rounds: int = 8

    def for_delay(self, width: int) -> "ClusterParams":
        """Fill in the size defaults for vectors of length ``width``."""
        k = self.neighbors if self.neighbors is not None else max(20, 2 * width * width)
        c = self.candidates if self.candidates is not None else 3 * k
        return replace(self, neighbors=k, candidates=c)


@dataclass(frozen=True)
class ClusterModel:
    """Result of :func:`cluster`.

    ``assignments`` holds labels ``1..num_clusters`` and ``0`` for ambiguous
    vectors. ``residuals`` is each labelled point's relative residual against
    its own cluster (``nan`` when ambiguous).
    """

    num_clusters: int
    assignments: np.ndarray
    dimensions: Tuple[int, ...]
    separation: float
    tangent_dim: int
    coverage: float
    mean_residual: float
    sizes: Tuple[int, ...]
    residuals: np.ndarray = field(repr=False)
    params: ClusterParams = field(repr=False, default_factory=ClusterParams)
    notes: Tuple[str, ...] = ()

    @property
    def labelled(self) -> np.ndarray:
        return self.assignments != GAP


@dataclass(frozen=True)
class LabelSequence:
    """Cluster labels in time order; ``GAP`` (0) marks ambiguous positions."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64, copy=True)
        if lab.size and (lab.min() < 0 or lab.max() > self.k):
            raise ValueError("labels must lie in 0..k")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def gaps(self) -> np.ndarray:
        return np.flatnonzero(self.labels == GAP)

    def valid_pairs(self) -> np.ndarray:
        """Mask over consecutive pairs with neither side a gap."""
        return (self.labels[:-1] != GAP) & (self.labels[1:] != GAP)


# ---------------------------------------------------------------------------
# batched local charts


def _quad_features(t: np.ndarray) -> np.ndarray:
    """``[1, t_a, t_a t_b (a <= b)]`` along the last axis."""
    d = t.shape[-1]
    cols = [np.ones(t.shape[:-1])] + [t[..., a] for a in range(d)]
    cols += [t[..., a] * t[..., b] for a, b in combinations_with_replacement(range(d), 2)]
    return np.stack(cols, axis=-1)


def _n_features(d: int) -> int:
    return 1 + d + d * (d + 1) // 2


def _fit_charts(P: np.ndarray, d: int, W: Optional[np.ndarray] = None):
    """Fit one chart per row of offsets ``P`` (shape ``(n, K, L)``).

    Returns tangent bases ``T`` ``(n, d, L)``, normal bases ``N``
    ``(n, L - d, L)`` and quadratic coefficients ``C`` ``(n, p, L - d)``.
    """
    if W is None:
        Pc = P - P.mean(axis=1, keepdims=True)
    else:
        mu = (P * W[..., None]).sum(1) / np.maximum(W.sum(1), 1.0)[:, None]
        Pc = (P - mu[:, None]) * W[..., None]
    _, _, Vt = np.linalg.svd(Pc, full_matrices=False)
    L = P.shape[2]
    if Vt.shape[1] < L:  # fewer neighbours than coordinates
        raise ClusteringError("neighbourhood smaller than the ambient dimension")
    T, N = Vt[:, :d], Vt[:, d:]
    t = np.einsum("nkl,ndl->nkd", P, T)
    nn = np.einsum("nkl,ndl->nkd", P, N)
    F = _quad_features(t)
    if W is not None:
        F = F * W[..., None]
        nn = nn * W[..., None]
    C = np.linalg.pinv(F) @ nn
    return T, N, C


def _chart_residual(X: np.ndarray, T, N, C) -> np.ndarray:
    """Normal-space distance of offsets ``X`` ``(n, q, L)`` from the charts."""
    t = np.einsum("nkl,ndl->nkd", X, T)
    nn = np.einsum("nkl,ndl->nkd", X, N)
    return np.linalg.norm(nn - _quad_features(t) @ C, axis=-1)


def _chart_tangent(T, N, C, X):
    """Orthonormal tangent basis of each chart at the foot point of offsets ``X`` ``(n, L)``."""
    d = T.shape[1]
    t = np.einsum("nl,ndl->nd", X, T)
    # derivative of the quadratic features with respect to t_a
    J = np.zeros(t.shape + (_n_features(d),))
    for a in range(d):
        J[:, a, 1 + a] = 1.0
    col = 1 + d
    for a, b in combinations_with_replacement(range(d), 2):
        J[:, a, col] += t[:, b]
        J[:, b, col] += t[:, a]
        col += 1
    dq = J @ C  # (n, d, L - d)
    U = T + np.einsum("nak,nkl->nal", dq, N)
    Q, _ = np.linalg.qr(np.swapaxes(U, 1, 2))
    return np.swapaxes(Q, 1, 2)


def _pca_ranks(P: np.ndarray, ratio: float) -> np.ndarray:
    Pc = P - P.mean(axis=1, keepdims=True)
    s = np.linalg.svd(Pc, compute_uv=False)
    top = s[:, :1]
    ok = top[:, 0] > 0
    r = np.where(ok, (s >= ratio * np.where(top > 0, top, 1.0)).sum(1), 0)
    return r


def estimate_local_dimension(dvs, index: int, neighbors: int, sv_ratio: float = 0.1) -> int:
    """Rank of the local principal-component spectrum around one vector.

    Counts singular values of the centred ``neighbors``-nearest patch with
    ``sigma_j / sigma_1 >= sv_ratio``.
    """
    V = dvs.vectors if isinstance(dvs, DelayVectorSet) else np.asarray(dvs, dtype=float)
    width = V.shape[1]
    if neighbors < 2 * width:
        raise ValueError(f"neighbourhood size must be at least 2 * {width}")
    if neighbors > V.shape[0]:
        raise ValueError("neighbourhood larger than the data set")
    _, idx = cKDTree(V).query(V[index], neighbors)
    r = int(_pca_ranks(V[idx][None], sv_ratio)[0])
    if r == 0:
        raise ClusteringError("degenerate neighbourhood: all points coincide")
    return r


# ---------------------------------------------------------------------------
# stage 1 and 2: robust charts and pure fragments


@dataclass
class _Prep:
    V: np.ndarray
    d: int
    K: int
    K2: int
    dist: np.ndarray
    idx: np.ndarray
    scale: float
    clean: np.ndarray
    fragments: np.ndarray


def _robust_charts(V, idx, dist, d, K, tau, chunk=_CHUNK):
    """Per-point robust charts; returns clean flags and residual matrix over candidates."""
    n, K2 = idx.shape
    m0 = min(K, _n_features(d) + 3)
    clean_frac = np.empty(n)
    ok = np.empty((n, K2), dtype=bool)
    for s in range(0, n, chunk):
        sl = slice(s, min(n, s + chunk))
        I, Dd = idx[sl], dist[sl]
        floor = 0.05 * Dd[:, K - 1 : K]
        P = V[I] - V[I[:, :1]]
        T, N, C = _fit_charts(P[:, :m0], d)
        W = None
        for _ in range(2):
            r = _chart_residual(P[:, :K], T, N, C) / np.maximum(Dd[:, :K], floor + 1e-300)
            inl = r <= tau
            inl[:, 0] = True
            W = inl.astype(float)
            T, N, C = _fit_charts(P[:, :K], d, W)
        R = _chart_residual(P, T, N, C) / np.maximum(Dd, floor + 1e-300)
        clean_frac[sl] = (R[:, 1:K] <= tau).mean(1)
        ok[sl] = R <= tau
    return clean_frac, ok


def _prepare(V: np.ndarray, params: ClusterParams) -> _Prep:
    n, width = V.shape
    K, K2 = params.neighbors, min(params.candidates, n)
    if n < 10 * K:
        raise ClusteringError(f"need at least {10 * K} vectors for neighbourhoods of {K}, got {n}")
    tree = cKDTree(V)
    dist, idx = tree.query(V, K2)
    scale = float(np.median(dist[:, K - 1]))
    if not np.isfinite(scale) or scale <= 0:
        raise ClusteringError("degenerate neighbourhoods: most points coincide")
    if params.tangent_dim is not None:
        d = int(params.tangent_dim)
    else:
        ranks = np.concatenate(
            [_pca_ranks(V[idx[s : s + _CHUNK, :K]], params.sv_ratio) for s in range(0, n, _CHUNK)]
        )
        d = int(np.median(ranks[ranks > 0])) if np.any(ranks > 0) else 1
        if params.max_tangent_dim is not None:
            d = min(d, params.max_tangent_dim)
    d = max(1, min(d, width))
    clean_frac, ok = _robust_charts(V, idx, dist, d, K, params.chart_tol)
    clean = clean_frac >= params.clean_fraction
    rows = np.repeat(np.arange(n), K2)
    cols = idx.ravel()
    keep = ok.ravel() & clean[rows] & clean[cols] & (rows != cols)
    A = coo_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A = A.minimum(A.T)
    _, comp = connected_components(A, directed=False)
    comp = np.where(clean, comp, -1)
    cnt = np.bincount(comp[comp >= 0], minlength=1) if np.any(comp >= 0) else np.zeros(1, int)
    small = np.zeros(cnt.size, dtype=bool)
    small[cnt < K] = True
    frag = np.where((comp >= 0) & ~small[np.maximum(comp, 0)], comp, -1)
    # renumber fragments in order of first appearance
    valid = frag >= 0
    if valid.any():
        uniq, first = np.unique(frag[valid], return_index=True)
        remap = np.full(int(uniq.max()) + 1, -1)
        remap[uniq[np.argsort(first)]] = np.arange(uniq.size)
        frag = np.where(valid, remap[np.maximum(frag, 0)], -1)
    return _Prep(V, d, K, K2, dist, idx, scale, clean, frag)


# ---------------------------------------------------------------------------
# stage 3: merging


class _UF:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        p = self.p
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        if b < a:
            a, b = b, a
        self.p[b] = a
        return True


def _slot_merge(groups: np.ndarray, G: int, m: int, cmin: int, uf: _UF) -> bool:
    """Merge groups whose symbol slots are all tied together by transitions."""
    if m < 2:
        return False
    a, b = groups[:-1], groups[1:]
    v = (a >= 0) & (b >= 0)
    pairs = Counter(zip(a[v].tolist(), b[v].tolist()))
    slots = _UF(G * m)
    for (f, g), c in pairs.items():
        if c >= cmin:
            for j in range(m - 1):
                slots.union(f * m + j + 1, g * m + j)
    merged = False
    while True:
        sig: Dict[tuple, List[int]] = {}
        for i in range(G):
            sig.setdefault(tuple(slots.find(i * m + j) for j in range(m)), []).append(i)
        changed = False
        for members in sig.values():
            for i in members[1:]:
                merged |= uf.union(members[0], i)
                for j in range(m):
                    changed |= slots.union(members[0] * m + j, i * m + j)
        if not changed:
            return merged


def _cross_score(V, A, B, tree_A, tree_B, d, K, probe, gap_max, kA=None):
    """Residual, angle and gap of extending charts of group ``A`` onto ``B``."""
    dd, _ = tree_A.query(V[B])
    order = np.argsort(dd, kind="stable")[:probe]
    gap = float(dd[order[0]])
    if gap > gap_max:
        return np.inf, np.inf, gap
    bs = B[order]
    kA = min(min(K, 2 * _n_features(d) + 2) if kA is None else kA, A.size)
    kB = min(K, B.size)
    _, nA = tree_A.query(V[bs], kA)
    cen = A[nA[:, 0]]
    P = V[A[nA]] - V[cen][:, None, :]
    T, N, C = _fit_charts(P, d)
    X = (V[bs] - V[cen])[:, None, :]
    rho = np.linalg.norm(P[:, -1], axis=1)
    r = _chart_residual(X, T, N, C)[:, 0] / np.maximum(np.linalg.norm(X[:, 0], axis=1), rho)
    TA = _chart_tangent(T, N, C, X[:, 0])
    _, nB = tree_B.query(V[bs], kB)
    TB, _, _ = _fit_charts(V[B[nB]] - V[bs][:, None, :], d)
    sv = np.linalg.svd(np.einsum("ndl,nel->nde", TA, TB), compute_uv=False)
    ang = np.arccos(np.clip(sv.min(axis=1), -1.0, 1.0))
    return float(np.median(r)), float(np.median(ang)), gap


def _geometric_merge(prep: _Prep, groups: np.ndarray, G: int, params: ClusterParams, factor: float, uf: _UF) -> bool:
    V, d, K = prep.V, prep.d, prep.K
    members = [np.flatnonzero(groups == g) for g in range(G)]
    live = [g for g in range(G) if members[g].size >= K]
    trees = {g: cKDTree(V[members[g]]) for g in live}
    gap_max = params.merge_gap * prep.scale
    res_tol = params.merge_residual * factor
    ang_tol = params.merge_angle * factor
    merged = False
    for i, a in enumerate(live):
        for b in live[i + 1 :]:
            if uf.find(a) == uf.find(b):
                continue
            r1, a1, g1 = _cross_score(V, members[a], members[b], trees[a], trees[b], d, K, params.merge_probe, gap_max)
            if not (r1 <= res_tol and a1 <= ang_tol):
                continue
            r2, a2, _ = _cross_score(V, members[b], members[a], trees[b], trees[a], d, K, params.merge_probe, gap_max)
            if r2 <= res_tol and a2 <= ang_tol:
                merged |= uf.union(a, b)
    return merged


def _merge(prep: _Prep, m: int, params: ClusterParams, factor: float) -> np.ndarray:
    """Group labels per point after slot and geometric merging (``-1`` = none)."""
    frag = prep.fragments
    F = int(frag.max()) + 1 if np.any(frag >= 0) else 0
    uf = _UF(F)
    groups = frag.copy()
    for _ in range(params.max_merge_rounds):
        changed = False
        if params.time_ordered:
            changed |= _slot_merge(groups, F, m, params.min_transitions, uf)
            groups = np.array([uf.find(f) if f >= 0 else -1 for f in frag])
        changed |= _geometric_merge(prep, groups, F, params, factor, uf)
        groups = np.array([uf.find(f) if f >= 0 else -1 for f in frag])
        if not changed:
            break
    return groups


# ---------------------------------------------------------------------------
# stage 4: assignment


def _cluster_residuals(V, members: List[np.ndarray], d, K, query=None, chunk=_CHUNK):
    """Relative residual of query points against a local chart of every cluster.

    Returns the residual matrix and the distance from each query point to the
    chart centre in units of the chart's patch radius (large values mean the
    chart is being extrapolated).
    """
    q = np.arange(V.shape[0]) if query is None else np.asarray(query)
    R = np.full((q.size, len(members)), np.inf)
    reach = np.full((q.size, len(members)), np.inf)
    for c, mem in enumerate(members):
        k = min(K, mem.size - 1)
        if k < _n_features(d):
            continue
        dd, jj = cKDTree(V[mem]).query(V[q], k + 1)
        is_self = mem[jj[:, 0]] == q
        sel = np.where(is_self[:, None], jj[:, 1:], jj[:, :-1])
        dsel = np.where(is_self[:, None], dd[:, 1:], dd[:, :-1])
        for s in range(0, q.size, chunk):
            sl = slice(s, min(q.size, s + chunk))
            patch = mem[sel[sl]]
            cen = patch[:, 0]
            P = V[patch] - V[cen][:, None, :]
            T, N, C = _fit_charts(P, d)
            X = (V[q[sl]] - V[cen])[:, None, :]
            rho = np.maximum(dsel[sl, -1], 1e-300)
            den = np.maximum(dsel[sl, 0], 0.05 * rho)
            R[sl, c] = _chart_residual(X, T, N, C)[:, 0] / den
            reach[sl, c] = dsel[sl, 0] / rho
    return R, reach


def _assign(R: np.ndarray, reach: np.ndarray, max_reach: float, margin: float, tol: float):
    """Best cluster among charts that cover the point, checked against all others."""
    n, C = R.shape
    rows = np.arange(n)
    Rn = np.where(reach <= max_reach, R, np.inf)
    best = np.argmin(Rn, axis=1)
    r1 = Rn[rows, best]
    if C == 1:
        r2 = np.full(n, np.inf)
    else:
        other = R.copy()
        other[rows, best] = np.inf
        r2 = other.min(axis=1)
    with np.errstate(invalid="ignore"):
        ok = (r1 <= tol) & ((r2 - r1) >= margin * r2)
    labels = np.where(ok, best + 1, GAP)
    return labels, r1, r2


def _grow(prep: _Prep, members: List[np.ndarray], params: ClusterParams, max_rounds: int = 100) -> np.ndarray:
    """Extend clusters outward one frontier at a time."""
    V, n = prep.V, prep.V.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    for c, mem in enumerate(members):
        labels[mem] = c + 1
    for _ in range(max_rounds):
        q = np.flatnonzero(labels == GAP)
        if q.size == 0:
            break
        R, reach = _cluster_residuals(V, members, prep.d, prep.K, q)
        lab, _, _ = _assign(R, reach, params.grow_reach ** (1 / prep.d), params.grow_margin, params.assign_tol)
        new = lab != GAP
        if not new.any():
            break
        labels[q[new]] = lab[new]
        members = [np.flatnonzero(labels == c + 1) for c in range(len(members))]
    return labels


def _finalize(prep: _Prep, groups: np.ndarray, params: ClusterParams, width: int):
    V, n = prep.V, prep.V.shape[0]
    min_size = max(prep.K, int(np.ceil(params.min_cluster_fraction * n)))
    ids = [g for g, c in sorted(Counter(groups[groups >= 0].tolist()).items()) if c >= min_size]
    members = [np.flatnonzero(groups == g) for g in ids]
    if not members:
        raise ClusteringError("no cluster survived; the data may not lie on low-dimensional pieces")
    for _ in range(3):
        grown = _grow(prep, members, params)
        sizes = np.bincount(grown, minlength=len(members) + 1)[1:]
        keep = sizes >= min_size
        if keep.all() or not keep.any():
            break
        members = [members[c] for c in range(len(members)) if keep[c]]
    members = [np.flatnonzero(grown == c + 1) for c in range(len(members))]
    # final labels from fixed residuals, so the margin acts monotonically
    R, reach = _cluster_residuals(V, members, prep.d, prep.K)
    labels, r1, r2 = _assign(R, reach, params.max_reach ** (1 / prep.d), params.ambiguity_margin, params.assign_tol)
    # order clusters by first labelled occurrence in time
    present = [c for c in range(len(members)) if np.any(labels == c + 1)]
    first = {c: int(np.argmax(labels == c + 1)) for c in present}
    ordered = sorted(present, key=first.get)
    relabel = np.zeros(len(members) + 1, dtype=np.int64)
    for new, c in enumerate(ordered, start=1):
        relabel[c + 1] = new
    labels = relabel[labels]
    C = len(ordered)
    lab_mask = labels != GAP
    if C > 1:
        if lab_mask.any():
            a, b = r1[lab_mask], r2[lab_mask]
            fin = np.isfinite(b)
            sep = np.ones(a.size)
            sep[fin] = (b[fin] - a[fin]) / np.maximum(b[fin], 1e-300)
            separation = float(np.mean(sep))
        else:
            separation = 0.0
    else:
        separation = 1.0
    resid = np.where(lab_mask, r1, np.nan)
    dims = []
    for c in range(1, C + 1):
        mem = np.flatnonzero(labels == c)
        k = min(prep.K, mem.size)
        probe = mem[:: max(1, mem.size // 400)]
        _, nb = cKDTree(V[mem]).query(V[probe], k)
        ranks = _pca_ranks(V[mem[nb]], params.sv_ratio)
        dims.append(int(np.clip(np.median(ranks), 1, width)))
    sizes = tuple(int(np.sum(labels == c)) for c in range(1, C + 1))
    return labels, C, tuple(dims), separation, resid, sizes


def cluster(dvs: DelayVectorSet, expected_k: Optional[int] = None, params: Optional[ClusterParams] = None) -> ClusterModel:
    """Split delay vectors into the smooth pieces they lie on.

    Parameters
    ----------
    dvs : DelayVectorSet
        Vectors to cluster, in time order unless ``params.time_ordered`` is off.
    expected_k : int, optional
        Known number of pieces. When the default thresholds give a different
        count, the geometric merge thresholds are scaled up or down by
        bisection in log-space until the counts agree; if they never do, the
        closest result is returned and a note records the mismatch.
    params : ClusterParams, optional

    Raises
    ------
    ClusteringError
        Too few vectors for the neighbourhood size, or coincident points.
    """
    params = (params or ClusterParams()).for_delay(dvs.vectors.shape[1])
    V = np.asarray(dvs.vectors, dtype=float)
    width = V.shape[1]
    m = max(1, dvs.l - 1) if dvs.channels == 1 else 1
    prep = _prepare(V, params)
    log.info("tangent dim %d, %d fragments", prep.d, int(prep.fragments.max()) + 1)
    notes = []

    def attempt(factor):
        groups = _merge(prep, m, params, factor)
        return _finalize(prep, groups, params, width)

    result = attempt(1.0)
    if expected_k is not None and result[1] != expected_k:
        lo, hi = np.log(0.05), np.log(20.0)
        best = result
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            res = attempt(float(np.exp(mid)))
            if abs(res[1] - expected_k) < abs(best[1] - expected_k):
                best = res
            if res[1] == expected_k:
                break
            if res[1] > expected_k:
                lo = mid
            else:
                hi = mid
        result = best
        if result[1] != expected_k:
            notes.append(f"expected {expected_k} clusters, found {result[1]}")
            warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    labels, C, dims, separation, resid, sizes = result
    coverage = float(np.mean(labels != GAP))
    mean_res = float(np.nanmean(resid)) if np.any(labels != GAP) else float("inf")
    resid.setflags(write=False)
    labels.setflags(write=False)
    return ClusterModel(
        num_clusters=C,
        assignments=labels,
        dimensions=dims,
        separation=separation,
        tangent_dim=prep.d,
        coverage=coverage,
        mean_residual=mean_res,
        sizes=sizes,
        residuals=resid,
        params=params,
        notes=tuple(notes),
    )


def label_sequence(cm: ClusterModel, dvs: Optional[DelayVectorSet] = None) -> LabelSequence:
    """Time-ordered labels with ``GAP`` at ambiguous vectors."""
    if dvs is not None and len(dvs) != cm.assignments.size:
        raise ValueError("cluster model was fitted on a different number of vectors")
    return LabelSequence(cm.assignments, cm.num_clusters)


def write_cluster_report(cm: ClusterModel, path) -> None:
    """Summary of a clustering as an INI-style text file."""
    cfg = configparser.ConfigParser()
    cfg["summary"] = {
        "num_clusters": str(cm.num_clusters),
        "tangent_dim": str(cm.tangent_dim),
        "coverage": f"{cm.coverage:.6f}",
        "ambiguous": str(int(np.sum(cm.assignments == GAP))),
        "separation": f"{cm.separation:.6f}",
        "mean_residual": f"{cm.mean_residual:.6e}",
    }
    for i, (size, dim) in enumerate(zip(cm.sizes, cm.dimensions), start=1):
        cfg[f"cluster {i}"] = {"size": str(size), "dimension": str(dim)}
    if cm.notes:
        cfg["notes"] = {f"note{i + 1}": s for i, s in enumerate(cm.notes)}
    buf = io.StringIO()
    cfg.write(buf)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
