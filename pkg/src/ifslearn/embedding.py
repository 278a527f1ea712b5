"""Delay-coordinate vectors built from an observation series."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .systems import ObservationSeries

__all__ = [
    "DelayVectorSet",
    "DelaySearchResult",
    "embed",
    "unembed_series",
    "search_delay",
    "write_delay_csv",
    "read_delay_csv",
    "UNSET_LABEL",
]

log = logging.getLogger(__name__)

UNSET_LABEL = -1


@dataclass(frozen=True)
class DelayVectorSet:
    """Vectors ``(z_n, ..., z_{n+l-1})`` with optional cluster labels.

    For a multi-channel series each coordinate block of ``channels`` values is
    one time step, so a vector has ``l * channels`` entries.
    """

    l: int
    vectors: np.ndarray
    labels: Optional[np.ndarray] = None
    channels: int = 1

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[1] != self.l * self.channels:
            raise ValueError(f"vectors must have shape (N, {self.l * self.channels})")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64, copy=True)
            if lab.shape != (v.shape[0],):
                raise ValueError("one label per vector required")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def with_labels(self, labels) -> "DelayVectorSet":
        return DelayVectorSet(self.l, self.vectors, labels, self.channels)


def embed(obs, l: int) -> DelayVectorSet:
    """Stride-1 delay vectors of length ``l``.

    Examples
    --------
    >>> embed(ObservationSeries([1.0, 2.0, 3.0, 4.0]), 2).vectors.tolist()
    [[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]]
    """
    if l < 2:
        raise ValueError("delay length l must be at least 2")
    vals = obs.values if isinstance(obs, ObservationSeries) else np.asarray(obs, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    n, s = vals.shape
    if n < l:
        raise ValueError(f"series of length {n} is shorter than the delay length {l}")
    windows = np.lib.stride_tricks.sliding_window_view(vals, l, axis=0)  # (n-l+1, s, l)
    vecs = np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(n - l + 1, l * s))
    return DelayVectorSet(l, vecs, None, s)


def unembed_series(dvs: DelayVectorSet) -> ObservationSeries:
    """Recover the observation series from the first vector and the last blocks."""
    s = dvs.channels
    first = dvs.vectors[0].reshape(dvs.l, s)
    tail = dvs.vectors[1:, -s:]
    vals = np.vstack([first, tail])
    return ObservationSeries(vals[:, 0] if s == 1 else vals)


# ---------------------------------------------------------------------------
# delay search


@dataclass(frozen=True)
class DelaySearchResult:
    """Outcome of :func:`search_delay`; ``l`` is ``None`` when nothing qualified."""

    l: Optional[int]
    scores: dict

    @property
    def found(self) -> bool:
        return self.l is not None


def search_delay(
    obs: ObservationSeries,
    l_max: int = 6,
    *,
    l_min: int = 2,
    min_separation: float = 0.5,
    min_coverage: float = 0.6,
    max_residual: float = 1e-2,
    cluster_params=None,
    max_points: Optional[int] = None,
) -> DelaySearchResult:
    """Smallest delay giving a clean multi-manifold decomposition.

    A candidate ``l`` qualifies when the clustering of its delay vectors has
    an estimated tangent dimension below ``l`` (so the vectors really lie on
    lower-dimensional pieces), labels at least ``min_coverage`` of the points,
    reaches a separation score of ``min_separation`` and keeps the mean
    relative chart residual under ``max_residual``. This is a heuristic: no
    principled test for unions of embeddings is known.
    """
    from .clustering import ClusterParams, ClusteringError, cluster

    if l_max < 2:
        raise ValueError("l_max must be at least 2")
    params = cluster_params or ClusterParams()
    scores = {}
    for l in range(max(2, l_min), l_max + 1):
        dvs = embed(obs, l)
        if max_points is not None and len(dvs) > max_points:
            dvs = DelayVectorSet(l, dvs.vectors[:max_points], None, dvs.channels)
        p = params.for_delay(l * dvs.channels)
        try:
            cm = cluster(dvs, params=p)
        except ClusteringError as err:
            log.info("l=%d: clustering failed (%s)", l, err)
            scores[l] = None
            continue
        ok = (
            cm.tangent_dim < l * dvs.channels
            and cm.coverage >= min_coverage
            and cm.separation >= min_separation
            and cm.mean_residual <= max_residual
        )
        scores[l] = dict(
            clusters=cm.num_clusters,
            tangent_dim=cm.tangent_dim,
            coverage=cm.coverage,
            separation=cm.separation,
            residual=cm.mean_residual,
            accepted=ok,
        )
        log.info("l=%d: %s", l, scores[l])
        if ok:
            return DelaySearchResult(l, scores)
    return DelaySearchResult(None, scores)


# ---------------------------------------------------------------------------
# CSV


def write_delay_csv(dvs: DelayVectorSet, path) -> None:
    """Columns ``n, v_1..v_L, label`` with ``label = -1`` when unset."""
    width = dvs.vectors.shape[1]
    labels = dvs.labels if dvs.labels is not None else np.full(len(dvs), UNSET_LABEL)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + [f"v_{j + 1}" for j in range(width)] + ["label"])
        for n, (row, lab) in enumerate(zip(dvs.vectors, labels)):
            w.writerow([str(n)] + [repr(float(v)) for v in row] + [str(int(lab))])


def read_delay_csv(path, channels: int = 1) -> DelayVectorSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = rows[0]
    vcols = [i for i, h in enumerate(header) if h.startswith("v_")]
    if not vcols or "label" not in header:
        raise ValueError(f"{path}: expected columns n, v_1.., label")
    lc = header.index("label")
    try:
        vecs = np.array([[float(r[i]) for i in vcols] for r in rows[1:]])
        labels = np.array([int(r[lc]) for r in rows[1:]], dtype=np.int64)
    except (ValueError, IndexError) as err:
        raise ValueError(f"{path}: malformed row ({err})") from None
    l = len(vcols) // channels
    has = np.any(labels != UNSET_LABEL)
    return DelayVectorSet(l, vecs, labels if has else None, channels)
