"""Finite-state Markov chains over the alphabet {1, ..., k}.

Symbols are 1-based everywhere in the public API. Random sampling uses
NumPy's ``PCG64`` bit generator (``numpy.random.default_rng``) seeded with the
caller's integer seed.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

__all__ = [
    "TransitionMatrix",
    "SymbolSequence",
    "sample_chain",
    "is_irreducible",
    "estimate_transition_matrix",
    "read_transition_matrix",
    "write_transition_matrix",
    "read_symbol_sequence",
    "write_symbol_sequence",
]

ROW_SUM_ATOL = 1e-12
ROW_SUM_REJECT = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``k x k`` matrix.

    Construction rejects matrices whose rows deviate from 1 by more than
    ``1e-9``; accepted rows are renormalised so they sum to 1 within ``1e-12``.
    """

    entries: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.entries, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError(f"transition matrix must be square and non-empty, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("transition matrix has non-finite entries")
        if np.any(P < 0) or np.any(P > 1 + ROW_SUM_REJECT):
            raise ValueError("transition matrix entries must lie in [0, 1]")
        dev = np.abs(P.sum(axis=1) - 1.0)
        if np.any(dev > ROW_SUM_REJECT):
            row = int(np.argmax(dev))
            raise ValueError(f"row {row + 1} sums to {P[row].sum():.12g}, not 1")
        P = np.clip(P, 0.0, 1.0)
        P = P / P.sum(axis=1, keepdims=True)
        object.__setattr__(self, "entries", _frozen(P))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ab):
        """1-based indexing: ``P[a, b]``."""
        a, b = ab
        return float(self.entries[a - 1, b - 1])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @classmethod
    def uniform(cls, k: int) -> "TransitionMatrix":
        return cls(np.full((k, k), 1.0 / k))


@dataclass(frozen=True)
class SymbolSequence:
    """Realised driving sequence over {1..k}, stored as a read-only int array.

    ``warnings`` carries notes attached by the producer (for instance rows
    that had to be filled in during estimation); it is not part of equality.
    """

    symbols: np.ndarray
    k: int
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        s = np.asarray(self.symbols)
        if s.ndim != 1:
            raise ValueError("symbol sequence must be one-dimensional")
        if s.size and not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise ValueError("symbols must be integers")
        s = s.astype(np.int64)
        if self.k < 1:
            raise ValueError("alphabet size must be positive")
        if s.size and (s.min() < 1 or s.max() > self.k):
            bad = s[(s < 1) | (s > self.k)][0]
            raise ValueError(f"symbol {bad} outside alphabet 1..{self.k}")
        object.__setattr__(self, "symbols", _frozen(s))

    def __len__(self) -> int:
        return self.symbols.size

    def __iter__(self) -> Iterator[int]:
        return (int(v) for v in self.symbols)

    def __getitem__(self, i):
        out = self.symbols[i]
        if isinstance(i, slice):
            return SymbolSequence(out, self.k)
        return int(out)

    def __eq__(self, other):
        if not isinstance(other, SymbolSequence):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.symbols, other.symbols)

    def __hash__(self):
        return hash((self.k, self.symbols.tobytes()))

    def tolist(self) -> list:
        return self.symbols.tolist()


def _as_matrix(P) -> TransitionMatrix:
    return P if isinstance(P, TransitionMatrix) else TransitionMatrix(np.asarray(P, dtype=float))


def sample_chain(
    P: Union[TransitionMatrix, np.ndarray, Sequence[Sequence[float]]],
    n: int,
    seed: Optional[Union[int, np.random.Generator]] = None,
    initial: Optional[int] = None,
) -> SymbolSequence:
    """Draw a length-``n`` path of the chain with transition matrix ``P``.

    Parameters
    ----------
    P : TransitionMatrix or array_like
        Row-stochastic matrix; ``P[a-1, b-1]`` is the probability of ``a -> b``.
    n : int
        Path length, at least 1.
    seed : int or numpy.random.Generator, optional
        Seed for a PCG64 generator. Identical arguments give identical paths.
    initial : int, optional
        First symbol (1-based). Drawn uniformly over the states when omitted.
    """
    P = _as_matrix(P)
    n = int(n)
    if n < 1:
        raise ValueError("chain length must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = P.k
    if initial is None:
        state = int(rng.integers(k))
    else:
        if not 1 <= initial <= k:
            raise ValueError(f"initial state {initial} outside 1..{k}")
        state = int(initial) - 1
    cdf = np.cumsum(P.entries, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n - 1)
    out = np.empty(n, dtype=np.int64)
    out[0] = state
    for t in range(n - 1):
        row = cdf[state]
        state = int(np.searchsorted(row, u[t], side="right"))
        # guard against landing on a zero-probability trailing column
        while P.entries[out[t], state] == 0.0:
            state -= 1
        out[t + 1] = state
    return SymbolSequence(out + 1, k)


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_irreducible(P) -> bool:
    """True iff the digraph of positive entries is strongly connected."""
    A = np.asarray(_as_matrix(P).entries) > 0
    return bool(_reachable(A, 0).all() and _reachable(A.T, 0).all())


def estimate_transition_matrix(seq, k: Optional[int] = None, *, valid_pairs: Optional[np.ndarray] = None) -> TransitionMatrix:
    """Empirical transition matrix ``count(a->b) / count(a as non-final symbol)``.

    Rows of states that never occur as the source of a transition are set to
    the uniform distribution and reported through a ``UserWarning``.

    Parameters
    ----------
    seq : SymbolSequence or sequence of int
        Observed path, 1-based symbols.
    k : int, optional
        Alphabet size; defaults to ``seq.k``.
    valid_pairs : bool array of length ``len(seq) - 1``, optional
        Mask of consecutive pairs to count; pairs spanning a gap are excluded.

    Raises
    ------
    ValueError
        If the sequence is shorter than 2 or some state in 1..k never appears.
    """
    if isinstance(seq, SymbolSequence):
        s = seq.symbols
        k = seq.k if k is None else k
    else:
        s = np.asarray(list(seq), dtype=np.int64)
        if k is None:
            raise ValueError("alphabet size k is required for plain sequences")
    if s.size < 2:
        raise ValueError("need at least two symbols to estimate transitions")
    if s.min() < 1 or s.max() > k:
        raise ValueError(f"symbols outside alphabet 1..{k}")
    missing = sorted(set(range(1, k + 1)) - set(np.unique(s).tolist()))
    if missing:
        raise ValueError(f"insufficient data: states {missing} never observed")
    src, dst = s[:-1] - 1, s[1:] - 1
    if valid_pairs is not None:
        valid_pairs = np.asarray(valid_pairs, dtype=bool)
        src, dst = src[valid_pairs], dst[valid_pairs]
    counts = np.zeros((k, k))
    np.add.at(counts, (src, dst), 1.0)
    totals = counts.sum(axis=1)
    empty = np.flatnonzero(totals == 0)
    if empty.size:
        warnings.warn(
            f"states {(empty + 1).tolist()} never left; their rows were set uniform",
            UserWarning,
            stacklevel=2,
        )
        counts[empty] = 1.0
        totals[empty] = k
    return TransitionMatrix(counts / totals[:, None])


# ---------------------------------------------------------------------------
# plain-text formats


def write_transition_matrix(P, path: Union[str, Path]) -> None:
    """First line ``k``, then ``k`` whitespace-separated rows."""
    P = _as_matrix(P)
    lines = [str(P.k)] + [" ".join(repr(float(v)) for v in row) for row in P.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_transition_matrix(path: Union[str, Path]) -> TransitionMatrix:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty transition-matrix file")
    k = int(rows[0][0])
    body = rows[1:]
    if len(body) != k or any(len(r) != k for r in body):
        raise ValueError(f"{path}: expected {k} rows of {k} entries")
    return TransitionMatrix(np.array(body, dtype=float))


def write_symbol_sequence(seq: Union[SymbolSequence, Iterable[int]], path: Union[str, Path]) -> None:
    """One integer per line."""
    Path(path).write_text("".join(f"{int(v)}\n" for v in seq))


def read_symbol_sequence(path: Union[str, Path], k: Optional[int] = None) -> SymbolSequence:
    vals = np.array([int(ln) for ln in Path(path).read_text().split()], dtype=np.int64)
    return SymbolSequence(vals, int(vals.max()) if k is None else k)
