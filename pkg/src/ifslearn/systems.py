"""Ground-truth iterated function systems and scalar observables.

Three built-in generator families are provided:

``logistic3``
    ``f_i(x) = r_i x (1 - x)`` with ``r = (3, 3.5, 4)`` on ``[0, 1]``.
``henon``
    ``f_1(x, y) = (y + 1 - 1.2 x^2, 0.3 x)`` and
    ``f_2(x, y) = (y + 1 - 1.2 (x - 0.2)^2, -0.2 x)``.
``sierpinski``
    The Moebius maps ``f, R f, R^2 f`` on the closed unit disk with
    ``f(z) = ((sqrt 3 - 1) z + 1) / (-z + sqrt 3 + 1)`` and ``R`` the rotation
    by ``2 pi / 3``. States are stored as ``(Re z, Im z)`` so the rest of the
    package stays real-valued.

User-defined polynomial systems are read from a small text format, see
:func:`parse_polynomial_system`.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .markov import SymbolSequence

__all__ = [
    "Domain",
    "GeneratorSet",
    "Trajectory",
    "ObservationSeries",
    "DomainError",
    "logistic_family",
    "henon_ifs",
    "sierpinski_ifs",
    "builtin_system",
    "BUILTIN_SYSTEMS",
    "parse_polynomial_system",
    "evaluate_generator",
    "simulate",
    "observe",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_observation_csv",
    "read_observation_csv",
]

DOMAIN_TOL = 1e-9


class DomainError(ValueError):
    """A state left the declared domain of a generator set."""

    def __init__(self, message, coordinate=None, step=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.step = step


@dataclass(frozen=True)
class Domain:
    """Compact domain ``M``: an axis-aligned box or the closed unit disk."""

    kind: str  # "box", "disk" or "any"
    bounds: Tuple[Tuple[float, float], ...] = ()

    def check(self, x: np.ndarray, tol: float = DOMAIN_TOL) -> None:
        if self.kind == "box":
            for j, (lo, hi) in enumerate(self.bounds):
                v = x[j]
                if not (lo - tol <= v <= hi + tol):
                    raise DomainError(
                        f"coordinate x_{j + 1} = {v!r} outside [{lo}, {hi}]", coordinate=j + 1
                    )
        elif self.kind == "disk":
            r = math.hypot(x[0], x[1])
            if not r <= 1.0 + tol:
                raise DomainError(f"|z| = {r!r} exceeds 1 (point {tuple(x)})", coordinate=1)
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise DomainError(f"coordinate x_{bad + 1} is not finite", coordinate=bad + 1)

    def describe(self) -> str:
        if self.kind == "box":
            return "box " + " x ".join(f"[{lo}, {hi}]" for lo, hi in self.bounds)
        if self.kind == "disk":
            return "closed unit disk"
        return "R^n"


@dataclass(frozen=True)
class GeneratorSet:
    """``k`` maps ``R^dim -> R^dim`` with a shared domain."""

    name: str
    dim: int
    maps: Tuple[Callable[[np.ndarray], np.ndarray], ...]
    domain: Domain
    observables: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.maps) < 1 or self.dim < 1:
            raise ValueError("a generator set needs k >= 1 maps and dim >= 1")

    @property
    def k(self) -> int:
        return len(self.maps)


# ---------------------------------------------------------------------------
# built-in families


def logistic_family(rates: Sequence[float] = (3.0, 3.5, 4.0)) -> GeneratorSet:
    def make(r):
        def f(x):
            return np.array([r * x[0] * (1.0 - x[0])])

        return f

    return GeneratorSet(
        "logistic3",
        1,
        tuple(make(float(r)) for r in rates),
        Domain("box", ((0.0, 1.0),)),
        observables=("identity", "x1"),
    )


def henon_ifs(a: float = 1.2, b1: float = 0.3, b2: float = -0.2, shift: float = 0.2) -> GeneratorSet:
    def f1(p):
        x, y = p[0], p[1]
        return np.array([y + 1.0 - a * x * x, b1 * x])

    def f2(p):
        x, y = p[0], p[1]
        u = x - shift
        return np.array([y + 1.0 - a * u * u, b2 * x])

    return GeneratorSet(
        "henon", 2, (f1, f2), Domain("box", ((-2.0, 2.0), (-2.0, 2.0))), observables=("x1", "x2", "identity")
    )


SQRT3 = math.sqrt(3.0)


def _mobius_rot(j: int):
    # f(z) = ((sqrt3 - 1) z + 1) / (-z + sqrt3 + 1), then rotate by 2 pi j / 3
    c, s = math.cos(2.0 * math.pi * j / 3.0), math.sin(2.0 * math.pi * j / 3.0)
    if j == 0:
        c, s = 1.0, 0.0

    def g(p):
        x, y = p[0], p[1]
        nr = (SQRT3 - 1.0) * x + 1.0
        ni = (SQRT3 - 1.0) * y
        dr = SQRT3 + 1.0 - x
        di = -y
        den = dr * dr + di * di
        wr = (nr * dr + ni * di) / den
        wi = (ni * dr - nr * di) / den
        return np.array([c * wr - s * wi, s * wr + c * wi])

    return g


def sierpinski_ifs() -> GeneratorSet:
    return GeneratorSet(
        "sierpinski",
        2,
        tuple(_mobius_rot(j) for j in range(3)),
        Domain("disk"),
        observables=("im", "re", "identity"),
    )


BUILTIN_SYSTEMS = {
    "logistic3": logistic_family,
    "henon": henon_ifs,
    "sierpinski": sierpinski_ifs,
}


def builtin_system(name: str) -> GeneratorSet:
    try:
        return BUILTIN_SYSTEMS[name]()
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(BUILTIN_SYSTEMS)}") from None


# ---------------------------------------------------------------------------
# polynomial systems from text

_TERM = re.compile(r"([+-]?)\s*([^+-]+)")


def _parse_polynomial(expr: str, dim: int) -> List[Tuple[float, Tuple[int, ...]]]:
    expr = expr.replace(" ", "")
    expr = re.sub(r"(?<=[eE])([+-])", lambda m: {"+": "#P", "-": "#M"}[m.group(1)], expr)
    terms = []
    for sign, body in _TERM.findall(expr):
        body = body.replace("#P", "+").replace("#M", "-")
        coef = -1.0 if sign == "-" else 1.0
        powers = [0] * dim
        for factor in body.split("*"):
            if not factor:
                raise ValueError(f"malformed term {body!r}")
            m = re.fullmatch(r"x(\d+)(?:\^(\d+))?", factor)
            if m:
                j = int(m.group(1))
                if not 1 <= j <= dim:
                    raise ValueError(f"variable x{j} outside x1..x{dim}")
                powers[j - 1] += int(m.group(2) or 1)
            else:
                coef *= float(factor)
        terms.append((coef, tuple(powers)))
    if not terms:
        raise ValueError(f"empty polynomial {expr!r}")
    return terms


def parse_polynomial_system(text: str, name: str = "custom") -> GeneratorSet:
    """Build a generator set from polynomial coefficients.

    Format (``#`` starts a comment)::

        dim 2
        domain box -2 2 -2 2      # or: domain disk / domain any
        f1.1 = 1 + x2 - 1.2*x1^2
        f1.2 = 0.3*x1
        f2.1 = 1 + x2 - 1.2*x1^2 + 0.48*x1 - 0.048
        f2.2 = -0.2*x1

    ``fi.j`` is output coordinate ``j`` of generator ``i``; variables are
    ``x1 .. x<dim>``.
    """
    dim = None
    domain = Domain("any")
    comps = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("dim"):
            dim = int(line.split()[1])
        elif line.startswith("domain"):
            parts = line.split()
            if parts[1] == "box":
                vals = [float(v) for v in parts[2:]]
                domain = Domain("box", tuple(zip(vals[0::2], vals[1::2])))
            elif parts[1] in ("disk", "any"):
                domain = Domain(parts[1])
            else:
                raise ValueError(f"unknown domain kind {parts[1]!r}")
        else:
            m = re.fullmatch(r"f(\d+)\.(\d+)\s*=\s*(.+)", line)
            if not m:
                raise ValueError(f"cannot parse line {raw!r}")
            if dim is None:
                raise ValueError("'dim' must precede the map definitions")
            comps[(int(m.group(1)), int(m.group(2)))] = _parse_polynomial(m.group(3), dim)
    if dim is None or not comps:
        raise ValueError("polynomial system needs a 'dim' line and at least one map")
    k = max(i for i, _ in comps)
    for i in range(1, k + 1):
        for j in range(1, dim + 1):
            if (i, j) not in comps:
                raise ValueError(f"missing component f{i}.{j}")
    if domain.kind == "box" and len(domain.bounds) != dim:
        raise ValueError("box domain needs two bounds per dimension")

    def make(i):
        rows = [comps[(i, j)] for j in range(1, dim + 1)]

        def f(x):
            out = np.empty(dim)
            for j, terms in enumerate(rows):
                acc = 0.0
                for c, pw in terms:
                    t = c
                    for v, p in zip(x, pw):
                        if p:
                            t *= v**p
                    acc += t
                out[j] = acc
            return out

        return f

    obs = tuple(f"x{j}" for j in range(1, dim + 1)) + ("identity",)
    return GeneratorSet(name, dim, tuple(make(i) for i in range(1, k + 1)), domain, observables=obs)


# ---------------------------------------------------------------------------
# simulation


def evaluate_generator(gs: GeneratorSet, i: int, x) -> np.ndarray:
    """Apply generator ``i`` (1-based) to state ``x``."""
    if not 1 <= i <= gs.k:
        raise ValueError(f"generator index {i} outside 1..{gs.k}")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != gs.dim:
        raise ValueError(f"state has {x.size} coordinates, expected {gs.dim}")
    gs.domain.check(x)
    return gs.maps[i - 1](x)


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0..x_N`` and the ``N`` driving symbols that produced them."""

    points: np.ndarray
    driving: SymbolSequence
    system: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(self.driving) != pts.shape[0] - 1:
            raise ValueError("driving sequence must be one shorter than the point list")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ObservationSeries:
    """Observed values ``z_n = psi(x_n)``; shape ``(N,)`` or ``(N, s)``."""

    values: np.ndarray
    observable_id: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 2 and v.shape[1] == 1:
            v = v[:, 0]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]


def simulate(gs: GeneratorSet, driving, x0, burn_in: int = 100) -> Trajectory:
    """Iterate ``x_{n+1} = f_{omega_n}(x_n)``.

    The first ``burn_in`` symbols of ``driving`` are consumed before recording,
    so the result has ``len(driving) - burn_in + 1`` points.
    """
    if not isinstance(driving, SymbolSequence):
        driving = SymbolSequence(np.asarray(list(driving)), gs.k)
    if driving.k > gs.k:
        raise ValueError(f"driving alphabet {driving.k} exceeds number of generators {gs.k}")
    if burn_in < 0 or burn_in > len(driving):
        raise ValueError("burn_in must lie between 0 and the driving length")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != gs.dim:
        raise ValueError(f"x0 has {x.size} coordinates, expected {gs.dim}")
    syms = driving.symbols
    n_rec = len(driving) - burn_in
    pts = np.empty((n_rec + 1, gs.dim))
    check = gs.domain.check
    maps = gs.maps
    for t in range(len(driving)):
        try:
            check(x)
        except DomainError as err:
            raise DomainError(f"step {t}: {err}", coordinate=err.coordinate, step=t) from None
        if t >= burn_in:
            pts[t - burn_in] = x
        x = maps[syms[t] - 1](x)
    try:
        check(x)
    except DomainError as err:
        raise DomainError(f"step {len(driving)}: {err}", coordinate=err.coordinate, step=len(driving)) from None
    pts[n_rec] = x
    return Trajectory(pts, SymbolSequence(syms[burn_in:], driving.k), gs.name)


def observe(traj: Trajectory, observable: Union[str, int, Callable] = "x1") -> ObservationSeries:
    """Apply a named observable to every state.

    ``"x<j>"`` (or an integer ``j``) projects onto coordinate ``j``;
    ``"im"`` and ``"re"`` are aliases for coordinates 2 and 1 of a complex
    state stored as ``(Re, Im)``; ``"identity"`` keeps all coordinates.
    A callable is applied row-wise.
    """
    pts = traj.points
    if callable(observable):
        vals = np.array([observable(p) for p in pts], dtype=float)
        return ObservationSeries(vals, getattr(observable, "__name__", "custom"))
    if isinstance(observable, (int, np.integer)):
        observable = f"x{int(observable)}"
    name = str(observable).lower()
    alias = {"re": "x1", "im": "x2"}
    if name in alias:
        if traj.dim != 2:
            raise ValueError(f"observable {name!r} needs a 2-dimensional (complex) state")
        j = int(alias[name][1:])
    elif name == "identity":
        return ObservationSeries(pts.copy(), "identity")
    else:
        m = re.fullmatch(r"x(\d+)", name)
        if not m:
            raise ValueError(f"unknown observable {observable!r}")
        j = int(m.group(1))
    if not 1 <= j <= traj.dim:
        raise ValueError(f"coordinate index {j} outside 1..{traj.dim}")
    return ObservationSeries(pts[:, j - 1].copy(), name)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(traj: Trajectory, path, include_omega: bool = True) -> None:
    """Columns ``n, x_1..x_dim[, omega]``; the last row has an empty omega."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["n"] + [f"x_{j + 1}" for j in range(traj.dim)]
        if include_omega:
            header.append("omega")
        w.writerow(header)
        om = traj.driving.symbols
        for n, p in enumerate(traj.points):
            row = [str(n)] + [_fmt(v) for v in p]
            if include_omega:
                row.append(str(int(om[n])) if n < om.size else "")
            w.writerow(row)


def read_trajectory_csv(path, k: Optional[int] = None) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = rows[0]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if "omega" not in header:
        raise ValueError(f"{path}: ground-truth omega column missing")
    oc = header.index("omega")
    pts = np.array([[float(r[i]) for i in xcols] for r in rows[1:]])
    om = np.array([int(r[oc]) for r in rows[1:-1]], dtype=np.int64)
    kk = int(om.max()) if k is None else k
    return Trajectory(pts, SymbolSequence(om, kk))


def write_observation_csv(obs: ObservationSeries, path) -> None:
    """Columns ``n, z_1..z_s``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        s = obs.channels
        w.writerow(["n"] + [f"z_{j + 1}" for j in range(s)] + ([f"#{obs.observable_id}"] if obs.observable_id else []))
        vals = obs.values.reshape(len(obs), s)
        for n, row in enumerate(vals):
            w.writerow([str(n)] + [_fmt(v) for v in row])


def read_observation_csv(path) -> ObservationSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h.startswith("z_") or h.startswith("x_")]
    if not cols:
        raise ValueError(f"{path}: no value columns")
    oid = next((h[1:] for h in header if h.startswith("#")), "")
    vals = np.array([[float(r[i]) for i in cols] for r in rows[1:]])
    return ObservationSeries(vals, oid)
