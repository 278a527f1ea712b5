"""Hidden-dynamics inference: per-symbol polynomial maps with latent state.

The model has one observed channel ``z`` and ``V`` hidden channels ``h``.
For each symbol ``w`` there is one polynomial per channel::

    z_{n+1} ~ g_w(z_n, h_n)          (observed channel)
    h_{n+1} = G_w(z_n, h_n)          (hidden channels)

Training teacher-forces the observed channel: the prediction of ``z_{n+1}``
is made from the *observed* ``z_n``. The hidden channels run free from the
trainable initial state ``h0``. The loss is the mean of squared one-step
residuals, and its gradient is obtained by backpropagation through the
hidden recursion.
"""

from __future__ import annotations

import configparser
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np
from scipy.optimize import minimize

from .markov import SymbolSequence
from .systems import ObservationSeries

__all__ = [
    "HDIModel",
    "FitOptions",
    "FitReport",
    "RolloutResult",
    "RolloutOverflow",
    "FitError",
    "monomial_exponents",
    "basis_names",
    "rollout",
    "loss_and_gradient",
    "gradient_check",
    "fit",
    "resimulate",
    "fill_symbols",
    "write_model",
    "read_model",
    "write_fit_report",
]

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6


class RolloutOverflow(FloatingPointError):
    """State left the finite range; ``step`` is the index of the offending update."""

    def __init__(self, step: int, what: str = "rollout"):
        super().__init__(f"{what} diverged at step {step}")
        self.step = step


class FitError(RuntimeError):
    pass


def monomial_exponents(nvars: int, degree: int) -> np.ndarray:
    """Exponent rows of all monomials of total degree ``<= degree``.

    Graded lexicographic order with the first variable largest.

    >>> monomial_exponents(2, 2).tolist()
    [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    """
    rows = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, nvars)


def _var_names(V: int) -> list:
    return ["z"] + [f"h{i}" for i in range(1, V + 1)]


def basis_names(V: int, degree: int) -> list:
    """Readable monomial names, e.g. ``['1', 'z', 'h1', 'z^2', 'z*h1', 'h1^2']``."""
    names = _var_names(V)
    out = []
    for e in monomial_exponents(V + 1, degree):
        parts = [n if p == 1 else f"{n}^{p}" for n, p in zip(names, e) if p]
        out.append("*".join(parts) if parts else "1")
    return out


@dataclass(frozen=True)
class HDIModel:
    """Coefficient tensor of shape ``(k, 1 + V, n_basis)`` plus ``h0``."""

    k: int
    V: int
    degree: int
    coefficients: np.ndarray
    h0: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k < 1 or self.V < 0 or self.degree < 0:
            raise ValueError("need k >= 1, V >= 0 and degree >= 0")
        nb = self.n_basis
        C = np.array(self.coefficients, dtype=float, copy=True)
        if C.shape != (self.k, 1 + self.V, nb):
            raise ValueError(f"coefficients must have shape {(self.k, 1 + self.V, nb)}, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("coefficients must be finite")
        h0 = np.zeros(self.V) if self.h0 is None else np.array(self.h0, dtype=float, copy=True).reshape(-1)
        if h0.shape != (self.V,) or not np.all(np.isfinite(h0)):
            raise ValueError(f"h0 must be a finite vector of length {self.V}")
        C.setflags(write=False)
        h0.setflags(write=False)
        object.__setattr__(self, "coefficients", C)
        object.__setattr__(self, "h0", h0)

    @property
    def n_basis(self) -> int:
        return math.comb(self.V + 1 + self.degree, self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.V + 1, self.degree)

    @property
    def n_params(self) -> int:
        return self.coefficients.size + self.V

    @classmethod
    def zeros(cls, k: int, V: int, degree: int) -> "HDIModel":
        nb = math.comb(V + 1 + degree, degree)
        return cls(k, V, degree, np.zeros((k, 1 + V, nb)), np.zeros(V))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.coefficients.ravel(), self.h0])

    def from_vector(self, theta) -> "HDIModel":
        theta = np.asarray(theta, dtype=float)
        nC = self.coefficients.size
        return replace(self, coefficients=theta[:nC].reshape(self.coefficients.shape), h0=theta[nC:])

    def permute_symbols(self, perm: Sequence[int]) -> "HDIModel":
        """Model for relabelled symbols: new symbol ``perm[a-1]`` takes old block ``a``."""
        perm = np.asarray(perm, dtype=np.int64) - 1
        C = np.empty_like(self.coefficients)
        C[perm] = self.coefficients
        return replace(self, coefficients=C)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _basis(s, E, pw, phi):
    S = s.shape[0]
    d = pw.shape[1] - 1
    for i in range(S):
        pw[i, 0] = 1.0
        for p in range(1, d + 1):
            pw[i, p] = pw[i, p - 1] * s[i]
    for j in range(E.shape[0]):
        v = 1.0
        for i in range(S):
            v *= pw[i, E[j, i]]
        phi[j] = v


@numba.njit(cache=True)
def _forward(C, h0, z, w, E, teacher):
    """Rollout. Returns (pred, H, bad_step); bad_step is -1 when finite."""
    N = w.shape[0]
    V = h0.shape[0]
    S = V + 1
    nb = E.shape[0]
    d = 0
    for j in range(nb):
        t = 0
        for i in range(S):
            t += E[j, i]
        if t > d:
            d = t
    pw = np.empty((S, d + 1))
    phi = np.empty(nb)
    s = np.empty(S)
    pred = np.empty(N)
    H = np.empty((N + 1, V))
    H[0] = h0
    zc = z[0]
    for n in range(N):
        s[0] = zc
        for i in range(V):
            s[1 + i] = H[n, i]
        _basis(s, E, pw, phi)
        a = w[n]
        acc = 0.0
        for j in range(nb):
            acc += C[a, 0, j] * phi[j]
        pred[n] = acc
        bad = not np.isfinite(acc) or abs(acc) > DIVERGENCE_BOUND
        for i in range(V):
            acc = 0.0
            for j in range(nb):
                acc += C[a, 1 + i, j] * phi[j]
            H[n + 1, i] = acc
            if not np.isfinite(acc) or abs(acc) > DIVERGENCE_BOUND:
                bad = True
        if bad:
            return pred, H, n
        zc = z[n + 1] if teacher else pred[n]
    return pred, H, -1


@numba.njit(cache=True)
def _backward(C, H, z, w, E, resid, scale):
    """Adjoint pass for the teacher-forced loss ``scale * sum(resid**2)``."""
    N = w.shape[0]
    V = H.shape[1]
    S = V + 1
    nb = E.shape[0]
    d = 0
    for j in range(nb):
        t = 0
        for i in range(S):
            t += E[j, i]
        if t > d:
            d = t
    gC = np.zeros(C.shape)
    lam = np.zeros(V)
    pw = np.empty((S, d + 1))
    phi = np.empty(nb)
    gphi = np.empty(nb)
    s = np.empty(S)
    for n in range(N - 1, -1, -1):
        s[0] = z[n]
        for i in range(V):
            s[1 + i] = H[n, i]
        _basis(s, E, pw, phi)
        a = w[n]
        gz = 2.0 * scale * resid[n]
        for j in range(nb):
            g = C[a, 0, j] * gz
            gC[a, 0, j] += gz * phi[j]
            for i in range(V):
                g += C[a, 1 + i, j] * lam[i]
                gC[a, 1 + i, j] += lam[i] * phi[j]
            gphi[j] = g
        # lam_n = (d phi / d h_n)^T gphi
        for i in range(V):
            acc = 0.0
            for j in range(nb):
                e = E[j, 1 + i]
                if e == 0 or gphi[j] == 0.0:
                    continue
                dv = e * pw[1 + i, e - 1]
                for q in range(S):
                    if q != 1 + i:
                        dv *= pw[q, E[j, q]]
                acc += gphi[j] * dv
            lam[i] = acc
    return gC, lam


# ---------------------------------------------------------------------------
# public evaluation API


@dataclass(frozen=True)
class RolloutResult:
    """``predicted[n]`` estimates ``z[n + 1]``; ``hidden`` has one row per input step.

    ``residuals`` covers the scored steps only (all of them unless some
    symbols were unknown).
    """

    predicted: np.ndarray
    hidden: np.ndarray
    residuals: np.ndarray

    @property
    def mse(self) -> float:
        return float(np.mean(self.residuals**2)) if self.residuals.size else 0.0


def _prep(model: HDIModel, z, omega):
    """Arrays for the kernels plus a mask of scored steps.

    Symbol 0 marks an unknown step. It is allowed only without hidden
    channels, where steps are independent and an unknown one is simply
    left out of the loss.
    """
    zv = z.values if isinstance(z, ObservationSeries) else np.asarray(z, dtype=float)
    zv = np.ascontiguousarray(zv, dtype=float).reshape(-1)
    w = omega.symbols if isinstance(omega, SymbolSequence) else np.asarray(omega, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.int64).reshape(-1)
    if w.size != zv.size - 1:
        raise ValueError(f"need len(omega) == len(z) - 1, got {w.size} and {zv.size}")
    lo = 0 if model.V == 0 else 1
    if w.size and (w.min() < lo or w.max() > model.k):
        bad = w[(w < lo) | (w > model.k)][0]
        raise ValueError(f"symbol {bad} outside 1..{model.k}")
    known = w > 0
    return zv, np.where(known, w - 1, 0), known


def rollout(model: HDIModel, z, omega) -> RolloutResult:
    """Teacher-forced one-step predictions with free-running hidden state.

    Raises
    ------
    RolloutOverflow
        If the state becomes non-finite or exceeds ``1e6`` in magnitude.
    """
    zv, w, known = _prep(model, z, omega)
    pred, H, bad = _forward(model.coefficients, model.h0, zv, w, model.exponents, True)
    if bad >= 0:
        raise RolloutOverflow(int(bad))
    return RolloutResult(pred, H, (pred - zv[1:])[known])


def loss_and_gradient(model: HDIModel, z, omega):
    """Mean squared one-step error and its gradient.

    Returns
    -------
    loss : float
    grad_coefficients : ndarray, same shape as ``model.coefficients``
    grad_h0 : ndarray of length ``V``
    """
    zv, w, known = _prep(model, z, omega)
    C, E = model.coefficients, model.exponents
    pred, H, bad = _forward(C, model.h0, zv, w, E, True)
    if bad >= 0:
        raise RolloutOverflow(int(bad))
    resid = np.where(known, pred - zv[1:], 0.0)
    N = int(known.sum())
    gC, gh = _backward(C, H, zv, w, E, resid, 1.0 / max(N, 1))
    return float(np.sum(resid**2) / N) if N else 0.0, gC, gh


def gradient_check(model: HDIModel, z, omega, step: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    The per-entry error is ``|a - f| / max(|a|, |f|, 1e-3 * max|a|)``. The
    floor keeps entries whose true gradient is essentially zero from turning
    rounding noise into a huge ratio.
    """
    _, gC, gh = loss_and_gradient(model, z, omega)
    a = np.concatenate([gC.ravel(), gh])
    theta = model.to_vector()
    f = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        lp = loss_and_gradient(model.from_vector(tp), z, omega)[0]
        lm = loss_and_gradient(model.from_vector(tm), z, omega)[0]
        f[i] = (lp - lm) / (2 * step)
    scale = np.max(np.abs(a)) if a.size else 0.0
    den = np.maximum(np.maximum(np.abs(a), np.abs(f)), max(1e-3 * scale, 1e-300))
    return float(np.max(np.abs(a - f) / den)) if a.size else 0.0


def fill_symbols(model: HDIModel, z, omega, lookahead: int = 3) -> np.ndarray:
    """Replace unknown symbols (0) by the choice that best explains the data.

    Walks forward with teacher-forced ``z`` and the model's hidden state. At
    an unknown step every assignment of the unknown symbols inside the next
    ``lookahead`` steps is tried, and the first symbol of the assignment with
    the smallest squared one-step error is kept.
    """
    zv = z.values if isinstance(z, ObservationSeries) else np.asarray(z, dtype=float)
    zv = np.asarray(zv, dtype=float).reshape(-1)
    w = np.array(omega, dtype=np.int64).reshape(-1)
    if w.size != zv.size - 1:
        raise ValueError(f"need len(omega) == len(z) - 1, got {w.size} and {zv.size}")
    C, E = model.coefficients, model.exponents
    h = np.array(model.h0, dtype=float)

    def run(n, syms, h):
        zz = np.ascontiguousarray(zv[n : n + len(syms) + 1])
        pred, H, bad = _forward(C, h, zz, np.asarray(syms, dtype=np.int64) - 1, E, True)
        if bad >= 0:
            return np.inf, H[-1]
        return float(np.sum((pred - zz[1:]) ** 2)), H[-1]

    n = 0
    while n < w.size:
        stop = n
        while stop < w.size and w[stop] > 0:
            stop += 1
        if stop > n:
            _, H = run(n, w[n:stop], np.ascontiguousarray(h)) if model.V else (None, h)
            h = np.array(H)
            n = stop
            continue
        end = min(n + lookahead, w.size)
        unknown = [i for i in range(n, end) if w[i] <= 0]
        best, best_sym = np.inf, 1
        for combo in itertools.product(range(1, model.k + 1), repeat=len(unknown)):
            syms = w[n:end].copy()
            syms[np.array(unknown) - n] = combo
            err, _ = run(n, syms, np.ascontiguousarray(h))
            if err < best:
                best, best_sym = err, combo[0]
        w[n] = best_sym
        _, H = run(n, w[n : n + 1], np.ascontiguousarray(h))
        h = np.array(H)
        n += 1
    return w


def resimulate(model: HDIModel, z_init: float, h_init, omega) -> ObservationSeries:
    """Closed-loop generation: both channels feed back their own outputs.

    Raises
    ------
    RolloutOverflow
        If the generated state exceeds ``1e6`` in magnitude.
    """
    w = omega.symbols if isinstance(omega, SymbolSequence) else np.asarray(omega, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.int64).reshape(-1)
    if w.size and (w.min() < 1 or w.max() > model.k):
        raise ValueError(f"symbols outside 1..{model.k}")
    h = model.h0 if h_init is None else np.asarray(h_init, dtype=float).reshape(model.V)
    z0 = np.zeros(w.size + 1)
    z0[0] = float(z_init)
    pred, _, bad = _forward(model.coefficients, np.ascontiguousarray(h), z0, w - 1, model.exponents, False)
    if bad >= 0:
        raise RolloutOverflow(int(bad), "resimulation")
    return ObservationSeries(np.concatenate([[float(z_init)], pred]))


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings.

    Adam runs until ``max_iter`` or until the best loss improves by less than
    ``rel_tol`` (relative) over ``patience`` iterations; the winner of each
    restart is then polished with L-BFGS when ``polish`` is set.
    """

    restarts: int = 5
    max_iter: int = 20000
    lr: float = 1e-2
    init_scale: float = 0.1
    patience: int = 200
    rel_tol: float = 1e-10
    polish: bool = True
    polish_iter: int = 5000
    train_h0: bool = True
    h0_from_delay: bool = False
    max_steps: Optional[int] = None
    check_steps: int = 200


@dataclass(frozen=True)
class FitReport:
    mse: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    gradient_check: float
    restart_losses: tuple = ()
    best_restart: int = 0
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _adam(theta, fg, opts: FitOptions, mask):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-12
    best = math.inf
    best_theta = theta.copy()
    history = []
    window = best
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        try:
            loss, g = fg(theta)
        except RolloutOverflow:
            loss, g = math.inf, None
        if not np.isfinite(loss):
            if not np.isfinite(best):
                break
            # step back toward the best point with a smaller rate
            theta = best_theta.copy()
            m[:] = 0.0
            v[:] = 0.0
            continue
        if loss < best:
            best, best_theta = loss, theta.copy()
        history.append(best)
        if it % opts.patience == 0:
            if window - best <= opts.rel_tol * max(window, 1e-300) or best == 0.0:
                converged = True
                break
            window = best
        g = g * mask
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**it)
        vh = v / (1 - b2**it)
        theta = theta - opts.lr * mh / (np.sqrt(vh) + eps)
    return best_theta, best, it, converged, history


def fit(
    z,
    omega,
    k: int,
    V: int,
    degree: int,
    opts: Optional[FitOptions] = None,
    seed: Optional[int] = 0,
    init: Optional[HDIModel] = None,
):
    """Fit an :class:`HDIModel` by minimising the one-step MSE.

    Parameters
    ----------
    z : ObservationSeries or array_like
        Observed series of length ``N + 1``.
    omega : SymbolSequence or array_like
        Driving symbols, ``len(omega) == N``. With ``V == 0`` a symbol of 0
        marks an unknown step, which is left out of the loss.
    k, V, degree : int
        Alphabet size, hidden-channel count and total polynomial degree.
    opts : FitOptions, optional
    seed : int, optional
        Seeds the restart initialisations.
    init : HDIModel, optional
        Starting point of the first restart (a warm start); the others are
        random.

    Returns
    -------
    model : HDIModel
    report : FitReport

    Raises
    ------
    FitError
        If every restart ends with a non-finite loss.
    """
    opts = opts or FitOptions()
    zv = z.values if isinstance(z, ObservationSeries) else np.asarray(z, dtype=float)
    zv = np.asarray(zv, dtype=float).reshape(-1)
    w = omega.symbols if isinstance(omega, SymbolSequence) else np.asarray(omega, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64).reshape(-1)
    if w.size != zv.size - 1:
        raise ValueError(f"need len(omega) == len(z) - 1, got {w.size} and {zv.size}")
    h0_fixed = None
    if opts.h0_from_delay and V > 0:
        h0_fixed = zv[:V].copy()
        zv, w = zv[V:], w[V:]
    if opts.max_steps is not None and w.size > opts.max_steps:
        zv, w = zv[: opts.max_steps + 1], w[: opts.max_steps]
    template = HDIModel.zeros(k, V, degree)
    n_known = int(np.sum(w > 0))
    if n_known < 10 * template.n_params:
        warnings.warn(
            f"{n_known} steps for {template.n_params} parameters; fit may be underdetermined",
            UserWarning,
            stacklevel=2,
        )
    train_h0 = opts.train_h0 and h0_fixed is None
    mask = np.ones(template.n_params)
    if not train_h0:
        mask[template.coefficients.size :] = 0.0

    def fg(theta):
        mdl = template.from_vector(theta)
        loss, gC, gh = loss_and_gradient(mdl, zv, w)
        return loss, np.concatenate([gC.ravel(), gh])

    def fg_safe(theta):
        try:
            loss, g = fg(theta)
        except RolloutOverflow:
            return 1e300, np.zeros_like(theta)
        return loss, g * mask

    rng = np.random.default_rng(seed)
    results = []
    total_iter = 0
    for r in range(opts.restarts):
        theta = rng.normal(0.0, opts.init_scale, template.n_params)
        if r == 0 and init is not None:
            if (init.k, init.V, init.degree) != (k, V, degree):
                raise ValueError("init model has a different shape")
            theta = init.to_vector()
        if h0_fixed is not None:
            theta[template.coefficients.size :] = h0_fixed
        elif not train_h0:
            theta[template.coefficients.size :] = 0.0
        theta, loss, its, conv, hist = _adam(theta, fg, opts, mask)
        total_iter += its
        if opts.polish and np.isfinite(loss):
            res = minimize(fg_safe, theta, jac=True, method="L-BFGS-B", options=dict(maxiter=opts.polish_iter, ftol=1e-15, gtol=1e-12))
            total_iter += int(res.nit)
            if np.isfinite(res.fun) and res.fun < loss:
                theta, loss = res.x, float(res.fun)
                hist = hist + [loss]
            conv = conv or bool(res.success)
        log.info("restart %d: loss %.3e after %d iterations", r, loss, its)
        results.append((loss, r, theta, conv, hist))
    finite = [t for t in results if np.isfinite(t[0])]
    if not finite:
        raise FitError("every restart ended with a non-finite loss")
    loss, best_r, theta, conv, hist = min(finite, key=lambda t: (t[0], t[1]))
    model = template.from_vector(theta)
    ro = rollout(model, zv, w)
    n_chk = min(opts.check_steps, w.size)
    gcheck = gradient_check(model, zv[: n_chk + 1], w[:n_chk]) if n_chk else 0.0
    report = FitReport(
        mse=ro.mse,
        residuals=ro.residuals,
        iterations=total_iter,
        converged=conv,
        gradient_check=gcheck,
        restart_losses=tuple(float(t[0]) for t in results),
        best_restart=best_r,
        history=np.asarray(hist, dtype=float),
    )
    return model, report


# ---------------------------------------------------------------------------
# text formats


def write_model(model: HDIModel, path) -> None:
    """INI text: a ``[model]`` header then one coefficient row per symbol and channel."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    names = _var_names(model.V)
    cp["model"] = {
        "k": str(model.k),
        "V": str(model.V),
        "degree": str(model.degree),
        "basis": " ".join(basis_names(model.V, model.degree)),
        "h0": " ".join(repr(float(v)) for v in model.h0),
    }
    coef = {}
    for a in range(model.k):
        for c, nm in enumerate(names):
            coef[f"g{a + 1}.{nm}"] = " ".join(repr(float(v)) for v in model.coefficients[a, c])
    cp["coefficients"] = coef
    with open(path, "w") as fh:
        cp.write(fh)


def read_model(path) -> HDIModel:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise FileNotFoundError(path)
    try:
        sec = cp["model"]
        k, V, degree = int(sec["k"]), int(sec["V"]), int(sec["degree"])
        if sec["basis"].split() != basis_names(V, degree):
            raise ValueError(f"{path}: basis ordering does not match degree {degree}")
        h0 = np.array(sec.get("h0", "").split(), dtype=float)
        names = _var_names(V)
        C = np.array(
            [[cp["coefficients"][f"g{a + 1}.{nm}"].split() for nm in names] for a in range(k)],
            dtype=float,
        )
    except KeyError as err:
        raise ValueError(f"{path}: missing entry {err}") from None
    return HDIModel(k, V, degree, C, h0)


def write_fit_report(report: FitReport, path) -> None:
    cp = configparser.ConfigParser()
    cp["fit"] = {
        "mse": repr(report.mse),
        "rmse": repr(math.sqrt(report.mse)),
        "max_abs_residual": repr(float(np.max(np.abs(report.residuals)))) if report.residuals.size else "0.0",
        "steps": str(report.residuals.size),
        "iterations": str(report.iterations),
        "converged": str(report.converged).lower(),
        "gradient_check": repr(report.gradient_check),
        "best_restart": str(report.best_restart),
        "restart_losses": " ".join(repr(v) for v in report.restart_losses),
    }
    with open(path, "w") as fh:
        cp.write(fh)
