"""End-to-end learning pipeline, evaluation against ground truth, and plots.

The learning path sees only the observation series. Ground truth (the
driving sequence and the generating transition matrix) is written next to
the learned artifacts and read back only by :func:`evaluate_run`.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import logging
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import clustering, embedding, hdi, markov, systems, tdemc
from .clustering import GAP, ClusterParams
from .embedding import DelayVectorSet
from .hdi import FitOptions
from .markov import SymbolSequence, TransitionMatrix

__all__ = [
    "PRESETS",
    "OUTPUT_DIR_ENV",
    "ConfigError",
    "StageError",
    "PipelineConfig",
    "RunArtifacts",
    "LearnResult",
    "EvaluationReport",
    "preset_config",
    "load_config",
    "cluster_overrides",
    "learn",
    "decode_symbols",
    "fit_decoded",
    "run_pipeline",
    "evaluate_run",
    "emit_plots",
    "label_purity",
    "match_symbols",
    "transition_error",
    "bbox_overlap",
    "write_manifest",
    "read_decoded_symbols",
]

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "IFSLEARN_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


# ---------------------------------------------------------------------------
# configuration

PRESETS: Dict[str, dict] = {
    "logistic3": dict(system="logistic3", observable="identity", length=2200, x0=(0.3,), l=2, degree=2),
    "henon": dict(system="henon", observable="x1", length=10000, x0=(0.0, 0.0), l=3, degree=2),
    "sierpinski": dict(system="sierpinski", observable="im", length=20000, x0=(0.0, 0.0), l=3, degree=3),
}

_FIT_FIELDS = {f.name: f for f in dataclasses.fields(FitOptions)}
_CLUSTER_FIELDS = {f.name: f for f in dataclasses.fields(ClusterParams)}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to reproduce one run.

    ``system`` is a built-in name or the path of a polynomial system file.
    ``transition`` defaults to the uniform chain. ``l = None`` triggers the
    delay search up to ``l_max``. ``V = None`` takes the largest estimated
    manifold dimension minus one.
    """

    system: str
    seed: int
    observable: str = "x1"
    length: int = 10000
    burn_in: int = 100
    x0: Tuple[float, ...] = (0.0, 0.0)
    transition: Optional[Tuple[Tuple[float, ...], ...]] = None
    l: Optional[int] = 3
    l_max: int = 6
    cluster: Tuple[Tuple[str, object], ...] = ()
    expected_k: Optional[int] = None
    V: Optional[int] = None
    degree: int = 2
    fit: FitOptions = field(default_factory=lambda: FitOptions(max_steps=2000))
    resim_length: int = 5000
    output_dir: str = "ifslearn-run"

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.length < 2 or self.burn_in < 0 or self.resim_length < 1:
            raise ConfigError("length, burn_in and resim_length must be positive")
        if self.l is not None and self.l < 2:
            raise ConfigError("delay length l must be at least 2")
        if self.degree < 0 or (self.V is not None and self.V < 0):
            raise ConfigError("degree and V must be non-negative")
        for key, _ in self.cluster:
            if key not in _CLUSTER_FIELDS:
                raise ConfigError(f"unknown clustering parameter {key!r}")
        if self.transition is not None:
            try:
                TransitionMatrix(np.array(self.transition, dtype=float))
            except ValueError as err:
                raise ConfigError(f"transition matrix: {err}") from None

    def generator_set(self) -> systems.GeneratorSet:
        if self.system in systems.BUILTIN_SYSTEMS:
            return systems.builtin_system(self.system)
        path = Path(self.system)
        if not path.is_file():
            raise ConfigError(f"unknown system {self.system!r} (not a built-in name or a file)")
        try:
            return systems.parse_polynomial_system(path.read_text(), name=path.stem)
        except ValueError as err:
            raise ConfigError(f"{path}: {err}") from None

    def transition_matrix(self, k: int) -> TransitionMatrix:
        if self.transition is None:
            return TransitionMatrix.uniform(k)
        P = TransitionMatrix(np.array(self.transition, dtype=float))
        if P.k != k:
            raise ConfigError(f"transition matrix is {P.k}x{P.k} but the system has {k} generators")
        return P

    def cluster_params(self) -> ClusterParams:
        return dataclasses.replace(ClusterParams(), **dict(self.cluster))


def preset_config(name: str, seed: int, **overrides) -> PipelineConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw = dict(PRESETS[name])
    kw.update(overrides)
    return PipelineConfig(seed=seed, **kw)


def _coerce(text: str, typ):
    """Parse an INI value for a field annotated ``typ`` (a type or its string form)."""
    text = text.strip()
    if text.lower() in ("none", "auto", ""):
        return None
    name = typ if isinstance(typ, str) else typ.__name__
    if "bool" in name:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if "int" in name:
        return int(text)
    return float(text)


def cluster_overrides(items) -> dict:
    """Validate and parse ``(name, text)`` pairs of clustering parameters."""
    out = {}
    for key, val in items:
        if key not in _CLUSTER_FIELDS:
            raise ConfigError(f"unknown clustering parameter {key!r}")
        try:
            out[key] = _coerce(val, _CLUSTER_FIELDS[key].type)
        except ValueError as err:
            raise ConfigError(f"clustering parameter {key}: {err}") from None
    return out


def load_config(path=None, *, preset: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Build a config from an INI file, a preset, and flag overrides (in that order of precedence, lowest first).

    Sections: ``[run]`` (system, observable, length, burn_in, seed, x0,
    transition, output_dir, preset), ``[delay]`` (l, l_max), ``[cluster]``
    (``expected_k`` and any clustering parameter), ``[hdi]`` (V, degree and
    optimizer settings) and ``[resimulate]`` (length). Matrix rows in
    ``transition`` are separated by ``;``.
    """
    kw: dict = {}
    cluster: dict = {}
    fit_kw: dict = {}
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is not None:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        preset = preset or cp.get("run", "preset", fallback=None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        kw.update(PRESETS[preset])
    try:
        if cp.has_section("run"):
            sec = cp["run"]
            for key in ("system", "observable", "output_dir"):
                if key in sec:
                    kw[key] = sec[key].strip()
            for key in ("length", "burn_in", "seed"):
                if key in sec:
                    kw[key] = int(sec[key])
            if "x0" in sec:
                kw["x0"] = tuple(float(v) for v in sec["x0"].split())
            if "transition" in sec:
                rows = [r.split() for r in sec["transition"].split(";") if r.strip()]
                kw["transition"] = tuple(tuple(float(v) for v in r) for r in rows)
        if cp.has_section("delay"):
            sec = cp["delay"]
            if "l" in sec:
                kw["l"] = _coerce(sec["l"], int)
            if "l_max" in sec:
                kw["l_max"] = int(sec["l_max"])
        if cp.has_section("cluster"):
            items = dict(cp["cluster"].items())
            if "expected_k" in items:
                kw["expected_k"] = _coerce(items.pop("expected_k"), int)
            cluster.update(cluster_overrides(items.items()))
        if cp.has_section("hdi"):
            for key, val in cp["hdi"].items():
                if key == "v":
                    kw["V"] = _coerce(val, int)
                elif key == "degree":
                    kw["degree"] = int(val)
                elif key in _FIT_FIELDS:
                    fit_kw[key] = _coerce(val, _FIT_FIELDS[key].type)
                else:
                    raise ConfigError(f"unknown hdi setting {key!r}")
        if cp.has_section("resimulate") and "length" in cp["resimulate"]:
            kw["resim_length"] = int(cp["resimulate"]["length"])
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in _FIT_FIELDS:
            fit_kw[key] = val
        else:
            kw[key] = val
    if "system" not in kw:
        raise ConfigError("no system given (set [run] system or choose a preset)")
    if "x0" not in kw:
        # a built-in system starts where its preset does
        for p in PRESETS.values():
            if p["system"] == kw["system"]:
                kw["x0"] = p["x0"]
                break
    if "seed" not in kw:
        raise ConfigError("a seed is required")
    fit_kw.setdefault("max_steps", 2000)
    kw["fit"] = FitOptions(**fit_kw)
    kw["cluster"] = tuple(sorted(cluster.items()))
    try:
        return PipelineConfig(**kw)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def write_config(cfg: PipelineConfig, path) -> None:
    cp = configparser.ConfigParser()
    run = {
        "system": cfg.system,
        "observable": cfg.observable,
        "length": str(cfg.length),
        "burn_in": str(cfg.burn_in),
        "seed": str(cfg.seed),
        "x0": " ".join(repr(float(v)) for v in cfg.x0),
    }
    if cfg.transition is not None:
        run["transition"] = "; ".join(" ".join(repr(float(v)) for v in row) for row in cfg.transition)
    cp["run"] = run
    cp["delay"] = {"l": "auto" if cfg.l is None else str(cfg.l), "l_max": str(cfg.l_max)}
    cl = {k: str(v) for k, v in cfg.cluster}
    cl["expected_k"] = "auto" if cfg.expected_k is None else str(cfg.expected_k)
    cp["cluster"] = cl
    h = {"V": "auto" if cfg.V is None else str(cfg.V), "degree": str(cfg.degree)}
    for f in dataclasses.fields(FitOptions):
        v = getattr(cfg.fit, f.name)
        h[f.name] = "auto" if v is None else str(v)
    cp["hdi"] = h
    cp["resimulate"] = {"length": str(cfg.resim_length)}
    with open(path, "w") as fh:
        cp.write(fh)


# ---------------------------------------------------------------------------
# learning path


@dataclass(frozen=True)
class LearnResult:
    dvs: DelayVectorSet
    clusters: clustering.ClusterModel
    graph_z: tdemc.WeightedDigraph
    graph_x: tdemc.WeightedDigraph
    phi: tdemc.TupleAssignment
    omega_hat: np.ndarray
    P_hat: TransitionMatrix
    model: hdi.HDIModel
    report: hdi.FitReport
    segment: Tuple[int, int]
    delay_search: Optional[embedding.DelaySearchResult] = None
    omega_completed: Optional[np.ndarray] = None


def decode_symbols(labels, phi: tdemc.TupleAssignment, m: int) -> np.ndarray:
    """Driving symbols implied by cluster labels, 0 where unknown.

    Label ``c`` at position ``j`` stands for the word ``phi(c)`` covering
    symbols ``j .. j+m-1``. Overlapping words vote; ties go to the smaller
    symbol.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size + m - 1
    k = max((max(t) for t in phi.map.values()), default=0)
    table = np.zeros((int(labels.max(initial=0)) + 1, m), dtype=np.int64)
    for node, word in phi.map.items():
        if 0 < int(node) < table.shape[0]:
            table[int(node)] = word
    votes = np.zeros((n, k + 1), dtype=np.int64)
    idx = np.flatnonzero(labels > GAP)
    for i in range(m):
        np.add.at(votes, (idx + i, table[labels[idx], i]), 1)
    votes[:, 0] = 0
    out = np.argmax(votes, axis=1)
    out[votes.max(axis=1) == 0] = 0
    return out


def _longest_run(mask: np.ndarray) -> Tuple[int, int]:
    best = (0, 0)
    start = None
    for i, ok in enumerate(np.append(mask, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return best


def fit_decoded(z, omega_hat, k: int, V: int, degree: int, opts: FitOptions, seed: int):
    """Fit an HDI model to a series whose decoded symbols may have gaps (0).

    Without hidden channels all decoded steps are used. Otherwise the first
    fit uses the longest gap-free run; the model then fills the remaining
    gaps (:func:`ifslearn.hdi.fill_symbols`) and a warm-started refit runs on
    the longer stretch.

    Returns
    -------
    model, report, (start, stop)
        ``start:stop`` indexes the symbols used by the final fit.
    """
    z = np.asarray(z, dtype=float)
    omega_hat = np.asarray(omega_hat, dtype=np.int64)
    known = omega_hat > 0
    a, b = (0, omega_hat.size) if V == 0 else _longest_run(known)
    if np.sum(known[a:b]) < 10:
        raise StageError("fit", f"only {int(np.sum(known[a:b]))} usable decoded steps")
    refit = V > 0 and b - a < (opts.max_steps or omega_hat.size)
    try:
        with warnings.catch_warnings():
            if refit:
                warnings.filterwarnings("ignore", ".*fit may be underdetermined")
            model, report = hdi.fit(z[a : b + 1], omega_hat[a:b], k, V, degree, opts, seed=seed)
        if refit:
            filled = hdi.fill_symbols(model, z[a:], omega_hat[a:])
            b = omega_hat.size
            warm = dataclasses.replace(opts, restarts=1)
            model, report = hdi.fit(z[a : b + 1], filled, k, V, degree, warm, seed=seed, init=model)
    except (hdi.FitError, ValueError) as err:
        raise StageError("fit", str(err)) from None
    if opts.max_steps is not None:
        b = min(b, a + opts.max_steps)
    return model, report, (a, b)


def complete_symbols(model: hdi.HDIModel, z, omega_hat, start: int = 0) -> np.ndarray:
    """Fill unknown decoded symbols (0) with the fitted model, from ``start`` on.

    ``start`` must be the step at which ``model.h0`` applies; symbols before
    it are returned unchanged.
    """
    out = np.array(omega_hat, dtype=np.int64)
    if np.any(out[start:] == 0):
        out[start:] = hdi.fill_symbols(model, np.asarray(z, dtype=float)[start:], out[start:])
    return out


def estimate_from_symbols(omega, k: int) -> TransitionMatrix:
    """Transition matrix from symbols with gaps (0); pairs touching a gap are skipped."""
    omega = np.asarray(omega, dtype=np.int64)
    known = omega > 0
    try:
        return markov.estimate_transition_matrix(np.where(known, omega, 1), k, valid_pairs=known[:-1] & known[1:])
    except ValueError as err:
        raise StageError("estimate", str(err)) from None


def learn(obs: systems.ObservationSeries, cfg: PipelineConfig) -> LearnResult:
    """Run embed, cluster, unembed, fit and estimate on an observation series.

    Cluster labels decode to driving symbols with gaps where labels were
    ambiguous. The fitted model fills those gaps, and the transition matrix
    is estimated from the completed sequence.

    Raises
    ------
    StageError
        Tagged with the failing stage.
    """
    search = None
    if cfg.l is None:
        search = embedding.search_delay(obs, cfg.l_max, cluster_params=cfg.cluster_params())
        if not search.found:
            raise StageError("embed", f"no delay length up to {cfg.l_max} passed the search; scores {search.scores}")
        l = search.l
    else:
        l = cfg.l
    try:
        dvs = embedding.embed(obs, l)
    except ValueError as err:
        raise StageError("embed", str(err)) from None
    try:
        cm = clustering.cluster(dvs, expected_k=cfg.expected_k, params=cfg.cluster_params())
    except clustering.ClusteringError as err:
        raise StageError("cluster", str(err)) from None
    log.info("clusters: %d, dims %s, coverage %.3f", cm.num_clusters, cm.dimensions, cm.coverage)
    dvs = dvs.with_labels(cm.assignments)
    m = l - 1 if dvs.channels == 1 else 1
    gz = gx = phi = None
    last = None
    for min_w in (0.0, 0.005, 0.01, 0.02):
        try:
            gz = tdemc.transition_graph(cm.assignments, min_weight=min_w)
            gx, phi = tdemc.unembed(gz, m)
            break
        except (tdemc.UnembeddingError, ValueError) as err:
            last = err
            gz = None
    if gz is None:
        raise StageError("unembed", str(last))
    omega_hat = decode_symbols(cm.assignments, phi, m)
    k = len(gx.nodes)
    z = np.asarray(obs.values, dtype=float)
    V = cfg.V if cfg.V is not None else max(max(cm.dimensions) - 1, 0)
    model, report, (a, b) = fit_decoded(z, omega_hat, k, V, cfg.degree, cfg.fit, cfg.seed)
    log.info("fit: V=%d degree=%d mse=%.3e on steps %d..%d", V, cfg.degree, report.mse, a, b)
    completed = complete_symbols(model, z, omega_hat, a)
    P_hat = estimate_from_symbols(completed, k)
    return LearnResult(dvs, cm, gz, gx, phi, omega_hat, P_hat, model, report, (a, b), search, completed)


# ---------------------------------------------------------------------------
# artifacts

RESIM_ATTEMPTS = 5

FILES = {
    "config": "config.ini",
    "trajectory": "truth/trajectory.csv",
    "true_transition": "truth/transition.txt",
    "observations": "observations.csv",
    "delay_vectors": "delay_vectors.csv",
    "cluster_report": "clusters.ini",
    "graph_z": "graph_z.txt",
    "graph_x": "graph_x.txt",
    "phi": "phi.txt",
    "symbols": "symbols.txt",
    "completed_symbols": "symbols_completed.txt",
    "transition": "transition.txt",
    "model": "model.ini",
    "fit_report": "fit.ini",
    "resimulated": "resimulated.csv",
    "evaluation": "evaluation.ini",
    "plot_state": "plots/state_space.svg",
    "plot_delay": "plots/delay_space.svg",
    "plot_attractor": "plots/attractor.svg",
    "manifest": "manifest.txt",
}


@dataclass(frozen=True)
class RunArtifacts:
    """Output directory plus the path of every emitted file."""

    directory: Path
    paths: Dict[str, Path]
    learned: Optional[LearnResult] = None
    evaluation: Optional["EvaluationReport"] = None

    @classmethod
    def at(cls, directory) -> "RunArtifacts":
        d = Path(directory)
        return cls(d, {k: d / v for k, v in FILES.items()})

    def __getitem__(self, key) -> Path:
        return self.paths[key]


def read_decoded_symbols(path) -> np.ndarray:
    """Symbols file written by the pipeline; 0 marks an unknown symbol."""
    vals = np.array(Path(path).read_text().split(), dtype=np.int64)
    if vals.size and vals.min() < 0:
        raise ValueError(f"{path}: negative symbol")
    return vals


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(art: RunArtifacts) -> Path:
    """``sha256  relative/path`` for every artifact, sorted by path."""
    out = art["manifest"]
    rows = []
    for key, p in sorted(art.paths.items(), key=lambda kv: str(kv[1])):
        if key == "manifest":
            continue
        if not p.exists():
            raise StageError("manifest", f"missing artifact {p}")
        rows.append(f"{_sha256(p)}  {p.relative_to(art.directory).as_posix()}")
    out.write_text("\n".join(rows) + "\n")
    return out


def run_pipeline(cfg: PipelineConfig, output_dir=None) -> RunArtifacts:
    """Simulate, observe, learn, resimulate, evaluate and plot.

    The output directory is ``output_dir`` if given, else the
    ``IFSLEARN_OUTPUT_DIR`` environment variable, else ``cfg.output_dir``.

    Raises
    ------
    ConfigError
        Unresolvable system or inconsistent transition matrix.
    StageError
        Any later failure, tagged with its stage.
    """
    t0 = time.perf_counter()
    out = Path(output_dir or os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)
    art = RunArtifacts.at(out)
    for p in art.paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    gs = cfg.generator_set()
    P = cfg.transition_matrix(gs.k)
    if len(cfg.x0) != gs.dim:
        raise ConfigError(f"x0 has {len(cfg.x0)} entries but the system has dimension {gs.dim}")
    ss = np.random.SeedSequence(cfg.seed)
    rng_sim, rng_resim = (np.random.default_rng(s) for s in ss.spawn(2))
    write_config(cfg, art["config"])

    try:
        driving = markov.sample_chain(P, cfg.length - 1 + cfg.burn_in, seed=rng_sim)
        traj = systems.simulate(gs, driving, cfg.x0, burn_in=cfg.burn_in)
    except (systems.DomainError, ValueError) as err:
        raise StageError("simulate", str(err)) from None
    systems.write_trajectory_csv(traj, art["trajectory"])
    markov.write_transition_matrix(P, art["true_transition"])
    try:
        obs = systems.observe(traj, cfg.observable)
    except ValueError as err:
        raise StageError("observe", str(err)) from None
    systems.write_observation_csv(obs, art["observations"])

    # learning path: observation values only
    res = learn(systems.read_observation_csv(art["observations"]), cfg)
    embedding.write_delay_csv(res.dvs, art["delay_vectors"])
    clustering.write_cluster_report(res.clusters, art["cluster_report"])
    tdemc.write_graph(res.graph_z, art["graph_z"])
    tdemc.write_graph(res.graph_x, art["graph_x"])
    tdemc.write_tuple_assignment(res.phi, art["phi"])
    markov.write_symbol_sequence(res.omega_hat, art["symbols"])
    markov.write_symbol_sequence(res.omega_completed, art["completed_symbols"])
    markov.write_transition_matrix(res.P_hat, art["transition"])
    hdi.write_model(res.model, art["model"])
    hdi.write_fit_report(res.report, art["fit_report"])

    a, _ = res.segment
    # a fitted map can overshoot the attractor edge by rounding; such orbits
    # escape only for some driving draws, so a few fresh draws are tried
    for attempt in range(RESIM_ATTEMPTS):
        w_sim = markov.sample_chain(res.P_hat, cfg.resim_length, seed=rng_resim)
        try:
            sim = hdi.resimulate(res.model, obs.values[a], res.model.h0, w_sim)
            break
        except hdi.RolloutOverflow as err:
            log.info("resimulation attempt %d diverged at step %d", attempt + 1, err.step)
            last = err
    else:
        raise StageError("resimulate", f"{last} (after {RESIM_ATTEMPTS} driving draws)")
    systems.write_observation_csv(sim, art["resimulated"])

    try:
        ev = evaluate_run(art)
    except (OSError, ValueError) as err:
        raise StageError("evaluate", str(err)) from None
    try:
        emit_plots(art)
    except (OSError, ValueError) as err:
        raise StageError("plot", str(err)) from None
    write_manifest(art)
    log.info("pipeline finished in %.1f s", time.perf_counter() - t0)
    return dataclasses.replace(art, learned=res, evaluation=ev)


# ---------------------------------------------------------------------------
# evaluation


def label_purity(labels, truth) -> float:
    """Fraction of labelled points whose label matches ``truth`` under the best one-to-one relabelling.

    Points with label ``GAP`` are ignored.
    """
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    keep = labels != GAP
    if not keep.any():
        return 0.0
    la, lb = np.unique(labels[keep], return_inverse=True)
    ta, tb = np.unique(truth[keep], return_inverse=True)
    cont = np.zeros((la.size, ta.size), dtype=np.int64)
    np.add.at(cont, (lb, tb), 1)
    r, c = linear_sum_assignment(cont, maximize=True)
    return float(cont[r, c].sum() / keep.sum())


def match_symbols(omega_hat, omega, k_hat: int, k: int) -> Dict[int, int]:
    """Best mapping from decoded symbols to true symbols, by co-occurrence."""
    omega_hat = np.asarray(omega_hat)
    omega = np.asarray(omega)
    keep = omega_hat > 0
    cont = np.zeros((k_hat, k), dtype=np.int64)
    np.add.at(cont, (omega_hat[keep] - 1, omega[keep] - 1), 1)
    r, c = linear_sum_assignment(cont, maximize=True)
    return {int(a) + 1: int(b) + 1 for a, b in zip(r, c)}


def transition_error(P_hat, P, mapping: Dict[int, int]) -> float:
    """Max entrywise error after relabelling ``P_hat`` by ``mapping``; ``inf`` if sizes differ."""
    A = np.asarray(P_hat, dtype=float)
    B = np.asarray(P, dtype=float)
    if A.shape != B.shape or len(mapping) != B.shape[0]:
        return float("inf")
    perm = np.empty(A.shape[0], dtype=np.int64)
    for a, b in mapping.items():
        perm[b - 1] = a - 1
    return float(np.max(np.abs(A[np.ix_(perm, perm)] - B)))


def bbox_overlap(X, Y) -> np.ndarray:
    """Per-axis overlap of bounding boxes: ``|intersection| / |union|``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lo = np.maximum(X.min(0), Y.min(0))
    hi = np.minimum(X.max(0), Y.max(0))
    union = np.maximum(X.max(0), Y.max(0)) - np.minimum(X.min(0), Y.min(0))
    return np.clip(hi - lo, 0.0, None) / np.where(union > 0, union, 1.0)


@dataclass(frozen=True)
class EvaluationReport:
    num_clusters: int
    purity: float
    num_symbols: int
    true_symbols: int
    symbol_map: Dict[int, int]
    transition_error: float
    fit_mse: float
    bbox_overlap: Tuple[float, ...]


def _lag1(vals: np.ndarray) -> np.ndarray:
    v = np.asarray(vals, dtype=float)
    v = v if v.ndim == 1 else v[:, 0]
    return np.column_stack([v[:-1], v[1:]])


def evaluate_run(art) -> EvaluationReport:
    """Compare learned artifacts with the ground truth stored in the run directory.

    Raises
    ------
    FileNotFoundError
        If the ground-truth files are missing.
    """
    art = art if isinstance(art, RunArtifacts) else RunArtifacts.at(art)
    for key in ("trajectory", "true_transition"):
        if not art[key].exists():
            raise FileNotFoundError(f"ground truth missing: {art[key]}")
    traj = systems.read_trajectory_csv(art["trajectory"])
    P = markov.read_transition_matrix(art["true_transition"])
    omega = traj.driving.symbols
    dvs = embedding.read_delay_csv(art["delay_vectors"])
    phi = tdemc.read_tuple_assignment(art["phi"])
    m = phi.m
    labels = dvs.labels if dvs.labels is not None else np.zeros(len(dvs), dtype=np.int64)
    words = np.zeros(labels.size, dtype=np.int64)
    for i in range(m):
        words = words * (P.k + 1) + omega[i : i + labels.size]
    purity = label_purity(labels, words)
    omega_hat = read_decoded_symbols(art["symbols"])
    P_hat = markov.read_transition_matrix(art["transition"])
    mapping = match_symbols(omega_hat, omega[: omega_hat.size], P_hat.k, P.k)
    perr = transition_error(P_hat, P, mapping)
    fit_cp = configparser.ConfigParser()
    fit_cp.read(art["fit_report"])
    mse = float(fit_cp["fit"]["mse"]) if fit_cp.has_section("fit") else float("nan")
    obs = systems.read_observation_csv(art["observations"])
    overlap = (float("nan"), float("nan"))
    if art["resimulated"].exists():
        sim = systems.read_observation_csv(art["resimulated"])
        overlap = tuple(float(v) for v in bbox_overlap(_lag1(obs.values), _lag1(sim.values)))
    rep = EvaluationReport(
        num_clusters=int(labels.max(initial=0)),
        purity=purity,
        num_symbols=P_hat.k,
        true_symbols=P.k,
        symbol_map=mapping,
        transition_error=perr,
        fit_mse=mse,
        bbox_overlap=overlap,
    )
    cp = configparser.ConfigParser()
    cp["evaluation"] = {
        "num_clusters": str(rep.num_clusters),
        "purity": repr(rep.purity),
        "num_symbols": str(rep.num_symbols),
        "true_symbols": str(rep.true_symbols),
        "symbol_map": " ".join(f"{a}->{b}" for a, b in sorted(mapping.items())),
        "transition_error": repr(rep.transition_error),
        "fit_mse": repr(rep.fit_mse),
        "bbox_overlap": " ".join(repr(v) for v in rep.bbox_overlap),
    }
    with open(art["evaluation"], "w") as fh:
        cp.write(fh)
    return rep


# ---------------------------------------------------------------------------
# plots

_MAX_PLOT_POINTS = 5000


def _thin(n: int) -> np.ndarray:
    return np.arange(0, n, max(1, -(-n // _MAX_PLOT_POINTS)))


def _colors(labels: np.ndarray):
    import matplotlib

    cmap = matplotlib.colormaps["tab10" if labels.max(initial=0) <= 10 else "tab20"]
    cols = np.array([cmap((c - 1) % cmap.N) for c in labels])
    if cols.size:
        cols[labels == GAP] = (0.75, 0.75, 0.75, 1.0)
    return cols


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def emit_plots(art) -> Dict[str, Path]:
    """Scatter plots of the state space, the delay space and ground truth vs resimulation.

    Output is byte-identical for identical inputs.

    Raises
    ------
    ValueError
        If an input CSV is empty or malformed; nothing is written then.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    art = art if isinstance(art, RunArtifacts) else RunArtifacts.at(art)
    traj = systems.read_trajectory_csv(art["trajectory"])
    dvs = embedding.read_delay_csv(art["delay_vectors"])
    obs = systems.read_observation_csv(art["observations"])
    sim = systems.read_observation_csv(art["resimulated"]) if art["resimulated"].exists() else None
    if len(dvs) == 0 or len(traj) < 2:
        raise ValueError("nothing to plot")
    labels = dvs.labels if dvs.labels is not None else np.zeros(len(dvs), dtype=np.int64)
    art["plot_state"].parent.mkdir(parents=True, exist_ok=True)
    written = {}
    with plt.rc_context({"svg.hashsalt": "ifslearn", "svg.fonttype": "path"}):
        # state space, coloured by the label of the delay vector starting there
        n = labels.size
        pts = traj.points[:n]
        if traj.dim == 1:
            pts = np.column_stack([traj.points[:n, 0], traj.points[1 : n + 1, 0]])
            xl, yl = "x_n", "x_{n+1}"
        else:
            xl, yl = "x_1", "x_2"
        sel = _thin(n)
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(pts[sel, 0], pts[sel, 1], s=2, c=_colors(labels[sel]), linewidths=0)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_title(f"{traj.system or 'state'}: {int(labels.max(initial=0))} clusters")
        _save(fig, art["plot_state"])
        plt.close(fig)
        written["plot_state"] = art["plot_state"]

        V = dvs.vectors[sel]
        fig = plt.figure(figsize=(5, 5))
        if V.shape[1] >= 3:
            ax = fig.add_subplot(projection="3d")
            ax.scatter(V[:, 0], V[:, 1], V[:, 2], s=1, c=_colors(labels[sel]), linewidths=0)
            ax.set_zlabel("z_{n+2}")
        else:
            ax = fig.add_subplot()
            ax.scatter(V[:, 0], V[:, 1], s=2, c=_colors(labels[sel]), linewidths=0)
        ax.set_xlabel("z_n")
        ax.set_ylabel("z_{n+1}")
        ax.set_title(f"delay vectors, l={dvs.l}")
        _save(fig, art["plot_delay"])
        plt.close(fig)
        written["plot_delay"] = art["plot_delay"]

        if sim is not None:
            fig, axes = plt.subplots(1, 2, figsize=(9, 4.5), sharex=True, sharey=True)
            for ax, series, title in ((axes[0], obs.values, "ground truth"), (axes[1], sim.values, "learned model")):
                L = _lag1(series)
                s = _thin(L.shape[0])
                ax.scatter(L[s, 0], L[s, 1], s=1, c="k", linewidths=0)
                ax.set_title(title)
                ax.set_xlabel("z_n")
            axes[0].set_ylabel("z_{n+1}")
            _save(fig, art["plot_attractor"])
            plt.close(fig)
            written["plot_attractor"] = art["plot_attractor"]
    return written
