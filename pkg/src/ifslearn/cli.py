"""Command-line interface: ``ifslearn <subcommand> ...``.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a
stage fails (the stage is named on standard error).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import clustering, embedding, hdi, markov, pipeline, systems, tdemc
from .pipeline import ConfigError, StageError

log = logging.getLogger("ifslearn")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> None:
    base = pipeline.PRESETS.get(args.preset, {}) if args.preset else {}
    system = args.system or base.get("system")
    if system is None:
        raise ConfigError("give --system or --preset")
    observable = args.observable or base.get("observable", "x1")
    length = args.length or base.get("length", 10000)
    if length < 2:
        raise ConfigError("--length must be at least 2")
    gs = pipeline.PipelineConfig(system=system, seed=args.seed).generator_set()
    x0 = args.x0 or base.get("x0") or (0.0,) * gs.dim
    P = markov.read_transition_matrix(args.transition) if args.transition else markov.TransitionMatrix.uniform(gs.k)
    if P.k != gs.k:
        raise ConfigError(f"transition matrix is {P.k}x{P.k} but the system has {gs.k} generators")
    try:
        driving = markov.sample_chain(P, length - 1 + args.burn_in, seed=args.seed)
        traj = systems.simulate(gs, driving, x0, burn_in=args.burn_in)
        obs = systems.observe(traj, observable)
    except (systems.DomainError, ValueError) as err:
        raise StageError("simulate", str(err)) from None
    systems.write_trajectory_csv(traj, args.trajectory, include_omega=not args.no_omega)
    systems.write_observation_csv(obs, args.observations)
    print(f"{len(traj)} states written to {args.trajectory}; observations in {args.observations}")


def cmd_embed(args) -> None:
    obs = systems.read_observation_csv(args.observations)
    l = args.l
    if l is None:
        res = embedding.search_delay(obs, args.l_max)
        for cand, sc in res.scores.items():
            print(f"l={cand}: {sc}")
        if not res.found:
            raise StageError("embed", f"no delay length up to {args.l_max} qualified")
        l = res.l
    try:
        dvs = embedding.embed(obs, l)
    except ValueError as err:
        raise StageError("embed", str(err)) from None
    embedding.write_delay_csv(dvs, args.out)
    print(f"l={l}: {len(dvs)} delay vectors written to {args.out}")


def cmd_cluster(args) -> None:
    dvs = embedding.read_delay_csv(args.delay)
    overrides = pipeline.cluster_overrides(args.param or [])
    params = dataclasses.replace(clustering.ClusterParams(), **overrides)
    try:
        cm = clustering.cluster(dvs, expected_k=args.expected_k, params=params)
    except clustering.ClusteringError as err:
        raise StageError("cluster", str(err)) from None
    embedding.write_delay_csv(dvs.with_labels(cm.assignments), args.out)
    if args.report:
        clustering.write_cluster_report(cm, args.report)
    print(f"{cm.num_clusters} clusters, dimensions {cm.dimensions}, coverage {cm.coverage:.3f}")


def cmd_unembed(args) -> None:
    dvs = embedding.read_delay_csv(args.delay)
    if dvs.labels is None:
        raise StageError("unembed", f"{args.delay} has no cluster labels")
    m = args.m or max(dvs.l - 1, 1)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        gz = tdemc.transition_graph(dvs.labels, min_weight=args.min_weight)
        gx, phi = tdemc.unembed(gz, m)
    except (tdemc.UnembeddingError, ValueError) as err:
        raise StageError("unembed", str(err)) from None
    omega_hat = pipeline.decode_symbols(dvs.labels, phi, m)
    known = omega_hat > 0
    try:
        P = markov.estimate_transition_matrix(np.where(known, omega_hat, 1), len(gx.nodes), valid_pairs=known[:-1] & known[1:])
    except ValueError as err:
        raise StageError("estimate", str(err)) from None
    tdemc.write_graph(gz, out / "graph_z.txt")
    tdemc.write_graph(gx, out / "graph_x.txt")
    tdemc.write_tuple_assignment(phi, out / "phi.txt")
    markov.write_symbol_sequence(omega_hat, out / "symbols.txt")
    markov.write_transition_matrix(P, out / "transition.txt")
    print(f"{len(gx.nodes)} symbols recovered from {len(gz.nodes)} clusters (m={m}); files in {out}")


def cmd_fit(args) -> None:
    obs = systems.read_observation_csv(args.observations)
    omega_hat = pipeline.read_decoded_symbols(args.symbols)
    z = np.asarray(obs.values, dtype=float).reshape(-1)
    if omega_hat.size != z.size - 1:
        raise StageError("fit", f"{omega_hat.size} symbols for {z.size} observations (need one fewer)")
    k = args.k or int(omega_hat.max())
    opts = hdi.FitOptions(restarts=args.restarts, max_iter=args.max_iter, max_steps=args.max_steps)
    model, report, (a, b) = pipeline.fit_decoded(z, omega_hat, k, args.V, args.degree, opts, args.seed)
    hdi.write_model(model, args.model)
    if args.report:
        hdi.write_fit_report(report, args.report)
    print(f"MSE {report.mse:.3e} on steps {a}..{b}; gradient check {report.gradient_check:.1e}")
    if args.completed or args.transition:
        completed = pipeline.complete_symbols(model, z, omega_hat, a)
        if args.completed:
            markov.write_symbol_sequence(completed, args.completed)
        if args.transition:
            markov.write_transition_matrix(pipeline.estimate_from_symbols(completed, k), args.transition)


def cmd_pipeline(args) -> None:
    overrides = dict(seed=args.seed, length=args.length, l=args.l, restarts=args.restarts)
    cfg = pipeline.load_config(args.config, preset=args.preset, overrides=overrides)
    art = pipeline.run_pipeline(cfg, output_dir=args.output_dir)
    ev = art.evaluation
    print(f"run written to {art.directory}")
    print(
        f"clusters {ev.num_clusters}, purity {ev.purity:.4f}, symbols {ev.num_symbols}, "
        f"P error {ev.transition_error:.4f}, fit MSE {ev.fit_mse:.3e}"
    )


def cmd_evaluate(args) -> None:
    try:
        ev = pipeline.evaluate_run(args.run_dir)
    except (OSError, ValueError) as err:
        raise StageError("evaluate", str(err)) from None
    for key, val in ev.__dict__.items():
        print(f"{key}: {val}")


def cmd_plot(args) -> None:
    try:
        out = pipeline.emit_plots(args.run_dir)
    except (OSError, ValueError) as err:
        raise StageError("plot", str(err)) from None
    for p in out.values():
        print(p)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ifslearn", description="Learn random iterated function systems from scalar time series.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a system and write trajectory and observation CSVs")
    s.add_argument("--preset", choices=sorted(pipeline.PRESETS))
    s.add_argument("--system", help="built-in name or polynomial system file")
    s.add_argument("--observable", help="x<j>, re, im or identity")
    s.add_argument("--length", type=int, help="number of recorded states")
    s.add_argument("--burn-in", type=int, default=100)
    s.add_argument("--x0", type=_floats)
    s.add_argument("--transition", help="transition matrix file (default: uniform)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--trajectory", default="trajectory.csv")
    s.add_argument("--observations", default="observations.csv")
    s.add_argument("--no-omega", action="store_true", help="omit the driving symbols from the trajectory CSV")
    s.set_defaults(func=cmd_simulate, stage="simulate")

    s = sub.add_parser("embed", help="build delay vectors (fixed l or search)")
    s.add_argument("--observations", required=True)
    s.add_argument("--l", type=int, help="delay length; omit to search")
    s.add_argument("--l-max", type=int, default=6)
    s.add_argument("--out", default="delay_vectors.csv")
    s.set_defaults(func=cmd_embed, stage="embed")

    s = sub.add_parser("cluster", help="label delay vectors by sub-manifold")
    s.add_argument("--delay", required=True)
    s.add_argument("--out", default="delay_vectors_labelled.csv")
    s.add_argument("--report", default="clusters.ini")
    s.add_argument("--expected-k", type=int)
    s.add_argument("--param", type=_param, action="append", help="clustering parameter override key=value")
    s.set_defaults(func=cmd_cluster, stage="cluster")

    s = sub.add_parser("unembed", help="recover the driving chain from cluster labels")
    s.add_argument("--delay", required=True, help="labelled delay-vector CSV")
    s.add_argument("--m", type=int, help="word length (default l - 1)")
    s.add_argument("--min-weight", type=float, default=0.0)
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_unembed, stage="unembed")

    s = sub.add_parser("fit", help="fit a hidden-variable polynomial model")
    s.add_argument("--observations", required=True)
    s.add_argument("--symbols", required=True, help="decoded symbols, 0 for unknown")
    s.add_argument("--k", type=int)
    s.add_argument("--V", type=int, default=1)
    s.add_argument("--degree", type=int, default=2)
    s.add_argument("--restarts", type=int, default=5)
    s.add_argument("--max-iter", type=int, default=20000)
    s.add_argument("--max-steps", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model", default="model.ini")
    s.add_argument("--report", default="fit.ini")
    s.add_argument("--completed", help="write the symbols with gaps filled by the model")
    s.add_argument("--transition", help="write the transition matrix estimated from the completed symbols")
    s.set_defaults(func=cmd_fit, stage="fit")

    s = sub.add_parser("pipeline", help="run every stage and write a manifest")
    s.add_argument("--config", help="INI config file")
    s.add_argument("--preset", choices=sorted(pipeline.PRESETS))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output-dir", help=f"overrides ${pipeline.OUTPUT_DIR_ENV} and the config")
    s.add_argument("--length", type=int)
    s.add_argument("--l", type=int)
    s.add_argument("--restarts", type=int)
    s.set_defaults(func=cmd_pipeline, stage="pipeline")

    s = sub.add_parser("evaluate", help="compare a run with its ground truth")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_evaluate, stage="evaluate")

    s = sub.add_parser("plot", help="write SVG plots for a run")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_plot, stage="plot")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        print(f"stage failed: {err.stage}: {err.message}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as err:
        print(f"stage failed: {args.stage}: {err}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
