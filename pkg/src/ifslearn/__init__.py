"""Learning random iterated function systems from partial scalar observations.

Stages: simulate a ground-truth system (:mod:`ifslearn.systems`), delay-embed
its observations (:mod:`ifslearn.embedding`), split the delay vectors into
smooth pieces (:mod:`ifslearn.clustering`), recover the hidden driving chain
from the piece-to-piece transitions (:mod:`ifslearn.tdemc`) and fit a
hidden-variable polynomial model (:mod:`ifslearn.hdi`). :mod:`ifslearn.pipeline`
chains them and :mod:`ifslearn.cli` exposes every stage on the command line.
"""

from .clustering import ClusterModel, ClusterParams, LabelSequence, cluster, label_sequence
from .embedding import DelayVectorSet, embed, search_delay
from .hdi import FitOptions, FitReport, HDIModel, fit, loss_and_gradient, resimulate, rollout
from .markov import SymbolSequence, TransitionMatrix, estimate_transition_matrix, is_irreducible, sample_chain
from .pipeline import PipelineConfig, RunArtifacts, evaluate_run, run_pipeline
from .systems import GeneratorSet, ObservationSeries, Trajectory, builtin_system, observe, simulate
from .tdemc import WeightedDigraph, elementary_circuits, embed_mc, transition_graph, unembed

__version__ = "0.1.0"

__all__ = [
    "ClusterModel",
    "ClusterParams",
    "LabelSequence",
    "cluster",
    "label_sequence",
    "DelayVectorSet",
    "embed",
    "search_delay",
    "FitOptions",
    "FitReport",
    "HDIModel",
    "fit",
    "loss_and_gradient",
    "resimulate",
    "rollout",
    "SymbolSequence",
    "TransitionMatrix",
    "estimate_transition_matrix",
    "is_irreducible",
    "sample_chain",
    "PipelineConfig",
    "RunArtifacts",
    "evaluate_run",
    "run_pipeline",
    "GeneratorSet",
    "ObservationSeries",
    "Trajectory",
    "builtin_system",
    "observe",
    "simulate",
    "WeightedDigraph",
    "elementary_circuits",
    "embed_mc",
    "transition_graph",
    "unembed",
]
