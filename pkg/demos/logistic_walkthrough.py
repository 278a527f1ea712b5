"""Recover the three logistic maps and their driving chain, one stage at a time.

A driving sequence picks one of r = 3, 3.5, 4 at every step. Only x is seen.
Lag-1 delay vectors (x_n, x_{n+1}) fall on three parabolas; clustering them
and reading the cluster sequence as a Markov chain gives back the driving
symbols up to relabelling.

Run with ``python3 demos/logistic_walkthrough.py``.
"""

import numpy as np

from ifslearn import clustering, embedding, markov, pipeline, systems, tdemc
from ifslearn.hdi import FitOptions

cfg = pipeline.preset_config("logistic3", seed=0)
gs = cfg.generator_set()
drive = markov.sample_chain(markov.TransitionMatrix.uniform(gs.k), cfg.length - 1 + cfg.burn_in, seed=0)
truth = systems.simulate(gs, drive, cfg.x0, burn_in=cfg.burn_in)
obs = systems.observe(truth, "identity")
print(f"{len(obs.values)} observations in [{obs.values.min():.3f}, {obs.values.max():.3f}]")

# Which delay length makes the data look like a few smooth pieces?
search = embedding.search_delay(obs, 4)
print("delay search scores:", search.scores, "-> l =", search.l)

dvs = embedding.embed(obs, search.l)
cm = clustering.cluster(dvs)
print(f"{cm.num_clusters} clusters of dimension {cm.dimensions}, coverage {cm.coverage:.3f}")

# Cluster labels over time form the embedded chain; with l = 2 it is the chain itself.
gz = tdemc.transition_graph(cm.assignments)
gx, phi = tdemc.unembed(gz, 1)
omega = pipeline.decode_symbols(cm.assignments, phi, 1)
print(f"decoded {np.count_nonzero(omega)} of {omega.size} symbols; the rest sit where parabolas cross")

# One polynomial map per symbol; the fitted maps then fill the ambiguous steps.
model, report, (a, _) = pipeline.fit_decoded(obs.values, omega, len(gx.nodes), 0, 2, FitOptions(restarts=2), 0)
for s in range(model.k):
    c = model.coefficients[s, 0]
    print(f"map {s + 1}: x' = {c[0]:+.4f} {c[1]:+.4f} x {c[2]:+.4f} x^2")
full = pipeline.complete_symbols(model, obs.values, omega, a)
P = pipeline.estimate_from_symbols(full, model.k)
print("estimated transition matrix (true: all 1/3):")
print(np.array2string(P.entries, precision=3))
