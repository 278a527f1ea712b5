"""Primary acceptance criteria, one test each.

Every test carries an ``acceptance`` marker; the terminal summary prints a
PASS/FAIL line per criterion with the measured value next to it.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ifslearn import markov
from ifslearn.hdi import HDIModel, RolloutOverflow, loss_and_gradient, rollout
from ifslearn.tdemc import (
    WeightedDigraph,
    directed_distance,
    elementary_circuits,
    embed_mc,
    graph_to_matrix,
    unembed,
)

from test_tdemc import (
    FIG3_CIRCUITS,
    brute_force_cycles,
    closed_walk,
    fig3_graph,
    random_digraph,
    random_irreducible,
    sparse_irreducible,
    symbol_map,
    word_graph,
)

ROUND_TRIP_MIN = 200
ROUND_TRIP_SECONDS = 60.0
WEIGHT_TOL = 1e-12
PROPOSITION_MIN = 100
PURITY_MIN = 0.99
P_TOL = 0.05
MSE_MAX = 1e-3
PIPELINE_SECONDS = 300.0
GRADIENT_INSTANCES = 50
GRADIENT_TOL = 1e-5


@pytest.mark.acceptance("TDEMC round trip")
def test_round_trip(note):
    rng = np.random.default_rng(31)
    t0 = time.perf_counter()
    count, worst = 0, 0.0
    for k in range(2, 6):
        for m in range(2, 5):
            for _ in range(20 if k * m <= 12 else 12):
                A = random_irreducible(rng, k, rng.uniform(0.35, 1.0))
                gz, truth = embed_mc(A, m)
                gx, phi = unembed(gz, m)
                perm = symbol_map(phi, truth)
                assert len(gx.nodes) == k and len(gx.edges) == np.count_nonzero(A)
                for (a, b), w in gx.edges.items():
                    worst = max(worst, abs(A[perm[a] - 1, perm[b] - 1] - w))
                count += 1
    elapsed = time.perf_counter() - t0
    note(f"{count} chains, max weight error {worst:.1e}, {elapsed:.1f} s")
    assert count >= ROUND_TRIP_MIN
    assert worst <= WEIGHT_TOL
    assert elapsed < ROUND_TRIP_SECONDS


@pytest.mark.acceptance("worked 4-node example")
def test_worked_example(note):
    g, P, word = fig3_graph()
    gx, phi = unembed(g, 2)
    # the labels 1 and 2 are arbitrary, so the swapped words are equally correct
    swap = {v: tuple(3 - a for a in w) for v, w in word.items()}
    assert phi.map in (word, swap)
    Q = graph_to_matrix(gx).entries
    if phi.map == swap:
        Q = Q[::-1, ::-1]
    note(f"phi {phi.map}")
    assert len(gx.nodes) == 2
    assert np.allclose(Q, P, atol=WEIGHT_TOL, rtol=0)


@pytest.mark.acceptance("circuit enumeration")
def test_circuits(note):
    g, _, _ = fig3_graph()
    assert [c.nodes for c in elementary_circuits(g)] == FIG3_CIRCUITS
    rng = np.random.default_rng(32)
    for _ in range(300):
        h = random_digraph(rng, int(rng.integers(1, 6)), rng.uniform(0.2, 0.9))
        assert {c.nodes for c in elementary_circuits(h)} == brute_force_cycles(h)
    note("6 circuits on the worked example, 300 random digraphs match brute force")


def _sparse_family(seed, n):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k, m = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        A = sparse_irreducible(rng, k)
        gz, truth = embed_mc(A, m)
        gx = WeightedDigraph(tuple(range(1, k + 1)), {(a + 1, b + 1): A[a, b] for a, b in zip(*np.nonzero(A))})
        out.append((m, gz, truth, gx))
    return out


@pytest.mark.acceptance("proposition suite")
def test_propositions(note):
    n = 120
    rng = np.random.default_rng(33)

    # irreducibility of a chain and of its word graph agree
    for _ in range(n):
        k, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        A = rng.random((k, k)) * (rng.random((k, k)) < 0.5)
        for i in range(k):
            if A[i].sum() == 0:
                A[i, rng.integers(k)] = 1.0
        A /= A.sum(axis=1, keepdims=True)
        words, edges = word_graph(A, m)
        idx = {w: i for i, w in enumerate(words)}
        M = csr_matrix(
            (np.ones(len(edges)), ([idx[u] for u, _ in edges], [idx[v] for _, v in edges])),
            shape=(len(words), len(words)),
        )
        assert markov.is_irreducible(A) == (connected_components(M, directed=True, connection="strong")[0] == 1)

    family = _sparse_family(34, n)
    for m, gz, truth, gx in family:
        circ_z = elementary_circuits(gz, limit=50000)
        # the embedded graph has at least as many circuits as the chain
        assert len(circ_z) >= len(elementary_circuits(gx, limit=50000))
        # each embedded circuit projects to a closed walk of the chain
        for c in circ_z:
            assert closed_walk([truth.map[v][0] for v in c], gx)

    # node-disjoint chain circuits embed at least m steps apart
    n_dist = 0
    while n_dist < n:
        k, m = int(rng.integers(3, 6)), int(rng.integers(2, 4))
        A = sparse_irreducible(rng, k)
        for a in rng.choice(k, 2, replace=False):
            A[a, a] = rng.uniform(0.2, 1.0)
        A /= A.sum(axis=1, keepdims=True)
        gz, truth = embed_mc(A, m)
        node_of = {w: v for v, w in truth.map.items()}
        gx = WeightedDigraph(tuple(range(1, k + 1)), {(a + 1, b + 1): A[a, b] for a, b in zip(*np.nonzero(A))})

        def image(c):
            seq = list(c.nodes) * (m // len(c) + 2)
            return {node_of[tuple(seq[i : i + m])] for i in range(len(c))}

        for a, b in itertools.combinations(elementary_circuits(gx, limit=50000), 2):
            if not set(a.nodes) & set(b.nodes):
                assert directed_distance(gz, image(a), image(b)) >= m
                assert directed_distance(gz, image(b), image(a)) >= m
        n_dist += 1
    note(f"{n} instances per property")
    assert n >= PROPOSITION_MIN


@pytest.mark.acceptance("logistic family")
def test_logistic(preset_run, note):
    art, _ = preset_run("logistic3")
    ev = art.evaluation
    note(f"purity {ev.purity:.4f}, P error {ev.transition_error:.4f}")
    assert ev.num_clusters == 3 and ev.num_symbols == 3
    assert ev.purity >= PURITY_MIN
    assert ev.transition_error <= P_TOL


@pytest.mark.acceptance("Henon pipeline")
def test_henon(preset_run, note):
    art, seconds = preset_run("henon")
    ev, res = art.evaluation, art.learned
    note(f"{ev.num_clusters} clusters, dims {res.clusters.dimensions}, MSE {ev.fit_mse:.2e}, {seconds:.0f} s")
    assert ev.num_clusters == 4
    assert res.clusters.dimensions == (2, 2, 2, 2)
    assert ev.num_symbols == 2 and markov.is_irreducible(res.P_hat.entries)
    assert res.model.V == 1 and res.model.degree == 2
    assert ev.fit_mse <= MSE_MAX
    assert seconds < PIPELINE_SECONDS


@pytest.mark.acceptance("Sierpinski pipeline")
def test_sierpinski(preset_run, note):
    art, seconds = preset_run("sierpinski")
    ev, res = art.evaluation, art.learned
    note(f"{ev.num_clusters} clusters, P error {ev.transition_error:.4f}, MSE {ev.fit_mse:.2e}, {seconds:.0f} s")
    assert ev.num_clusters == 9
    assert ev.num_symbols == 3 and ev.transition_error <= P_TOL
    assert res.model.V == 1 and res.model.degree == 3
    assert ev.fit_mse <= MSE_MAX
    assert seconds < PIPELINE_SECONDS


def _fd_error(model, z, w, step=1e-6):
    _, gC, gh = loss_and_gradient(model, z, w)
    a = np.concatenate([gC.ravel(), gh])
    theta = model.to_vector()
    f = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        f[i] = (rollout(model.from_vector(theta + e), z, w).mse - rollout(model.from_vector(theta - e), z, w).mse) / (2 * step)
    den = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-3 * np.abs(a).max())
    return float(np.max(np.abs(a - f) / den))


@pytest.mark.acceptance("gradient verification")
def test_gradient(note):
    rng = np.random.default_rng(35)
    errors = []
    while len(errors) < GRADIENT_INSTANCES:
        k, V, d = int(rng.integers(1, 4)), int(rng.integers(0, 3)), int(rng.integers(1, 4))
        m = HDIModel.zeros(k, V, d)
        m = m.from_vector(rng.normal(0.0, 0.2, m.n_params))
        z = rng.uniform(-1, 1, 31)
        w = rng.integers(1, k + 1, 30)
        try:
            errors.append(_fd_error(m, z, w))
        except RolloutOverflow:
            continue
    note(f"max relative error {max(errors):.1e} over {len(errors)} instances")
    assert max(errors) <= GRADIENT_TOL


@pytest.mark.acceptance("determinism")
def test_determinism(preset_run, note):
    a, _ = preset_run("logistic3", tag="a")
    b, _ = preset_run("logistic3", tag="b")
    note(f"{len(a['manifest'].read_text().splitlines())} hashed files")
    assert a["manifest"].read_bytes() == b["manifest"].read_bytes()
