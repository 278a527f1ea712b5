"""Undo a length-2 embedding of a two-state chain.

Embedding a chain over words of length 2 gives four nodes, one per word.
Unembedding only sees the four-node graph with anonymous nodes, and it must
find which word each node stands for. The shortest circuits are grown first,
and overlapping words must agree on their shared symbol.

Run with ``python3 demos/worked_graph_example.py``.
"""

import numpy as np

from ifslearn import tdemc

P = np.array([[0.3, 0.7], [0.6, 0.4]])
gz, words = tdemc.embed_mc(P, 2)
print("embedded graph edges:")
for (u, v), w in sorted(gz.edges.items()):
    print(f"  {u} -> {v}  {w:.2f}")

print("elementary circuits, shortest first:")
for group in tdemc.circuits_by_length(gz):
    for c in group:
        print("  ", c.nodes)

gx, phi = tdemc.unembed(gz, 2)
print("recovered words:", phi.map)
print("true words:     ", words.map)
print("recovered chain:")
print(tdemc.graph_to_matrix(gx).entries)
