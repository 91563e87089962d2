"""Bemis-Murcko style scaffolds and a canonical key for grouping them."""

from __future__ import annotations

import networkx as nx

from mmsg.chem.graph import MolGraph


def ring_atoms(graph: MolGraph) -> set[int]:
    return {v for a, b, bond in graph.bonds if bond.in_ring for v in (a, b)}


def murcko_subgraph(graph: MolGraph) -> MolGraph:
    """Strip non-ring atoms of degree <= 1 until none remain.

    Acyclic molecules reduce to the empty graph; stray counter-ions go too.
    """
    rings = ring_atoms(graph)
    if not rings:
        return MolGraph(atoms=(), directed_edges=(), smiles="")
    alive = set(range(graph.n_atoms))
    adj = {v: set(graph.neighbors(v)) for v in alive}
    changed = True
    while changed:
        changed = False
        for v in sorted(alive):
            if v not in rings and len(adj[v]) <= 1:
                for u in adj[v]:
                    adj[u].discard(v)
                alive.discard(v)
                del adj[v]
                changed = True
    keep = sorted(alive)
    remap = {old: new for new, old in enumerate(keep)}
    edges = []
    for a, b, bond in graph.bonds:
        if a in remap and b in remap:
            edges.append((remap[a], remap[b], bond))
            edges.append((remap[b], remap[a], bond))
    return MolGraph(atoms=tuple(graph.atoms[v] for v in keep), directed_edges=tuple(edges), smiles="")


def graph_key(graph: MolGraph) -> str:
    """Isomorphism-invariant digest over element, aromaticity and bond order."""
    if graph.n_atoms == 0:
        return ""
    return nx.weisfeiler_lehman_graph_hash(
        graph.to_networkx(), node_attr="label", edge_attr="label", iterations=graph.n_atoms
    )


def murcko_scaffold(graph: MolGraph) -> str:
    return graph_key(murcko_subgraph(graph))
