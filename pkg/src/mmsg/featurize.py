"""Fixed-width atom (127) and bond (12) attribute vectors."""

from __future__ import annotations

import numpy as np

from mmsg.chem.elements import atomic_mass, atomic_number
from mmsg.chem.graph import Atom, Bond, BondOrder, BondStereo, Chirality, MolGraph

N_ATOM_TYPES = 100
DEGREES = 6
CHARGES = (-2, -1, 0, 1, 2)
CHIRALITIES = (Chirality.UNSPECIFIED, Chirality.CW, Chirality.CCW, Chirality.OTHER)
H_COUNTS = 5
HYBRIDIZATIONS = ("sp", "sp2", "sp3", "sp3d", "sp3d2")

ATOM_DIM = N_ATOM_TYPES + DEGREES + len(CHARGES) + len(CHIRALITIES) + H_COUNTS + len(HYBRIDIZATIONS) + 1 + 1
BOND_ORDERS = (BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC)
STEREOS = (BondStereo.NONE, BondStereo.ANY, BondStereo.E, BondStereo.Z, BondStereo.CIS, BondStereo.TRANS)
BOND_DIM = len(BOND_ORDERS) + len(STEREOS) + 1 + 1

# block offsets inside the atom vector
ATOM_BLOCKS = {}
_off = 0
for _name, _size in (
    ("type", N_ATOM_TYPES),
    ("degree", DEGREES),
    ("charge", len(CHARGES)),
    ("chirality", len(CHIRALITIES)),
    ("hcount", H_COUNTS),
    ("hybridization", len(HYBRIDIZATIONS)),
    ("aromatic", 1),
    ("mass", 1),
):
    ATOM_BLOCKS[_name] = slice(_off, _off + _size)
    _off += _size
assert _off == ATOM_DIM == 127

BOND_BLOCKS = {"order": slice(0, 4), "stereo": slice(4, 10), "in_ring": slice(10, 11), "conjugated": slice(11, 12)}


def atom_type_index(element: str) -> int:
    """Atomic number minus one; slot 99 collects everything from Z = 100 up."""
    z = atomic_number(element)
    return z - 1 if z <= 99 else N_ATOM_TYPES - 1


def hybridization(graph: MolGraph, v: int) -> str:
    heavy = graph.heavy_degree(v)
    if heavy == 5:
        return "sp3d"
    if heavy >= 6:
        return "sp3d2"
    orders = [graph.directed_edges[e][2].order for e in graph.incoming[v]]
    doubles = orders.count(BondOrder.DOUBLE)
    if BondOrder.TRIPLE in orders or doubles >= 2:
        return "sp"
    if doubles == 1 or graph.atoms[v].aromatic or BondOrder.AROMATIC in orders:
        return "sp2"
    return "sp3"


def atom_features(atom: Atom, graph: MolGraph, atom_index: int) -> np.ndarray:
    x = np.zeros(ATOM_DIM)
    b = ATOM_BLOCKS
    x[b["type"].start + atom_type_index(atom.element)] = 1.0
    x[b["degree"].start + min(graph.heavy_degree(atom_index), DEGREES - 1)] = 1.0
    charge = min(max(atom.formal_charge, CHARGES[0]), CHARGES[-1])
    x[b["charge"].start + CHARGES.index(charge)] = 1.0
    x[b["chirality"].start + CHIRALITIES.index(atom.chirality)] = 1.0
    x[b["hcount"].start + min(atom.total_h, H_COUNTS - 1)] = 1.0
    x[b["hybridization"].start + HYBRIDIZATIONS.index(hybridization(graph, atom_index))] = 1.0
    x[b["aromatic"].start] = float(atom.aromatic)
    x[b["mass"].start] = atomic_mass(atom.element) / 100.0
    return x


def bond_features(bond: Bond) -> np.ndarray:
    x = np.zeros(BOND_DIM)
    x[BOND_ORDERS.index(bond.order)] = 1.0
    x[4 + STEREOS.index(bond.stereo)] = 1.0
    x[10] = float(bond.in_ring)
    x[11] = float(bond.conjugated)
    return x


def featurize(graph: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Atom matrix (n_atoms x 127) and directed-edge matrix (n_edges x 12)."""
    xv = np.stack([atom_features(a, graph, i) for i, a in enumerate(graph.atoms)]) if graph.n_atoms else np.zeros((0, ATOM_DIM))
    if graph.n_edges:
        xe = np.stack([bond_features(bond) for _, _, bond in graph.directed_edges])
    else:
        xe = np.zeros((0, BOND_DIM))
    return xv, xe
