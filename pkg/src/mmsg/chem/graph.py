"""Molecular graph built from SMILES: atoms plus paired directed bonds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property

import networkx as nx

from mmsg.chem.elements import DEFAULT_VALENCES, atomic_number
from mmsg.chem.tokenizer import TokenKind, parse_bracket, split_tokens
from mmsg.errors import ParseError, UnbalancedParentheses, UnclosedRing, ValenceError


class Chirality(str, enum.Enum):
    UNSPECIFIED = "unspecified"
    CW = "CW"
    CCW = "CCW"
    OTHER = "other"


class BondOrder(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> float:
        return _VALENCE_CONTRIB[self]


_VALENCE_CONTRIB = {
    BondOrder.SINGLE: 1.0,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 3.0,
    BondOrder.AROMATIC: 1.5,
}


class BondStereo(str, enum.Enum):
    NONE = "none"
    ANY = "any"
    E = "E"
    Z = "Z"
    CIS = "cis"
    TRANS = "trans"


@dataclass(frozen=True)
class Atom:
    element: str
    formal_charge: int = 0
    explicit_h: int | None = None
    aromatic: bool = False
    chirality: Chirality = Chirality.UNSPECIFIED
    isotope: int | None = None
    # filled in by parse(): implicit or bracket H plus attached explicit [H] atoms
    total_h: int = 0

    @property
    def is_bracket(self) -> bool:
        return self.explicit_h is not None

    @property
    def atomic_number(self) -> int:
        return atomic_number(self.element)


@dataclass(frozen=True)
class Bond:
    order: BondOrder
    stereo: BondStereo = BondStereo.NONE
    in_ring: bool = False
    conjugated: bool = False


@dataclass(frozen=True, eq=False)
class MolGraph:
    """Atoms and directed edges; bond ``k`` owns edges ``2k`` and ``2k + 1``."""

    atoms: tuple[Atom, ...]
    directed_edges: tuple[tuple[int, int, Bond], ...]
    smiles: str = ""

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_edges(self) -> int:
        return len(self.directed_edges)

    @property
    def n_bonds(self) -> int:
        return len(self.directed_edges) // 2

    def rev(self, e: int) -> int:
        return e ^ 1

    @cached_property
    def rev_map(self) -> tuple[int, ...]:
        return tuple(e ^ 1 for e in range(self.n_edges))

    @cached_property
    def incoming(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in self.atoms]
        for e, (_, dst, _) in enumerate(self.directed_edges):
            inc[dst].append(e)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def outgoing(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.atoms]
        for e, (src, _, _) in enumerate(self.directed_edges):
            out[src].append(e)
        return tuple(tuple(x) for x in out)

    @property
    def bonds(self) -> list[tuple[int, int, Bond]]:
        """Undirected bonds in parse order."""
        return list(self.directed_edges[0::2])

    def neighbors(self, v: int) -> list[int]:
        return [self.directed_edges[e][0] for e in self.incoming[v]]

    def degree(self, v: int) -> int:
        return len(self.incoming[v])

    def heavy_degree(self, v: int) -> int:
        return sum(1 for u in self.neighbors(v) if self.atoms[u].element != "H")

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for i, a in enumerate(self.atoms):
            g.add_node(i, label=f"{a.element}{'~' if a.aromatic else ''}")
        for a, b, bond in self.bonds:
            g.add_edge(a, b, label=bond.order.value)
        return g

    def __repr__(self) -> str:
        return f"MolGraph({self.smiles!r}, atoms={self.n_atoms}, bonds={self.n_bonds})"


def implicit_hydrogen_count(atom: Atom, bonded_order_sum: float, atom_index: int = -1) -> int:
    """Hydrogen count for ``atom`` given the summed orders of its bonds.

    Aromatic bonds contribute 1.5 each and the sum is floored. Aromatic atoms
    get one unit of slack for their pi contribution, so pyrrole-type ``o``/``s``
    and substituted ring ``n`` resolve to zero hydrogens instead of failing.
    """
    if atom.explicit_h is not None:
        return atom.explicit_h
    total = math.floor(bonded_order_sum + 1e-9)
    valences = DEFAULT_VALENCES.get(atom.element)
    if valences is None:
        raise ValenceError(atom_index, f"{atom.element} outside the organic subset needs brackets")
    needed = total - 1 if atom.aromatic else total
    if needed > valences[-1]:
        raise ValenceError(atom_index, f"{atom.element} with bond order sum {bonded_order_sum}")
    target = next(v for v in valences if v >= needed)
    return max(0, target - total)


_BOND_SYMBOL = {
    "-": BondOrder.SINGLE,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}


def _atom_from_token(text: str, kind: TokenKind) -> Atom:
    if kind is TokenKind.ATOM:
        aromatic = text.islower()
        return Atom(element=text.capitalize(), aromatic=aromatic)
    m = parse_bracket(text)
    symbol = m.group("symbol")
    aromatic = symbol.islower()
    hcount = m.group("hcount")
    h = 0 if hcount is None else (int(hcount[1:]) if len(hcount) > 1 else 1)
    charge_txt = m.group("charge")
    charge = 0
    if charge_txt:
        sign = 1 if charge_txt[0] == "+" else -1
        digits = charge_txt.lstrip("+-")
        charge = sign * (int(digits) if digits else len(charge_txt))
    chir = m.group("chirality")
    chirality = {None: Chirality.UNSPECIFIED, "@": Chirality.CCW, "@@": Chirality.CW}.get(chir, Chirality.OTHER)
    iso = m.group("isotope")
    return Atom(
        element=symbol.capitalize(),
        formal_charge=charge,
        explicit_h=h,
        aromatic=aromatic,
        chirality=chirality,
        isotope=int(iso) if iso else None,
    )


def _resolve_ring_bond(open_sym: str | None, close_sym: str | None, label: str) -> str | None:
    if open_sym is None or close_sym is None:
        return open_sym or close_sym
    a, b = _BOND_SYMBOL.get(open_sym), _BOND_SYMBOL.get(close_sym)
    if a != b:
        raise ParseError(f"conflicting bond symbols {open_sym!r}/{close_sym!r} on ring closure {label}")
    return open_sym


def parse(smiles: str) -> MolGraph:
    """Parse SMILES into a :class:`MolGraph`.

    Aromaticity is taken from lowercase symbols as written; no perception is
    attempted. An unmarked bond between two aromatic atoms is aromatic only if
    it lies on a ring, otherwise single.
    """
    tokens = split_tokens(smiles)
    atoms: list[Atom] = []
    # raw bonds: (first atom, second atom, symbol or None) in writing order
    raw: list[tuple[int, int, str | None]] = []
    pairs: set[frozenset[int]] = set()
    prev: int | None = None
    pending: str | None = None
    branches: list[int] = []
    rings: dict[str, tuple[int, str | None]] = {}

    def add_bond(a: int, b: int, sym: str | None) -> None:
        if a == b:
            raise ParseError(f"atom {a} bonded to itself in {smiles!r}")
        key = frozenset((a, b))
        if key in pairs:
            raise ParseError(f"duplicate bond between atoms {a} and {b} in {smiles!r}")
        if sym == "$":
            raise ParseError("quadruple bonds are not supported")
        pairs.add(key)
        raw.append((a, b, sym))

    for tok in tokens:
        kind = tok.kind
        if kind in (TokenKind.ATOM, TokenKind.BRACKET_ATOM):
            atoms.append(_atom_from_token(tok.text, kind))
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending)
            elif pending is not None:
                raise ParseError(f"bond symbol without a preceding atom at {tok.position}")
            prev, pending = idx, None
        elif kind is TokenKind.BOND:
            if prev is None or pending is not None:
                raise ParseError(f"misplaced bond symbol {tok.text!r} at {tok.position}")
            pending = tok.text
        elif kind is TokenKind.RING_CLOSURE:
            if prev is None:
                raise ParseError(f"ring closure without an atom at {tok.position}")
            label = tok.text.lstrip("%")
            if label in rings:
                other, sym = rings.pop(label)
                if pending is not None and sym is None:
                    # symbol written at the closing end: bond runs closing -> opening
                    add_bond(prev, other, pending)
                else:
                    add_bond(other, prev, _resolve_ring_bond(sym, pending, label))
            else:
                rings[label] = (prev, pending)
            pending = None
        elif kind is TokenKind.BRANCH_OPEN:
            if prev is None or pending is not None:
                raise UnbalancedParentheses(f"branch opened without an atom at {tok.position}")
            branches.append(prev)
        elif kind is TokenKind.BRANCH_CLOSE:
            if not branches:
                raise UnbalancedParentheses(f"unmatched ')' at {tok.position}")
            if pending is not None:
                raise ParseError(f"dangling bond before ')' at {tok.position}")
            prev = branches.pop()
        else:  # dot
            if pending is not None or prev is None:
                raise ParseError(f"misplaced '.' at {tok.position}")
            prev = None

    if branches:
        raise UnbalancedParentheses(f"{len(branches)} unclosed '(' in {smiles!r}")
    if rings:
        raise UnclosedRing(next(iter(rings)))
    if pending is not None:
        raise ParseError(f"dangling bond at end of {smiles!r}")
    if not atoms:
        raise ParseError(f"no atoms in {smiles!r}")

    return _assemble(smiles, atoms, raw)


def _assemble(smiles: str, atoms: list[Atom], raw: list[tuple[int, int, str | None]]) -> MolGraph:
    g = nx.Graph()
    g.add_nodes_from(range(len(atoms)))
    g.add_edges_from((a, b) for a, b, _ in raw)
    bridges = {frozenset(e) for e in nx.bridges(g)}
    in_ring = [frozenset((a, b)) not in bridges for a, b, _ in raw]

    orders: list[BondOrder] = []
    for (a, b, sym), ring in zip(raw, in_ring):
        if sym is None:
            order = BondOrder.AROMATIC if atoms[a].aromatic and atoms[b].aromatic else BondOrder.SINGLE
        else:
            order = _BOND_SYMBOL[sym]
        if order is BondOrder.AROMATIC and not ring:
            order = BondOrder.SINGLE
        orders.append(order)

    incident: list[list[int]] = [[] for _ in atoms]
    for k, (a, b, _) in enumerate(raw):
        incident[a].append(k)
        incident[b].append(k)

    # hydrogens
    final_atoms = []
    for i, atom in enumerate(atoms):
        order_sum = sum(orders[k].valence for k in incident[i])
        h = implicit_hydrogen_count(atom, order_sum, i)
        for k in incident[i]:
            a, b, _ = raw[k]
            if atoms[b if a == i else a].element == "H":
                h += 1
        final_atoms.append(replace(atom, total_h=h))

    stereo = _double_bond_stereo(raw, orders, incident)

    multiple = {BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC}

    def has_other_multiple(v: int, k: int) -> bool:
        return any(orders[j] in multiple for j in incident[v] if j != k)

    edges: list[tuple[int, int, Bond]] = []
    for k, (a, b, _) in enumerate(raw):
        conj = orders[k] is BondOrder.AROMATIC or (has_other_multiple(a, k) and has_other_multiple(b, k))
        bond = Bond(order=orders[k], stereo=stereo[k], in_ring=in_ring[k], conjugated=conj)
        edges.append((a, b, bond))
        edges.append((b, a, bond))
    return MolGraph(atoms=tuple(final_atoms), directed_edges=tuple(edges), smiles=smiles)


def _double_bond_stereo(
    raw: list[tuple[int, int, str | None]], orders: list[BondOrder], incident: list[list[int]]
) -> list[BondStereo]:
    """E/Z from '/' and '\\' marks on the neighbours of each double bond.

    E means the two marked neighbours sit on opposite sides.
    """

    def side(v: int, k: int) -> int | None:
        for j in incident[v]:
            if j == k:
                continue
            first, second, sym = raw[j]
            if sym in ("/", "\\"):
                val = 1 if sym == "/" else -1
                return val if v == second else -val
        return None

    out = [BondStereo.NONE] * len(raw)
    for k, (a, b, _) in enumerate(raw):
        if orders[k] is not BondOrder.DOUBLE:
            continue
        sa, sb = side(a, k), side(b, k)
        if sa is not None and sb is not None:
            out[k] = BondStereo.E if sa != sb else BondStereo.Z
    return out
