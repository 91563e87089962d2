"""Periodic-table lookups and SMILES element subsets."""

from __future__ import annotations

from functools import lru_cache

import periodictable

from mmsg.errors import UnknownElement

ATOMIC_NUMBER: dict[str, int] = {el.symbol: el.number for el in periodictable.elements if el.number > 0}

# Default valences of the organic subset; the smallest value that fits the
# bond-order sum is used when assigning implicit hydrogens.
DEFAULT_VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ORGANIC_SUBSET = frozenset(DEFAULT_VALENCES)
AROMATIC_ORGANIC = frozenset({"b", "c", "n", "o", "p", "s"})
# lowercase symbols legal inside brackets
AROMATIC_BRACKET = frozenset({"b", "c", "n", "o", "p", "s", "se", "as", "te"})


def atomic_number(symbol: str) -> int:
    try:
        return ATOMIC_NUMBER[symbol]
    except KeyError:
        raise UnknownElement(f"unknown element symbol {symbol!r}") from None


def is_element(symbol: str) -> bool:
    return symbol in ATOMIC_NUMBER


@lru_cache(maxsize=None)
def atomic_mass(symbol: str) -> float:
    """Standard atomic weight in daltons."""
    return float(periodictable.elements[atomic_number(symbol)].mass)
