from mmsg.chem.graph import Atom, Bond, BondOrder, BondStereo, Chirality, MolGraph, implicit_hydrogen_count, parse
from mmsg.chem.scaffold import murcko_scaffold, murcko_subgraph
from mmsg.chem.tokenizer import (
    Token,
    TokenDictionary,
    TokenKind,
    TokenSequence,
    build_dictionary,
    split_tokens,
    tokenize,
)

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "BondStereo",
    "Chirality",
    "MolGraph",
    "Token",
    "TokenDictionary",
    "TokenKind",
    "TokenSequence",
    "build_dictionary",
    "implicit_hydrogen_count",
    "murcko_scaffold",
    "murcko_subgraph",
    "parse",
    "split_tokens",
    "tokenize",
]
