"""SMILES tokenization and the corpus-derived token dictionary."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from mmsg.chem.elements import AROMATIC_BRACKET, is_element
from mmsg.errors import EmptyCorpus, EmptySequence, TokenizeError, UnknownToken


class TokenKind(str, enum.Enum):
    ATOM = "atom"
    BRACKET_ATOM = "bracket_atom"
    BOND = "bond"
    RING_CLOSURE = "ring_closure"
    BRANCH_OPEN = "branch_open"
    BRANCH_CLOSE = "branch_close"
    DOT = "dot"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind
    position: int = field(default=0, compare=False)


BRACKET_RE = re.compile(
    r"""^(?P<isotope>\d+)?
        (?P<symbol>se|as|te|[bcnops]|[A-Z][a-z]?)
        (?P<chirality>@@|@TH[12]|@AL[12]|@SP[123]|@TB\d{1,2}|@OH\d{1,2}|@)?
        (?P<hcount>H\d*)?
        (?P<charge>\++\d*|-+\d*)?
        (?P<atom_class>:\d+)?$""",
    re.VERBOSE,
)

_BOND_CHARS = frozenset("-=#$:/\\")
_SINGLE_ATOMS = frozenset("BCNOPSFIbcnops")


def parse_bracket(text: str, position: int = 0, smiles: str | None = None) -> re.Match:
    """Validate the inside of a bracket atom and return the regex match."""
    m = BRACKET_RE.match(text[1:-1])
    if m is None:
        raise TokenizeError(position, smiles or text, f"malformed bracket atom {text}")
    symbol = m.group("symbol")
    if symbol not in AROMATIC_BRACKET and not is_element(symbol):
        raise TokenizeError(position, smiles or text, f"invalid element {symbol!r}")
    return m


def split_tokens(smiles: str) -> list[Token]:
    """Split a SMILES string into tokens; concatenated texts equal the input."""
    if not smiles:
        raise EmptySequence("empty SMILES string")
    tokens: list[Token] = []
    i, n = 0, len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            j = smiles.find("]", i + 1)
            if j < 0:
                raise TokenizeError(i, smiles, "unterminated bracket atom")
            text = smiles[i : j + 1]
            parse_bracket(text, i, smiles)
            tokens.append(Token(text, TokenKind.BRACKET_ATOM, i))
            i = j + 1
        elif smiles.startswith(("Cl", "Br"), i):
            tokens.append(Token(smiles[i : i + 2], TokenKind.ATOM, i))
            i += 2
        elif ch in _SINGLE_ATOMS:
            tokens.append(Token(ch, TokenKind.ATOM, i))
            i += 1
        elif ch in _BOND_CHARS:
            tokens.append(Token(ch, TokenKind.BOND, i))
            i += 1
        elif ch.isdigit():
            tokens.append(Token(ch, TokenKind.RING_CLOSURE, i))
            i += 1
        elif ch == "%":
            text = smiles[i : i + 3]
            if len(text) != 3 or not text[1:].isdigit():
                raise TokenizeError(i, smiles, "'%' must be followed by two digits")
            tokens.append(Token(text, TokenKind.RING_CLOSURE, i))
            i += 3
        elif ch == "(":
            tokens.append(Token(ch, TokenKind.BRANCH_OPEN, i))
            i += 1
        elif ch == ")":
            tokens.append(Token(ch, TokenKind.BRANCH_CLOSE, i))
            i += 1
        elif ch == ".":
            tokens.append(Token(ch, TokenKind.DOT, i))
            i += 1
        else:
            raise TokenizeError(i, smiles, f"unexpected character {ch!r}")
    return tokens


PAD = "<pad>"
UNK = "<unk>"


class TokenDictionary:
    """Ordered vocabulary; PAD is id 0 and UNK is id 1."""

    pad_id = 0
    unk_id = 1

    def __init__(self, tokens: Iterable[str]):
        self.tokens: list[str] = [PAD, UNK]
        for t in tokens:
            if t in (PAD, UNK):
                continue
            if t in self.tokens:
                raise ValueError(f"duplicate token {t!r}")
            self.tokens.append(t)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, text: str) -> bool:
        return text in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TokenDictionary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"TokenDictionary({len(self)} tokens)"

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TokenDictionary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [PAD, UNK]:
            raise ValueError(f"{path}: dictionary must start with {PAD} and {UNK}")
        return cls(line for line in lines[2:] if line)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)


def build_dictionary(corpus: Iterable[str]) -> TokenDictionary:
    """Collect the distinct tokens of ``corpus`` in first-appearance order."""
    seen: dict[str, None] = {}
    count = 0
    for smiles in corpus:
        count += 1
        for tok in split_tokens(smiles):
            seen.setdefault(tok.text, None)
    if count == 0:
        raise EmptyCorpus("cannot build a dictionary from an empty corpus")
    return TokenDictionary(seen)


def tokenize(smiles: str, dictionary: TokenDictionary, allow_unknown: bool = True) -> TokenSequence:
    ids = []
    for tok in split_tokens(smiles):
        idx = dictionary.index.get(tok.text)
        if idx is None:
            if not allow_unknown:
                raise UnknownToken(tok.position, tok.text)
            idx = dictionary.unk_id
        ids.append(idx)
    return TokenSequence(tuple(ids))
