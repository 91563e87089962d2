"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MmsgError(Exception):
    """Base class for every error raised by this package."""


class DataError(MmsgError, ValueError):
    """Input data (SMILES, CSV, labels) is unusable."""


class TokenizeError(DataError):
    def __init__(self, position: int, smiles: str, reason: str = "cannot tokenize"):
        self.position = position
        self.smiles = smiles
        super().__init__(f"{reason} at position {position} in {smiles!r}")


class UnknownToken(DataError):
    def __init__(self, position: int, token: str):
        self.position = position
        self.token = token
        super().__init__(f"token {token!r} at position {position} is not in the dictionary")


class EmptyCorpus(DataError):
    pass


class UnknownElement(DataError):
    pass


class ParseError(DataError):
    """SMILES tokenized but does not describe a valid molecular graph."""


class UnclosedRing(ParseError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"ring closure {label} is never closed")


class UnbalancedParentheses(ParseError):
    pass


class ValenceError(ParseError):
    def __init__(self, atom_index: int, detail: str = ""):
        self.atom_index = atom_index
        super().__init__(f"valence violated at atom {atom_index}" + (f": {detail}" if detail else ""))


class SequenceTooLong(DataError):
    pass


class EmptySequence(DataError):
    pass


class MissingSmilesColumn(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DatasetTooSmall(DataError):
    pass


class ShapeMismatch(MmsgError, ValueError):
    pass


class IndexOutOfRange(MmsgError, IndexError):
    pass


class InvalidSchedule(MmsgError, ValueError):
    pass


class ConfigError(MmsgError, ValueError):
    pass


class SingleClass(MmsgError, ValueError):
    pass


class AllMasked(MmsgError, ValueError):
    pass


class EmptyBatch(MmsgError, ValueError):
    pass


class NonDeterministicLoss(MmsgError, RuntimeError):
    pass
