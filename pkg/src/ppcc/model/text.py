"""Alphabet coding and the concatenated runs text."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import IndexFormatError, LabelMismatchError, ModelError, UnknownLabelError
from .petri import ActivityLabel

SENTINEL = "$"
SEPARATOR = ";"


@dataclass(frozen=True)
class Alphabet:
    """'$' is code 0, ';' is the largest code, activities sit in between
    in lexicographic order."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        s = self.symbols
        if len(s) < 2 or s[0] != SENTINEL or s[-1] != SEPARATOR:
            raise IndexFormatError("alphabet must start with '$' and end with ';'")
        inner = s[1:-1]
        if list(inner) != sorted(set(inner)):
            raise IndexFormatError("activity labels must be distinct and sorted")
        object.__setattr__(self, "_codes", {sym: i for i, sym in enumerate(s)})

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Alphabet":
        names = set(labels)
        reserved = names & {SENTINEL, SEPARATOR}
        if reserved:
            raise ModelError(f"labels {sorted(reserved)} are reserved")
        if "" in names:
            raise ModelError("empty activity label")
        return cls((SENTINEL, *sorted(names), SEPARATOR))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def width(self) -> int:
        return max(1, math.ceil(math.log2(self.size)))

    @property
    def code(self) -> dict[str, int]:
        return dict(self._codes)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.symbols[1:-1]

    @property
    def sentinel_code(self) -> int:
        return 0

    @property
    def separator_code(self) -> int:
        return self.size - 1

    def encode(self, label: str) -> int:
        try:
            return self._codes[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def encode_seq(self, labels: Iterable[str]) -> list[int]:
        return [self.encode(x) for x in labels]

    def decode(self, code: int) -> str:
        if not 0 <= code < self.size:
            raise IndexFormatError(f"code {code} outside alphabet")
        return self.symbols[code]

    def __contains__(self, label):
        return label in self._codes


def _names(labels) -> set[str]:
    out = set()
    for lab in labels:
        if isinstance(lab, ActivityLabel):
            if not lab.silent:
                out.add(lab.name)
        else:
            out.add(lab)
    return out


def relabel(model_labels, log_labels) -> Alphabet:
    """Shared alphabet for a model and a log whose label sets coincide."""
    model, log = _names(model_labels), _names(log_labels)
    if model != log:
        raise LabelMismatchError(model ^ log)
    return Alphabet.from_labels(model)


@dataclass(frozen=True)
class RunsText:
    codes: tuple[int, ...]
    alphabet: Alphabet

    def __post_init__(self):
        c = self.codes
        if not c or c[-1] != 0 or 0 in c[:-1]:
            raise IndexFormatError("runs text must end with exactly one '$'")
        if any(not 0 <= x < self.alphabet.size for x in c):
            raise IndexFormatError("runs text has codes outside the alphabet")
        if len(c) > 1 and c[-2] != self.alphabet.separator_code:
            raise IndexFormatError("every run must be followed by ';'")

    @property
    def length(self) -> int:
        return len(self.codes)

    def __len__(self):
        return len(self.codes)

    def __str__(self):
        return "".join(self.alphabet.symbols[x] for x in self.codes)

    def runs(self) -> list[tuple[str, ...]]:
        """Split on ';' back into label sequences."""
        out, cur = [], []
        for x in self.codes[:-1]:
            if x == self.alphabet.separator_code:
                out.append(tuple(cur))
                cur = []
            else:
                cur.append(self.alphabet.symbols[x])
        return out

    @classmethod
    def from_string(cls, text: str, alphabet: Alphabet) -> "RunsText":
        """Single-character labels only; handy for small examples."""
        return cls(tuple(alphabet.encode(ch) for ch in text), alphabet)


def concatenate(seqs: Iterable[Sequence[str]], alphabet: Alphabet) -> RunsText:
    codes = []
    seen = set()
    for seq in seqs:
        key = tuple(seq)
        if key in seen:
            continue
        seen.add(key)
        codes.extend(alphabet.encode(x) for x in key)
        codes.append(alphabet.separator_code)
    codes.append(alphabet.sentinel_code)
    return RunsText(tuple(codes), alphabet)
