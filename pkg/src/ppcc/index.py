"""FM-index over the runs text.

The wavelet matrix partitions bit planes least-significant bit first, so
after the last row the sequence is sorted and a boundary position walked
through all rows lands on C(c) + Rank(c, i). Rank tables are kept fully
materialized because the secure protocol ships whole rows of them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

from .alignment import Alignment, LogMove, Move, Sync
from .errors import BudgetExhausted, IndexFormatError
from .model.text import Alphabet, RunsText

MAGIC = b"PCFM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIB")


class Interval(NamedTuple):
    """Half-open interval of suffix array rows."""

    f: int
    g: int

    @property
    def empty(self) -> bool:
        return self.f >= self.g

    @property
    def width(self) -> int:
        return max(0, self.g - self.f)


def _check_text(codes: Sequence[int]) -> None:
    if not codes:
        raise IndexFormatError("empty text")
    if codes[-1] != 0:
        raise IndexFormatError("text must end with '$'")
    if 0 in codes[:-1]:
        raise IndexFormatError("'$' appears more than once")


def build_suffix_array(codes: Sequence[int]) -> list[int]:
    """Prefix doubling, O(n log^2 n). ``codes`` must end with a unique 0."""
    codes = list(codes)
    _check_text(codes)
    n = len(codes)
    rank = codes[:]
    sa = list(range(n))
    k = 1
    while True:
        key = [(rank[i], rank[i + k] if i + k < n else -1) for i in range(n)]
        sa.sort(key=key.__getitem__)
        new = [0] * n
        for j in range(1, n):
            new[sa[j]] = new[sa[j - 1]] + (key[sa[j]] != key[sa[j - 1]])
        rank = new
        if rank[sa[-1]] == n - 1:
            return sa
        k *= 2


def bwt_from_sa(codes: Sequence[int], sa: Sequence[int]) -> list[int]:
    return [codes[i - 1] if i > 0 else 0 for i in sa]


class WaveletMatrix:
    """Bit-plane rows of the BWT with 0-rank and shifted 1-rank tables."""

    def __init__(self, codes: Sequence[int], width: int):
        if width < 1:
            raise IndexFormatError("width must be at least 1")
        limit = 1 << width
        for x in codes:
            if not 0 <= x < limit:
                raise IndexFormatError(f"code {x} does not fit in {width} bits")
        self.width = width
        self.length = len(codes)
        self.rows: list[list[int]] = []
        self.zero_rank: list[list[int]] = []
        self.one_srank: list[list[int]] = []
        row = list(codes)
        for r in range(width):
            self.rows.append(row)
            zr = [0] * (self.length + 1)
            ones = [0] * (self.length + 1)
            for i, x in enumerate(row):
                bit = (x >> r) & 1
                zr[i + 1] = zr[i] + (1 - bit)
                ones[i + 1] = ones[i] + bit
            zeros = zr[-1]
            self.zero_rank.append(zr)
            self.one_srank.append([zeros + v for v in ones])
            row = [x for x in row if not (x >> r) & 1] + [x for x in row if (x >> r) & 1]
        self.sorted_row = row

    def ranks01(self, r: int) -> list[int]:
        """zero_rank[r] followed by one_srank[r]; length 2 * (n + 1)."""
        return self.zero_rank[r] + self.one_srank[r]

    def step(self, r: int, bit: int, pos: int) -> int:
        return self.one_srank[r][pos] if bit else self.zero_rank[r][pos]

    def lf(self, c: int, pos: int) -> int:
        for r in range(self.width):
            pos = self.one_srank[r][pos] if (c >> r) & 1 else self.zero_rank[r][pos]
        return pos


def lf_interval(wm: WaveletMatrix, c: int, iv: Interval, trace: Optional[list] = None) -> Interval:
    f, g = iv
    for r in range(wm.width):
        if (c >> r) & 1:
            table = wm.one_srank[r]
        else:
            table = wm.zero_rank[r]
        f, g = table[f], table[g]
        if trace is not None:
            trace.append(Interval(f, g))
    return Interval(f, g)


def full_interval(wm: WaveletMatrix) -> Interval:
    return Interval(0, wm.length)


def backward_search(wm: WaveletMatrix, q: Sequence[int],
                    steps: Optional[list] = None) -> Interval:
    """Rows whose suffixes start with ``q``; empty when q is not a substring.

    ``steps`` collects the interval after each character.
    """
    iv = full_interval(wm)
    for c in reversed(q):
        if iv.empty:
            break
        iv = lf_interval(wm, c, iv)
        if steps is not None:
            steps.append(iv)
    return iv


def align_with_log_moves(wm: WaveletMatrix, trace: Sequence[str], alphabet: Alphabet,
                         budget: Optional[int] = None) -> Alignment:
    """Greedy restore-and-skip alignment of ``trace`` followed by ';'.

    Characters are processed backwards; a character whose LF step empties
    the interval becomes a log move and the interval is restored. Raises
    BudgetExhausted once log moves exceed ``budget`` (None = unlimited).
    """
    query = alphabet.encode_seq(trace) + [alphabet.separator_code]
    iv = full_interval(wm)
    moves: list[Move] = []
    log_moves = 0
    for c in reversed(query):
        saved = iv
        iv = lf_interval(wm, c, iv)
        label = alphabet.symbols[c]
        if iv.empty:
            iv = saved
            log_moves += 1
            if budget is not None and log_moves > budget:
                raise BudgetExhausted(f"more than {budget} log moves")
            moves.append(LogMove(label))
        else:
            moves.append(Sync(label))
    moves.reverse()
    return Alignment(tuple(moves))


@dataclass(eq=False)
class FmIndex:
    alphabet: Alphabet
    bwt: list[int]
    wm: WaveletMatrix
    sa: Optional[list[int]] = None
    text: Optional[RunsText] = None

    @classmethod
    def build(cls, text: RunsText) -> "FmIndex":
        sa = build_suffix_array(text.codes)
        bwt = bwt_from_sa(text.codes, sa)
        wm = WaveletMatrix(bwt, text.alphabet.width)
        return cls(text.alphabet, bwt, wm, sa, text)

    @property
    def length(self) -> int:
        return len(self.bwt)

    @property
    def width(self) -> int:
        return self.wm.width

    def search(self, labels: Sequence[str]) -> Interval:
        return backward_search(self.wm, self.alphabet.encode_seq(labels))

    def align(self, trace: Sequence[str], budget: Optional[int] = None) -> Alignment:
        return align_with_log_moves(self.wm, trace, self.alphabet, budget)

    # persistence: little-endian fixed-width integers throughout

    def to_bytes(self) -> bytes:
        n, sigma, width = self.length, self.alphabet.size, self.width
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, n, sigma, width)]
        for sym in self.alphabet.symbols:
            raw = sym.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<{n}I", *self.bwt))
        for r in range(width):
            parts.append(struct.pack(f"<{n + 1}I", *self.wm.zero_rank[r]))
            parts.append(struct.pack(f"<{n + 1}I", *self.wm.one_srank[r]))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FmIndex":
        try:
            magic, version, n, sigma, width = _HEADER.unpack_from(data, 0)
        except struct.error as exc:
            raise IndexFormatError("truncated index header") from exc
        if magic != MAGIC:
            raise IndexFormatError("not an index file")
        if version != FORMAT_VERSION:
            raise IndexFormatError(f"unsupported index version {version}")
        off = _HEADER.size
        try:
            symbols = []
            for _ in range(sigma):
                (size,) = struct.unpack_from("<H", data, off)
                off += 2
                raw = data[off:off + size]
                if len(raw) != size:
                    raise IndexFormatError("truncated alphabet table")
                symbols.append(raw.decode("utf-8"))
                off += size
            bwt = list(struct.unpack_from(f"<{n}I", data, off))
            off += 4 * n
            tables = []
            for _ in range(2 * width):
                tables.append(list(struct.unpack_from(f"<{n + 1}I", data, off)))
                off += 4 * (n + 1)
        except (struct.error, UnicodeDecodeError) as exc:
            raise IndexFormatError(f"truncated or corrupt index: {exc}") from exc
        if off != len(data):
            raise IndexFormatError("trailing bytes after index")
        alphabet = Alphabet(tuple(symbols))
        if alphabet.width != width:
            raise IndexFormatError("width does not match alphabet")
        if bwt.count(0) != 1:
            raise IndexFormatError("BWT must contain exactly one '$'")
        if any(x >= sigma for x in bwt):
            raise IndexFormatError("BWT has codes outside the alphabet")
        wm = WaveletMatrix(bwt, width)
        for r in range(width):
            if tables[2 * r] != wm.zero_rank[r] or tables[2 * r + 1] != wm.one_srank[r]:
                raise IndexFormatError(f"rank tables of row {r} do not match the BWT")
        return cls(alphabet, bwt, wm)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "FmIndex":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise IndexFormatError(f"cannot read index {path}: {exc}") from exc
        return cls.from_bytes(data)
