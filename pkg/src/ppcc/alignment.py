"""Alignment moves: synchronous moves and log moves only."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

SYNC = "sync"
LOG = "log"


class Move(NamedTuple):
    kind: str
    label: str

    @property
    def is_log(self) -> bool:
        return self.kind == LOG

    def __str__(self):
        return f"{self.kind}({self.label})"


def Sync(label: str) -> Move:
    return Move(SYNC, label)


def LogMove(label: str) -> Move:
    return Move(LOG, label)


@dataclass(frozen=True)
class Alignment:
    """Moves in trace order.

    The last move always covers the run separator that anchors the
    trace at the end of a run.
    """

    moves: tuple[Move, ...]

    @classmethod
    def from_moves(cls, moves: Iterable[Move]) -> "Alignment":
        return cls(tuple(moves))

    @property
    def cost(self) -> int:
        return sum(1 for m in self.moves if m.is_log)

    def matched(self) -> list[str]:
        """Labels left after erasing log moves."""
        return [m.label for m in self.moves if not m.is_log]

    def to_json(self) -> list[list[str]]:
        return [[m.kind, m.label] for m in self.moves]

    def __str__(self):
        return " ".join(str(m) for m in self.moves)
