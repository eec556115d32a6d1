"""Complete runs of a prefix and their linearizations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from ..errors import CapExceededError
from .unfolding import BranchingPrefix

DEFAULT_CAP = 10_000


@dataclass(frozen=True, eq=False)
class RunPO:
    """A configuration of the prefix with its causal order."""

    events: frozenset[int]
    order: frozenset[tuple[int, int]]  # (before, after), transitively closed
    labels: Mapping[int, str]
    silent: frozenset[int]
    complete: bool

    def predecessors(self, eid: int) -> frozenset[int]:
        return frozenset(a for a, b in self.order if b == eid)

    def __len__(self):
        return len(self.events)


def _run_of(prefix: BranchingPrefix, config: frozenset[int], complete: bool) -> RunPO:
    order = set()
    for eid in config:
        for before in prefix.events[eid].local:
            if before != eid:
                order.add((before, eid))
    return RunPO(
        events=config,
        order=frozenset(order),
        labels={e: prefix.events[e].label for e in config},
        silent=frozenset(e for e in config if prefix.events[e].silent),
        complete=complete,
    )


def complete_runs(prefix: BranchingPrefix) -> list[RunPO]:
    """Configurations whose cut is exactly the final marking.

    Every condition of a configuration either stays in the cut or is
    consumed by exactly one of its consumers, so configurations are
    enumerated by choosing that fate condition by condition. Concurrent
    events are never interleaved, only real conflicts branch.
    """
    final = prefix.net.final_marking
    consumers: dict[int, list[int]] = {}
    for ev in prefix.events:
        for cid in ev.preset:
            consumers.setdefault(cid, []).append(ev.id)
    place_of = {c.id: c.place for c in prefix.conditions}

    found = []
    # (pending conditions, fate of each seen condition, fired events, cut places)
    stack = [(tuple(prefix.initial_conditions), {}, frozenset(), frozenset())]
    while stack:
        pending, fate, config, places = stack.pop()
        if not pending:
            # a condition promised to an event that never fired is invalid
            if places == final and all(e is None or e in config for e in fate.values()):
                found.append(config)
            continue
        cid, rest = pending[0], pending[1:]
        place = place_of[cid]
        if place in final and place not in places:
            stack.append((rest, {**fate, cid: None}, config, places | {place}))
        for eid in consumers.get(cid, ()):
            ev = prefix.events[eid]
            if any(fate.get(c, eid) != eid for c in ev.preset):
                continue
            nfate = {**fate, cid: eid}
            if all(nfate.get(c) == eid for c in ev.preset):
                stack.append((rest + tuple(sorted(ev.postset)), nfate, config | {eid}, places))
            else:
                stack.append((rest, nfate, config, places))
    found.sort(key=lambda c: (len(c), sorted(c)))
    return [_run_of(prefix, c, True) for c in found]


def linear_extensions(run: RunPO, cap: int = DEFAULT_CAP) -> list[tuple[str, ...]]:
    """Distinct visible label sequences of all linear extensions of ``run``.

    Sorted lexicographically. Raises CapExceededError when there are more
    than ``cap`` distinct sequences.
    """
    direct = {e: set() for e in run.events}
    for a, b in run.order:
        direct[b].add(a)
    # Project onto visible events first: the visible sequences are exactly
    # the linear extensions of the induced order, and dropping silent
    # events shrinks the down-set lattice a lot.
    ancestors: dict[int, frozenset[int]] = {}

    def visible_before(e: int) -> frozenset[int]:
        if e not in ancestors:
            acc: set[int] = set()
            for p in direct[e]:
                acc |= visible_before(p)
                if p not in run.silent:
                    acc.add(p)
            ancestors[e] = frozenset(acc)
        return ancestors[e]

    events = frozenset(e for e in run.events if e not in run.silent)
    preds = {e: visible_before(e) for e in events}
    memo: dict[frozenset[int], frozenset[tuple[str, ...]]] = {}

    def suffixes(done: frozenset[int]) -> frozenset[tuple[str, ...]]:
        if done in memo:
            return memo[done]
        if len(done) == len(events):
            return frozenset({()})
        out = set()
        for e in events - done:
            if preds[e] <= done:
                head = (run.labels[e],)
                for tail in suffixes(done | {e}):
                    out.add(head + tail)
                if len(out) > cap:
                    raise CapExceededError(
                        f"run has more than {cap} linearizations")
        result = frozenset(out)
        memo[done] = result
        return result

    return sorted(suffixes(frozenset()))
