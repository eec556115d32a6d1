"""Causally complete prefix unfolding of safe Petri nets.

An event is a cutoff when some earlier event reaches the same marking
through a local configuration with the same set of visible labels.
Possible extensions are added in order of local configuration size, then
by the sorted labels of the local configuration, which makes the prefix
deterministic.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Mapping, Optional

from ..errors import UnfoldingLimitError, UnsafeNetError
from .petri import PetriNet

DEFAULT_MAX_EVENTS = 10_000


@dataclass(frozen=True)
class Condition:
    id: int
    place: str
    producer: Optional[int]  # None for initial conditions


@dataclass(frozen=True)
class Event:
    id: int
    transition: str
    label: str
    silent: bool
    preset: frozenset[int]
    postset: frozenset[int]
    local: frozenset[int]  # event ids of [e], including e
    marking: frozenset[str]  # Mark([e])
    labels: frozenset[str]  # visible labels of [e]


@dataclass(frozen=True, eq=False)
class BranchingPrefix:
    net: PetriNet
    conditions: tuple[Condition, ...]
    events: tuple[Event, ...]
    initial_conditions: frozenset[int]
    cutoff_events: frozenset[int]
    # cutoff event -> corresponding event; None means the empty configuration
    corr: Mapping[int, Optional[int]]

    def is_cutoff(self, eid: int) -> bool:
        return eid in self.cutoff_events

    def conditions_of(self, place: str) -> list[Condition]:
        return [c for c in self.conditions if c.place == place]

    def cause_labels(self, cid: int) -> frozenset[str]:
        """Visible labels of the local configuration producing a condition."""
        producer = self.conditions[cid].producer
        return frozenset() if producer is None else self.events[producer].labels


def unfold(net: PetriNet, max_events: int = DEFAULT_MAX_EVENTS) -> BranchingPrefix:
    conditions: list[Condition] = []
    events: list[Event] = []
    co: dict[int, set[int]] = {}
    live: set[int] = set()  # conditions that may feed new events
    cutoffs: set[int] = set()
    corr: dict[int, Optional[int]] = {}
    seen: set[tuple[str, frozenset[int]]] = set()
    by_state: dict[tuple[frozenset[str], frozenset[str]], list[int]] = {}
    consumers = {p: [] for p in net.places}
    for t in sorted(net.transitions):
        for p in net.preset[t]:
            consumers[p].append(t)

    initial = []
    for place in sorted(net.initial_marking):
        c = Condition(len(conditions), place, None)
        conditions.append(c)
        initial.append(c.id)
    for cid in initial:
        co[cid] = set(initial) - {cid}
        live.add(cid)

    heap: list = []
    counter = itertools.count()

    def local_of(preset: frozenset[int]) -> frozenset[int]:
        out = set()
        for cid in preset:
            producer = conditions[cid].producer
            if producer is not None:
                out |= events[producer].local
        return frozenset(out)

    def push(t: str, preset: frozenset[int]) -> None:
        key = (t, preset)
        if key in seen:
            return
        seen.add(key)
        history = local_of(preset)
        names = sorted([events[e].label for e in history] + [net.transitions[t].name])
        heapq.heappush(heap, (len(history) + 1, names, t, next(counter), preset, history))

    def extensions_with(new: list[int]) -> None:
        # possible extensions using at least one of the new conditions
        for cid in new:
            place = conditions[cid].place
            for t in consumers[place]:
                others = sorted(net.preset[t] - {place})
                _combine(t, others, [cid], co[cid] & live)

    def _combine(t, places, chosen, pool):
        if not places:
            push(t, frozenset(chosen))
            return
        place, rest = places[0], places[1:]
        for cand in sorted(pool):
            if conditions[cand].place == place:
                _combine(t, rest, chosen + [cand], pool & co[cand])

    extensions_with(initial)

    init_marking = frozenset(net.initial_marking)
    while heap:
        size, _names, t, _, preset, history = heapq.heappop(heap)
        if len(events) >= max_events:
            raise UnfoldingLimitError(
                f"unfolding exceeded {max_events} events; the net may be unbounded")
        eid = len(events)
        local = history | {eid}
        consumed = set(preset)
        produced_places: set[str] = set()
        for e in history:
            consumed |= events[e].preset
        marking_conds = (set(initial) | {c for e in history for c in events[e].postset}) - consumed
        before = {conditions[c].place for c in marking_conds}
        post_places = net.postset[t]
        produced_places = set(post_places)
        clash = before & produced_places
        if clash:
            raise UnsafeNetError(
                f"firing {t!r} puts a second token in {sorted(clash)}")
        marking = frozenset(before | produced_places)
        lab = net.transitions[t]
        labels = frozenset({events[e].label for e in history if not events[e].silent}
                           | ({lab.name} if not lab.silent else set()))

        postset = []
        for place in sorted(post_places):
            c = Condition(len(conditions), place, eid)
            conditions.append(c)
            postset.append(c.id)
        events.append(Event(eid, t, lab.name, lab.silent, preset, frozenset(postset),
                            frozenset(local), marking, labels))

        # concurrency of the new conditions
        common = set.intersection(*(co[c] for c in preset)) if preset else set()
        for cid in postset:
            co[cid] = (common | set(postset)) - {cid}
            for other in common:
                co[other].add(cid)
        for cid in postset:
            twins = [o for o in co[cid] if conditions[o].place == conditions[cid].place]
            if twins:
                raise UnsafeNetError(
                    f"place {conditions[cid].place!r} can hold two tokens")

        state = (marking, labels)
        match = None
        if marking == init_marking and not labels:
            match = (None,)
        else:
            for other in by_state.get(state, ()):
                if len(events[other].local) <= size:
                    match = (other,)
                    break
        if match is not None:
            cutoffs.add(eid)
            corr[eid] = match[0]
        else:
            by_state.setdefault(state, []).append(eid)
            live.update(postset)
            extensions_with(postset)

    return BranchingPrefix(net, tuple(conditions), tuple(events), frozenset(initial),
                           frozenset(cutoffs), corr)
