"""Safe Petri nets, model readers and the token game."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import ModelError, UnsafeNetError

Marking = frozenset  # frozenset[str] of marked places (nets are safe)


@dataclass(frozen=True)
class ActivityLabel:
    name: str
    silent: bool = False

    def __post_init__(self):
        if not self.name:
            raise ModelError("activity label must be non-empty")


@dataclass(frozen=True, eq=False)
class PetriNet:
    places: frozenset[str]
    transitions: Mapping[str, ActivityLabel]
    arcs: frozenset[tuple[str, str]]
    initial_marking: frozenset[str]
    final_marking: frozenset[str]
    preset: Mapping[str, frozenset[str]] = field(init=False, repr=False)
    postset: Mapping[str, frozenset[str]] = field(init=False, repr=False)

    def __post_init__(self):
        places = frozenset(self.places)
        transitions = dict(self.transitions)
        object.__setattr__(self, "places", places)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "arcs", frozenset(tuple(a) for a in self.arcs))
        object.__setattr__(self, "initial_marking", frozenset(self.initial_marking))
        object.__setattr__(self, "final_marking", frozenset(self.final_marking))

        clash = places & transitions.keys()
        if clash:
            raise ModelError(f"ids used for both places and transitions: {sorted(clash)}")
        pre = {t: set() for t in transitions}
        post = {t: set() for t in transitions}
        for src, dst in self.arcs:
            if src in places and dst in transitions:
                pre[dst].add(src)
            elif src in transitions and dst in places:
                post[src].add(dst)
            elif src in places and dst in places or src in transitions and dst in transitions:
                raise ModelError(f"arc {src}->{dst} is not bipartite")
            else:
                raise ModelError(f"arc {src}->{dst} references an unknown node")
        for t in sorted(transitions):
            if not pre[t] and not post[t]:
                raise ModelError(f"transition {t!r} is disconnected")
            if not pre[t]:
                raise ModelError(f"transition {t!r} has an empty preset")
        if not self.initial_marking:
            raise ModelError("initial marking is empty")
        if not self.final_marking:
            raise ModelError("final marking is empty")
        for name, marking in (("initial", self.initial_marking), ("final", self.final_marking)):
            unknown = marking - places
            if unknown:
                raise ModelError(f"{name} marking uses unknown places {sorted(unknown)}")
        object.__setattr__(self, "preset", {t: frozenset(s) for t, s in pre.items()})
        object.__setattr__(self, "postset", {t: frozenset(s) for t, s in post.items()})

    def label(self, t: str) -> ActivityLabel:
        return self.transitions[t]

    def visible_labels(self) -> set[str]:
        return {lab.name for lab in self.transitions.values() if not lab.silent}

    def sink_places(self) -> frozenset[str]:
        with_outgoing = {src for src, _ in self.arcs if src in self.places}
        return frozenset(self.places - with_outgoing)

    # token game

    def enabled(self, marking: Marking) -> list[str]:
        return sorted(t for t, pre in self.preset.items() if pre <= marking)

    def fire(self, marking: Marking, t: str) -> Marking:
        pre = self.preset[t]
        if not pre <= marking:
            raise ModelError(f"transition {t!r} is not enabled")
        rest = marking - pre
        post = self.postset[t]
        if rest & post:
            raise UnsafeNetError(f"firing {t!r} puts a second token in {sorted(rest & post)}")
        return rest | post

    def to_json(self) -> dict:
        return {
            "places": sorted(self.places),
            "transitions": [
                {"id": t, "label": lab.name, "silent": lab.silent}
                for t, lab in sorted(self.transitions.items())
            ],
            "arcs": sorted([list(a) for a in self.arcs]),
            "initial": sorted(self.initial_marking),
            "final": sorted(self.final_marking),
        }


def replay(net: PetriNet, labels: Iterable[str]) -> set[Marking]:
    """Markings reachable by firing ``labels`` in order.

    Silent transitions may fire anywhere in between. Several transitions
    may share a label, so the result is a set.
    """

    def closure(markings):
        seen = set(markings)
        stack = list(markings)
        while stack:
            m = stack.pop()
            for t in net.enabled(m):
                if net.transitions[t].silent:
                    m2 = net.fire(m, t)
                    if m2 not in seen:
                        seen.add(m2)
                        stack.append(m2)
        return seen

    current = closure({net.initial_marking})
    for name in labels:
        step = set()
        for m in current:
            for t in net.enabled(m):
                lab = net.transitions[t]
                if not lab.silent and lab.name == name:
                    step.add(net.fire(m, t))
        current = closure(step)
    return current


def parse_model(data: bytes | str, format_tag: str) -> PetriNet:
    """Parse a model given as ``"json"`` (native format) or ``"pnml"``."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    tag = format_tag.lower().lstrip(".")
    if tag == "json":
        return _parse_json(data)
    if tag == "pnml":
        return _parse_pnml(data)
    raise ModelError(f"unknown model format {format_tag!r}")


def load_model(path: str | Path) -> PetriNet:
    path = Path(path)
    tag = "pnml" if path.suffix.lower() in (".pnml", ".xml") else "json"
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from exc
    return parse_model(data, tag)


def _parse_json(data: bytes) -> PetriNet:
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ModelError(f"malformed JSON model: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("JSON model must be an object")
    try:
        places = [str(p) for p in doc["places"]]
        transitions = {}
        for entry in doc["transitions"]:
            tid = str(entry["id"])
            if tid in transitions:
                raise ModelError(f"duplicate transition id {tid!r}")
            transitions[tid] = ActivityLabel(str(entry.get("label") or tid),
                                             bool(entry.get("silent", False)))
        arcs = []
        for arc in doc["arcs"]:
            if len(arc) != 2:
                raise ModelError(f"arc must be a [src, dst] pair: {arc!r}")
            arcs.append((str(arc[0]), str(arc[1])))
        initial = [str(p) for p in doc["initial"]]
        final = doc.get("final")
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed JSON model: missing or bad field {exc}") from exc
    if len(set(places)) != len(places):
        raise ModelError("duplicate place ids")
    if final is None:
        return _with_inferred_final(places, transitions, arcs, initial)
    return PetriNet(frozenset(places), transitions, frozenset(arcs),
                    frozenset(initial), frozenset(str(p) for p in final))


def _with_inferred_final(places, transitions, arcs, initial) -> PetriNet:
    with_outgoing = {src for src, _ in arcs}
    final = frozenset(p for p in places if p not in with_outgoing)
    return PetriNet(frozenset(places), transitions, frozenset(arcs),
                    frozenset(initial), final)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child(elem, name):
    for c in elem:
        if _local(c.tag) == name:
            return c
    return None


def _text_of(elem, name):
    c = _child(elem, name)
    if c is None:
        return None
    t = _child(c, "text")
    return (t.text or "").strip() if t is not None else None


def _parse_pnml(data: bytes) -> PetriNet:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ModelError(f"malformed PNML: {exc}") from exc
    places, initial, transitions, arcs = [], [], {}, []
    final = None
    # <place idref=..> entries inside final markings are not net places
    marking_refs = {id(e) for fm in root.iter() if _local(fm.tag) == "finalmarkings"
                    for e in fm.iter()}
    for elem in root.iter():
        kind = _local(elem.tag)
        if kind == "place" and id(elem) in marking_refs:
            continue
        if kind == "place":
            pid = elem.get("id")
            if not pid:
                raise ModelError("place without id")
            places.append(pid)
            tokens = _text_of(elem, "initialMarking")
            if tokens:
                try:
                    count = int(tokens)
                except ValueError as exc:
                    raise ModelError(f"bad initial marking {tokens!r}") from exc
                if count > 1:
                    raise UnsafeNetError(f"place {pid!r} starts with {count} tokens")
                if count == 1:
                    initial.append(pid)
        elif kind == "transition":
            tid = elem.get("id")
            if not tid:
                raise ModelError("transition without id")
            name = _text_of(elem, "name")
            silent = not name
            for ts in elem:
                if _local(ts.tag) == "toolspecific" and ts.get("activity") == "$invisible$":
                    silent = True
            transitions[tid] = ActivityLabel(name or tid, silent)
        elif kind == "arc":
            src, dst = elem.get("source"), elem.get("target")
            if not src or not dst:
                raise ModelError("arc without source or target")
            arcs.append((src, dst))
        elif kind == "finalmarkings":
            # ProM style: <finalmarkings><marking><place idref=..><text>1</text>
            marking = _child(elem, "marking")
            if marking is not None:
                final = []
                for p in marking:
                    if _local(p.tag) != "place":
                        continue
                    count = _text_of_direct(p)
                    if count and int(count) > 0:
                        final.append(p.get("idref"))
    if not places and not transitions:
        raise ModelError("PNML document contains no net")
    if final:
        return PetriNet(frozenset(places), transitions, frozenset(arcs),
                        frozenset(initial), frozenset(final))
    return _with_inferred_final(places, transitions, arcs, initial)


def _text_of_direct(elem):
    t = _child(elem, "text")
    return (t.text or "").strip() if t is not None else None
