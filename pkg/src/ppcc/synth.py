"""Synthetic models and logs for tests and benchmarks."""

from __future__ import annotations

import random
from typing import Sequence

from .model.petri import ActivityLabel, PetriNet


def running_example() -> PetriNet:
    """Four places, transitions a..d, a loop b -> c -> b; runs abd, abcbd."""
    return PetriNet(
        places=frozenset({"p1", "p2", "p3", "p4"}),
        transitions={t: ActivityLabel(t) for t in "abcd"},
        arcs=frozenset({("p1", "a"), ("a", "p2"), ("p2", "b"), ("b", "p3"),
                        ("p3", "c"), ("c", "p2"), ("p3", "d"), ("d", "p4")}),
        initial_marking=frozenset({"p1"}),
        final_marking=frozenset({"p4"}),
    )


def sequence_net(labels: Sequence[str]) -> PetriNet:
    places = [f"s{i}" for i in range(len(labels) + 1)]
    arcs = set()
    for i, lab in enumerate(labels):
        arcs |= {(places[i], f"t{i}"), (f"t{i}", places[i + 1])}
    return PetriNet(frozenset(places), {f"t{i}": ActivityLabel(l) for i, l in enumerate(labels)},
                    frozenset(arcs), frozenset({places[0]}), frozenset({places[-1]}))


def parallel_blocks(first: int = 4, second: int = 3) -> PetriNet:
    """A split, ``first`` concurrent activities, a join-split and ``second``
    concurrent activities; ``1 + first + 1 + second`` events in all.

    The default shape has 9 events and 4! * 3! = 144 linearizations.
    """
    places = {"start"}
    trans = {"split": ActivityLabel("a"), "mid": ActivityLabel("j")}
    arcs = {("start", "split")}
    for i in range(first):
        x, y, t = f"x{i}", f"y{i}", f"b{i}"
        places |= {x, y}
        trans[t] = ActivityLabel(f"b{i}")
        arcs |= {("split", x), (x, t), (t, y), (y, "mid")}
    final = set()
    for i in range(second):
        u, v, t = f"u{i}", f"v{i}", f"c{i}"
        places |= {u, v}
        trans[t] = ActivityLabel(f"c{i}")
        arcs |= {("mid", u), (u, t), (t, v)}
        final.add(v)
    return PetriNet(frozenset(places), trans, frozenset(arcs),
                    frozenset({"start"}), frozenset(final))


def small_loop() -> PetriNet:
    """Three places: a enters the loop, b exits to the end place, c goes back."""
    return PetriNet(
        places=frozenset({"s", "l", "e"}),
        transitions={t: ActivityLabel(t) for t in "abc"},
        arcs=frozenset({("s", "a"), ("a", "l"), ("l", "b"), ("b", "e"), ("e", "c"), ("c", "l")}),
        initial_marking=frozenset({"s"}),
        final_marking=frozenset({"e"}),
    )


class _Builder:
    def __init__(self):
        self.places: set[str] = set()
        self.trans: dict[str, ActivityLabel] = {}
        self.arcs: set[tuple[str, str]] = set()
        self._n = 0

    def place(self) -> str:
        self._n += 1
        p = f"p{self._n}"
        self.places.add(p)
        return p

    def transition(self, label: str, silent: bool = False) -> str:
        self._n += 1
        t = f"t{self._n}"
        self.trans[t] = ActivityLabel(label, silent)
        return t

    def compile(self, node, src: str, dst: str) -> None:
        kind = node[0]
        if kind == "act":
            t = self.transition(node[1])
            self.arcs |= {(src, t), (t, dst)}
        elif kind == "seq":
            cur = src
            for i, child in enumerate(node[1]):
                nxt = dst if i == len(node[1]) - 1 else self.place()
                self.compile(child, cur, nxt)
                cur = nxt
        elif kind == "xor":
            for child in node[1]:
                self.compile(child, src, dst)
        elif kind == "and":
            split, join = self.transition("tau", True), self.transition("tau", True)
            self.arcs |= {(src, split), (join, dst)}
            for child in node[1]:
                a, b = self.place(), self.place()
                self.arcs |= {(split, a), (b, join)}
                self.compile(child, a, b)
        elif kind == "loop":
            body, redo = node[1]
            enter, leave = self.transition("tau", True), self.transition("tau", True)
            a, b = self.place(), self.place()
            self.arcs |= {(src, enter), (enter, a), (b, leave), (leave, dst)}
            self.compile(body, a, b)
            self.compile(redo, b, a)
        else:
            raise ValueError(f"unknown node {kind!r}")


def random_tree(rng: random.Random, labels: Sequence[str], depth: int = 3):
    """Random block-structured process tree over ``labels``."""
    if depth == 0 or rng.random() < 0.3:
        return ("act", rng.choice(labels))
    kind = rng.choice(["seq", "seq", "xor", "and", "loop"])
    if kind == "loop":
        return ("loop", (random_tree(rng, labels, depth - 1), ("act", rng.choice(labels))))
    n = rng.randint(2, 3)
    return (kind, [random_tree(rng, labels, depth - 1) for _ in range(n)])


def tree_to_net(tree) -> PetriNet:
    b = _Builder()
    src, dst = b.place(), b.place()
    b.compile(tree, src, dst)
    return PetriNet(frozenset(b.places), b.trans, frozenset(b.arcs),
                    frozenset({src}), frozenset({dst}))


def random_net(rng: random.Random, labels: Sequence[str] = "abcdef", depth: int = 3) -> PetriNet:
    return tree_to_net(random_tree(rng, labels, depth))


def inject_events(rng: random.Random, trace: Sequence[str], count: int,
                  labels: Sequence[str]) -> list[str]:
    """Insert ``count`` random labels at random positions."""
    out = list(trace)
    for _ in range(count):
        out.insert(rng.randint(0, len(out)), rng.choice(labels))
    return out
