"""Shared builders for tests."""

from __future__ import annotations

import random

from ppcc.model import Alphabet, RunsText

FIG1 = "abd;abcbd;$"


def fig1_text() -> RunsText:
    return RunsText.from_string(FIG1, Alphabet.from_labels("abcd"))


def random_text(rng: random.Random, max_len: int = 64, max_sigma: int = 8) -> RunsText:
    """Random runs over 1..max_sigma-2 activity labels, |T| <= max_len.

    |Σ| counts '$' and ';' too, so at most max_sigma - 2 activities.
    """
    k = rng.randint(1, max_sigma - 2)
    labels = "abcdefgh"[:k]
    alphabet = Alphabet.from_labels(labels)
    target = rng.randint(2, max_len)
    body = []
    while len(body) < target - 2:
        body.append(";" if body and body[-1] != ";" and rng.random() < 0.2 else rng.choice(labels))
    text = "".join(body) + ";$"
    return RunsText.from_string(text, alphabet)

# one "PASS/FAIL criterion N" line per acceptance test, echoed in the summary
ACCEPTANCE_LINES: dict[int, str] = {}
