"""Small synthetic corpora with guaranteed entity graphs, for smoke runs and tests."""
from __future__ import annotations

import numpy as np

from .corpus import RawPair

NAMES = ("Alice", "Bruno", "Chen", "Dana", "Emil", "Farah", "Goran", "Hana", "Ivan", "Jia",
         "Kofi", "Lena", "Marco", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tara")
PLACES = ("park", "market", "harbor", "library", "station", "museum", "garden", "bakery")
ITEMS = ("bike", "lamp", "kite", "drum", "map", "coat", "clock", "boat")
COLORS = ("red", "blue", "green", "black", "white", "small")
VERBS = ("met", "called", "helped", "visited", "thanked", "followed")


def make_pair(rng: np.random.Generator, pid: str) -> RawPair:
    """Two named people, each mentioned three times and sharing sentences.

    The summary is a fixed template over the document's content slots, so it
    has no repeated trigram.
    """
    a, b = rng.choice(NAMES, size=2, replace=False)
    place, item = rng.choice(PLACES), rng.choice(ITEMS)
    color, verb = rng.choice(COLORS), rng.choice(VERBS)
    doc = [
        f"on monday {a} {verb} {b} near the {place} .",
        f"{a} bought a {color} {item} there .",
        f"later {b} and {a} walked home while {b} sang .",
    ]
    summary = [f"{a} {verb} {b} at the {place} and bought a {color} {item} ."]
    return RawPair(pid, doc, summary)


def make_corpus(n: int = 32, seed: int = 0) -> list[RawPair]:
    rng = np.random.default_rng(seed)
    return [make_pair(rng, f"syn-{i:04d}") for i in range(n)]
