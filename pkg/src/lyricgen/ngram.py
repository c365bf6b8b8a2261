"""Bigram baselines: an unconditioned syllable bigram model and a
melody-conditioned variant that picks each syllable from the distribution
observed for (previous syllable, current note) pairs.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import (
    N_SPECIALS, CorpusError, LyricMelodyLine, NoteToken, Vocab, nearest_note,
)

START_TOKEN = "<s>"
END_TOKEN = "</s>"
UNK_TOKEN = "<unk>"

_RESERVED = {START_TOKEN, END_TOKEN, UNK_TOKEN}

NoteKey = Tuple[int, int]


@dataclass
class BackoffStats:
    """Counts of which distribution produced each sampled syllable."""

    conditional: int = 0
    bigram: int = 0
    unk: int = 0

    @property
    def total(self) -> int:
        return self.conditional + self.bigram + self.unk


class BigramTable:
    """Syllable bigram counts with START prepended and END as a successor."""

    def __init__(self) -> None:
        self.counts: Dict[str, Counter] = {}

    @classmethod
    def fit(cls, lines: Sequence[LyricMelodyLine]) -> "BigramTable":
        table = cls()
        for line in lines:
            prev = START_TOKEN
            for syl in line.syllables:
                if syl in _RESERVED:
                    raise CorpusError(f"syllable collides with sentinel: {syl!r}")
                table._add(prev, syl)
                prev = syl
            table._add(prev, END_TOKEN)
        return table

    def _add(self, prev: str, nxt: str) -> None:
        self.counts.setdefault(prev, Counter())[nxt] += 1

    def successors(self, prev: str, exclude_end: bool = False) -> Tuple[List[str], List[float]]:
        """Conditional distribution P(. | prev), unsmoothed.

        Returns empty lists when ``prev`` was never seen (or, with
        ``exclude_end``, when END was its only successor).
        """
        counter = self.counts.get(prev)
        if not counter:
            return [], []
        items = [(w, c) for w, c in counter.items() if not (exclude_end and w == END_TOKEN)]
        total = sum(c for _, c in items)
        if total == 0:
            return [], []
        return [w for w, _ in items], [c / total for _, c in items]

    def sample_line(self, rng: random.Random, max_len: int = 30) -> List[str]:
        """Sample syllables until END is drawn or ``max_len`` is reached."""
        out: List[str] = []
        prev = START_TOKEN
        while len(out) < max_len:
            words, probs = self.successors(prev)
            if not words:
                break
            word = rng.choices(words, weights=probs)[0]
            if word == END_TOKEN:
                break
            out.append(word)
            prev = word
        return out


class McBigramTable:
    """Melody-conditioned bigram: P(syllable | previous syllable, note).

    Termination is dictated by the melody, so no END transitions are
    recorded in the conditional table; the output always has exactly one
    syllable per note.  When a (prev, note) pair was never observed the
    sampler backs off to the unconditioned bigram (END excluded,
    renormalised), and emits ``<unk>`` if that also has nothing to offer.
    """

    def __init__(self) -> None:
        self.cond: Dict[Tuple[str, NoteKey], Counter] = {}
        self.bigram = BigramTable()

    @classmethod
    def fit(cls, lines: Sequence[LyricMelodyLine]) -> "McBigramTable":
        table = cls()
        table.bigram = BigramTable.fit(lines)
        for line in lines:
            prev = START_TOKEN
            for syl, note in zip(line.syllables, line.notes):
                key = (prev, (note.pitch, note.duration))
                table.cond.setdefault(key, Counter())[syl] += 1
                prev = syl
        return table

    def sample_line(
        self,
        rng: random.Random,
        notes: Sequence[NoteToken],
        vocab: Vocab,
        stats: Optional[BackoffStats] = None,
    ) -> List[str]:
        """Sample one syllable per note; always ``len(notes)`` long."""
        out: List[str] = []
        prev = START_TOKEN
        for note in notes:
            snapped = vocab.notes[nearest_note(note, vocab) - N_SPECIALS]
            counter = self.cond.get((prev, snapped))
            if counter:
                words = list(counter.keys())
                weights = list(counter.values())
                word = rng.choices(words, weights=weights)[0]
                if stats is not None:
                    stats.conditional += 1
            else:
                words, probs = self.bigram.successors(prev, exclude_end=True)
                if words:
                    word = rng.choices(words, weights=probs)[0]
                    if stats is not None:
                        stats.bigram += 1
                else:
                    word = UNK_TOKEN
                    if stats is not None:
                        stats.unk += 1
            out.append(word)
            prev = word
        return out
