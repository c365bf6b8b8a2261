"""Aligned lyric-melody corpus handling: load, validate, encode, split.

The corpus file is UTF-8, one JSON object per line:

    {"song_id": str, "line_index": int, "syllables": [str, ...],
     "notes": [[pitch, duration_sixteenths], ...], "theme": int | null}

Syllables are opaque strings; notes are (MIDI pitch, sixteenth-note count)
pairs. Each line's syllables align one-to-one with its notes.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

PITCH_MIN, PITCH_MAX = 21, 108
DURATION_MIN, DURATION_MAX = 1, 128

PAD, START, END, UNK = 0, 1, 2, 3
SPECIALS = ("<PAD>", "<START>", "<END>", "<UNK>")
N_SPECIALS = 4


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class NoteToken:
    pitch: int
    duration: int

    def __post_init__(self):
        if not (PITCH_MIN <= self.pitch <= PITCH_MAX):
            raise CorpusError(f"pitch {self.pitch} outside [{PITCH_MIN}, {PITCH_MAX}]")
        if not (DURATION_MIN <= self.duration <= DURATION_MAX):
            raise CorpusError(
                f"duration {self.duration} outside [{DURATION_MIN}, {DURATION_MAX}]")


@dataclass
class LyricMelodyLine:
    song_id: str
    line_index: int
    syllables: list[str]
    notes: list[NoteToken]
    theme: int | None = None

    def __post_init__(self):
        if not self.syllables:
            raise CorpusError("empty line")
        if len(self.syllables) != len(self.notes):
            raise CorpusError(
                f"{len(self.syllables)} syllables vs {len(self.notes)} notes")

    def to_record(self) -> dict:
        return {
            "song_id": self.song_id,
            "line_index": self.line_index,
            "syllables": list(self.syllables),
            "notes": [[n.pitch, n.duration] for n in self.notes],
            "theme": self.theme,
        }


class Vocab:
    """Token <-> index maps for syllables and notes.

    Indices 0-3 are the shared specials <PAD>, <START>, <END>, <UNK> in
    both vocabularies; real tokens start at 4 in first-occurrence order.
    """

    def __init__(self, syllables: list[str], notes: list[tuple[int, int]]):
        self.syllables = list(syllables)
        self.notes = [tuple(n) for n in notes]
        self.syl_to_idx = {s: i + N_SPECIALS for i, s in enumerate(self.syllables)}
        self.note_to_idx = {n: i + N_SPECIALS for i, n in enumerate(self.notes)}

    @property
    def n_syllables(self) -> int:
        return len(self.syllables) + N_SPECIALS

    @property
    def n_notes(self) -> int:
        return len(self.notes) + N_SPECIALS

    def syllable_index(self, s: str) -> int:
        return self.syl_to_idx.get(s, UNK)

    def note_index(self, n: NoteToken) -> int:
        return self.note_to_idx.get((n.pitch, n.duration), UNK)

    def syllable_at(self, i: int) -> str:
        if i < N_SPECIALS:
            return SPECIALS[i]
        return self.syllables[i - N_SPECIALS]

    def to_json(self) -> dict:
        return {"syllables": self.syllables,
                "notes": [list(n) for n in self.notes]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(obj["syllables"], [tuple(n) for n in obj["notes"]])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class EncodedBatch:
    lyrics: np.ndarray        # B x T_max int64
    notes: np.ndarray         # B x T_max int64
    lengths: np.ndarray       # valid positions incl. START/END
    themes: np.ndarray | None = None


def load_corpus(path) -> list[LyricMelodyLine]:
    lines = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
                notes = [NoteToken(int(p), int(d)) for p, d in rec["notes"]]
                lines.append(LyricMelodyLine(
                    song_id=str(rec["song_id"]),
                    line_index=int(rec["line_index"]),
                    syllables=[str(s) for s in rec["syllables"]],
                    notes=notes,
                    theme=None if rec.get("theme") is None else int(rec["theme"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return lines


def save_corpus(lines, path):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line.to_record(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def build_vocabs(lines) -> Vocab:
    """Index assignment follows first occurrence, so rebuilding on the same
    corpus gives the same mapping."""
    if not lines:
        raise CorpusError("empty corpus")
    syllables, notes = [], []
    seen_s, seen_n = set(), set()
    for line in lines:
        for s in line.syllables:
            if s not in seen_s:
                seen_s.add(s)
                syllables.append(s)
        for n in line.notes:
            key = (n.pitch, n.duration)
            if key not in seen_n:
                seen_n.add(key)
                notes.append(key)
    return Vocab(syllables, notes)


def encode_line(line: LyricMelodyLine, vocab: Vocab, t_max: int):
    """Encode to a (lyric_row, note_row) pair of length ``t_max``.

    Both rows are <START>, tokens..., <END>, then <PAD>; the note row uses
    its own specials at the same positions as the lyric specials.
    """
    k = len(line.syllables)
    if k + 2 > t_max:
        raise CorpusError(f"line of {k} tokens does not fit t_max={t_max}")
    lyr = np.full(t_max, PAD, dtype=np.int64)
    mel = np.full(t_max, PAD, dtype=np.int64)
    lyr[0] = mel[0] = START
    for i, (s, n) in enumerate(zip(line.syllables, line.notes), start=1):
        lyr[i] = vocab.syllable_index(s)
        mel[i] = vocab.note_index(n)
    lyr[k + 1] = mel[k + 1] = END
    return lyr, mel


def decode_row(row, vocab: Vocab) -> list[str]:
    """Tokens strictly between <START> and <END>."""
    out = []
    for idx in row:
        idx = int(idx)
        if idx == START:
            continue
        if idx in (END, PAD):
            break
        out.append(vocab.syllable_at(idx))
    return out


def encode_melody_row(notes, vocab: Vocab, t_max: int) -> np.ndarray:
    """Melody-only row for inference; unseen notes resolve via nearest_note."""
    if len(notes) + 2 > t_max:
        raise CorpusError(f"melody of {len(notes)} notes does not fit t_max={t_max}")
    row = np.full(t_max, PAD, dtype=np.int64)
    row[0] = START
    for i, n in enumerate(notes, start=1):
        row[i] = nearest_note(n, vocab)
    row[len(notes) + 1] = END
    return row


def encode_corpus(lines, vocab: Vocab, t_max: int,
                  themes: dict[str, int] | None = None) -> EncodedBatch:
    """Encode all lines that fit; longer ones are dropped with a logged count."""
    kept, lyr_rows, mel_rows, lengths, theme_ids = [], [], [], [], []
    dropped = 0
    for line in lines:
        if len(line.syllables) + 2 > t_max:
            dropped += 1
            continue
        lyr, mel = encode_line(line, vocab, t_max)
        kept.append(line)
        lyr_rows.append(lyr)
        mel_rows.append(mel)
        lengths.append(len(line.syllables) + 2)
        if themes is not None:
            theme_ids.append(themes.get(line.song_id, -1))
    if dropped:
        logger.warning("dropped %d lines longer than t_max=%d", dropped, t_max)
    if not kept:
        raise CorpusError("no lines fit the configured maximum length")
    return EncodedBatch(
        lyrics=np.stack(lyr_rows),
        notes=np.stack(mel_rows),
        lengths=np.asarray(lengths, dtype=np.int64),
        themes=np.asarray(theme_ids, dtype=np.int64) if themes is not None else None,
    )


def default_t_max(lines, cap: int = 32) -> int:
    longest = max(len(line.syllables) for line in lines)
    return min(longest + 2, cap)


def split_corpus(lines, seed: int):
    """Shuffle lines with a seeded RNG and split 80/10/10."""
    if len(lines) < 10:
        raise CorpusError("need at least 10 lines to split")
    order = list(range(len(lines)))
    random.Random(seed).shuffle(order)
    n = len(lines)
    n_valid = round(0.1 * n)
    n_test = round(0.1 * n)
    n_train = n - n_valid - n_test
    train = [lines[i] for i in order[:n_train]]
    valid = [lines[i] for i in order[n_train:n_train + n_valid]]
    test = [lines[i] for i in order[n_train + n_valid:]]
    return train, valid, test


def nearest_note(n: NoteToken, vocab: Vocab) -> int:
    """Index of ``n`` if known, else of the closest known note by
    2*|dpitch| + |dduration|, ties to lower pitch then shorter duration."""
    key = (n.pitch, n.duration)
    if key in vocab.note_to_idx:
        return vocab.note_to_idx[key]
    if not vocab.notes:
        raise CorpusError("empty note vocabulary")
    best = min(vocab.notes,
               key=lambda c: (2 * abs(c[0] - n.pitch) + abs(c[1] - n.duration),
                              c[0], c[1]))
    return vocab.note_to_idx[best]


# --- synthetic corpus -------------------------------------------------------

SYNTH_STOPWORDS = ["the", "a", "and", "to", "my", "you", "in", "of"]

_SYNTH_POOLS = [
    ["ba-by", "go", "a-way", "stay", "call", "night", "door", "phone",
     "miss", "back", "tears", "gone"],
    ["coun-try", "flag", "home-land", "brave", "free-dom", "march", "hon-or",
     "land", "proud", "ban-ner", "lib-er-ty", "stand"],
    ["love", "heart", "nev-er", "to-geth-er", "kiss", "for-ev-er", "dear",
     "sweet", "hold", "true", "dream", "shine"],
    ["heav-en", "pray", "soul", "grace", "lord", "an-gel", "mer-cy", "faith",
     "glo-ry", "ho-ly", "ris-en", "light"],
    ["par-ty", "dance", "mu-sic", "beat", "jump", "loud", "floor", "night-life",
     "play", "crowd", "bounce", "groove"],
]

SYNTH_THEME_LABELS = ["relationship", "patriotism", "love", "gospel", "party"]
SYNTH_N_THEMES = len(_SYNTH_POOLS)


def synth_theme_pools() -> list[list[str]]:
    return [list(p) for p in _SYNTH_POOLS]


def _synth_note(word: str, theme: int, word_idx: int, rng) -> NoteToken:
    if word in SYNTH_STOPWORDS:
        pitch = 96 + SYNTH_STOPWORDS.index(word)
        duration = 2
    else:
        # one octave per theme, one home pitch per word, +/-1 jitter
        pitch = 24 + 12 * theme + word_idx + rng.choice((-1, 0, 1))
        duration = (4, 8, 4, 2, 4, 8, 4, 4, 2, 8, 4, 4)[word_idx]
    return NoteToken(pitch, duration)


def synth_corpus(seed: int, n_songs: int = 200,
                 lines_per_song: int = 4) -> list[LyricMelodyLine]:
    """Deterministic 5-theme corpus with disjoint word pools.

    Word pitches sit in per-theme octaves (with light jitter) so melody
    conditioning is learnable; lines run 3-12 tokens.
    """
    rng = random.Random(seed)
    lines = []
    for s in range(n_songs):
        theme = s % SYNTH_N_THEMES
        pool = _SYNTH_POOLS[theme]
        song_id = f"synth-{s:04d}"
        for li in range(lines_per_song):
            length = rng.randint(3, 12)
            syllables, notes = [], []
            for _ in range(length):
                if rng.random() < 0.22:
                    word = rng.choice(SYNTH_STOPWORDS)
                    widx = -1
                else:
                    widx = rng.randrange(len(pool))
                    word = pool[widx]
                syllables.append(word)
                notes.append(_synth_note(word, theme, max(widx, 0), rng))
            lines.append(LyricMelodyLine(song_id, li, syllables, notes, theme))
    return lines


def synth_word_vectors(seed: int, dim: int = 16) -> dict[str, np.ndarray]:
    """Unit-norm random vectors for every synthetic vocabulary word."""
    rng = np.random.default_rng(seed)
    words = sorted({w for pool in _SYNTH_POOLS for w in pool} | set(SYNTH_STOPWORDS))
    table = {}
    for w in words:
        v = rng.normal(size=dim)
        table[w] = v / np.linalg.norm(v)
    return table


def save_word_vectors(table: dict[str, np.ndarray], path):
    words = sorted(table)
    dim = len(next(iter(table.values())))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {dim}\n")
        for w in words:
            vals = " ".join(repr(float(x)) for x in table[w])
            fh.write(f"{w} {vals}\n")
