"""Theme extraction with latent Dirichlet allocation.

Documents are songs (all lines of a song pooled into one bag of words);
inference is collapsed Gibbs sampling.  The fitted model yields per-topic
top-word lists, per-song theme assignments, and per-theme embedding
vectors averaged from a pretrained word-vector table.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import LyricMelodyLine

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 1000
TOP_K = 10


def default_alpha(n_topics: int) -> float:
    return 50.0 / n_topics


@dataclass
class Document:
    song_id: str
    tokens: List[str]


def preprocess(lines: Sequence[LyricMelodyLine], stopwords: Iterable[str]) -> List[Document]:
    """One lowercased bag of words per song, stop-words removed.

    The corpus carries no word-boundary markers, so each syllable token is
    treated as a word.  Songs reduced to nothing are dropped with a warning.
    """
    stopset = {w.lower() for w in stopwords}
    by_song: Dict[str, List[str]] = {}
    for line in lines:
        bag = by_song.setdefault(line.song_id, [])
        for syl in line.syllables:
            word = syl.lower()
            if word not in stopset:
                bag.append(word)
    docs = []
    for song_id, tokens in by_song.items():
        if tokens:
            docs.append(Document(song_id, tokens))
        else:
            logger.warning("song %s is empty after stop-word removal; excluded", song_id)
    return docs


@dataclass
class ThemeModel:
    n_topics: int
    alpha: float
    beta: float
    vocab: List[str]
    topic_word: np.ndarray       # n_topics x V counts
    doc_topic: np.ndarray        # D x n_topics counts
    doc_ids: List[str]
    song_themes: Dict[str, int] = field(default_factory=dict)
    labels: Optional[List[str]] = None
    embeddings: Optional[np.ndarray] = None  # n_topics x D_w

    @property
    def word_index(self) -> Dict[str, int]:
        cached = getattr(self, "_word_index", None)
        if cached is None or len(cached) != len(self.vocab):
            cached = {w: i for i, w in enumerate(self.vocab)}
            self._word_index = cached
        return cached

    def topic_word_probs(self) -> np.ndarray:
        """(count + beta) normalised rows; n_topics x V."""
        smoothed = self.topic_word + self.beta
        return smoothed / smoothed.sum(axis=1, keepdims=True)

    def top_words(self, k: int = TOP_K) -> List[List[str]]:
        probs = self.topic_word_probs()
        out = []
        for t in range(self.n_topics):
            order = np.argsort(-probs[t], kind="stable")[:k]
            out.append([self.vocab[i] for i in order])
        return out

    def to_json(self) -> dict:
        obj = {
            "n_topics": self.n_topics,
            "alpha": self.alpha,
            "beta": self.beta,
            "vocab": self.vocab,
            "topic_word": self.topic_word.tolist(),
            "doc_topic": self.doc_topic.tolist(),
            "doc_ids": self.doc_ids,
            "song_themes": self.song_themes,
            "top_words": self.top_words(),
        }
        if self.labels is not None:
            obj["labels"] = self.labels
        if self.embeddings is not None:
            obj["embeddings"] = self.embeddings.tolist()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ThemeModel":
        return cls(
            n_topics=obj["n_topics"],
            alpha=obj["alpha"],
            beta=obj["beta"],
            vocab=list(obj["vocab"]),
            topic_word=np.asarray(obj["topic_word"], dtype=np.int64),
            doc_topic=np.asarray(obj["doc_topic"], dtype=np.int64),
            doc_ids=list(obj["doc_ids"]),
            song_themes={k: int(v) for k, v in obj.get("song_themes", {}).items()},
            labels=obj.get("labels"),
            embeddings=(np.asarray(obj["embeddings"], dtype=np.float64)
                        if "embeddings" in obj else None),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ThemeModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _gibbs_pass(doc_words, doc_assign, topic_word, doc_topic, topic_total,
                alpha, beta, v_size, rng):
    for d, words in enumerate(doc_words):
        assign = doc_assign[d]
        for i in range(len(words)):
            w = words[i]
            t_old = assign[i]
            topic_word[t_old, w] -= 1
            doc_topic[d, t_old] -= 1
            topic_total[t_old] -= 1
            weights = ((doc_topic[d] + alpha)
                       * (topic_word[:, w] + beta) / (topic_total + v_size * beta))
            cumulative = np.cumsum(weights)
            t_new = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            if t_new >= len(weights):  # guard against rounding at the top end
                t_new = len(weights) - 1
            assign[i] = t_new
            topic_word[t_new, w] += 1
            doc_topic[d, t_new] += 1
            topic_total[t_new] += 1


def fit_lda(docs: Sequence[Document], n_topics: int, alpha: Optional[float] = None,
            beta: float = DEFAULT_BETA, iterations: int = DEFAULT_ITERATIONS,
            seed: int = 0) -> ThemeModel:
    """Collapsed Gibbs sampling; deterministic per seed."""
    if not docs:
        raise ValueError("docs must be non-empty")
    if n_topics < 1:
        raise ValueError("n_topics must be >= 1")
    if alpha is None:
        alpha = default_alpha(n_topics)

    vocab: List[str] = []
    word_index: Dict[str, int] = {}
    for doc in docs:
        for w in doc.tokens:
            if w not in word_index:
                word_index[w] = len(vocab)
                vocab.append(w)
    v_size = len(vocab)

    rng = np.random.default_rng(seed)
    doc_words = [np.array([word_index[w] for w in doc.tokens], dtype=np.int64)
                 for doc in docs]
    topic_word = np.zeros((n_topics, v_size), dtype=np.int64)
    doc_topic = np.zeros((len(docs), n_topics), dtype=np.int64)
    topic_total = np.zeros(n_topics, dtype=np.int64)
    doc_assign = []
    for d, words in enumerate(doc_words):
        assign = rng.integers(0, n_topics, size=len(words))
        doc_assign.append(assign)
        for w, t in zip(words, assign):
            topic_word[t, w] += 1
            doc_topic[d, t] += 1
            topic_total[t] += 1

    if n_topics > 1:
        for _ in range(iterations):
            _gibbs_pass(doc_words, doc_assign, topic_word, doc_topic,
                        topic_total, alpha, beta, v_size, rng)

    total = sum(len(w) for w in doc_words)
    assert topic_word.sum() == doc_topic.sum() == total, "token counts must be conserved"

    model = ThemeModel(
        n_topics=n_topics, alpha=alpha, beta=beta, vocab=vocab,
        topic_word=topic_word, doc_topic=doc_topic,
        doc_ids=[doc.song_id for doc in docs],
    )
    model.song_themes = {
        doc.song_id: int(np.argmax(doc_topic[d])) for d, doc in enumerate(docs)
    }
    return model


def infer_doc_topics(model: ThemeModel, tokens: Sequence[str], seed: int = 0,
                     iterations: int = 50) -> np.ndarray:
    """Fold-in estimate of a document's topic mixture.

    Topic-word counts stay frozen; only the document's own assignments are
    resampled.  Out-of-vocabulary tokens are skipped.  Returns the smoothed
    mixture (counts + alpha, normalised).
    """
    word_ids = np.array([model.word_index[w] for w in tokens if w in model.word_index],
                        dtype=np.int64)
    n_topics = model.n_topics
    counts = np.zeros(n_topics, dtype=np.int64)
    if len(word_ids) == 0 or n_topics == 1:
        counts[:] = 0
        if n_topics == 1:
            counts[0] = len(word_ids)
        theta = counts + model.alpha
        return theta / theta.sum()

    rng = np.random.default_rng(seed)
    phi = model.topic_word_probs()
    assign = rng.integers(0, n_topics, size=len(word_ids))
    for t in assign:
        counts[t] += 1
    for _ in range(iterations):
        for i, w in enumerate(word_ids):
            counts[assign[i]] -= 1
            weights = (counts + model.alpha) * phi[:, w]
            cumulative = np.cumsum(weights)
            t_new = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            if t_new >= n_topics:
                t_new = n_topics - 1
            assign[i] = t_new
            counts[t_new] += 1
    theta = counts + model.alpha
    return theta / theta.sum()


def perplexity(model: ThemeModel, docs: Sequence[Document], seed: int = 0,
               fold_in_iterations: int = 50) -> float:
    """exp(-mean per-token log-likelihood) under fold-in point estimates.

    Tokens outside the model vocabulary are skipped (and excluded from the
    token count).
    """
    if not docs:
        raise ValueError("docs must be non-empty")
    phi = model.topic_word_probs()
    log_lik = 0.0
    n_tokens = 0
    for d, doc in enumerate(docs):
        theta = infer_doc_topics(model, doc.tokens, seed=seed + d,
                                 iterations=fold_in_iterations)
        for w in doc.tokens:
            idx = model.word_index.get(w)
            if idx is None:
                continue
            log_lik += math.log(float(theta @ phi[:, idx]))
            n_tokens += 1
    if n_tokens == 0:
        raise ValueError("no in-vocabulary tokens in held-out docs")
    return math.exp(-log_lik / n_tokens)


def coherence_umass(model: ThemeModel, docs: Sequence[Document],
                    top_k: int = TOP_K) -> List[float]:
    """UMass coherence per topic over its top-k words.

    For words ranked w_1..w_k: sum over i > j of
    log((D(w_i, w_j) + 1) / D(w_j)), where D counts documents.  Pairs whose
    conditioning word never occurs in the docs are skipped.
    """
    if not docs:
        raise ValueError("docs must be non-empty")
    doc_sets = [set(doc.tokens) for doc in docs]
    scores = []
    for words in model.top_words(top_k):
        total = 0.0
        for i in range(1, len(words)):
            for j in range(i):
                d_j = sum(1 for s in doc_sets if words[j] in s)
                if d_j == 0:
                    continue
                d_ij = sum(1 for s in doc_sets if words[i] in s and words[j] in s)
                total += math.log((d_ij + 1) / d_j)
        scores.append(total)
    return scores


def theme_embedding(model: ThemeModel, vectors: "WordVectorTable",
                    top_k: int = TOP_K) -> np.ndarray:
    """Per-theme embedding: mean of the top words' vectors.

    Words missing from the table are skipped with a warning; a theme whose
    top words are all missing is an error.
    """
    out = np.zeros((model.n_topics, vectors.dim), dtype=np.float64)
    for t, words in enumerate(model.top_words(top_k)):
        found = []
        for w in words:
            vec = vectors.vectors.get(w)
            if vec is None:
                logger.warning("topic %d top word %r has no vector; skipped", t, w)
            else:
                found.append(vec)
        if not found:
            raise ValueError(f"no vectors found for any top word of topic {t}")
        out[t] = np.mean(found, axis=0)
    return out


def assign_song_theme(model: ThemeModel, docs: Sequence[Document], seed: int = 0,
                      fold_in_iterations: int = 50) -> Dict[str, int]:
    """Theme id per song: argmax of the song's topic mixture (ties -> lowest).

    Songs present in the training set reuse their stored counts; unseen
    songs are folded in.
    """
    known = {sid: d for d, sid in enumerate(model.doc_ids)}
    out = {}
    for i, doc in enumerate(docs):
        if doc.song_id in known:
            theta = model.doc_topic[known[doc.song_id]] + model.alpha
            theta = theta / theta.sum()
        else:
            theta = infer_doc_topics(model, doc.tokens, seed=seed + i,
                                     iterations=fold_in_iterations)
        out[doc.song_id] = int(np.argmax(theta))
    return out


@dataclass
class SelectionRecord:
    n_topics: int
    perplexity: float
    mean_coherence: float


def selection_report(train_docs: Sequence[Document], heldout_docs: Sequence[Document],
                     candidates: Iterable[int] = range(2, 9),
                     iterations: int = DEFAULT_ITERATIONS, seed: int = 0) -> List[SelectionRecord]:
    """Fit one model per candidate topic count and report held-out
    perplexity plus mean UMass coherence (computed on the training docs)."""
    records = []
    for n in candidates:
        model = fit_lda(train_docs, n, iterations=iterations, seed=seed)
        records.append(SelectionRecord(
            n_topics=n,
            perplexity=perplexity(model, heldout_docs, seed=seed),
            mean_coherence=float(np.mean(coherence_umass(model, train_docs))),
        ))
    return records


@dataclass
class WordVectorTable:
    vectors: Dict[str, np.ndarray]
    dim: int

    @classmethod
    def load(cls, path) -> "WordVectorTable":
        """Plain-text vectors: optional "count dim" header, then one
        "word f1 f2 ... fD" line per word."""
        vectors: Dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            parts = first.split()
            if len(parts) == 2 and all(p.lstrip("-").isdigit() for p in parts):
                dim = int(parts[1])  # header line
            elif parts:
                vectors[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
                dim = len(parts) - 1
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
                if dim is None:
                    dim = len(vec)
                elif len(vec) != dim:
                    raise ValueError(f"vector for {parts[0]!r} has dim {len(vec)}, expected {dim}")
                vectors[parts[0]] = vec
        if dim is None or not vectors:
            raise ValueError(f"no vectors found in {path}")
        return cls(vectors, dim)
