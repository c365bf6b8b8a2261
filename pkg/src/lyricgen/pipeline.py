"""End-to-end workflow behind the CLI and the HTTP service: corpus
preparation, theme modeling, the training phases, generation, and the
evaluation reports.

Artifact layout
---------------
prepare  -> <prep>/vocab.json, manifest.json, {split}_{lyrics,notes,lengths}.npy
lda      -> <theme>/theme_model.json [, selection.json]
train    -> <ckpt>/config.json, mle.ndjson, disc.ndjson, adv.ndjson,
            mle_gen.ckpt, disc_pre.ckpt, last_gen.ckpt, last_disc.ckpt,
            best_gen.ckpt
evaluate -> <report>/report.json, report.txt [, confusion.csv]

Every JSON artifact embeds the seed and a hash of the settings that
produced it, and every step is deterministic given those two.
"""
from __future__ import annotations

import json
import logging
import os
import random
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import LdaSettings, ModelDims, config_hash
from .corpus import (
    CorpusError, EncodedBatch, LyricMelodyLine, NoteToken, Vocab,
    build_vocabs, encode_corpus, encode_melody_row, default_t_max,
    load_corpus, split_corpus, SYNTH_STOPWORDS,
)
from .evaluate import (
    BleuReport, ThemeEvalReport, alignment_ratio, bleu_report, cap_pool,
    format_score_table, theme_eval,
)
from .lda import (
    Document, ThemeModel, WordVectorTable, assign_song_theme, fit_lda,
    infer_doc_topics, preprocess, selection_report, theme_embedding,
)
from .models import (
    DiscriminatorConfig, DiscriminatorModel, GeneratorConfig, GeneratorModel,
    load_discriminator, load_generator, row_to_tokens, sample_batch,
    save_discriminator, save_generator, vocab_hashes,
)
from .ngram import BigramTable, McBigramTable
from .nn import Adagrad, Adam
from .training import (
    TrainConfig, TrainingError, TrainingLog, adversarial_loop, disc_pretrain,
    mle_pretrain,
)

logger = logging.getLogger(__name__)

PREP_FORMAT = "lyricgen-prep"
THEME_FORMAT = "lyricgen-theme"
TRAIN_FORMAT = "lyricgen-train"
REPORT_FORMAT = "lyricgen-report"
SPLITS = ("train", "valid", "test")

# Small English function-word list; enough to keep LDA topics contentful.
DEFAULT_STOPWORDS = sorted(set(SYNTH_STOPWORDS) | {
    "i", "it", "is", "am", "are", "was", "be", "me", "we", "he", "she",
    "they", "that", "this", "on", "at", "for", "with", "so", "but", "or",
    "not", "no", "do", "oh", "all", "its", "your", "our",
})


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# prepare

@dataclass
class PrepData:
    path: Path
    vocab: Vocab
    t_max: int
    seed: int
    manifest: dict
    lines: Dict[str, List[LyricMelodyLine]]
    batches: Dict[str, EncodedBatch]

    def song_ids(self, split: str) -> List[str]:
        return [sid for sid, _ in self.manifest["splits"][split]]


def prepare_corpus(corpus_path, out_dir, seed: int,
                   t_max: Optional[int] = None) -> PrepData:
    """Load, validate, split 80/10/10, encode, and cache a corpus."""
    corpus_path = Path(corpus_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = load_corpus(corpus_path)
    if t_max is None:
        t_max = default_t_max(lines)
    kept = [l for l in lines if len(l.syllables) + 2 <= t_max]
    dropped = len(lines) - len(kept)
    if dropped:
        logger.warning("dropped %d lines longer than t_max=%d", dropped, t_max)
    if not kept:
        raise CorpusError("no lines fit the configured maximum length")

    # Vocabulary covers the whole corpus (split-independent); inference-time
    # novelty is still handled by <UNK> / nearest-note.
    vocab = build_vocabs(kept)
    train, valid, test = split_corpus(kept, seed=seed)
    split_lines = {"train": train, "valid": valid, "test": test}

    settings = {"command": "prepare", "corpus": str(corpus_path),
                "seed": seed, "t_max": t_max}
    manifest = {
        "format": PREP_FORMAT, "version": 1,
        "corpus": str(corpus_path.resolve()),
        "seed": seed, "t_max": t_max,
        "config_hash": config_hash(settings),
        "n_syllables": vocab.n_syllables, "n_notes": vocab.n_notes,
        "dropped": dropped,
        "counts": {name: len(ls) for name, ls in split_lines.items()},
        "splits": {name: [[l.song_id, l.line_index] for l in ls]
                   for name, ls in split_lines.items()},
    }

    vocab.save(out_dir / "vocab.json")
    _write_json(out_dir / "manifest.json", manifest)
    batches = {}
    for name, ls in split_lines.items():
        batch = encode_corpus(ls, vocab, t_max)
        batches[name] = batch
        np.save(out_dir / f"{name}_lyrics.npy", batch.lyrics)
        np.save(out_dir / f"{name}_notes.npy", batch.notes)
        np.save(out_dir / f"{name}_lengths.npy", batch.lengths)
    return PrepData(out_dir, vocab, t_max, seed, manifest, split_lines, batches)


def load_prep(prep_dir) -> PrepData:
    prep_dir = Path(prep_dir)
    manifest = _read_json(prep_dir / "manifest.json")
    if manifest.get("format") != PREP_FORMAT:
        raise CorpusError(f"not a prepared-corpus directory: {prep_dir}")
    vocab = Vocab.load(prep_dir / "vocab.json")
    corpus = Path(manifest["corpus"])
    if not corpus.exists():
        raise CorpusError(f"corpus file recorded in manifest is gone: {corpus}")
    by_id = {(l.song_id, l.line_index): l for l in load_corpus(corpus)}
    lines = {}
    for name in SPLITS:
        try:
            lines[name] = [by_id[(sid, li)] for sid, li in manifest["splits"][name]]
        except KeyError as exc:
            raise CorpusError(
                f"corpus no longer contains line {exc.args[0]!r} listed in the "
                f"manifest; re-run prepare") from exc
    batches = {
        name: EncodedBatch(
            lyrics=np.load(prep_dir / f"{name}_lyrics.npy"),
            notes=np.load(prep_dir / f"{name}_notes.npy"),
            lengths=np.load(prep_dir / f"{name}_lengths.npy"),
        )
        for name in SPLITS
    }
    return PrepData(prep_dir, vocab, manifest["t_max"], manifest["seed"],
                    manifest, lines, batches)


# ---------------------------------------------------------------------------
# theme modeling

@dataclass
class ThemeArtifacts:
    path: Path
    meta: dict
    model: ThemeModel

    @property
    def matrix(self) -> np.ndarray:
        if self.model.embeddings is None:
            raise TrainingError(
                "theme model has no embeddings; re-run `lyricgen lda` with "
                "--vectors pointing at a word-vector file")
        return self.model.embeddings

    def theme_ids(self, song_ids: Sequence[str]) -> np.ndarray:
        themes = self.model.song_themes
        missing = [s for s in song_ids if s not in themes]
        if missing:
            raise TrainingError(
                f"no theme assignment for songs {missing[:3]}; re-run lda")
        return np.array([themes[s] for s in song_ids], dtype=np.int64)


def _song_docs(lines: Sequence[LyricMelodyLine]) -> List[Document]:
    return preprocess(lines, DEFAULT_STOPWORDS)


def run_lda(prep: PrepData, out_dir, settings: LdaSettings, seed: int,
            vectors_path=None, select: bool = False) -> ThemeArtifacts:
    """Fit LDA on training songs, assign themes for every split's songs,
    attach per-theme embeddings when a vector table is given, and
    optionally emit the topic-count selection report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_docs = _song_docs(prep.lines["train"])
    model = fit_lda(train_docs, settings.n_themes,
                    iterations=settings.iterations, seed=seed)

    other_docs = _song_docs(prep.lines["valid"] + prep.lines["test"])
    model.song_themes.update(assign_song_theme(model, other_docs, seed=seed))
    model.labels = ["/".join(words[:3]) for words in model.top_words(3)]

    if vectors_path is not None:
        table = WordVectorTable.load(vectors_path)
        model.embeddings = theme_embedding(model, table)

    settings_obj = {"command": "lda", "seed": seed,
                    "n_themes": settings.n_themes,
                    "iterations": settings.iterations,
                    "vectors": str(vectors_path) if vectors_path else None}
    meta = {"format": THEME_FORMAT, "version": 1, "seed": seed,
            "config_hash": config_hash(settings_obj),
            "n_themes": settings.n_themes, "iterations": settings.iterations,
            "vectors": str(vectors_path) if vectors_path else None}
    _write_json(out_dir / "theme_model.json",
                {"meta": meta, "model": model.to_json()})

    if select:
        heldout = _song_docs(prep.lines["valid"])
        records = selection_report(train_docs, heldout,
                                   iterations=settings.iterations, seed=seed)
        _write_json(out_dir / "selection.json", {
            "meta": meta,
            "candidates": [{"n_themes": r.n_topics,
                            "perplexity": r.perplexity,
                            "mean_coherence": r.mean_coherence}
                           for r in records],
        })
    return ThemeArtifacts(out_dir, meta, model)


def load_theme(theme_dir) -> ThemeArtifacts:
    theme_dir = Path(theme_dir)
    path = theme_dir / "theme_model.json"
    if not path.exists():
        raise TrainingError(
            f"no theme model at {path}; run `lyricgen lda` first")
    obj = _read_json(path)
    if obj.get("meta", {}).get("format") != THEME_FORMAT:
        raise TrainingError(f"not a theme model file: {path}")
    return ThemeArtifacts(theme_dir, obj["meta"], ThemeModel.from_json(obj["model"]))


# ---------------------------------------------------------------------------
# training

@contextmanager
def _exclusive_lock(directory: Path):
    """Training commands are exclusive per checkpoint directory."""
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise TrainingError(
            f"another training run holds {lock} (pid "
            f"{lock.read_text(encoding='utf-8').strip() or 'unknown'}); "
            f"remove the file if that process is gone") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _themed_batch(batch: EncodedBatch, song_ids: Sequence[str],
                  theme: ThemeArtifacts) -> EncodedBatch:
    return EncodedBatch(lyrics=batch.lyrics, notes=batch.notes,
                        lengths=batch.lengths,
                        themes=theme.theme_ids(song_ids))


def _generator_config(mode: str, prep: PrepData, dims: ModelDims,
                      theme: Optional[ThemeArtifacts]) -> GeneratorConfig:
    theme_dim = 0
    if mode == "tmc":
        theme_dim = theme.matrix.shape[1] if theme is not None else dims.theme_dim
    return GeneratorConfig(
        mode=mode,
        n_syllables=prep.vocab.n_syllables,
        n_notes=prep.vocab.n_notes if mode != "none" else 0,
        embed_dim=dims.embed_dim, hidden_dim=dims.hidden_dim,
        theme_dim=theme_dim, t_max=prep.t_max)


def run_training(prep: PrepData, mode: str, phase: str, out_dir,
                 tconfig: TrainConfig, dims: ModelDims,
                 theme: Optional[ThemeArtifacts] = None) -> dict:
    """Run the requested phase(s); returns a summary dict.

    phase "mle" pretrains the generator (MLE) and the discriminator;
    phase "adv" runs the adversarial rounds from the pretrained pair
    (resuming mid-loop when a later checkpoint exists); "all" is both.
    """
    if phase not in ("mle", "adv", "all"):
        raise ValueError(f"unknown phase {phase!r}")
    if mode == "tmc" and theme is None:
        raise TrainingError(
            "mode tmc needs a theme model; run `lyricgen lda` first and pass "
            "--theme-model")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    settings = {"command": "train", "mode": mode, "seed": tconfig.seed,
                "model": dims.to_json(), "train": tconfig.to_json(),
                "prep_hash": prep.manifest["config_hash"],
                "theme_hash": theme.meta["config_hash"] if theme else None}
    _write_json(out_dir / "config.json", {
        "format": TRAIN_FORMAT, "version": 1, "mode": mode,
        "seed": tconfig.seed, "config_hash": config_hash(settings),
        "model": dims.to_json(), "train": tconfig.to_json(),
        "prep": str(prep.path.resolve()),
        "theme": str(theme.path.resolve()) if theme else None,
    })

    if mode == "tmc":
        train = _themed_batch(prep.batches["train"], prep.song_ids("train"), theme)
        valid = _themed_batch(prep.batches["valid"], prep.song_ids("valid"), theme)
        theme_matrix = theme.matrix
    else:
        train, valid = prep.batches["train"], prep.batches["valid"]
        theme_matrix = None

    summary = {"mode": mode, "phase": phase, "out_dir": str(out_dir)}
    with _exclusive_lock(out_dir):
        if phase in ("mle", "all"):
            summary.update(_run_pretrain(prep, mode, out_dir, tconfig, dims,
                                         theme, train, valid, theme_matrix))
        if phase in ("adv", "all"):
            summary.update(_run_adversarial(prep, mode, out_dir, tconfig,
                                            train, valid, theme_matrix))
    return summary


def _run_pretrain(prep, mode, out_dir, tconfig, dims, theme,
                  train, valid, theme_matrix) -> dict:
    gcfg = _generator_config(mode, prep, dims, theme)
    gen = GeneratorModel(gcfg, np.random.default_rng([tconfig.seed, 10]))
    opt = Adam(gen.parameters(), lr=tconfig.gen_lr)
    log_path = out_dir / "mle.ndjson"
    log_path.unlink(missing_ok=True)
    curve = mle_pretrain(gen, train, tconfig, theme_matrix=theme_matrix,
                         valid=valid, log=TrainingLog(log_path), optimizer=opt)
    save_generator(out_dir / "mle_gen.ckpt", gen, vocab=prep.vocab,
                   seed=tconfig.seed, phase="mle",
                   counters={"epoch": tconfig.mle_epochs, "adam_t": opt.t},
                   slot_names=["adam_m", "adam_v"])

    dcfg = DiscriminatorConfig(n_syllables=prep.vocab.n_syllables,
                               embed_dim=dims.embed_dim,
                               n_filters=max(8, dims.hidden_dim // 2),
                               fc_hidden=dims.hidden_dim)
    disc = DiscriminatorModel(dcfg, np.random.default_rng([tconfig.seed, 11]))
    dopt = Adagrad(disc.parameters(), lr=tconfig.disc_lr)
    dlog_path = out_dir / "disc.ndjson"
    dlog_path.unlink(missing_ok=True)
    disc_curve = disc_pretrain(disc, gen, train, valid, tconfig,
                               theme_matrix=theme_matrix,
                               log=TrainingLog(dlog_path), optimizer=dopt)
    save_discriminator(out_dir / "disc_pre.ckpt", disc, vocab=prep.vocab,
                       seed=tconfig.seed, phase="disc",
                       counters={"epoch": tconfig.disc_epochs},
                       slot_names=["adagrad_acc"])
    return {"mle_final_loss": curve[-1], "mle_first_loss": curve[0],
            "disc_final_f1": disc_curve[-1][1]}


def _run_adversarial(prep, mode, out_dir, tconfig,
                     train, valid, theme_matrix) -> dict:
    last = out_dir / "last_gen.ckpt"
    resume = last.exists()
    if resume:
        gen, header = load_generator(last)
        disc, _ = load_discriminator(out_dir / "last_disc.ckpt")
        counters = header["counters"]
        gen_opt = Adam(gen.parameters(), lr=tconfig.gen_lr)
        gen_opt.t = counters["adam_t"]
        disc_opt = Adagrad(disc.parameters(), lr=tconfig.disc_lr)
        start_round = counters["round"]
        best_bleu2, best_round = counters["best_bleu2"], counters["best_round"]
        baseline = counters["baseline"]
        best_path = out_dir / "best_gen.ckpt"
        best_gen = load_generator(best_path)[0] if best_path.exists() else None
    else:
        mle = out_dir / "mle_gen.ckpt"
        if not mle.exists():
            raise TrainingError(
                f"no MLE checkpoint at {mle}; run `lyricgen train --phase mle` "
                f"first (adversarial training starts from the pretrained pair)")
        gen, _ = load_generator(mle)
        disc, _ = load_discriminator(out_dir / "disc_pre.ckpt")
        for p in gen.parameters() + disc.parameters():
            p.slots.clear()          # fresh optimizer state for the new phase
        gen_opt = disc_opt = None
        start_round, best_bleu2, best_round = 0, float("-inf"), -1
        baseline, best_gen = 0.0, None
        (out_dir / "adv.ndjson").unlink(missing_ok=True)

    result = adversarial_loop(
        gen, disc, train, valid, tconfig, theme_matrix=theme_matrix,
        log=TrainingLog(out_dir / "adv.ndjson"), checkpoint_dir=out_dir,
        vocab=prep.vocab, start_round=start_round, best_bleu2=best_bleu2,
        best_round=best_round, best_gen=best_gen,
        gen_optimizer=gen_opt, disc_optimizer=disc_opt, baseline=baseline)
    return {"adv_rounds_run": len(result.rounds),
            "best_round": result.best_round,
            "best_bleu2": result.best_bleu2,
            "resumed": resume}


# ---------------------------------------------------------------------------
# generation

@dataclass
class GenBundle:
    model: GeneratorModel
    header: dict
    vocab: Vocab
    theme: Optional[ThemeArtifacts] = None

    @property
    def mode(self) -> str:
        return self.model.config.mode


def load_bundle(checkpoint, vocab_path, theme_dir=None) -> GenBundle:
    model, header = load_generator(checkpoint)
    vocab = Vocab.load(vocab_path)
    stored = header.get("vocab_hashes") or None
    if stored is not None and stored != vocab_hashes(vocab):
        raise TrainingError(
            f"vocabulary {vocab_path} does not match the one this checkpoint "
            f"was trained with")
    theme = None
    if theme_dir is not None and (model.config.themed or
                                  (Path(theme_dir) / "theme_model.json").exists()):
        theme = load_theme(theme_dir)
    if model.config.themed and theme is None:
        raise TrainingError(
            "checkpoint is theme-conditioned; pass --theme-model")
    return GenBundle(model, header, vocab, theme)


def _theme_vector(bundle: GenBundle, theme_id: Optional[int]) -> Optional[np.ndarray]:
    cfg = bundle.model.config
    if not cfg.themed:
        if theme_id is not None and theme_id != -1:
            raise TrainingError(
                f"model {cfg.mode!r} is not theme-conditioned; omit the theme")
        return None
    if theme_id is None or theme_id == -1:
        return np.zeros(cfg.theme_dim)       # unthemed generation
    matrix = bundle.theme.matrix
    if not 0 <= theme_id < matrix.shape[0]:
        raise TrainingError(
            f"theme id {theme_id} out of range 0..{matrix.shape[0] - 1}")
    vec = matrix[theme_id]
    if vec.shape[0] != cfg.theme_dim:
        raise TrainingError("theme embedding width differs from the model's")
    return vec


def generate_lines(bundle: GenBundle,
                   melodies: Optional[Sequence[Sequence[NoteToken]]],
                   theme_id: Optional[int], seed: int, count: int = 1) -> List[dict]:
    """Sample ``count`` lines per melody (or ``count`` free-running lines
    for an unconditioned model).  Deterministic per seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    model, vocab = bundle.model, bundle.vocab
    cfg = model.config
    theme_vec = _theme_vector(bundle, theme_id)
    rng = np.random.default_rng([seed])
    out: List[dict] = []

    if not cfg.conditioned:
        if melodies:
            raise TrainingError(
                "model is unconditioned and cannot take a melody; retrain "
                "with --mode mc or tmc for melody conditioning")
        rows = sample_batch(model, rng, batch_size=count, t_max=cfg.t_max)
        for row in rows:
            syllables = [vocab.syllable_at(i) for i in row_to_tokens(row)]
            out.append({"syllables": syllables, "aligned": None, "n_notes": None})
        return out

    if not melodies:
        raise TrainingError("conditioned model needs a melody")
    for melody in melodies:
        if not melody:
            raise CorpusError("empty melody")
        if len(melody) + 2 > cfg.t_max:
            raise CorpusError(
                f"melody of {len(melody)} notes exceeds the model maximum "
                f"of {cfg.t_max - 2}")
        width = len(melody) + 2
        mel_row = encode_melody_row(melody, vocab, width)
        mel_rows = np.repeat(mel_row[None, :], count, axis=0)
        themes = np.repeat(theme_vec[None, :], count, axis=0) \
            if theme_vec is not None else None
        rows = sample_batch(model, rng, melody_rows=mel_rows,
                            theme_vecs=themes, t_max=width)
        for row in rows:
            syllables = [vocab.syllable_at(i) for i in row_to_tokens(row)]
            out.append({"syllables": syllables,
                        "aligned": len(syllables) == len(melody),
                        "n_notes": len(melody)})
    return out


def parse_melody_text(text: str) -> List[NoteToken]:
    """Inline melody syntax: space-separated pitch:duration pairs,
    durations in sixteenths — e.g. "60:4 62:4 64:8"."""
    notes = []
    errors = []
    for i, token in enumerate(text.split()):
        pitch_s, sep, dur_s = token.partition(":")
        if not sep:
            errors.append(f"token {i + 1} ({token!r}): expected pitch:duration")
            continue
        try:
            note = NoteToken(int(pitch_s), int(dur_s))
        except ValueError as exc:
            errors.append(f"token {i + 1} ({token!r}): {exc}")
            continue
        notes.append(note)
    if errors:
        raise CorpusError("; ".join(errors))
    if not notes:
        raise CorpusError("empty melody")
    return notes


def parse_melody_file(path) -> List[List[NoteToken]]:
    """Melodies from a file: either corpus JSONL records (their notes are
    used) or plain text lines of pitch:duration tokens."""
    path = Path(path)
    melodies: List[List[NoteToken]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                if raw.startswith("{"):
                    obj = json.loads(raw)
                    melodies.append([NoteToken(int(p), int(d))
                                     for p, d in obj["notes"]])
                else:
                    melodies.append(parse_melody_text(raw))
            except (CorpusError, ValueError, KeyError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    if not melodies:
        raise CorpusError(f"no melodies in {path}")
    return melodies


# ---------------------------------------------------------------------------
# evaluation

def _decoded(lines: Sequence[LyricMelodyLine]) -> List[List[str]]:
    return [list(l.syllables) for l in lines]


def _sample_rows(model: GeneratorModel, batch: EncodedBatch,
                 theme_matrix: Optional[np.ndarray],
                 theme_ids: Optional[np.ndarray],
                 rng: np.random.Generator) -> np.ndarray:
    if model.config.conditioned:
        themes = theme_matrix[theme_ids] if model.config.themed else None
        return sample_batch(model, rng, melody_rows=batch.notes,
                            theme_vecs=themes, t_max=batch.lyrics.shape[1])
    return sample_batch(model, rng, batch_size=len(batch.lyrics),
                        t_max=batch.lyrics.shape[1])


def _rows_to_strings(rows: np.ndarray, vocab: Vocab) -> List[List[str]]:
    return [[vocab.syllable_at(i) for i in row_to_tokens(row)] for row in rows]


def run_evaluate(prep: PrepData, checkpoints: Dict[str, Path], out_dir,
                 seed: int, theme: Optional[ThemeArtifacts] = None,
                 pool_cap: int = 5000,
                 theme_docs_per_class: int = 10,
                 theme_lines_per_doc: int = 5) -> dict:
    """Score bi-gram baselines plus the given checkpoints: BLEU2/BLEU4
    against the validation pool, melody alignment on the test split for
    conditioned models, and theme-conditioning classification when a
    theme-conditioned model and theme model are supplied."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    valid_lines, test_lines = prep.lines["valid"], prep.lines["test"]
    if not valid_lines:
        raise CorpusError("validation split is empty")
    pool = cap_pool(_decoded(valid_lines), pool_cap, seed)
    reports: Dict[str, BleuReport] = {}
    alignment: Dict[str, float] = {}
    theme_report: Optional[ThemeEvalReport] = None

    # baselines, fit on the training split
    bigram = BigramTable.fit(prep.lines["train"])
    mc_bigram = McBigramTable.fit(prep.lines["train"])
    py_rng = random.Random(f"lyricgen-eval:{seed}")
    max_len = prep.t_max - 2
    reports["bigram"] = bleu_report(
        [bigram.sample_line(py_rng, max_len=max_len) for _ in valid_lines], pool)
    reports["mc-bigram"] = bleu_report(
        [mc_bigram.sample_line(py_rng, l.notes, prep.vocab) for l in valid_lines],
        pool)

    bundles = {}
    for name, ckpt in checkpoints.items():
        bundle = load_bundle(ckpt, prep.path / "vocab.json",
                             theme_dir=theme.path if theme else None)
        bundles[name] = bundle
        model = bundle.model
        theme_matrix = theme.matrix if model.config.themed else None
        v_themes = (theme.theme_ids(prep.song_ids("valid"))
                    if model.config.themed else None)
        rng = np.random.default_rng([seed, 20, _stable_tag(name)])
        rows = _sample_rows(model, prep.batches["valid"], theme_matrix,
                            v_themes, rng)
        reports[name] = bleu_report(_rows_to_strings(rows, prep.vocab), pool)

        if model.config.conditioned and test_lines:
            t_themes = (theme.theme_ids(prep.song_ids("test"))
                        if model.config.themed else None)
            rng = np.random.default_rng([seed, 21, _stable_tag(name)])
            t_rows = _sample_rows(model, prep.batches["test"], theme_matrix,
                                  t_themes, rng)
            alignment[name] = alignment_ratio(
                [row_to_tokens(r) for r in t_rows],
                [l.notes for l in test_lines])

    themed = [(n, b) for n, b in bundles.items() if b.model.config.themed]
    if themed and theme is not None:
        name, bundle = themed[0]
        theme_report = _theme_conditioning_eval(
            bundle, theme, test_lines or valid_lines, seed,
            theme_docs_per_class, theme_lines_per_doc)
        (out_dir / "confusion.csv").write_text(theme_report.confusion_csv(),
                                               encoding="utf-8")

    settings = {"command": "evaluate", "seed": seed,
                "prep_hash": prep.manifest["config_hash"],
                "models": sorted(checkpoints),
                "pool_cap": pool_cap}
    report = {
        "format": REPORT_FORMAT, "version": 1, "seed": seed,
        "config_hash": config_hash(settings),
        "pool_size": len(pool),
        "bleu": {name: rep.to_json() for name, rep in reports.items()},
        "alignment": alignment,
        "theme": theme_report.to_json() if theme_report else None,
    }
    _write_json(out_dir / "report.json", report)

    text = format_score_table(reports)
    if alignment:
        text += "\nalignment ratio (test split)\n"
        for name, ratio in alignment.items():
            text += f"  {name}: {ratio:.3f}\n"
    if theme_report:
        text += (f"\ntheme classification: macro F1 {theme_report.macro_f1:.3f}, "
                 f"micro F1 {theme_report.micro_f1:.3f} "
                 f"({theme_report.n_classes} classes)\n")
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    return report


def _stable_tag(name: str) -> int:
    """Small deterministic integer from a model name, to fan out seeds."""
    return sum(name.encode("utf-8")) % 1000


def _theme_conditioning_eval(bundle: GenBundle, theme: ThemeArtifacts,
                             melody_lines: Sequence[LyricMelodyLine],
                             seed: int, docs_per_class: int,
                             lines_per_doc: int) -> ThemeEvalReport:
    """Generate themed pseudo-documents, classify them by LDA fold-in, and
    score the classification against the conditioning theme.

    Melodies are drawn from lines whose song the theme model assigns to the
    requested theme, mirroring real usage where a song's melody and its
    inferred theme arrive together (a melody can carry thematic cues of its
    own, and the conditioning inputs should not contradict each other).
    """
    n = theme.model.n_topics
    truths, preds = [], []
    all_melodies = [l.notes for l in melody_lines]
    assigned = theme.theme_ids([l.song_id for l in melody_lines])
    by_theme = {t: [m for m, a in zip(all_melodies, assigned) if a == t]
                for t in range(n)}
    pos = 0
    for t in range(n):
        melodies = by_theme[t] or all_melodies
        for d in range(docs_per_class):
            chosen = [melodies[(pos + i) % len(melodies)]
                      for i in range(lines_per_doc)]
            pos += lines_per_doc
            lines = generate_lines(bundle, chosen, theme_id=t,
                                   seed=seed + t * docs_per_class + d, count=1)
            tokens = [s for line in lines for s in line["syllables"]]
            theta = infer_doc_topics(theme.model, tokens,
                                     seed=seed + t * docs_per_class + d)
            truths.append(t)
            preds.append(int(np.argmax(theta)))
    return theme_eval(preds, truths, n)
