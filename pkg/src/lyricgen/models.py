"""Generator and discriminator models.

The generator is a single-layer LSTM language model over syllable tokens
with three conditioning modes:

* ``none`` — plain language model;
* ``mc``   — melody-conditioned: the lyric embedding is concatenated with
  the embedding of the *next* melody note (generating position t consumes
  melody token t, whose input step is t-1);
* ``tmc``  — melody- and theme-conditioned: additionally, an affine
  projection of a theme vector initialises the hidden state h0 (the cell
  state starts at zero).

The discriminator is a 1-D CNN text classifier: embedding, parallel
convolution banks with max-over-time pooling, two fully connected layers
with dropout between them, sigmoid output.

Checkpoints are a single JSON header line (architecture, vocab hashes,
phase, counters, parameter manifest) followed by raw little-endian float64
blocks in manifest order: for each parameter its values, then any listed
optimizer slot arrays.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import END, N_SPECIALS, PAD, START, UNK, Vocab
from .nn import (
    LstmCellParams, Parameter, Tensor, affine, concat_cols, conv1d_maxpool,
    dropout, embed, log_softmax, lstm_step, sigmoid, tanh, uniform_init,
)

MODES = ("none", "mc", "tmc")
INIT_SCALE = 0.1


# ---------------------------------------------------------------------------
# configs


@dataclass
class GeneratorConfig:
    mode: str
    n_syllables: int
    n_notes: int = 0
    embed_dim: int = 128
    hidden_dim: int = 128
    theme_dim: int = 0
    t_max: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_syllables <= N_SPECIALS:
            raise ValueError("n_syllables must exceed the 4 specials")
        if self.conditioned and self.n_notes <= N_SPECIALS:
            raise ValueError(f"mode {self.mode!r} requires a melody vocabulary")
        if self.themed and self.theme_dim <= 0:
            raise ValueError("mode 'tmc' requires theme_dim > 0")

    @property
    def conditioned(self) -> bool:
        return self.mode != "none"

    @property
    def themed(self) -> bool:
        return self.mode == "tmc"

    @property
    def lstm_input_dim(self) -> int:
        return self.embed_dim * (2 if self.conditioned else 1)

    def to_json(self) -> dict:
        return {"mode": self.mode, "n_syllables": self.n_syllables,
                "n_notes": self.n_notes, "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim, "theme_dim": self.theme_dim,
                "t_max": self.t_max}

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorConfig":
        return cls(**obj)


@dataclass
class DiscriminatorConfig:
    n_syllables: int
    embed_dim: int = 128
    filter_widths: Tuple[int, ...] = (2, 3, 4, 5)
    n_filters: int = 64
    fc_hidden: int = 128
    dropout: float = 0.25

    def __post_init__(self):
        self.filter_widths = tuple(self.filter_widths)
        if self.n_syllables <= N_SPECIALS:
            raise ValueError("n_syllables must exceed the 4 specials")

    @property
    def pooled_dim(self) -> int:
        return len(self.filter_widths) * self.n_filters

    def to_json(self) -> dict:
        return {"n_syllables": self.n_syllables, "embed_dim": self.embed_dim,
                "filter_widths": list(self.filter_widths),
                "n_filters": self.n_filters, "fc_hidden": self.fc_hidden,
                "dropout": self.dropout}

    @classmethod
    def from_json(cls, obj: dict) -> "DiscriminatorConfig":
        obj = dict(obj)
        obj["filter_widths"] = tuple(obj["filter_widths"])
        return cls(**obj)


def generator_param_count(cfg: GeneratorConfig) -> int:
    """Closed-form trainable parameter count for a generator config."""
    h, e = cfg.hidden_dim, cfg.embed_dim
    count = cfg.n_syllables * e                       # lyric embedding
    if cfg.conditioned:
        count += cfg.n_notes * e                      # melody embedding
    if cfg.themed:
        count += cfg.theme_dim * h + h                # theme projection
    d = cfg.lstm_input_dim
    count += 4 * h * d + 4 * h * h + 4 * h            # LSTM cell
    count += h * cfg.n_syllables + cfg.n_syllables    # output projection
    return count


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    count = cfg.n_syllables * cfg.embed_dim
    count += sum(w * cfg.embed_dim * cfg.n_filters for w in cfg.filter_widths)
    count += cfg.pooled_dim * cfg.fc_hidden + cfg.fc_hidden
    count += cfg.fc_hidden * 1 + 1
    return count


def reference_configs() -> Dict[str, object]:
    """Architecture configs at full lyrics-dataset scale (3,768 syllable
    types and 270 note types plus specials; 300-dim word vectors), used for
    parameter budgeting."""
    v_l, v_m = 3768, 270
    return {
        "generator_none": GeneratorConfig("none", v_l, 0),
        "generator_mc": GeneratorConfig("mc", v_l, v_m),
        "generator_tmc": GeneratorConfig("tmc", v_l, v_m, theme_dim=300),
        "discriminator": DiscriminatorConfig(v_l),
    }


# ---------------------------------------------------------------------------
# generator


class GeneratorModel:
    """LSTM syllable generator; ``rng=None`` gives all-zero weights."""

    def __init__(self, config: GeneratorConfig, rng: Optional[np.random.Generator] = None):
        self.config = config
        e, h = config.embed_dim, config.hidden_dim

        def init(shape):
            return uniform_init(shape, rng, INIT_SCALE) if rng is not None \
                else Parameter(np.zeros(shape))

        self.lyric_embed = init((config.n_syllables, e))
        self.melody_embed = init((config.n_notes, e)) if config.conditioned else None
        if config.themed:
            self.theme_w = init((config.theme_dim, h))
            self.theme_b = Parameter(np.zeros(h))
        else:
            self.theme_w = self.theme_b = None
        self.lstm = LstmCellParams(config.lstm_input_dim, h, rng, INIT_SCALE)
        self.out_w = init((h, config.n_syllables))
        self.out_b = Parameter(np.zeros(config.n_syllables))

    def param_items(self) -> List[Tuple[str, Parameter]]:
        items = [("lyric_embed", self.lyric_embed)]
        if self.melody_embed is not None:
            items.append(("melody_embed", self.melody_embed))
        if self.theme_w is not None:
            items.append(("theme_w", self.theme_w))
            items.append(("theme_b", self.theme_b))
        items += [("lstm_wx", self.lstm.w_x), ("lstm_wh", self.lstm.w_h),
                  ("lstm_b", self.lstm.bias), ("out_w", self.out_w),
                  ("out_b", self.out_b)]
        return items

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.param_items()]

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def _check_inputs(self, melody, theme_vecs):
        if self.config.conditioned and melody is None:
            raise ValueError(f"mode {self.config.mode!r} requires melody input")
        if not self.config.conditioned and melody is not None:
            raise ValueError("unconditioned model got melody input")
        if self.config.themed and theme_vecs is None:
            raise ValueError("mode 'tmc' requires theme vectors")
        if not self.config.themed and theme_vecs is not None:
            raise ValueError(f"mode {self.config.mode!r} got theme vectors")

    def init_state(self, batch_size: int, theme_vecs: Optional[np.ndarray]) -> Tuple[Tensor, Tensor]:
        h = self.config.hidden_dim
        c0 = Tensor(np.zeros((batch_size, h)))
        if self.config.themed:
            h0 = affine(Tensor(np.asarray(theme_vecs, dtype=np.float64)),
                        self.theme_w, self.theme_b)
        else:
            h0 = Tensor(np.zeros((batch_size, h)))
        return h0, c0

    def forward_logps(self, lyrics: np.ndarray, melody: Optional[np.ndarray] = None,
                      theme_vecs: Optional[np.ndarray] = None) -> List[Tensor]:
        """Teacher-forced pass over encoded rows (B x T).

        Returns T-1 tensors of shape B x V: log-probabilities for target
        positions 1..T-1.  Input step t consumes lyric token t and, when
        conditioned, melody token t+1 (the note aligned with the target).
        """
        self._check_inputs(melody, theme_vecs)
        b, t_len = lyrics.shape
        h, c = self.init_state(b, theme_vecs)
        logps = []
        for t in range(t_len - 1):
            x = embed(self.lyric_embed, lyrics[:, t])
            if self.config.conditioned:
                x = concat_cols(x, embed(self.melody_embed, melody[:, t + 1]))
            h, c = lstm_step(self.lstm, x, h, c)
            logps.append(log_softmax(affine(h, self.out_w, self.out_b)))
        return logps

    # -- numpy fast path (no gradients), used for sampling and rollouts ----

    def np_init_state(self, batch_size: int, theme_vecs: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        h_dim = self.config.hidden_dim
        c = np.zeros((batch_size, h_dim))
        if self.config.themed:
            h = np.asarray(theme_vecs, dtype=np.float64) @ self.theme_w.value + self.theme_b.value
        else:
            h = np.zeros((batch_size, h_dim))
        return h, c

    def np_step(self, prev: np.ndarray, melody_idx: Optional[np.ndarray],
                h: np.ndarray, c: np.ndarray):
        """One stochastic-free step: returns (log-probs B x V, h', c')."""
        x = self.lyric_embed.value[prev]
        if self.config.conditioned:
            x = np.concatenate([x, self.melody_embed.value[melody_idx]], axis=1)
        hid = self.config.hidden_dim
        gates = x @ self.lstm.w_x.value.T + h @ self.lstm.w_h.value.T + self.lstm.bias.value
        i = _np_sigmoid(gates[:, :hid])
        f = _np_sigmoid(gates[:, hid:2 * hid])
        g = np.tanh(gates[:, 2 * hid:3 * hid])
        o = _np_sigmoid(gates[:, 3 * hid:])
        c2 = f * c + i * g
        h2 = o * np.tanh(c2)
        logits = h2 @ self.out_w.value + self.out_b.value
        return _np_log_softmax(logits), h2, c2


def _np_sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _np_log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass
class GenerationContext:
    """Inputs for sampling one line: melody row iff the model is melody-
    conditioned, theme vector iff themed, plus seed and length cap."""

    seed: int
    t_max: int
    melody_row: Optional[np.ndarray] = None
    theme_vec: Optional[np.ndarray] = None


def sample_batch(model: GeneratorModel, rng: np.random.Generator,
                 batch_size: Optional[int] = None,
                 melody_rows: Optional[np.ndarray] = None,
                 theme_vecs: Optional[np.ndarray] = None,
                 t_max: Optional[int] = None) -> np.ndarray:
    """Autoregressive multinomial sampling (temperature 1), no gradients.

    Returns encoded rows B x t_max shaped like training data:
    [<START>, tokens..., <END>, <PAD>...].  <PAD>/<START>/<UNK> are never
    sampled; <END> is masked at the first step so every line has at least
    one real token, and is forced at position t_max-1 if still running.
    """
    model._check_inputs(melody_rows, theme_vecs)
    if melody_rows is not None:
        melody_rows = np.asarray(melody_rows, dtype=np.int64)
        b = melody_rows.shape[0]
        if t_max is None:
            t_max = melody_rows.shape[1]
        if melody_rows.shape[1] != t_max:
            raise ValueError("melody rows length differs from t_max")
    else:
        if batch_size is None:
            raise ValueError("batch_size required without melody rows")
        b = batch_size
        if t_max is None:
            t_max = model.config.t_max
    if t_max < 3:
        raise ValueError("t_max must allow START, one token, and END")

    rows = np.full((b, t_max), PAD, dtype=np.int64)
    rows[:, 0] = START
    alive = np.ones(b, dtype=bool)
    h, c = model.np_init_state(b, theme_vecs)
    continue_rows(model, rows, alive, h, c, 1, melody_rows, rng)
    return rows


def continue_rows(model: GeneratorModel, rows: np.ndarray, alive: np.ndarray,
                  h: np.ndarray, c: np.ndarray, start_p: int,
                  melody_rows: Optional[np.ndarray],
                  rng: np.random.Generator) -> np.ndarray:
    """Sample positions ``start_p``.. of ``rows`` in place.

    ``alive`` marks rows still running (False rows stay untouched); ``h``/``c``
    must be the recurrent state after consuming positions 0..start_p-1.
    Sampling rules match :func:`sample_batch`; rows alive at position
    t_max-1 get <END> forced there.
    """
    b, t_max = rows.shape
    alive = alive.copy()
    for p in range(start_p, t_max):
        if p == t_max - 1:
            rows[alive, p] = END
            break
        if not alive.any():
            break
        prev = rows[:, p - 1]
        mel = melody_rows[:, p] if melody_rows is not None else None
        logp, h, c = model.np_step(prev, mel, h, c)
        probs = np.exp(logp)
        probs[:, [PAD, START, UNK]] = 0.0
        if p == 1:
            probs[:, END] = 0.0
        probs /= probs.sum(axis=1, keepdims=True)
        draws = rng.random(b)
        cdf = np.cumsum(probs, axis=1)
        picks = np.array([int(np.searchsorted(cdf[i], draws[i] * cdf[i, -1], side="right"))
                          for i in range(b)], dtype=np.int64)
        picks = np.minimum(picks, probs.shape[1] - 1)
        newly_done = alive & (picks == END)
        rows[alive, p] = picks[alive]
        alive = alive & ~newly_done
    return rows


def row_to_tokens(row: np.ndarray) -> List[int]:
    """Real token ids between <START> and <END>/<PAD> of an encoded row."""
    out = []
    for idx in row[1:]:
        if idx in (END, PAD):
            break
        out.append(int(idx))
    return out


def gen_sample(model: GeneratorModel, ctx: GenerationContext) -> List[int]:
    """Sample one line per the context; returns real syllable ids only."""
    rng = np.random.default_rng(ctx.seed)
    melody = ctx.melody_row[None, :] if ctx.melody_row is not None else None
    themes = ctx.theme_vec[None, :] if ctx.theme_vec is not None else None
    rows = sample_batch(model, rng, batch_size=1, melody_rows=melody,
                        theme_vecs=themes, t_max=ctx.t_max)
    return row_to_tokens(rows[0])


# ---------------------------------------------------------------------------
# discriminator


class DiscriminatorModel:
    """CNN text classifier; ``rng=None`` gives all-zero weights."""

    def __init__(self, config: DiscriminatorConfig, rng: Optional[np.random.Generator] = None):
        self.config = config

        def init(shape):
            return uniform_init(shape, rng, INIT_SCALE) if rng is not None \
                else Parameter(np.zeros(shape))

        self.embed = init((config.n_syllables, config.embed_dim))
        self.conv_filters = [init((w, config.embed_dim, config.n_filters))
                             for w in config.filter_widths]
        self.fc1_w = init((config.pooled_dim, config.fc_hidden))
        self.fc1_b = Parameter(np.zeros(config.fc_hidden))
        self.fc2_w = init((config.fc_hidden, 1))
        self.fc2_b = Parameter(np.zeros(1))

    def param_items(self) -> List[Tuple[str, Parameter]]:
        items = [("embed", self.embed)]
        items += [(f"conv_w{w}", p)
                  for w, p in zip(self.config.filter_widths, self.conv_filters)]
        items += [("fc1_w", self.fc1_w), ("fc1_b", self.fc1_b),
                  ("fc2_w", self.fc2_w), ("fc2_b", self.fc2_b)]
        return items

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.param_items()]

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def logits(self, rows: np.ndarray, train_mode: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """Pre-sigmoid scores, shape B x 1."""
        rows = np.asarray(rows, dtype=np.int64)
        widest = max(self.config.filter_widths)
        if rows.shape[1] < widest:
            pad = np.full((rows.shape[0], widest - rows.shape[1]), PAD, dtype=np.int64)
            rows = np.concatenate([rows, pad], axis=1)
        x = embed(self.embed, rows)                       # B x T x E
        pooled = conv1d_maxpool(x, self.conv_filters)     # B x pooled_dim
        hidden = tanh(affine(pooled, self.fc1_w, self.fc1_b))
        if train_mode and rng is None:
            raise ValueError("train mode dropout needs an rng")
        hidden = dropout(hidden, self.config.dropout, rng, train_mode)
        return affine(hidden, self.fc2_w, self.fc2_b)


def disc_forward(model: DiscriminatorModel, rows: np.ndarray, train_mode: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
    """Probability that each row is real data, shape B x 1 in (0, 1)."""
    return sigmoid(model.logits(rows, train_mode, rng))


def disc_probs_np(model: DiscriminatorModel, rows: np.ndarray) -> np.ndarray:
    """Eval-mode probabilities as a flat numpy vector (no graph kept)."""
    return disc_forward(model, rows, train_mode=False).value.reshape(-1).copy()


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "lyricgen-checkpoint"
CHECKPOINT_VERSION = 1


def vocab_hashes(vocab: Vocab) -> Dict[str, str]:
    def digest(obj) -> str:
        return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()

    return {"syllables": digest(vocab.syllables),
            "notes": digest([list(n) for n in vocab.notes])}


def save_checkpoint(path, kind: str, config: dict,
                    named_params: Sequence[Tuple[str, Parameter]],
                    vocab_hash: Optional[Dict[str, str]] = None,
                    seed: Optional[int] = None, phase: str = "",
                    counters: Optional[dict] = None,
                    slot_names: Iterable[str] = ()) -> None:
    slot_names = list(slot_names)
    manifest = []
    for name, p in named_params:
        arrays = ["value"] + [s for s in slot_names if s in p.slots]
        manifest.append({"name": name, "shape": list(p.value.shape), "arrays": arrays})
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "vocab_hashes": vocab_hash or {},
        "seed": seed,
        "phase": phase,
        "counters": counters or {},
        "params": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for (name, p), entry in zip(named_params, manifest):
            for array_name in entry["arrays"]:
                arr = p.value if array_name == "value" else p.slots[array_name]
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Tuple[dict, Dict[str, Dict[str, np.ndarray]]]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a checkpoint file: {path}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        arrays: Dict[str, Dict[str, np.ndarray]] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            per_name = {}
            for array_name in entry["arrays"]:
                buf = fh.read(count * 8)
                if len(buf) != count * 8:
                    raise ValueError(f"truncated checkpoint: {path}")
                per_name[array_name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
            arrays[entry["name"]] = per_name
    return header, arrays


def restore_params(named_params: Sequence[Tuple[str, Parameter]],
                   arrays: Dict[str, Dict[str, np.ndarray]]) -> None:
    """Load values (and any saved optimizer slots) into parameters."""
    names = [n for n, _ in named_params]
    missing = [n for n in names if n not in arrays]
    extra = [n for n in arrays if n not in names]
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    for name, p in named_params:
        stored = arrays[name]
        if stored["value"].shape != p.value.shape:
            raise ValueError(f"{name}: shape {stored['value'].shape} != {p.value.shape}")
        p.value[...] = stored["value"]
        for array_name, arr in stored.items():
            if array_name != "value":
                p.slots[array_name] = arr.copy()


def save_generator(path, model: GeneratorModel, vocab: Optional[Vocab] = None,
                   seed: Optional[int] = None, phase: str = "",
                   counters: Optional[dict] = None,
                   slot_names: Iterable[str] = ()) -> None:
    save_checkpoint(path, "generator", model.config.to_json(), model.param_items(),
                    vocab_hash=vocab_hashes(vocab) if vocab else None,
                    seed=seed, phase=phase, counters=counters, slot_names=slot_names)


def load_generator(path) -> Tuple[GeneratorModel, dict]:
    header, arrays = load_checkpoint(path)
    if header["kind"] != "generator":
        raise ValueError(f"expected generator checkpoint, got {header['kind']!r}")
    model = GeneratorModel(GeneratorConfig.from_json(header["config"]))
    restore_params(model.param_items(), arrays)
    return model, header


def save_discriminator(path, model: DiscriminatorModel, vocab: Optional[Vocab] = None,
                       seed: Optional[int] = None, phase: str = "",
                       counters: Optional[dict] = None,
                       slot_names: Iterable[str] = ()) -> None:
    save_checkpoint(path, "discriminator", model.config.to_json(), model.param_items(),
                    vocab_hash=vocab_hashes(vocab) if vocab else None,
                    seed=seed, phase=phase, counters=counters, slot_names=slot_names)


def load_discriminator(path) -> Tuple[DiscriminatorModel, dict]:
    header, arrays = load_checkpoint(path)
    if header["kind"] != "discriminator":
        raise ValueError(f"expected discriminator checkpoint, got {header['kind']!r}")
    model = DiscriminatorModel(DiscriminatorConfig.from_json(header["config"]))
    restore_params(model.param_items(), arrays)
    return model, header


def clone_generator(model: GeneratorModel) -> GeneratorModel:
    """Deep copy of the parameter values (slots are not copied)."""
    twin = GeneratorModel(model.config)
    for (_, src), (_, dst) in zip(model.param_items(), twin.param_items()):
        dst.value[...] = src.value
    return twin
