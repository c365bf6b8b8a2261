"""Training loops: maximum-likelihood pretraining, discriminator training,
Monte-Carlo rollout rewards, policy-gradient updates, and the adversarial
round schedule.

All randomness is drawn from generators seeded as (seed, phase[, round]),
so any phase — and any adversarial round — can be reproduced or resumed
bit-identically from its checkpoints.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .corpus import END, PAD, EncodedBatch
from .evaluate import corpus_bleu_stats, prf1
from .models import (
    DiscriminatorModel, GeneratorModel, clone_generator, continue_rows,
    disc_probs_np, row_to_tokens, sample_batch, save_discriminator,
    save_generator,
)
from .nn import (
    Adagrad, Adam, bce_with_logits, clip_grad_norm, masked_mean_nll,
    weighted_mean_nll,
)

SEED_MLE = 1
SEED_DISC = 2
SEED_ADV = 3


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mle_epochs: int = 120
    disc_epochs: int = 50
    adv_rounds: int = 50
    gen_batches_per_round: int = 10
    batch_size: int = 32
    gen_lr: float = 1e-3
    disc_lr: float = 1e-2
    rollouts: int = 16
    clip_norm: float = 5.0
    seed: int = 0
    reward_baseline: bool = False
    bleu_eval_lines: int = 100

    def __post_init__(self):
        for name in ("mle_epochs", "disc_epochs", "adv_rounds",
                     "gen_batches_per_round", "batch_size", "rollouts",
                     "bleu_eval_lines"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gen_lr < 0 or self.disc_lr < 0:
            raise ValueError("learning rates must be >= 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


class TrainingLog:
    """Newline-delimited JSON training log, also kept in memory."""

    def __init__(self, path=None):
        self.path = path
        self.records: List[dict] = []

    def record(self, **fields) -> None:
        self.records.append(fields)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(fields, sort_keys=True) + "\n")


def _check_finite(value: float, where: str) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss at {where}: {value!r}")
    return value


def _batch_views(data: EncodedBatch, idx: np.ndarray, model: GeneratorModel,
                 theme_matrix: Optional[np.ndarray]):
    lyr = data.lyrics[idx]
    mel = data.notes[idx] if model.config.conditioned else None
    if model.config.themed:
        if data.themes is None or theme_matrix is None:
            raise ValueError("themed model needs theme ids and a theme matrix")
        themes = theme_matrix[data.themes[idx]]
    else:
        themes = None
    return lyr, mel, themes


def _chunks(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def dataset_nll(model: GeneratorModel, data: EncodedBatch,
                theme_matrix: Optional[np.ndarray] = None) -> float:
    """Mean per-token negative log-likelihood, no gradients."""
    idx = np.arange(len(data.lyrics))
    lyr, mel, themes = _batch_views(data, idx, model, theme_matrix)
    h, c = model.np_init_state(len(idx), themes)
    total, count = 0.0, 0
    for t in range(lyr.shape[1] - 1):
        logp, h, c = model.np_step(lyr[:, t], mel[:, t + 1] if mel is not None else None, h, c)
        target = lyr[:, t + 1]
        mask = target != PAD
        total -= logp[np.arange(len(idx)), target][mask].sum()
        count += int(mask.sum())
    return total / count


def mle_pretrain(model: GeneratorModel, train: EncodedBatch, config: TrainConfig,
                 theme_matrix: Optional[np.ndarray] = None,
                 valid: Optional[EncodedBatch] = None,
                 log: Optional[TrainingLog] = None,
                 optimizer: Optional[Adam] = None) -> List[float]:
    """Teacher-forced cross-entropy training; returns the per-epoch loss
    curve (mean nats per non-<PAD> target token)."""
    opt = optimizer if optimizer is not None else Adam(model.parameters(), lr=config.gen_lr)
    rng = np.random.default_rng([config.seed, SEED_MLE])
    curve = []
    for epoch in range(config.mle_epochs):
        t0 = time.monotonic()
        order = rng.permutation(len(train.lyrics))
        total_nll, total_tok = 0.0, 0
        for chunk in _chunks(order, config.batch_size):
            lyr, mel, themes = _batch_views(train, chunk, model, theme_matrix)
            targets = lyr[:, 1:]
            mask = targets != PAD
            logps = model.forward_logps(lyr, mel, themes)
            loss = masked_mean_nll(logps, targets, mask)
            value = _check_finite(loss.item(), f"mle epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            clip_grad_norm(model.parameters(), config.clip_norm)
            opt.step()
            n_tok = int(mask.sum())
            total_nll += value * n_tok
            total_tok += n_tok
        epoch_loss = total_nll / total_tok
        curve.append(epoch_loss)
        if log is not None:
            rec = {"phase": "mle", "epoch": epoch, "loss": epoch_loss,
                   "wall_ms": int((time.monotonic() - t0) * 1000)}
            if valid is not None:
                rec["valid_loss"] = dataset_nll(model, valid, theme_matrix)
            log.record(**rec)
    return curve


def sample_like(model: GeneratorModel, data: EncodedBatch, rng: np.random.Generator,
                theme_matrix: Optional[np.ndarray], n: int) -> np.ndarray:
    """Sample n fake rows, drawing conditioning inputs uniformly from
    ``data``'s lines (with replacement)."""
    idx = rng.integers(0, len(data.lyrics), size=n)
    _, mel, themes = _batch_views(data, idx, model, theme_matrix)
    return sample_batch(model, rng, batch_size=n, melody_rows=mel,
                        theme_vecs=themes, t_max=data.lyrics.shape[1])


FakeSampler = Callable[[np.random.Generator, int], np.ndarray]


def disc_train_epoch(disc: DiscriminatorModel, gen: GeneratorModel,
                     train: EncodedBatch, valid: EncodedBatch,
                     optimizer: Adagrad, config: TrainConfig,
                     rng: np.random.Generator,
                     theme_matrix: Optional[np.ndarray] = None,
                     fake_sampler: Optional[FakeSampler] = None,
                     ) -> Tuple[float, Tuple[float, float, float]]:
    """One balanced real/fake epoch over the full training set.

    Returns (mean BCE loss, (precision, recall, F1) on validation real
    lines vs freshly generated fakes, where "positive" = predicted real).
    """
    n = len(train.lyrics)
    fake = fake_sampler(rng, n) if fake_sampler is not None \
        else sample_like(gen, train, rng, theme_matrix, n)
    rows = np.concatenate([train.lyrics, fake], axis=0)
    labels = np.concatenate([np.ones(n), np.zeros(n)])
    order = rng.permutation(2 * n)
    total_loss, n_batches = 0.0, 0
    for chunk in _chunks(order, config.batch_size):
        logits = disc.logits(rows[chunk], train_mode=True, rng=rng)
        loss = bce_with_logits(logits, labels[chunk][:, None])
        value = _check_finite(loss.item(), "disc epoch")
        optimizer.zero_grad()
        loss.backward()
        clip_grad_norm(disc.parameters(), config.clip_norm)
        optimizer.step()
        total_loss += value
        n_batches += 1

    n_v = len(valid.lyrics)
    fake_v = fake_sampler(rng, n_v) if fake_sampler is not None \
        else sample_like(gen, valid, rng, theme_matrix, n_v)
    probs = np.concatenate([disc_probs_np(disc, valid.lyrics),
                            disc_probs_np(disc, fake_v)])
    preds = probs > 0.5
    truth = np.concatenate([np.ones(n_v, dtype=bool), np.zeros(n_v, dtype=bool)])
    return total_loss / n_batches, prf1(preds.tolist(), truth.tolist())


def disc_pretrain(disc: DiscriminatorModel, gen: GeneratorModel,
                  train: EncodedBatch, valid: EncodedBatch, config: TrainConfig,
                  theme_matrix: Optional[np.ndarray] = None,
                  log: Optional[TrainingLog] = None,
                  optimizer: Optional[Adagrad] = None) -> List[Tuple[float, float]]:
    """Discriminator pretraining against the (frozen) generator; returns the
    per-epoch (loss, validation F1) curve."""
    opt = optimizer if optimizer is not None else Adagrad(disc.parameters(), lr=config.disc_lr)
    rng = np.random.default_rng([config.seed, SEED_DISC])
    curve = []
    for epoch in range(config.disc_epochs):
        t0 = time.monotonic()
        loss, (_, _, f1) = disc_train_epoch(disc, gen, train, valid, opt,
                                            config, rng, theme_matrix)
        curve.append((loss, f1))
        if log is not None:
            log.record(phase="disc", epoch=epoch, loss=loss, disc_f1=f1,
                       wall_ms=int((time.monotonic() - t0) * 1000))
    return curve


def mc_rollout(rollout_gen: GeneratorModel, prefix_rows: np.ndarray, prefix_len: int,
               r_count: int, rng: np.random.Generator,
               melody_rows: Optional[np.ndarray] = None,
               theme_vecs: Optional[np.ndarray] = None) -> np.ndarray:
    """Complete each prefix R times with the (frozen) rollout policy.

    ``prefix_rows`` is B x T_max with positions >= prefix_len ignored;
    returns (R*B) x T_max, the R completions of row i at indices
    i*R..(i+1)*R-1.  A prefix already containing <END> is returned as R
    verbatim copies.
    """
    if prefix_len < 1 or prefix_len > prefix_rows.shape[1]:
        raise ValueError("prefix_len out of range")
    b, t_max = prefix_rows.shape
    h, c = rollout_gen.np_init_state(b, theme_vecs)
    for t in range(prefix_len - 1):
        mel = melody_rows[:, t + 1] if melody_rows is not None else None
        _, h, c = rollout_gen.np_step(prefix_rows[:, t], mel, h, c)

    rows = np.repeat(prefix_rows, r_count, axis=0).copy()
    rows[:, prefix_len:] = PAD
    alive = np.repeat([END not in row[:prefix_len] for row in prefix_rows], r_count)
    rep_h = np.repeat(h, r_count, axis=0)
    rep_c = np.repeat(c, r_count, axis=0)
    rep_mel = np.repeat(melody_rows, r_count, axis=0) if melody_rows is not None else None
    if prefix_len < t_max:
        continue_rows(rollout_gen, rows, alive, rep_h, rep_c, prefix_len, rep_mel, rng)
    return rows


def compute_rewards(rows: np.ndarray, rollout_gen: GeneratorModel,
                    disc: DiscriminatorModel, r_count: int,
                    rng: np.random.Generator,
                    melody_rows: Optional[np.ndarray] = None,
                    theme_vecs: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-position rewards for sampled rows, aligned with target positions.

    Position p before a row's <END>: mean discriminator probability over
    ``r_count`` rollout completions of the prefix through p.  The <END>
    position itself: the discriminator probability of the finished row.
    Positions after <END> stay 0 (they are masked in the loss).
    Returns shape B x (T_max - 1); rewards[:, p-1] belongs to position p.
    """
    b, t_max = rows.shape
    rewards = np.zeros((b, t_max - 1))
    end_pos = np.empty(b, dtype=np.int64)
    for i, row in enumerate(rows):
        where = np.where(row == END)[0]
        end_pos[i] = where[0] if len(where) else t_max - 1

    # recurrent states under the rollout policy after each consumed position
    h, c = rollout_gen.np_init_state(b, theme_vecs)
    h_cache, c_cache = [h], [c]
    for t in range(t_max - 1):
        mel = melody_rows[:, t + 1] if melody_rows is not None else None
        _, h, c = rollout_gen.np_step(rows[:, t], mel, h, c)
        h_cache.append(h)
        c_cache.append(c)

    for p in range(1, t_max - 1):
        idx = np.where(end_pos > p)[0]
        if len(idx) == 0:
            continue
        rep = np.repeat(rows[idx], r_count, axis=0)
        rep[:, p + 1:] = PAD
        alive = np.ones(len(idx) * r_count, dtype=bool)
        rep_h = np.repeat(h_cache[p + 1][idx], r_count, axis=0)
        rep_c = np.repeat(c_cache[p + 1][idx], r_count, axis=0)
        rep_mel = np.repeat(melody_rows[idx], r_count, axis=0) if melody_rows is not None else None
        continue_rows(rollout_gen, rep, alive, rep_h, rep_c, p + 1, rep_mel, rng)
        scores = disc_probs_np(disc, rep).reshape(len(idx), r_count)
        rewards[idx, p - 1] = scores.mean(axis=1)

    final = disc_probs_np(disc, rows)
    rewards[np.arange(b), end_pos - 1] = final
    return rewards


def pg_step(model: GeneratorModel, rows: np.ndarray, rewards: np.ndarray,
            optimizer: Adam, config: TrainConfig,
            melody_rows: Optional[np.ndarray] = None,
            theme_vecs: Optional[np.ndarray] = None) -> float:
    """One policy-gradient update: loss = -(1/B) sum reward * log p(token),
    masked at <PAD>. Returns the loss value."""
    targets = rows[:, 1:]
    mask = targets != PAD
    logps = model.forward_logps(rows, melody_rows, theme_vecs)
    loss = weighted_mean_nll(logps, targets, rewards, mask, rows.shape[0])
    value = _check_finite(loss.item(), "pg step")
    optimizer.zero_grad()
    loss.backward()
    clip_grad_norm(model.parameters(), config.clip_norm)
    optimizer.step()
    return value


@dataclass
class RoundMetrics:
    round: int
    pg_loss: float
    disc_loss: float
    disc_f1: float
    bleu2: float
    wall_ms: int


@dataclass
class AdvResult:
    rounds: List[RoundMetrics] = field(default_factory=list)
    best_round: int = -1
    best_bleu2: float = float("-inf")
    best_gen: Optional[GeneratorModel] = None


def validation_bleu2(gen: GeneratorModel, valid: EncodedBatch,
                     rng: np.random.Generator,
                     theme_matrix: Optional[np.ndarray] = None,
                     n_lines: int = 100) -> float:
    """Mean BLEU2 of freshly sampled lines against the validation pool.

    Candidates and references are syllable index sequences; conditioning
    inputs are drawn from validation lines.
    """
    refs = [row_to_tokens(r) for r in valid.lyrics]
    n = min(n_lines, len(valid.lyrics))
    idx = rng.integers(0, len(valid.lyrics), size=n)
    _, mel, themes = _batch_views(valid, idx, gen, theme_matrix)
    rows = sample_batch(gen, rng, batch_size=n, melody_rows=mel,
                        theme_vecs=themes, t_max=valid.lyrics.shape[1])
    cands = [row_to_tokens(r) for r in rows]
    return corpus_bleu_stats(cands, refs, 2).mean


def adversarial_loop(gen: GeneratorModel, disc: DiscriminatorModel,
                     train: EncodedBatch, valid: EncodedBatch,
                     config: TrainConfig,
                     theme_matrix: Optional[np.ndarray] = None,
                     log: Optional[TrainingLog] = None,
                     checkpoint_dir=None, vocab=None,
                     start_round: int = 0,
                     best_bleu2: float = float("-inf"), best_round: int = -1,
                     best_gen: Optional[GeneratorModel] = None,
                     gen_optimizer: Optional[Adam] = None,
                     disc_optimizer: Optional[Adagrad] = None,
                     baseline: float = 0.0) -> AdvResult:
    """Alternating schedule: per round, sync the rollout policy to the
    generator, run ``gen_batches_per_round`` policy-gradient mini-batches,
    then one full discriminator epoch, then score BLEU2 on validation.

    The generator with the best validation BLEU2 across rounds is retained
    (and written to best_gen.ckpt when ``checkpoint_dir`` is given); the
    live pair is checkpointed every round for resumption.
    """
    gen_opt = gen_optimizer if gen_optimizer is not None \
        else Adam(gen.parameters(), lr=config.gen_lr)
    disc_opt = disc_optimizer if disc_optimizer is not None \
        else Adagrad(disc.parameters(), lr=config.disc_lr)
    result = AdvResult(best_round=best_round, best_bleu2=best_bleu2,
                       best_gen=best_gen)

    for rnd in range(start_round, config.adv_rounds):
        t0 = time.monotonic()
        rng = np.random.default_rng([config.seed, SEED_ADV, rnd])
        rollout = clone_generator(gen)
        pg_losses = []
        for _ in range(config.gen_batches_per_round):
            idx = rng.integers(0, len(train.lyrics), size=config.batch_size)
            _, mel, themes = _batch_views(train, idx, gen, theme_matrix)
            rows = sample_batch(gen, rng, batch_size=config.batch_size,
                                melody_rows=mel, theme_vecs=themes,
                                t_max=train.lyrics.shape[1])
            rewards = compute_rewards(rows, rollout, disc, config.rollouts,
                                      rng, melody_rows=mel, theme_vecs=themes)
            if config.reward_baseline:
                mask = rows[:, 1:] != PAD
                batch_mean = float(rewards[mask].mean())
                if baseline <= 0.0:
                    # rewards are sigmoid outputs, strictly positive, so a
                    # non-positive running mean marks "not seeded yet"
                    baseline = batch_mean
                rewards = rewards - baseline
                baseline = 0.9 * baseline + 0.1 * batch_mean
            pg_losses.append(pg_step(gen, rows, rewards, gen_opt, config,
                                     melody_rows=mel, theme_vecs=themes))

        disc_loss, (_, _, disc_f1) = disc_train_epoch(
            disc, gen, train, valid, disc_opt, config, rng, theme_matrix)
        bleu2 = validation_bleu2(gen, valid, rng, theme_matrix,
                                 n_lines=config.bleu_eval_lines)
        _check_finite(bleu2, f"adv round {rnd} bleu")

        metrics = RoundMetrics(
            round=rnd, pg_loss=float(np.mean(pg_losses)), disc_loss=disc_loss,
            disc_f1=disc_f1, bleu2=bleu2,
            wall_ms=int((time.monotonic() - t0) * 1000))
        result.rounds.append(metrics)
        if bleu2 > result.best_bleu2:
            result.best_bleu2 = bleu2
            result.best_round = rnd
            result.best_gen = clone_generator(gen)
            if checkpoint_dir is not None:
                save_generator(checkpoint_dir / "best_gen.ckpt", gen, vocab=vocab,
                               seed=config.seed, phase="adv",
                               counters={"round": rnd, "bleu2": bleu2})
        if log is not None:
            log.record(phase="adv", round=rnd, loss=metrics.pg_loss,
                       disc_loss=disc_loss, bleu2=bleu2, disc_f1=disc_f1,
                       wall_ms=metrics.wall_ms)
        if checkpoint_dir is not None:
            counters = {"round": rnd + 1, "adam_t": gen_opt.t,
                        "best_bleu2": result.best_bleu2,
                        "best_round": result.best_round,
                        "baseline": baseline}
            save_generator(checkpoint_dir / "last_gen.ckpt", gen, vocab=vocab,
                           seed=config.seed, phase="adv", counters=counters,
                           slot_names=["adam_m", "adam_v"])
            save_discriminator(checkpoint_dir / "last_disc.ckpt", disc, vocab=vocab,
                               seed=config.seed, phase="adv", counters=counters,
                               slot_names=["adagrad_acc"])
    return result
