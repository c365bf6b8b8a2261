"""Evaluation metrics: cumulative BLEU against a reference pool, syllable
to note alignment ratio, binary precision/recall/F1, and multi-class theme
classification reports with confusion matrices.
"""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

EPS = 1e-9

Token = str
TokenSeq = Sequence[Token]


def _ngrams(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_cumulative(candidate: TokenSeq, references: Sequence[TokenSeq], max_n: int) -> float:
    """Cumulative BLEU-``max_n``: geometric mean of clipped n-gram
    precisions for n = 1..max_n times the brevity penalty.

    Zero precision counts are smoothed by EPS (numerator becomes EPS); a
    candidate too short to contain any n-gram of some order contributes a
    precision of EPS outright.  The brevity penalty uses the reference
    length closest to the candidate's, ties resolved toward the shorter
    reference.  An empty candidate scores 0.
    """
    if not references:
        raise ValueError("references must be non-empty")
    if len(candidate) == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngrams(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            log_sum += math.log(EPS)
            continue
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in _ngrams(ref, n).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        numerator = clipped if clipped > 0 else EPS
        log_sum += math.log(numerator / total)
    geo_mean = math.exp(log_sum / max_n)

    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * geo_mean


@dataclass
class BleuStats:
    """Per-line cumulative BLEU scores for one n, plus their mean and
    population standard deviation."""

    max_n: int
    scores: List[float]
    mean: float
    std: float


@dataclass
class BleuReport:
    bleu2: BleuStats
    bleu4: BleuStats

    def to_json(self) -> dict:
        return {
            "bleu2": {"mean": self.bleu2.mean, "std": self.bleu2.std},
            "bleu4": {"mean": self.bleu4.mean, "std": self.bleu4.std},
        }


def corpus_bleu_stats(generated: Sequence[TokenSeq], pool: Sequence[TokenSeq], max_n: int) -> BleuStats:
    scores = [bleu_cumulative(line, pool, max_n) for line in generated]
    arr = np.asarray(scores, dtype=np.float64)
    return BleuStats(max_n, scores, float(arr.mean()), float(arr.std()))


def bleu_report(generated: Sequence[TokenSeq], pool: Sequence[TokenSeq]) -> BleuReport:
    return BleuReport(
        bleu2=corpus_bleu_stats(generated, pool, 2),
        bleu4=corpus_bleu_stats(generated, pool, 4),
    )


def cap_pool(pool: Sequence[TokenSeq], cap: int, seed: int) -> List[TokenSeq]:
    """Uniform subsample of the reference pool when it exceeds ``cap``."""
    if len(pool) <= cap:
        return list(pool)
    rng = random.Random(seed)
    return rng.sample(list(pool), cap)


def alignment_ratio(generated: Sequence[TokenSeq], melodies: Sequence[Sequence]) -> float:
    """Fraction of lines whose syllable count equals their melody's note
    count.  Both sides are real tokens only (no padding or markers)."""
    if len(generated) != len(melodies):
        raise ValueError("generated and melodies must have equal length")
    if not generated:
        raise ValueError("alignment_ratio is undefined for an empty set")
    matched = sum(1 for g, m in zip(generated, melodies) if len(g) == len(m))
    return matched / len(generated)


def prf1(predictions: Sequence[bool], labels: Sequence[bool]) -> Tuple[float, float, float]:
    """Binary precision, recall, F1 with the 0/0 -> 0 convention."""
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels must have equal length")
    tp = sum(1 for p, l in zip(predictions, labels) if p and l)
    fp = sum(1 for p, l in zip(predictions, labels) if p and not l)
    fn = sum(1 for p, l in zip(predictions, labels) if not p and l)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class ThemeEvalReport:
    n_classes: int
    accuracy: float
    macro_f1: float
    micro_f1: float
    per_class_f1: List[float]
    confusion: np.ndarray  # rows = ground truth, columns = predictions

    def to_json(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "per_class_f1": self.per_class_f1,
            "confusion": self.confusion.tolist(),
        }

    def confusion_csv(self) -> str:
        header = "truth\\pred," + ",".join(str(j) for j in range(self.n_classes))
        rows = [header]
        for i in range(self.n_classes):
            rows.append(str(i) + "," + ",".join(str(int(v)) for v in self.confusion[i]))
        return "\n".join(rows) + "\n"


def theme_eval(predicted: Sequence[int], true: Sequence[int], n_classes: int) -> ThemeEvalReport:
    """Multi-class report: confusion matrix, per-class F1, macro (unweighted
    mean over all classes) and micro (pooled counts) F1."""
    if len(predicted) != len(true):
        raise ValueError("predicted and true must have equal length")
    if not predicted:
        raise ValueError("theme_eval is undefined for an empty set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, t in zip(predicted, true):
        if not (0 <= p < n_classes and 0 <= t < n_classes):
            raise ValueError(f"class id out of range: pred={p} true={t}")
        confusion[t, p] += 1
    per_class = []
    for k in range(n_classes):
        tp = int(confusion[k, k])
        fp = int(confusion[:, k].sum()) - tp
        fn = int(confusion[k, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        per_class.append(2 * p * r / (p + r) if p + r else 0.0)
    total = int(confusion.sum())
    tp_all = int(np.trace(confusion))
    accuracy = tp_all / total
    # micro: pooled tp/fp/fn; for single-label data fp == fn so this is accuracy
    micro_p = tp_all / total
    micro_r = tp_all / total
    micro_f1 = (2 * micro_p * micro_r / (micro_p + micro_r)) if micro_p + micro_r else 0.0
    return ThemeEvalReport(
        n_classes=n_classes,
        accuracy=accuracy,
        macro_f1=float(np.mean(per_class)),
        micro_f1=micro_f1,
        per_class_f1=per_class,
        confusion=confusion,
    )


def format_score_table(rows: Dict[str, BleuReport]) -> str:
    """Plain-text table of BLEU2/BLEU4 mean +/- std per model."""
    width = max(len(name) for name in rows) if rows else 5
    width = max(width, len("model"))
    lines = [f"{'model':<{width}}  {'BLEU2':>15}  {'BLEU4':>15}"]
    for name, report in rows.items():
        b2 = f"{report.bleu2.mean:.3f} +/- {report.bleu2.std:.3f}"
        b4 = f"{report.bleu4.mean:.3f} +/- {report.bleu4.std:.3f}"
        lines.append(f"{name:<{width}}  {b2:>15}  {b4:>15}")
    return "\n".join(lines) + "\n"
