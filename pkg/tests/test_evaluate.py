import math
import random
from fractions import Fraction

import numpy as np
import pytest

from lyricgen.evaluate import (
    alignment_ratio, bleu_cumulative, bleu_report, cap_pool,
    corpus_bleu_stats, format_score_table, prf1, theme_eval,
)

EPS = 1e-9


def oracle_bleu(candidate, references, max_n):
    """Brute-force cumulative BLEU: position-by-position n-gram
    enumeration with Fraction counting. Kept deliberately naive and
    separate from the library implementation."""
    if len(candidate) == 0:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        grams = [tuple(candidate[i:i + n]) for i in range(len(candidate) - n + 1)]
        if not grams:
            logs.append(math.log(EPS))
            continue
        clipped = 0
        for gram in set(grams):
            in_cand = grams.count(gram)
            best_ref = 0
            for ref in references:
                ref_grams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
                best_ref = max(best_ref, ref_grams.count(gram))
            clipped += min(in_cand, best_ref)
        if clipped > 0:
            logs.append(math.log(float(Fraction(clipped, len(grams)))))
        else:
            logs.append(math.log(EPS / len(grams)))
    geo = math.exp(sum(logs) / max_n)
    best_r = None
    for ref in references:
        r = len(ref)
        if (best_r is None or abs(r - len(candidate)) < abs(best_r - len(candidate))
                or (abs(r - len(candidate)) == abs(best_r - len(candidate)) and r < best_r)):
            best_r = r
    bp = 1.0 if len(candidate) > best_r else math.exp(1.0 - best_r / len(candidate))
    return bp * geo


def test_bleu_identical_reference_is_exactly_one():
    assert bleu_cumulative("a b c d".split(), ["a b c d".split()], 2) == 1.0
    # an extra, longer reference must not spoil the perfect score
    refs = ["a b c d".split(), "a b c d e f".split()]
    assert bleu_cumulative("a b c d".split(), refs, 2) == 1.0


def test_bleu_no_overlap_is_near_zero():
    score = bleu_cumulative("x y z".split(), ["a b c".split()], 2)
    assert 0.0 < score < 1e-6


def test_bleu_hand_case():
    # p1 = 3/4, p2 = 2/3, lengths equal so no brevity penalty
    score = bleu_cumulative("a b c d".split(), ["a b c e".split()], 2)
    assert score == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_bleu_empty_candidate_scores_zero():
    assert bleu_cumulative([], ["a".split()], 2) == 0.0


def test_bleu_reference_permutation_invariance():
    rng = random.Random(0)
    vocab = list("abcde")
    for _ in range(20):
        cand = rng.choices(vocab, k=rng.randint(1, 8))
        refs = [rng.choices(vocab, k=rng.randint(1, 8)) for _ in range(4)]
        shuffled = refs[:]
        rng.shuffle(shuffled)
        assert bleu_cumulative(cand, refs, 3) == bleu_cumulative(cand, shuffled, 3)


def test_bleu_brevity_penalty_tie_prefers_shorter():
    cand = ["a", "b", "c"]
    refs = [["a", "b"], ["a", "b", "c", "d"]]  # lengths 2 and 4, both distance 1
    score = bleu_cumulative(cand, refs, 1)
    # r = 2 < c = 3, so no penalty; with r = 4 the score would carry exp(1 - 4/3)
    assert score == pytest.approx(1.0, abs=1e-12)


def test_bleu_matches_bruteforce_oracle():
    rng = random.Random(2024)
    vocab = list("abcde")
    checked = 0
    while checked < 50:
        cand = rng.choices(vocab, k=rng.randint(1, 8))
        refs = [rng.choices(vocab, k=rng.randint(1, 8))
                for _ in range(rng.randint(1, 4))]
        max_n = rng.randint(2, 4)
        got = bleu_cumulative(cand, refs, max_n)
        want = oracle_bleu(cand, refs, max_n)
        assert abs(got - want) <= 1e-12, (cand, refs, max_n)
        checked += 1


def test_corpus_stats_perfect_copies():
    pool = ["a b c".split(), "d e f".split()]
    stats = corpus_bleu_stats(pool, pool, 2)
    assert stats.mean == 1.0 and stats.std == 0.0


def test_corpus_stats_zero_one_mix():
    pool = ["a b c".split()]
    stats = corpus_bleu_stats([[], "a b c".split()], pool, 2)
    assert stats.mean == 0.5 and stats.std == 0.5


def test_bleu_report_shape():
    pool = ["a b c d e".split()]
    report = bleu_report(["a b c d e".split()], pool)
    assert report.bleu2.mean == 1.0 and report.bleu4.mean == 1.0
    assert set(report.to_json()) == {"bleu2", "bleu4"}


def test_cap_pool():
    pool = [[str(i)] for i in range(100)]
    assert cap_pool(pool, 200, seed=1) == pool
    capped = cap_pool(pool, 10, seed=1)
    assert len(capped) == 10
    assert cap_pool(pool, 10, seed=1) == capped  # same seed, same subsample


def test_alignment_ratio():
    gen = [["a", "b"], ["c"], ["d", "e", "f"], ["g"]]
    mel = [[1, 2], [3, 4], [5, 6, 7], [8]]
    assert alignment_ratio(gen, mel) == 0.75
    assert alignment_ratio(gen[:1], mel[:1]) == 1.0
    # reordering pairs leaves the ratio unchanged
    assert alignment_ratio(gen[::-1], mel[::-1]) == 0.75
    with pytest.raises(ValueError):
        alignment_ratio([], [])


def test_prf1_cases():
    assert prf1([True, False], [True, False]) == (1.0, 1.0, 1.0)
    p, r, f1 = prf1([True] * 4, [True, True, False, False])
    assert (p, r) == (0.5, 1.0)
    assert f1 == pytest.approx(2 / 3)
    assert prf1([False, False], [True, False]) == (0.0, 0.0, 0.0)


def test_theme_eval_perfect():
    report = theme_eval([0, 1, 2], [0, 1, 2], 3)
    assert report.macro_f1 == 1.0 and report.micro_f1 == 1.0
    assert np.array_equal(report.confusion, np.eye(3, dtype=np.int64))


def test_theme_eval_constant_predictor():
    # always predict 0 on balanced 2-class truth:
    # class 0 gets P=.5 R=1 F1=2/3, class 1 gets 0 -> macro 1/3, micro .5
    report = theme_eval([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert report.macro_f1 == pytest.approx(1 / 3)
    assert report.micro_f1 == pytest.approx(0.5)
    assert report.accuracy == pytest.approx(0.5)


def test_theme_eval_row_sums_are_supports():
    rng = random.Random(5)
    true = [rng.randrange(4) for _ in range(60)]
    pred = [rng.randrange(4) for _ in range(60)]
    report = theme_eval(pred, true, 4)
    for k in range(4):
        assert report.confusion[k].sum() == true.count(k)
    assert report.micro_f1 == pytest.approx(report.accuracy)


def test_theme_eval_rejects_out_of_range():
    with pytest.raises(ValueError):
        theme_eval([3], [0], 3)
    with pytest.raises(ValueError):
        theme_eval([0], [-1], 3)


def test_theme_confusion_csv():
    report = theme_eval([0, 1], [0, 1], 2)
    csv = report.confusion_csv()
    assert csv.splitlines()[1] == "0,1,0"


def test_format_score_table():
    pool = ["a b".split()]
    table = format_score_table({"demo": bleu_report([pool[0]], pool)})
    assert "demo" in table and "1.000" in table
