import math
import random
from collections import deque

import pytest

from minimt import metrics
from minimt.errors import EmptyInputError


class TestBleu:
    def test_identity_is_100(self):
        refs = ["the quick brown fox jumps", "over the lazy dog today"]
        assert metrics.bleu(refs, refs) == 100.0

    def test_zero_overlap_is_0(self):
        assert metrics.bleu(["a b c d"], ["w x y z"]) == 0.0

    def test_spec_pair_has_no_fourgram_overlap(self):
        # hand check: 4-gram matches are zero, so unsmoothed BLEU is 0
        got = metrics.bleu(["the cat sat on the mat"], ["the cat is on the mat"])
        assert got == 0.0

    def test_hand_computed_corpus(self):
        # counts derived by hand for this two-sentence corpus:
        #   sent 1: clipped matches 5/6, 3/5, 1/4, 0/3
        #   sent 2 (identity, 6 tokens): 6/6, 5/5, 4/4, 3/3
        hyps = ["the cat sat on the mat", "it is a nice day today"]
        refs = ["the cat is on the mat", "it is a nice day today"]
        precisions = [(5 + 6) / 12, (3 + 5) / 10, (1 + 4) / 8, (0 + 3) / 6]
        want = 100.0 * math.exp(sum(math.log(p) for p in precisions) / 4)
        assert abs(metrics.bleu(hyps, refs) - want) < 0.01

    def test_brevity_penalty(self):
        # shorter hypothesis: bp = exp(1 - ref/hyp)
        got = metrics.bleu(["a b c d"], ["a b c d e f g k"])
        want = 100.0 * math.exp(1 - 8 / 4) * math.exp(
            (math.log(4 / 4) + math.log(3 / 3) + math.log(2 / 2) + math.log(1 / 1)) / 4
        )
        assert abs(got - want) < 1e-9

    def test_permutation_invariance(self):
        hyps = ["a b c d e", "f g h i j", "k l m n o"]
        refs = ["a b c d x", "f g h i j", "k l m z o"]
        a = metrics.bleu(hyps, refs)
        b = metrics.bleu(hyps[::-1], refs[::-1])
        assert a == b

    def test_range(self):
        rng = random.Random(3)
        vocab = "abcdef"
        for _ in range(50):
            hyps = [" ".join(rng.choices(vocab, k=rng.randint(4, 8))) for _ in range(3)]
            refs = [" ".join(rng.choices(vocab, k=rng.randint(4, 8))) for _ in range(3)]
            assert 0.0 <= metrics.bleu(hyps, refs) <= 100.0

    def test_100_iff_identity(self):
        rng = random.Random(4)
        for _ in range(30):
            refs = [" ".join(rng.choices("abcdef", k=rng.randint(4, 8))) for _ in range(3)]
            hyps = list(refs)
            if rng.random() < 0.5:
                hyps[0] = hyps[0] + " extra"
                assert metrics.bleu(hyps, refs) < 100.0
            else:
                assert metrics.bleu(hyps, refs) == 100.0

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            metrics.bleu([], [])
        with pytest.raises(EmptyInputError):
            metrics.bleu(["a"], ["a", "b"])


def oracle_min_edits(hyp, ref):
    """Brute-force minimum of (shifts to reach an arrangement) + edit
    distance; plain breadth-first enumeration, no pruning."""
    def lev(a, b):
        prev = list(range(len(b) + 1))
        for i, x in enumerate(a, 1):
            cur = [i] + [0] * len(b)
            for j, y in enumerate(b, 1):
                cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
            prev = cur
        return prev[-1]

    start = tuple(hyp)
    seen = {start: 0}
    frontier = deque([start])
    cap = lev(hyp, ref)
    while frontier:
        seq = frontier.popleft()
        d = seen[seq]
        if d >= cap:
            continue
        n = len(seq)
        for s in range(n):
            for length in range(1, n - s + 1):
                block = seq[s : s + length]
                rest = seq[:s] + seq[s + length :]
                for dest in range(len(rest) + 1):
                    if dest == s:
                        continue
                    cand = rest[:dest] + block + rest[dest:]
                    if cand not in seen:
                        seen[cand] = d + 1
                        frontier.append(cand)
    return min(d + lev(list(seq), ref) for seq, d in seen.items())


class TestTer:
    def test_identity(self):
        assert metrics.ter("a b c", "a b c") == 0.0

    def test_empty_hypothesis(self):
        assert metrics.ter("", "a b c d") == 100.0

    def test_single_shift_example(self):
        assert metrics.ter("b a c d", "a b c d") == 25.0

    def test_pure_substitution(self):
        assert metrics.ter("a x c", "a b c") == pytest.approx(100.0 / 3)

    def test_matches_bruteforce_on_small_pairs(self):
        rng = random.Random(42)
        for _ in range(150):
            hyp = [rng.choice("abcd") for _ in range(rng.randint(0, 6))]
            ref = [rng.choice("abcd") for _ in range(rng.randint(1, 6))]
            got, _ = metrics.ter_edits(hyp, ref)
            assert got == oracle_min_edits(hyp, ref), (hyp, ref)

    def test_known_greedy_trap(self):
        # a pair where single-best-shift greedy overshoots the minimum
        got, _ = metrics.ter_edits("c b d a a".split(), "c a a d b".split())
        assert got == 2

    def test_ter_at_most_wer(self):
        rng = random.Random(7)
        for _ in range(200):
            hyp = " ".join(rng.choices("abcde", k=rng.randint(1, 6)))
            ref = " ".join(rng.choices("abcde", k=rng.randint(1, 6)))
            assert metrics.ter(hyp, ref) <= metrics.wer(hyp, ref) + 1e-12

    def test_greedy_path_on_longer_inputs(self):
        # beyond the exact-search limit the greedy procedure applies
        hyp = "g f a b c d e".split()
        ref = "a b c d e f g".split()
        edits, shifts = metrics.ter_edits(hyp, ref)
        assert edits <= metrics.levenshtein(hyp, ref)
        assert shifts >= 1

    def test_empty_reference(self):
        with pytest.raises(EmptyInputError):
            metrics.ter("a", "")

    def test_corpus_ter(self):
        got = metrics.corpus_ter(["a b", "x"], ["a b", "y"])
        assert got == pytest.approx(100.0 * (0 + 1) / 3)


class TestKsmr:
    def test_fig_style_session(self):
        # one correction keystroke + positioning + acceptance over 26 chars
        reports = [{"keystrokes": 1, "mouse_actions": 2, "ref_chars": 26}]
        assert metrics.ksmr(reports) == pytest.approx(100.0 * 3 / 26)
        assert abs(metrics.ksmr(reports) - 11.54) < 0.01

    def test_accept_only(self):
        reports = [{"keystrokes": 0, "mouse_actions": 1, "ref_chars": 10} for _ in range(5)]
        assert metrics.ksmr(reports) == 10.0

    def test_aggregate_matches_recomputation(self):
        rng = random.Random(1)
        reports = [
            {"keystrokes": rng.randint(0, 9), "mouse_actions": rng.randint(1, 4), "ref_chars": rng.randint(5, 40)}
            for _ in range(20)
        ]
        want = 100.0 * sum(r["keystrokes"] + r["mouse_actions"] for r in reports) / sum(
            r["ref_chars"] for r in reports
        )
        assert metrics.ksmr(reports) == pytest.approx(want)

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            metrics.ksmr([])
        with pytest.raises(EmptyInputError):
            metrics.ksmr([{"keystrokes": 1, "mouse_actions": 1, "ref_chars": 0}])


class TestReportWriter:
    def test_lines_and_sidecar(self, tmp_path):
        text = metrics.write_report(tmp_path / "report.txt", {"bleu": 42.123, "ter": 10.0})
        assert "BLEU = 42.12" in text
        assert "TER = 10.00" in text
        assert (tmp_path / "report.txt.json").exists()
