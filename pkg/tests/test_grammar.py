import math

import numpy as np
import pytest
from conftest import brute_bigram_decode, planted_modelset

from actionseg.corpus import FeatureSequence, Transcript
from actionseg.errors import InvalidDataError, NoValidPathError
from actionseg.grammar import (
    BigramModel,
    activity_lookup,
    build_bigram,
    build_path_grammar,
    decode,
    read_bigram,
    read_grammar,
    write_bigram,
    write_grammar,
)
from actionseg.hmm import viterbi_align
from actionseg.training import gather_scores


class TestPathGrammar:
    def test_dedup_with_counts(self):
        g = build_path_grammar([
            Transcript("v1", ("A", "B")),
            Transcript("v2", ("A", "C")),
            Transcript("v3", ("A", "B")),
        ])
        assert len(g) == 2
        by = {p.labels: p.count for p in g}
        assert by == {("A", "B"): 2, ("A", "C"): 1}

    def test_single_transcript(self):
        g = build_path_grammar([Transcript("v", ("A",))])
        assert len(g) == 1

    def test_majority_activity_tag(self):
        g = build_path_grammar([
            Transcript("v1", ("A", "B"), "coffee"),
            Transcript("v2", ("A", "B"), "tea"),
            Transcript("v3", ("A", "B"), "coffee"),
        ])
        (p,) = list(g)
        assert p.activity == "coffee"

    def test_tag_tie_keeps_first_seen(self):
        g = build_path_grammar([
            Transcript("v1", ("A",), "tea"),
            Transcript("v2", ("A",), "coffee"),
        ])
        (p,) = list(g)
        assert p.activity == "tea"

    def test_empty_input_rejected(self):
        with pytest.raises(InvalidDataError):
            build_path_grammar([])

    def test_round_trip(self, tmp_path):
        g = build_path_grammar([
            Transcript("v1", ("A", "B"), "coffee"),
            Transcript("v2", ("C",)),
            Transcript("v3", ("A", "B"), "coffee"),
        ])
        p = tmp_path / "g.txt"
        write_grammar(p, g)
        back = read_grammar(p)
        assert [(q.labels, q.count, q.activity) for q in back] == [
            (q.labels, q.count, q.activity) for q in g
        ]
        p2 = tmp_path / "g2.txt"
        write_grammar(p2, back)
        assert p.read_bytes() == p2.read_bytes()


class TestBigramModel:
    def test_direct_counts(self):
        b = build_bigram([
            Transcript("v1", ("A", "B", "C")),
            Transcript("v2", ("A", "C")),
        ])
        assert abs(b.transition_lp("A", "B") - math.log(0.5)) < 1e-12
        assert abs(b.transition_lp("A", "C") - math.log(0.5)) < 1e-12
        assert b.transition_lp("B", "C") == 0.0
        assert b.end_lp("C") == 0.0
        assert b.start_lp("A") == 0.0

    def test_unseen_pair_is_impossible(self):
        b = build_bigram([Transcript("v", ("A", "B"))])
        assert b.transition_lp("B", "A") == -np.inf

    def test_single_label_transcript(self):
        b = build_bigram([Transcript("v", ("A",))])
        assert b.start_lp("A") == 0.0
        assert b.end_lp("A") == 0.0

    def test_smoothing_unlocks_all_pairs(self):
        b = build_bigram([Transcript("v", ("A", "B"))], smoothing=1.0)
        # from A: counts B=1; V = 2 labels + end = 3 -> p(B|A) = 2/4
        assert abs(b.transition_lp("A", "B") - math.log(2.0 / 4.0)) < 1e-12
        assert abs(b.transition_lp("A", "A") - math.log(1.0 / 4.0)) < 1e-12
        assert abs(b.end_lp("A") - math.log(1.0 / 4.0)) < 1e-12

    def test_live_rows_sum_to_one(self):
        b = build_bigram([
            Transcript("v1", ("A", "B")), Transcript("v2", ("B", "A")),
        ], smoothing=0.5)
        table = np.exp(b.log_table)
        sums = table.sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)

    def test_round_trip(self, tmp_path):
        b = build_bigram([
            Transcript("v1", ("A", "B", "C")), Transcript("v2", ("A", "C")),
        ], smoothing=0.25)
        p = tmp_path / "b.txt"
        write_bigram(p, b)
        back = read_bigram(p)
        assert back.labels == b.labels
        np.testing.assert_array_equal(back.log_table, b.log_table)
        p2 = tmp_path / "b2.txt"
        write_bigram(p2, back)
        assert p.read_bytes() == p2.read_bytes()


def _video_from_labels(models, labels, frames_each, seed=0, noise=0.05):
    """Frames hugging each label's state means in order."""
    rng = np.random.default_rng(seed)
    rows = []
    for name in labels:
        for g in models.models[name].state_models:
            rows.append(g.mean + rng.normal(0.0, noise, (frames_each, g.dim)))
    return FeatureSequence("v", np.concatenate(rows))


class TestPathDecode:
    def test_single_path_equals_alignment(self):
        models = planted_modelset(["A", "B"], [2, 2])
        video = _video_from_labels(models, ["A", "B"], 3)
        tr = Transcript("v", ("A", "B"))
        grammar = build_path_grammar([tr])
        res = decode(models, grammar, video)
        seq = models.sequence_hmm(tr)
        sc = gather_scores(models.score_frames(video.features), seq)
        ref = viterbi_align(seq, sc)
        assert res.log_prob == ref.log_prob
        assert res.transcript.labels == tr.labels
        from actionseg.corpus import segmentation_from_alignment
        ref_seg = segmentation_from_alignment(ref)
        assert res.segmentation.segments == ref_seg.segments

    def test_overwhelming_evidence_picks_right_path(self):
        models = planted_modelset(["A", "B", "C"], [1, 1, 1], spread=8.0)
        grammar = build_path_grammar([
            Transcript("t1", ("A", "B")), Transcript("t2", ("A", "C")),
        ])
        video = _video_from_labels(models, ["A", "C"], 5)
        res = decode(models, grammar, video)
        assert res.transcript.labels == ("A", "C")

    def test_optimal_over_path_set(self):
        rng = np.random.default_rng(3)
        models = planted_modelset(["A", "B", "C"], [1, 2, 1])
        paths = [("A", "B"), ("B", "C"), ("A", "C"), ("C", "B", "A")]
        grammar = build_path_grammar([
            Transcript(f"t{i}", p) for i, p in enumerate(paths)
        ])
        video = FeatureSequence("v", rng.normal(size=(9, 2)))
        res = decode(models, grammar, video)
        # the winner's score must dominate each candidate path's alignment
        class_scores = models.score_frames(video.features)
        for p in paths:
            seq = models.sequence_hmm(Transcript("v", p))
            ref = viterbi_align(seq, gather_scores(class_scores, seq))
            assert res.log_prob >= ref.log_prob

    def test_duplicate_transcripts_do_not_change_decode(self):
        models = planted_modelset(["A", "B"], [1, 1])
        video = FeatureSequence("v", np.random.default_rng(4).normal(size=(6, 2)))
        once = build_path_grammar([
            Transcript("t1", ("A", "B")), Transcript("t2", ("B", "A")),
        ])
        dup = build_path_grammar([
            Transcript("t1", ("A", "B")), Transcript("t2", ("B", "A")),
            Transcript("t3", ("B", "A")), Transcript("t4", ("B", "A")),
        ])
        a = decode(models, once, video)
        b = decode(models, dup, video)
        assert a.transcript.labels == b.transcript.labels
        assert a.log_prob == b.log_prob

    def test_score_tie_takes_lexicographically_smaller_labels(self):
        # identical Gaussians for both labels make every path score equal
        models = planted_modelset(["y", "x"], [1, 1], spread=0.0)
        grammar = build_path_grammar([
            Transcript("t1", ("y",)), Transcript("t2", ("x",)),
        ])
        video = FeatureSequence("v", np.zeros((4, 2)))
        res = decode(models, grammar, video)
        assert res.transcript.labels == ("x",)

    def test_use_path_prior_breaks_ties_by_count(self):
        models = planted_modelset(["x", "y"], [1, 1], spread=0.0)
        grammar = build_path_grammar([
            Transcript("t1", ("y",)), Transcript("t2", ("y",)),
            Transcript("t3", ("x",)),
        ])
        video = FeatureSequence("v", np.zeros((4, 2)))
        assert decode(models, grammar, video).transcript.labels == ("x",)
        res = decode(models, grammar, video, use_path_prior=True)
        assert res.transcript.labels == ("y",)

    def test_infeasible_paths_skipped(self):
        models = planted_modelset(["A", "B"], [3, 3])
        grammar = build_path_grammar([
            Transcript("t1", ("A", "B")),  # needs 6 frames
            Transcript("t2", ("A",)),      # needs 3
        ])
        video = _video_from_labels(models, ["A"], 4)
        res = decode(models, grammar, video)
        assert res.transcript.labels == ("A",)

    def test_all_paths_infeasible(self):
        models = planted_modelset(["A"], [5])
        grammar = build_path_grammar([Transcript("t", ("A", "A"))])
        video = FeatureSequence("v", np.zeros((3, 2)))
        with pytest.raises(NoValidPathError):
            decode(models, grammar, video)

    def test_activity_tag_reported(self):
        models = planted_modelset(["A", "B"], [1, 1], spread=8.0)
        grammar = build_path_grammar([
            Transcript("t1", ("A", "B"), "making_tea"),
            Transcript("t2", ("B", "A")),
        ])
        video = _video_from_labels(models, ["A", "B"], 4)
        res = decode(models, grammar, video)
        assert res.activity == "making_tea"
        assert activity_lookup(grammar, res) == "making_tea"

    def test_untagged_grammar_has_absent_activity(self):
        models = planted_modelset(["A"], [1])
        grammar = build_path_grammar([Transcript("t", ("A",))])
        res = decode(models, grammar, _video_from_labels(models, ["A"], 3))
        assert res.activity is None


class TestBigramDecode:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(200 + seed)
        C = int(rng.integers(2, 4))
        names = [f"c{i}" for i in range(C)]
        states = [int(rng.integers(1, 3)) for _ in range(C)]
        models = planted_modelset(names, states)
        # random training transcripts give a sparse bigram
        trs = []
        for v in range(3):
            k = int(rng.integers(1, 4))
            labels = tuple(names[int(rng.integers(0, C))] for _ in range(k))
            trs.append(Transcript(f"t{v}", labels))
        bigram = build_bigram(trs)
        T = int(rng.integers(2, 8))
        video = FeatureSequence("v", rng.normal(scale=2.0, size=(T, 2)))
        class_scores = models.score_frames(video.features)
        best_lp, best_labels = brute_bigram_decode(models, bigram, class_scores)
        if best_labels is None:
            with pytest.raises(NoValidPathError):
                decode(models, bigram, video)
            return
        res = decode(models, bigram, video)
        assert abs(res.log_prob - best_lp) < 1e-9
        assert res.transcript.labels == best_labels

    def test_single_transcript_bigram_reduces_to_alignment(self):
        models = planted_modelset(["A", "B"], [1, 2])
        tr = Transcript("v", ("A", "B"))
        bigram = build_bigram([tr])
        video = _video_from_labels(models, ["A", "B"], 3)
        res = decode(models, bigram, video)
        seq = models.sequence_hmm(tr)
        ref = viterbi_align(seq, gather_scores(models.score_frames(video.features), seq))
        assert res.transcript.labels == tr.labels
        assert res.log_prob == ref.log_prob

    def test_segmentation_matches_transcript(self):
        models = planted_modelset(["A", "B"], [1, 1], spread=8.0)
        bigram = build_bigram([
            Transcript("t1", ("A", "B")), Transcript("t2", ("B", "A")),
            Transcript("t3", ("A",)),
        ])
        video = _video_from_labels(models, ["B", "A"], 5)
        res = decode(models, bigram, video)
        assert res.transcript.labels == ("B", "A")
        assert len(res.segmentation.segments) == 2
        assert res.segmentation.segments[0].label == "B"
        assert res.activity is None


class TestBigramValidation:
    def test_rejects_bad_row(self):
        labels = ("A",)
        with np.errstate(divide="ignore"):
            table = np.log(np.array([
                [0.5, 0.4],   # A row sums to 0.9
                [1.0, 0.0],
            ]))
        with pytest.raises(InvalidDataError):
            BigramModel(labels, table)
