import math

import numpy as np
import pytest
from conftest import brute_best_path, brute_posteriors, make_chain, path_logprob

from actionseg.corpus import Transcript
from actionseg.errors import (
    InfeasibleAlignmentError,
    InvalidDataError,
    MissingModelError,
    NoValidPathError,
)
from actionseg.hmm import (
    SequenceHMM,
    StateAlignment,
    StateIndex,
    build_action_model,
    concat,
    forward_backward,
    read_alignment_dump,
    sequence_log_likelihood,
    states_for_class,
    viterbi_align,
    write_alignment_dump,
)


class TestTopology:
    def test_default_transition_split(self):
        am = build_action_model("a", 3, 10)
        np.testing.assert_allclose(np.exp(am.self_logprob), 0.9, atol=1e-15)
        np.testing.assert_allclose(np.exp(am.forward_logprob), 0.1, atol=1e-15)

    def test_pure_chain(self):
        am = build_action_model("a", 2, 1)
        assert np.all(am.self_logprob == -np.inf)
        np.testing.assert_array_equal(am.forward_logprob, 0.0)

    def test_even_split(self):
        am = build_action_model("a", 1, 2)
        assert abs(math.exp(am.self_logprob[0]) - 0.5) < 1e-15
        assert abs(math.exp(am.forward_logprob[0]) - 0.5) < 1e-15

    def test_states_for_class(self):
        assert states_for_class(290, 10) == 29
        assert states_for_class(7, 10) == 1
        assert states_for_class(10, 10) == 1
        assert states_for_class(25, 10) == 3  # half rounds up
        assert states_for_class(48, 10) == 5

    def test_states_for_class_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            states_for_class(0.0, 10)


class TestConcat:
    def _models(self):
        return {
            "A": build_action_model("A", 2, 10),
            "B": build_action_model("B", 2, 10),
        }

    def test_single_action(self):
        models = {"A": build_action_model("A", 3, 10)}
        seq, index = concat(Transcript("v", ("A",)), models)
        assert seq.n_states == 3
        assert index.describe(0) == ("A", 0, 0)
        assert index.describe(2) == ("A", 0, 2)

    def test_two_actions(self):
        seq, index = concat(Transcript("v", ("A", "B")), self._models())
        assert seq.n_states == 4
        assert index.describe(1) == ("A", 0, 1)
        assert index.describe(2) == ("B", 1, 0)
        # link 1 -> 2 carries state 1's forward probability
        assert seq.next_logprob[1] == math.log(0.1)

    def test_repeated_label_distinct_instances(self):
        seq, index = concat(Transcript("v", ("A", "A")), self._models())
        assert seq.n_states == 4
        assert index.describe(1) == ("A", 0, 1)
        assert index.describe(2) == ("A", 1, 0)

    def test_unknown_label(self):
        with pytest.raises(MissingModelError):
            concat(Transcript("v", ("A", "C")), self._models())


class TestStateAlignmentInvariants:
    def test_rejects_bad_start(self):
        index = StateIndex(["A", "A"], [0, 0], [0, 1])
        with pytest.raises(InvalidDataError):
            StateAlignment("v", [1, 1], 0.0, index)

    def test_rejects_bad_end(self):
        index = StateIndex(["A", "A"], [0, 0], [0, 1])
        with pytest.raises(InvalidDataError):
            StateAlignment("v", [0, 0], 0.0, index)

    def test_rejects_skip(self):
        index = StateIndex(["A"] * 3, [0] * 3, [0, 1, 2])
        with pytest.raises(InvalidDataError):
            StateAlignment("v", [0, 2], 0.0, index)


class TestViterbi:
    def test_forced_two_state_path(self):
        rng = np.random.default_rng(0)
        seq = make_chain(rng, 2)
        a = viterbi_align(seq, rng.normal(size=(2, 2)))
        np.testing.assert_array_equal(a.states, [0, 1])

    def test_tie_broken_toward_late_transition(self):
        # 2 states, self 0.9, T=3, uniform scores: the two feasible paths tie
        # at 0.9*0.1 and the rule keeps the model in the first state longer.
        index = StateIndex(["A", "A"], [0, 0], [0, 1])
        seq = SequenceHMM(
            Transcript("v", ("A",)), index,
            np.log([0.9, 0.9]), np.log([0.1, 0.1]),
        )
        a = viterbi_align(seq, np.zeros((3, 2)))
        np.testing.assert_array_equal(a.states, [0, 0, 1])
        assert abs(a.log_prob - math.log(0.9 * 0.1)) < 1e-12

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(1, 7))
        T = int(rng.integers(S, 9))
        seq = make_chain(rng, S)
        scores = rng.normal(scale=3.0, size=(T, S))
        a = viterbi_align(seq, scores)
        best, _ = brute_best_path(scores, seq.self_logprob, seq.next_logprob)
        assert abs(a.log_prob - best) < 1e-9
        # returned path achieves the reported log-probability
        direct = path_logprob(a.states, scores, seq.self_logprob, seq.next_logprob)
        assert abs(direct - a.log_prob) < 1e-9

    def test_per_frame_score_shift_preserves_path(self):
        rng = np.random.default_rng(11)
        seq = make_chain(rng, 4)
        scores = rng.normal(size=(9, 4))
        shift = rng.normal(size=(9, 1))
        a = viterbi_align(seq, scores)
        b = viterbi_align(seq, scores + shift)
        np.testing.assert_array_equal(a.states, b.states)
        assert abs(b.log_prob - (a.log_prob + shift.sum())) < 1e-9

    def test_infeasible_when_too_short(self):
        rng = np.random.default_rng(1)
        seq = make_chain(rng, 4)
        with pytest.raises(InfeasibleAlignmentError):
            viterbi_align(seq, rng.normal(size=(3, 4)))

    def test_nan_scores_rejected(self):
        rng = np.random.default_rng(1)
        seq = make_chain(rng, 2)
        scores = np.zeros((3, 2))
        scores[1, 0] = np.nan
        with pytest.raises(InvalidDataError):
            viterbi_align(seq, scores)

    def test_no_valid_path(self):
        rng = np.random.default_rng(1)
        seq = make_chain(rng, 2)
        scores = np.zeros((3, 2))
        scores[:, 1] = -np.inf  # end state unreachable
        with pytest.raises(NoValidPathError):
            viterbi_align(seq, scores)


class TestForwardBackward:
    def test_forced_chain_is_deterministic(self):
        rng = np.random.default_rng(2)
        seq = make_chain(rng, 3)
        w = forward_backward(seq, rng.normal(size=(3, 3)))
        np.testing.assert_allclose(w, np.eye(3), atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        seq = make_chain(rng, 4)
        w = forward_backward(seq, rng.normal(size=(10, 4)))
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_outside_feasible_band(self):
        rng = np.random.default_rng(4)
        S, T = 3, 6
        seq = make_chain(rng, S)
        w = forward_backward(seq, rng.normal(size=(T, S)))
        for t in range(T):
            for j in range(S):
                if j > t or (S - 1 - j) > (T - 1 - t):
                    assert w[t, j] == 0.0

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        S = int(rng.integers(1, 7))
        T = int(rng.integers(S, 9))
        seq = make_chain(rng, S)
        scores = rng.normal(scale=2.0, size=(T, S))
        w = forward_backward(seq, scores)
        ref, total = brute_posteriors(scores, seq.self_logprob, seq.next_logprob)
        np.testing.assert_allclose(w, ref, atol=1e-9)
        assert abs(sequence_log_likelihood(seq, scores) - total) < 1e-9

    def test_loglik_at_least_viterbi(self):
        rng = np.random.default_rng(5)
        seq = make_chain(rng, 4)
        scores = rng.normal(size=(8, 4))
        assert sequence_log_likelihood(seq, scores) >= viterbi_align(seq, scores).log_prob


class TestAlignmentDump:
    def test_round_trip(self, tmp_path):
        index = StateIndex(["A", "B"], [0, 1], [0, 0])
        a = StateAlignment("v", [0, 0, 1], -2.5, index)
        p = tmp_path / "v.txt"
        write_alignment_dump(p, a)
        states, labels, instances, locals_ = read_alignment_dump(p)
        np.testing.assert_array_equal(states, [0, 0, 1])
        assert tuple(labels) == ("A", "A", "B")
        np.testing.assert_array_equal(instances, [0, 0, 1])
        np.testing.assert_array_equal(locals_, [0, 0, 0])
