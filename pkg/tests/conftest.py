"""Shared brute-force oracles and builders for the test suite.

Everything here recomputes answers by exhaustive enumeration or direct
formula so the dynamic-programming implementations are checked against an
independent formulation, not against themselves.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp

from actionseg.corpus import LabelSpace, Transcript
from actionseg.gaussians import GaussianModel
from actionseg.hmm import SequenceHMM, StateIndex, build_action_model
from actionseg.training import ModelSet


def make_chain(rng, n_states: int, video_id: str = "vid") -> SequenceHMM:
    """Single-instance chain with random normalized self/forward transitions."""
    p = rng.uniform(0.1, 0.9, n_states)
    index = StateIndex(["a"] * n_states, [0] * n_states, range(n_states))
    return SequenceHMM(
        Transcript(video_id, ("a",)), index, np.log(p), np.log1p(-p)
    )


def enumerate_chain_paths(T: int, S: int):
    """All monotone no-skip state paths of length T pinned to 0 and S-1."""
    if S > T:
        return
    for cuts in itertools.combinations(range(1, T), S - 1):
        states = np.zeros(T, dtype=np.int64)
        for c in cuts:
            states[c:] += 1
        yield states


def path_logprob(states, scores, self_lp, next_lp) -> float:
    lp = scores[0, states[0]]
    for t in range(1, len(states)):
        s_prev, s = states[t - 1], states[t]
        lp += scores[t, s]
        lp += self_lp[s] if s == s_prev else next_lp[s_prev]
    return float(lp)


def brute_best_path(scores, self_lp, next_lp):
    """(max log-probability, argmax paths) by path enumeration."""
    T, S = scores.shape
    best, argbest = -np.inf, []
    for states in enumerate_chain_paths(T, S):
        lp = path_logprob(states, scores, self_lp, next_lp)
        if lp > best:
            best, argbest = lp, [states]
        elif lp == best:
            argbest.append(states)
    return best, argbest


def brute_posteriors(scores, self_lp, next_lp):
    """(per-cell posterior weights, total log-likelihood) by enumeration."""
    T, S = scores.shape
    paths = list(enumerate_chain_paths(T, S))
    lps = np.array([path_logprob(p, scores, self_lp, next_lp) for p in paths])
    total = float(logsumexp(lps))
    w = np.zeros((T, S))
    for states, lp in zip(paths, lps):
        p = np.exp(lp - total)
        for t, s in enumerate(states):
            w[t, s] += p
    return w, total


def planted_modelset(labels, states_per, dim: int = 2, fps: int = 10,
                     spread: float = 5.0, floor: float = 1e-4) -> ModelSet:
    """Fitted ModelSet with unit covariance and well-separated integer means."""
    models = {}
    k = 0
    for name, n in zip(labels, states_per):
        gms = []
        for _ in range(n):
            mean = np.zeros(dim)
            mean[0] = k * spread
            k += 1
            gms.append(GaussianModel(mean, np.eye(dim)))
        models[name] = build_action_model(name, n, fps, gms)
    return ModelSet(LabelSpace(labels), models, fps, "full", floor)


def _bigram_chain_arrays(models: ModelSet, labels, bigram):
    """Per-state self/link weights and class-state columns for a label chain."""
    self_lp, link_lp, cols = [], [], []
    for i, name in enumerate(labels):
        am = models.models[name]
        off = models.state_offset(name)
        for j in range(am.n_states):
            cols.append(off + j)
            self_lp.append(am.self_logprob[j])
            w = am.forward_logprob[j]
            if j == am.n_states - 1:
                if i + 1 < len(labels):
                    w = w + bigram.transition_lp(name, labels[i + 1])
                else:
                    w = -np.inf  # final state of the whole chain never advances
            link_lp.append(w)
    return (
        np.asarray(self_lp, dtype=np.float64),
        np.asarray(link_lp, dtype=np.float64),
        np.asarray(cols, dtype=np.int64),
    )


def brute_bigram_decode(models: ModelSet, bigram, class_scores):
    """(best log-prob, best labels) over every label sequence and alignment."""
    T = class_scores.shape[0]
    names = list(models.label_space)
    best_lp, best_labels = -np.inf, None

    def n_states(seq):
        return sum(models.models[n].n_states for n in seq)

    def visit(seq):
        nonlocal best_lp, best_labels
        if seq:
            elp = bigram.end_lp(seq[-1])
            if elp > -np.inf:
                self_lp, link_lp, cols = _bigram_chain_arrays(models, seq, bigram)
                lp_path, _ = brute_best_path(class_scores[:, cols], self_lp, link_lp)
                lp = bigram.start_lp(seq[0]) + lp_path + elp
                if lp > best_lp:
                    best_lp, best_labels = lp, tuple(seq)
        for name in names:
            step = bigram.start_lp(name) if not seq else bigram.transition_lp(seq[-1], name)
            if step == -np.inf:
                continue
            if n_states(seq) + models.models[name].n_states > T:
                continue
            seq.append(name)
            visit(seq)
            seq.pop()

    visit([])
    return best_lp, best_labels
