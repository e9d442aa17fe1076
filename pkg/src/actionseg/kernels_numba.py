"""Numba-compiled lattice recurrences, cell-for-cell twins of kernels_numpy.

Kept loop-explicit so the JIT fuses the time recursion; no fastmath, so
results stay reproducible and -inf propagation stays exact.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _logaddexp(a, b):
    # mirrors numpy's two-term logaddexp, including the infinity cases
    if a == b:
        return a + 0.6931471805599453
    d = a - b
    if d > 0.0:
        return a + math.log1p(math.exp(-d))
    elif d <= 0.0:
        return b + math.log1p(math.exp(d))
    return d  # nan propagates


@njit(**_JIT)
def viterbi_chain(scores, self_lp, next_lp):
    T, S = scores.shape
    v = np.full(S, NEG_INF)
    v[0] = scores[0, 0]
    bp = np.zeros((T, S), dtype=np.bool_)
    cur = np.empty(S)
    for t in range(1, T):
        for j in range(S):
            stay = v[j] + self_lp[j]
            if j > 0:
                move = v[j - 1] + next_lp[j - 1]
                if move >= stay:
                    bp[t, j] = True
                    cur[j] = scores[t, j] + move
                    continue
            cur[j] = scores[t, j] + stay
        v[:] = cur
    path = np.empty(T, dtype=np.int64)
    j = S - 1
    for t in range(T - 1, 0, -1):
        path[t] = j
        if bp[t, j]:
            j -= 1
    path[0] = j
    return path, v[S - 1]


@njit(**_JIT)
def forward_chain(scores, self_lp, next_lp):
    T, S = scores.shape
    la = np.full((T, S), NEG_INF)
    la[0, 0] = scores[0, 0]
    for t in range(1, T):
        for j in range(S):
            stay = la[t - 1, j] + self_lp[j]
            if j > 0:
                move = la[t - 1, j - 1] + next_lp[j - 1]
                la[t, j] = scores[t, j] + _logaddexp(stay, move)
            else:
                la[t, j] = scores[t, j] + stay
    return la


@njit(**_JIT)
def backward_chain(scores, self_lp, next_lp):
    T, S = scores.shape
    lb = np.full((T, S), NEG_INF)
    lb[T - 1, S - 1] = 0.0
    for t in range(T - 2, -1, -1):
        for j in range(S):
            stay = self_lp[j] + scores[t + 1, j] + lb[t + 1, j]
            if j < S - 1:
                move = next_lp[j] + scores[t + 1, j + 1] + lb[t + 1, j + 1]
                lb[t, j] = _logaddexp(stay, move)
            else:
                lb[t, j] = stay
    return lb


@njit(**_JIT)
def viterbi_bigram(scores, self_lp, chain_lp, label_of, local_of,
                   first_idx, final_idx, jump_lp, start_lp, end_lp):
    T, S = scores.shape
    C = first_idx.shape[0]
    v = np.full(S, NEG_INF)
    for b in range(C):
        v[first_idx[b]] = start_lp[b] + scores[0, first_idx[b]]
    bp_state = np.zeros((T, S), dtype=np.int64)
    bp_jump = np.zeros((T, S), dtype=np.uint8)
    cur = np.empty(S)
    for t in range(1, T):
        for j in range(S):
            # candidate order: chain, self, jumps by label; first strict max wins
            best = NEG_INF
            bs = j - 1
            bj = np.uint8(0)
            if local_of[j] > 0:
                best = v[j - 1] + chain_lp[j - 1]
            c = v[j] + self_lp[j]
            if c > best:
                best = c
                bs = j
            if local_of[j] == 0:
                b = label_of[j]
                for a in range(C):
                    c = v[final_idx[a]] + jump_lp[a, b]
                    if c > best:
                        best = c
                        bs = final_idx[a]
                        bj = np.uint8(1)
            cur[j] = scores[t, j] + best
            bp_state[t, j] = bs
            bp_jump[t, j] = bj
        v[:] = cur
    best_label = 0
    logp = NEG_INF
    for a in range(C):
        c = v[final_idx[a]] + end_lp[a]
        if c > logp:
            logp = c
            best_label = a
    path = np.empty(T, dtype=np.int64)
    jumps = np.zeros(T, dtype=np.uint8)
    j = final_idx[best_label]
    for t in range(T - 1, 0, -1):
        path[t] = j
        jumps[t] = bp_jump[t, j]
        j = bp_state[t, j]
    path[0] = j
    jumps[0] = 1
    return path, jumps, logp
