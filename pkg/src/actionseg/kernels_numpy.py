"""Pure numpy lattice recurrences.

Reference backend. The numba backend mirrors these cell for cell; both share
the same tie conventions:

  chain Viterbi   : on equal scores the predecessor j-1 beats the self loop
  bigram Viterbi  : candidate order is within-HMM chain, self loop, then
                    jumps in label order; the first strict maximum wins
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def viterbi_chain(scores, self_lp, next_lp):
    """Best pinned path through a left-to-right chain.

    scores: (T, S) log observation scores, self_lp/next_lp: (S,) log transition
    probabilities (next_lp[S-1] unused). The path starts in state 0 at frame 0
    and ends in state S-1 at frame T-1. Returns (path int64 (T,), log prob).
    A log prob of -inf means no admissible path.
    """
    T, S = scores.shape
    v = np.full(S, NEG_INF)
    v[0] = scores[0, 0]
    bp = np.zeros((T, S), dtype=bool)  # True: predecessor is j-1
    move = np.empty(S)
    for t in range(1, T):
        stay = v + self_lp
        move[0] = NEG_INF
        np.add(v[:-1], next_lp[:-1], out=move[1:])
        take = move >= stay
        take[0] = False
        bp[t] = take
        v = scores[t] + np.where(take, move, stay)
    path = np.empty(T, dtype=np.int64)
    j = S - 1
    for t in range(T - 1, 0, -1):
        path[t] = j
        if bp[t, j]:
            j -= 1
    path[0] = j
    return path, float(v[S - 1])


def forward_chain(scores, self_lp, next_lp):
    """Log forward lattice, (T, S). Start pinned to state 0."""
    T, S = scores.shape
    la = np.full((T, S), NEG_INF)
    la[0, 0] = scores[0, 0]
    move = np.empty(S)
    for t in range(1, T):
        prev = la[t - 1]
        stay = prev + self_lp
        move[0] = NEG_INF
        np.add(prev[:-1], next_lp[:-1], out=move[1:])
        la[t] = scores[t] + np.logaddexp(stay, move)
    return la


def backward_chain(scores, self_lp, next_lp):
    """Log backward lattice, (T, S). End pinned to state S-1."""
    T, S = scores.shape
    lb = np.full((T, S), NEG_INF)
    lb[T - 1, S - 1] = 0.0
    move = np.empty(S)
    for t in range(T - 2, -1, -1):
        nxt = lb[t + 1] + scores[t + 1]
        stay = self_lp + nxt
        move[S - 1] = NEG_INF
        np.add(next_lp[:-1], nxt[1:], out=move[:-1])
        lb[t] = np.logaddexp(stay, move)
    return lb


def viterbi_bigram(scores, self_lp, chain_lp, label_of, local_of,
                   first_idx, final_idx, jump_lp, start_lp, end_lp):
    """Joint best path over all label sequences in a bigram-linked lattice.

    scores: (T, S) over the class-state layout. chain_lp[j] is the log forward
    probability from state j to j+1 inside one HMM; jump_lp[a, b] is the log
    weight of leaving label a's final state into label b's first state.
    Returns (path, new_instance flags uint8, log prob).
    """
    T, S = scores.shape
    C = first_idx.shape[0]
    v = np.full(S, NEG_INF)
    v[first_idx] = start_lp + scores[0, first_idx]
    bp_state = np.zeros((T, S), dtype=np.int64)
    bp_jump = np.zeros((T, S), dtype=np.uint8)
    is_first = local_of == 0

    chainv = np.empty(S)
    for t in range(1, T):
        chainv[0] = NEG_INF
        np.add(v[:-1], chain_lp[:-1], out=chainv[1:])
        chainv[is_first] = NEG_INF
        selfv = v + self_lp
        # best entry point per target label, first maximum wins (label order)
        jm = v[final_idx][:, None] + jump_lp
        best_a = np.argmax(jm, axis=0)
        jumpv = np.full(S, NEG_INF)
        jumpv[is_first] = jm[best_a, np.arange(C)][label_of[is_first]]
        jump_pred = final_idx[best_a][label_of]

        cand = np.stack((chainv, selfv, jumpv))
        kind = np.argmax(cand, axis=0)
        v = scores[t] + cand[kind, np.arange(S)]
        bp_state[t] = np.choose(kind, (np.arange(S) - 1, np.arange(S), jump_pred))
        bp_jump[t] = kind == 2

    endv = v[final_idx] + end_lp
    best_label = int(np.argmax(endv))
    logp = float(endv[best_label])
    path = np.empty(T, dtype=np.int64)
    jumps = np.zeros(T, dtype=np.uint8)
    j = int(final_idx[best_label])
    for t in range(T - 1, 0, -1):
        path[t] = j
        jumps[t] = bp_jump[t, j]
        j = int(bp_state[t, j])
    path[0] = j
    jumps[0] = 1
    return path, jumps, logp
