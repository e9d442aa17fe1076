"""Left-to-right action HMMs, sequence concatenation, exact alignment and posteriors.

Every action HMM allows only self loops and single-step forward transitions.
A sequence HMM chains per-instance copies in transcript order; the final state
of one instance feeds the first state of the next with its forward probability.
Alignment paths are pinned to start in global state 0 at frame 0 and end in
the last global state at the last frame.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import Transcript, atomic_write_text
from .errors import (
    InfeasibleAlignmentError,
    InvalidDataError,
    MissingModelError,
    NoValidPathError,
)

__all__ = [
    "ActionModel",
    "StateIndex",
    "SequenceHMM",
    "StateAlignment",
    "build_action_model",
    "states_for_class",
    "concat",
    "viterbi_align",
    "forward_backward",
    "sequence_log_likelihood",
    "write_alignment_dump",
    "read_alignment_dump",
]


@dataclass
class ActionModel:
    """One action class's HMM: per-state transition log probs plus Gaussian slots."""

    label: str
    n_states: int
    self_logprob: np.ndarray
    forward_logprob: np.ndarray
    state_models: list | None = None

    def __post_init__(self):
        self.self_logprob = np.asarray(self.self_logprob, dtype=np.float64)
        self.forward_logprob = np.asarray(self.forward_logprob, dtype=np.float64)
        if self.n_states < 1:
            raise InvalidDataError(f"{self.label}: need at least one state")
        if self.self_logprob.shape != (self.n_states,) or self.forward_logprob.shape != (
            self.n_states,
        ):
            raise InvalidDataError(f"{self.label}: transition vectors must have n_states entries")
        total = np.exp(self.self_logprob) + np.exp(self.forward_logprob)
        if np.any(np.abs(total - 1.0) > 1e-9):
            raise InvalidDataError(f"{self.label}: self + forward probability must be 1 per state")
        if self.state_models is not None and len(self.state_models) != self.n_states:
            raise InvalidDataError(f"{self.label}: wrong number of state Gaussians")

    @property
    def is_fitted(self) -> bool:
        return self.state_models is not None


def build_action_model(label: str, n_states: int, frames_per_state: int,
                       state_models=None) -> ActionModel:
    """Uniform left-to-right transitions: self (fps-1)/fps, forward 1/fps."""
    if frames_per_state < 1:
        raise ValueError("frames_per_state must be >= 1")
    p_fwd = 1.0 / frames_per_state
    p_self = (frames_per_state - 1.0) / frames_per_state
    with np.errstate(divide="ignore"):
        self_lp = np.full(n_states, np.log(p_self))
        fwd_lp = np.full(n_states, np.log(p_fwd))
    return ActionModel(label, n_states, self_lp, fwd_lp, state_models)


def states_for_class(mean_action_length_frames: float, frames_per_state: int = 10) -> int:
    """Round(mean length / frames per state), at least 1 state."""
    if mean_action_length_frames <= 0:
        raise ValueError("mean action length must be positive")
    if frames_per_state < 1:
        raise ValueError("frames_per_state must be >= 1")
    n = math.floor(mean_action_length_frames / frames_per_state + 0.5)
    return max(1, n)


class StateIndex:
    """Bijection global state id <-> (label, instance ordinal, local state)."""

    def __init__(self, labels, instances, locals_):
        self.labels: tuple[str, ...] = tuple(labels)
        self.instances = np.asarray(instances, dtype=np.int64)
        self.locals = np.asarray(locals_, dtype=np.int64)
        n = len(self.labels)
        if not (self.instances.shape == (n,) == self.locals.shape):
            raise InvalidDataError("state index arrays disagree in length")

    def __len__(self) -> int:
        return len(self.labels)

    def describe(self, state_id: int) -> tuple[str, int, int]:
        return (
            self.labels[state_id],
            int(self.instances[state_id]),
            int(self.locals[state_id]),
        )


@dataclass
class SequenceHMM:
    """Concatenated per-instance HMMs for one transcript.

    next_logprob[j] covers both the within-HMM advance and the inter-instance
    link (both are state j's forward probability); the last state's entry is
    unused by the lattice.
    """

    transcript: Transcript
    index: StateIndex
    self_logprob: np.ndarray
    next_logprob: np.ndarray
    class_states: np.ndarray | None = None  # optional map into a ModelSet layout

    @property
    def n_states(self) -> int:
        return len(self.index)

    @property
    def video_id(self) -> str:
        return self.transcript.video_id


def concat(transcript: Transcript, models) -> tuple[SequenceHMM, StateIndex]:
    """Chain per-label ActionModels in transcript order.

    models: mapping label -> ActionModel. Repeated labels become distinct
    instances with their own states.
    """
    labels, instances, locals_ = [], [], []
    self_lp, next_lp = [], []
    for m, label in enumerate(transcript.labels):
        try:
            am = models[label]
        except KeyError:
            raise MissingModelError(f"no model for label {label!r}") from None
        labels.extend([label] * am.n_states)
        instances.extend([m] * am.n_states)
        locals_.extend(range(am.n_states))
        self_lp.append(am.self_logprob)
        next_lp.append(am.forward_logprob)
    index = StateIndex(labels, instances, locals_)
    seq = SequenceHMM(
        transcript,
        index,
        np.concatenate(self_lp),
        np.concatenate(next_lp),
    )
    return seq, index


@dataclass
class StateAlignment:
    """Per-frame global state ids for one video plus the path log probability."""

    video_id: str
    states: np.ndarray
    log_prob: float
    index: StateIndex

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.states.ndim != 1 or self.states.size == 0:
            raise InvalidDataError(f"{self.video_id}: empty alignment")
        steps = np.diff(self.states)
        if self.states[0] != 0 or self.states[-1] != len(self.index) - 1:
            raise InvalidDataError(f"{self.video_id}: alignment must pin start and end states")
        if np.any((steps != 0) & (steps != 1)):
            raise InvalidDataError(f"{self.video_id}: alignment steps must be 0 or +1")

    @property
    def num_frames(self) -> int:
        return self.states.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        names = self.index.labels
        return tuple(names[s] for s in self.states)

    @property
    def instances(self) -> np.ndarray:
        return self.index.instances[self.states]

    @property
    def local_states(self) -> np.ndarray:
        return self.index.locals[self.states]


def _check_lattice_inputs(seq: SequenceHMM, scores: np.ndarray) -> np.ndarray:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != seq.n_states:
        raise InvalidDataError(
            f"{seq.video_id}: score matrix must be (T, {seq.n_states})"
        )
    if np.any(np.isnan(scores)) or np.any(np.isposinf(scores)):
        raise InvalidDataError(f"{seq.video_id}: scores must be finite or -inf")
    T = scores.shape[0]
    if T < seq.n_states:
        raise InfeasibleAlignmentError(
            f"{seq.video_id}: {T} frames cannot cover {seq.n_states} states"
        )
    return scores


def viterbi_align(seq: SequenceHMM, scores: np.ndarray) -> StateAlignment:
    """Exact best admissible path through the sequence HMM.

    scores holds log observation scores over the sequence's global states.
    Backtrace ties go to the smaller predecessor state (the path that leaves
    each state as late as possible).
    """
    scores = _check_lattice_inputs(seq, scores)
    path, logp = kernels.viterbi_chain(scores, seq.self_logprob, seq.next_logprob)
    if logp == -np.inf:
        raise NoValidPathError(f"{seq.video_id}: all admissible paths have zero probability")
    return StateAlignment(seq.video_id, path, float(logp), seq.index)


def _forward_backward_ll(seq: SequenceHMM, scores: np.ndarray):
    scores = _check_lattice_inputs(seq, scores)
    la = kernels.forward_chain(scores, seq.self_logprob, seq.next_logprob)
    loglik = float(la[-1, -1])
    if loglik == -np.inf:
        raise NoValidPathError(f"{seq.video_id}: all admissible paths have zero probability")
    lb = kernels.backward_chain(scores, seq.self_logprob, seq.next_logprob)
    m = la + lb
    mx = np.max(m, axis=1, keepdims=True)
    w = np.exp(m - mx)
    w /= np.sum(w, axis=1, keepdims=True)
    return w, loglik


def forward_backward(seq: SequenceHMM, scores: np.ndarray) -> np.ndarray:
    """Per-frame state weights w_j(t) from the pinned forward-backward pass.

    Rows sum to 1; entries outside the feasible band are exactly 0.
    """
    return _forward_backward_ll(seq, scores)[0]


def sequence_log_likelihood(seq: SequenceHMM, scores: np.ndarray) -> float:
    """Log probability of the whole sequence under the pinned-path model."""
    scores = _check_lattice_inputs(seq, scores)
    la = kernels.forward_chain(scores, seq.self_logprob, seq.next_logprob)
    ll = float(la[-1, -1])
    if ll == -np.inf:
        raise NoValidPathError(f"{seq.video_id}: all admissible paths have zero probability")
    return ll


def write_alignment_dump(path, alignment: StateAlignment) -> None:
    """Debug dump: one `t state label instance local` line per frame."""
    idx = alignment.index
    lines = []
    for t, s in enumerate(alignment.states):
        label, inst, loc = idx.describe(int(s))
        lines.append(f"{t} {int(s)} {label} {inst} {loc}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_alignment_dump(path):
    """Parse an alignment dump back into parallel arrays (states, labels, instances, locals)."""
    path = os.fspath(path)
    states, labels, instances, locals_ = [], [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise InvalidDataError(f"{path}:{ln}: expected 5 fields")
            t, s, label, inst, loc = parts
            if int(t) != len(states):
                raise InvalidDataError(f"{path}:{ln}: frame numbers must be consecutive")
            states.append(int(s))
            labels.append(label)
            instances.append(int(inst))
            locals_.append(int(loc))
    if not states:
        raise InvalidDataError(f"{path}: empty alignment dump")
    return (
        np.asarray(states, dtype=np.int64),
        tuple(labels),
        np.asarray(instances, dtype=np.int64),
        np.asarray(locals_, dtype=np.int64),
    )
