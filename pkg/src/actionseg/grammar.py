"""Decoding grammars mined from transcripts and grammar-constrained decoding.

Path mode maximizes the alignment score over the distinct transcripts seen in
training. Bigram mode decodes a single lattice over all class HMMs where
leaving label a's final state into label b's first state costs the final
state's forward probability plus log p(b|a); virtual start/end symbols pin
the sequence ends.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import (
    Segment,
    Segmentation,
    Transcript,
    atomic_write_text,
    fmt_float,
    segmentation_from_alignment,
)
from .errors import InvalidDataError, NoValidPathError
from .gaussians import check_score_matrix
from .hmm import viterbi_align
from .training import ModelSet, gather_scores

START_TOKEN = "<s>"
END_TOKEN = "</s>"

__all__ = [
    "PathGrammar",
    "BigramModel",
    "DecodeResult",
    "build_path_grammar",
    "build_bigram",
    "decode",
    "activity_lookup",
    "read_grammar",
    "write_grammar",
    "read_bigram",
    "write_bigram",
]


@dataclass
class GrammarPath:
    labels: tuple[str, ...]
    count: int
    activity: str | None


class PathGrammar:
    """Distinct label sequences with multiplicities and optional activity tags."""

    def __init__(self, paths):
        self.paths: list[GrammarPath] = list(paths)
        if not self.paths:
            raise InvalidDataError("empty path grammar")
        self._by_labels = {}
        for p in self.paths:
            if not p.labels or p.count < 1:
                raise InvalidDataError("grammar paths need labels and positive counts")
            if p.labels in self._by_labels:
                raise InvalidDataError(f"duplicate grammar path {p.labels}")
            self._by_labels[p.labels] = p

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    @property
    def total_count(self) -> int:
        return sum(p.count for p in self.paths)

    def activity_of(self, labels) -> str | None:
        p = self._by_labels.get(tuple(labels))
        return p.activity if p else None


def build_path_grammar(transcripts) -> PathGrammar:
    """Merge duplicate transcripts; a path's tag is the majority tag (tie: first seen)."""
    transcripts = list(transcripts)
    if not transcripts:
        raise InvalidDataError("no transcripts to build a grammar from")
    order = []
    counts = {}
    tag_votes = {}
    for t in transcripts:
        key = tuple(t.labels)
        if key not in counts:
            counts[key] = 0
            tag_votes[key] = {}
            order.append(key)
        counts[key] += 1
        if t.activity is not None:
            votes = tag_votes[key]
            if t.activity not in votes:
                votes[t.activity] = [0, len(votes)]  # count, first-seen rank
            votes[t.activity][0] += 1
    paths = []
    for key in order:
        votes = tag_votes[key]
        tag = None
        if votes:
            tag = max(votes, key=lambda a: (votes[a][0], -votes[a][1]))
        paths.append(GrammarPath(key, counts[key], tag))
    return PathGrammar(paths)


class BigramModel:
    """First-order label transition model with virtual start and end symbols.

    log_table rows are contexts (labels in vocab order, then start), columns
    are targets (labels, then end).
    """

    def __init__(self, labels, log_table: np.ndarray, smoothing: float = 0.0):
        self.labels: tuple[str, ...] = tuple(labels)
        self.log_table = np.asarray(log_table, dtype=np.float64)
        self.smoothing = smoothing
        C = len(self.labels)
        if len(set(self.labels)) != C or C == 0:
            raise InvalidDataError("bigram vocabulary must be nonempty and unique")
        if self.log_table.shape != (C + 1, C + 1):
            raise InvalidDataError("bigram table must be (labels+start, labels+end)")
        self._index = {n: i for i, n in enumerate(self.labels)}
        sums = np.exp(self.log_table).sum(axis=1)
        live = ~np.isneginf(self.log_table).all(axis=1)
        if np.any(np.abs(sums[live] - 1.0) > 1e-9):
            raise InvalidDataError("bigram rows with mass must sum to 1")

    def index_of(self, label: str):
        return self._index.get(label)

    def transition_lp(self, a: str, b: str) -> float:
        ia, ib = self._index.get(a), self._index.get(b)
        if ia is None or ib is None:
            return -np.inf
        return float(self.log_table[ia, ib])

    def start_lp(self, b: str) -> float:
        ib = self._index.get(b)
        return -np.inf if ib is None else float(self.log_table[len(self.labels), ib])

    def end_lp(self, a: str) -> float:
        ia = self._index.get(a)
        return -np.inf if ia is None else float(self.log_table[ia, len(self.labels)])


def build_bigram(transcripts, smoothing: float = 0.0, label_space=None) -> BigramModel:
    """Count label bigrams with add-k smoothing over V = labels + end symbol.

    Vocabulary order follows label_space when given, else first appearance.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    transcripts = list(transcripts)
    if not transcripts:
        raise InvalidDataError("no transcripts to build a bigram model from")
    if label_space is not None:
        labels = list(label_space)
    else:
        labels = []
        for t in transcripts:
            for l in t.labels:
                if l not in labels:
                    labels.append(l)
    index = {n: i for i, n in enumerate(labels)}
    C = len(labels)
    counts = np.zeros((C + 1, C + 1), dtype=np.int64)  # rows: labels+start, cols: labels+end
    for t in transcripts:
        prev = C  # start context
        for l in t.labels:
            counts[prev, index[l]] += 1
            prev = index[l]
        counts[prev, C] += 1
    V = C + 1
    totals = counts.sum(axis=1, dtype=np.float64)
    table = np.full((C + 1, C + 1), -np.inf)
    for i in range(C + 1):
        denom = totals[i] + smoothing * V
        if denom > 0:
            with np.errstate(divide="ignore"):
                table[i] = np.log((counts[i] + smoothing) / denom)
    return BigramModel(labels, table, smoothing)


@dataclass
class DecodeResult:
    """Joint segmentation and classification of one video."""

    transcript: Transcript
    segmentation: Segmentation
    log_prob: float
    activity: str | None = None


def activity_lookup(grammar: PathGrammar, result: DecodeResult) -> str | None:
    """Activity tag of the decoded label sequence, if the grammar tags it."""
    return grammar.activity_of(result.transcript.labels)


def _class_layout(models: ModelSet):
    labels = list(models.label_space)
    C = len(labels)
    S = models.n_class_states
    self_lp = np.empty(S)
    chain_lp = np.full(S, -np.inf)
    label_of = np.empty(S, dtype=np.int64)
    local_of = np.empty(S, dtype=np.int64)
    first_idx = np.empty(C, dtype=np.int64)
    final_idx = np.empty(C, dtype=np.int64)
    final_fwd = np.empty(C)
    for ci, name in enumerate(labels):
        am = models.models[name]
        base = models.state_offset(name)
        n = am.n_states
        first_idx[ci] = base
        final_idx[ci] = base + n - 1
        final_fwd[ci] = am.forward_logprob[n - 1]
        self_lp[base: base + n] = am.self_logprob
        if n > 1:
            chain_lp[base: base + n - 1] = am.forward_logprob[: n - 1]
        label_of[base: base + n] = ci
        local_of[base: base + n] = np.arange(n)
    return labels, self_lp, chain_lp, label_of, local_of, first_idx, final_idx, final_fwd


def _decode_bigram(models: ModelSet, bigram: BigramModel, video,
                   class_scores: np.ndarray) -> DecodeResult:
    (labels, self_lp, chain_lp, label_of, local_of,
     first_idx, final_idx, final_fwd) = _class_layout(models)
    C = len(labels)
    start_lp = np.asarray([bigram.start_lp(n) for n in labels])
    end_lp = np.asarray([bigram.end_lp(n) for n in labels])
    jump_lp = np.empty((C, C))
    for a, name_a in enumerate(labels):
        for b, name_b in enumerate(labels):
            jump_lp[a, b] = final_fwd[a] + bigram.transition_lp(name_a, name_b)

    scores = np.ascontiguousarray(class_scores, dtype=np.float64)
    path, jumps, logp = kernels.viterbi_bigram(
        scores, self_lp, chain_lp, label_of, local_of,
        first_idx, final_idx, jump_lp, start_lp, end_lp,
    )
    if logp == -np.inf:
        raise NoValidPathError(f"{video.video_id}: no label sequence fits the video")
    starts = np.flatnonzero(jumps)
    segs = []
    seq_labels = []
    for i, s in enumerate(starts):
        end = (starts[i + 1] - 1) if i + 1 < len(starts) else scores.shape[0] - 1
        name = labels[label_of[path[s]]]
        seq_labels.append(name)
        segs.append(Segment(int(s), int(end), name))
    transcript = Transcript(video.video_id, tuple(seq_labels))
    return DecodeResult(transcript, Segmentation(video.video_id, segs), float(logp))


def _decode_paths(models: ModelSet, grammar: PathGrammar, video,
                  class_scores: np.ndarray, use_path_prior: bool) -> DecodeResult:
    T = class_scores.shape[0]
    total = grammar.total_count
    best = None  # (log_prob, labels, alignment, activity)
    for p in grammar.paths:
        seq = models.sequence_hmm(Transcript(video.video_id, p.labels, p.activity))
        if T < seq.n_states:
            continue
        try:
            align = viterbi_align(seq, gather_scores(class_scores, seq))
        except NoValidPathError:
            continue
        lp = align.log_prob
        if use_path_prior:
            lp += float(np.log(p.count / total))
        if best is None or lp > best[0] or (lp == best[0] and p.labels < best[1]):
            best = (lp, p.labels, align, p.activity)
    if best is None:
        raise NoValidPathError(f"{video.video_id}: no grammar path is feasible")
    lp, labels, align, activity = best
    seg = segmentation_from_alignment(align)
    transcript = Transcript(video.video_id, labels, activity)
    return DecodeResult(transcript, seg, float(lp), activity)


def decode(models: ModelSet, grammar, video, *, class_scores=None,
           use_path_prior: bool = False) -> DecodeResult:
    """Grammar-constrained joint segmentation and classification.

    grammar is a PathGrammar (max over stored paths, multiplicity unscored
    unless use_path_prior) or a BigramModel (single merged lattice).
    class_scores may supply precomputed log scores over the model set's
    global class states; defaults to Gaussian densities.
    """
    if class_scores is None:
        class_scores = models.score_frames(video.features)
    class_scores = check_score_matrix(class_scores, models.n_class_states)
    if isinstance(grammar, PathGrammar):
        return _decode_paths(models, grammar, video, class_scores, use_path_prior)
    if isinstance(grammar, BigramModel):
        return _decode_bigram(models, grammar, video, class_scores)
    raise ValueError("grammar must be a PathGrammar or BigramModel")


# ---------------------------------------------------------------------------
# grammar files


def write_grammar(path, grammar: PathGrammar) -> None:
    lines = []
    for p in grammar.paths:
        line = f"{p.count}\t{' '.join(p.labels)}"
        if p.activity is not None:
            line += f"\t@{p.activity}"
        lines.append(line)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_grammar(path) -> PathGrammar:
    path = os.fspath(path)
    paths = []
    seen = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise InvalidDataError(f"{path}:{ln}: expected `count<TAB>labels[<TAB>@tag]`")
            try:
                count = int(parts[0])
            except ValueError:
                raise InvalidDataError(f"{path}:{ln}: bad count") from None
            labels = tuple(parts[1].split())
            tag = None
            if len(parts) == 3:
                if not parts[2].startswith("@"):
                    raise InvalidDataError(f"{path}:{ln}: activity tag must start with '@'")
                tag = parts[2][1:]
            if labels in seen:
                raise InvalidDataError(f"{path}:{ln}: duplicate path")
            seen[labels] = True
            paths.append(GrammarPath(labels, count, tag))
    return PathGrammar(paths)


def write_bigram(path, bigram: BigramModel) -> None:
    """Full transition table: `context target logprob`, start/end as <s> and </s>."""
    C = len(bigram.labels)
    contexts = [START_TOKEN] + list(bigram.labels)
    targets = list(bigram.labels) + [END_TOKEN]
    lines = []
    for ctx in contexts:
        row = C if ctx == START_TOKEN else bigram.index_of(ctx)
        for tgt in targets:
            col = C if tgt == END_TOKEN else bigram.index_of(tgt)
            lines.append(f"{ctx} {tgt} {fmt_float(bigram.log_table[row, col])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_bigram(path) -> BigramModel:
    path = os.fspath(path)
    entries = []
    labels = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidDataError(f"{path}:{ln}: expected `context target logprob`")
            ctx, tgt, lp = parts
            try:
                lpv = float(lp)
            except ValueError:
                raise InvalidDataError(f"{path}:{ln}: bad log probability") from None
            entries.append((ctx, tgt, lpv))
            if tgt != END_TOKEN and tgt not in labels:
                labels.append(tgt)
    if not labels:
        raise InvalidDataError(f"{path}: no bigram entries")
    C = len(labels)
    index = {n: i for i, n in enumerate(labels)}
    table = np.full((C + 1, C + 1), -np.inf)
    for ctx, tgt, lpv in entries:
        row = C if ctx == START_TOKEN else index.get(ctx)
        col = C if tgt == END_TOKEN else index.get(tgt)
        if row is None or col is None:
            raise InvalidDataError(f"{path}: symbol outside vocabulary in `{ctx} {tgt}`")
        table[row, col] = lpv
    return BigramModel(labels, table)
