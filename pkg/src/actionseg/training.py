"""Weakly supervised training: linear flat start, weighted refits, realignment.

Only the Gaussians are reestimated; transition probabilities stay at their
frames-per-state initialization. Training is deterministic: videos are
processed in corpus order and statistics merge in that order regardless of
the worker count.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import (
    FeatureSequence,
    LabelSpace,
    Segment,
    Segmentation,
    Transcript,
    atomic_write_text,
    fmt_float,
    segmentation_from_alignment,
)
from .errors import (
    EmptyCorpusError,
    InfeasibleAlignmentError,
    InvalidDataError,
    NoValidPathError,
)
from .gaussians import COV_MODES, GaussianModel, GaussianStats, score_frames
from .hmm import (
    ActionModel,
    SequenceHMM,
    StateAlignment,
    StateIndex,
    _forward_backward_ll,
    build_action_model,
    concat,
    sequence_log_likelihood,
    states_for_class,
    viterbi_align,
)

__all__ = [
    "TrainingCorpus",
    "TrainConfig",
    "ModelSet",
    "TrainResult",
    "linear_init",
    "naive_segmentation",
    "fit_from_alignments",
    "train",
    "align_corpus",
    "align_corpus_states",
    "gather_scores",
    "write_model_dir",
    "read_model_dir",
]


class TrainingCorpus:
    """Paired feature sequences and transcripts over a shared label space.

    Video order follows the transcript list and fixes every deterministic
    reduction order downstream.
    """

    def __init__(self, sequences, transcripts, label_space: LabelSpace):
        by_id = {}
        for s in sequences:
            if s.video_id in by_id:
                raise InvalidDataError(f"duplicate features for video {s.video_id!r}")
            by_id[s.video_id] = s
        self._transcripts = {}
        self._sequences = {}
        order = []
        for t in transcripts:
            if t.video_id not in by_id:
                raise InvalidDataError(f"transcript {t.video_id!r} has no features")
            if t.video_id in self._transcripts:
                raise InvalidDataError(f"duplicate transcript for video {t.video_id!r}")
            for l in t.labels:
                if l not in label_space:
                    raise InvalidDataError(f"{t.video_id}: label {l!r} not in label space")
            self._transcripts[t.video_id] = t
            self._sequences[t.video_id] = by_id[t.video_id]
            order.append(t.video_id)
        if not order:
            raise EmptyCorpusError("corpus has no videos")
        extra = set(by_id) - set(order)
        if extra:
            raise InvalidDataError(f"features without transcripts: {sorted(extra)}")
        dims = {s.dim for s in self._sequences.values()}
        if len(dims) != 1:
            raise InvalidDataError(f"inconsistent feature dimensions: {sorted(dims)}")
        self.label_space = label_space
        self.video_ids: tuple[str, ...] = tuple(order)
        self.dim = dims.pop()

    def __len__(self) -> int:
        return len(self.video_ids)

    def features(self, video_id: str) -> FeatureSequence:
        return self._sequences[video_id]

    def transcript(self, video_id: str) -> Transcript:
        return self._transcripts[video_id]

    def subset(self, video_ids) -> "TrainingCorpus":
        keep = set(video_ids)
        return TrainingCorpus(
            [self._sequences[v] for v in self.video_ids if v in keep],
            [self._transcripts[v] for v in self.video_ids if v in keep],
            self.label_space,
        )

    def mean_action_length(self) -> float:
        frames = sum(self._sequences[v].num_frames for v in self.video_ids)
        instances = sum(len(self._transcripts[v].labels) for v in self.video_ids)
        return frames / instances


@dataclass
class TrainConfig:
    iterations: int = 3
    frames_per_state: int = 10
    covariance: str = "full"
    variance_floor: float = 1e-4
    update: str = "soft"
    jobs: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.frames_per_state < 1:
            raise ValueError("frames_per_state must be >= 1")
        if self.covariance not in COV_MODES:
            raise ValueError(f"covariance must be one of {COV_MODES}")
        if self.update not in ("soft", "hard"):
            raise ValueError("update must be 'soft' or 'hard'")
        if not (self.variance_floor > 0):
            raise ValueError("variance floor must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


class ModelSet:
    """All per-label ActionModels plus the global class-state layout.

    Global class states enumerate labels in label-space order, local states
    within each label; this layout orders the model file, prior tables and
    external posterior columns.
    """

    def __init__(self, label_space: LabelSpace, models: dict, frames_per_state: int,
                 covariance: str = "full", variance_floor: float = 1e-4,
                 iterations_run: int = 0, skipped: list | None = None):
        for name in label_space:
            if name not in models:
                raise InvalidDataError(f"label {name!r} has no model")
        self.label_space = label_space
        self.models = {name: models[name] for name in label_space}
        self.frames_per_state = frames_per_state
        self.covariance = covariance
        self.variance_floor = variance_floor
        self.iterations_run = iterations_run
        self.skipped = list(skipped) if skipped else []
        offsets = {}
        labels, locals_ = [], []
        pos = 0
        for name in label_space:
            am = self.models[name]
            offsets[name] = pos
            labels.extend([name] * am.n_states)
            locals_.extend(range(am.n_states))
            pos += am.n_states
        self._offsets = offsets
        self.class_labels: tuple[str, ...] = tuple(labels)
        self.class_locals = np.asarray(locals_, dtype=np.int64)

    @property
    def n_class_states(self) -> int:
        return len(self.class_labels)

    def state_offset(self, label: str) -> int:
        return self._offsets[label]

    @property
    def is_fitted(self) -> bool:
        return all(m.is_fitted for m in self.models.values())

    def flat_state_models(self) -> list[GaussianModel]:
        out = []
        for name in self.label_space:
            out.extend(self.models[name].state_models)
        return out

    def score_frames(self, features: np.ndarray) -> np.ndarray:
        """Log density of every frame under every global class state, (T, S)."""
        return score_frames(self.flat_state_models(), features)

    def sequence_hmm(self, transcript: Transcript) -> SequenceHMM:
        seq, index = concat(transcript, self.models)
        seq.class_states = (
            np.asarray([self._offsets[l] for l in index.labels], dtype=np.int64)
            + index.locals
        )
        return seq

    def replace_gaussians(self, gaussians_by_label: dict) -> "ModelSet":
        models = {}
        for name in self.label_space:
            am = self.models[name]
            models[name] = ActionModel(
                name, am.n_states, am.self_logprob, am.forward_logprob,
                gaussians_by_label[name],
            )
        return ModelSet(
            self.label_space, models, self.frames_per_state, self.covariance,
            self.variance_floor, self.iterations_run, self.skipped,
        )


@dataclass
class TrainResult:
    """Final models plus per-iteration reporting artifacts.

    alignments[i], loglik[i] and mof[i] describe the models after i
    reestimation rounds (index 0 is the flat-start fit).
    """

    models: ModelSet
    alignments: list
    loglik: list
    mof: list | None = None


def gather_scores(class_scores: np.ndarray, seq: SequenceHMM) -> np.ndarray:
    """Expand a class-state score matrix to the sequence's global states."""
    if seq.class_states is None:
        raise InvalidDataError("sequence HMM lacks a class-state mapping")
    return class_scores[:, seq.class_states]


def _segment_bounds(total: int, parts: int) -> list[int]:
    return [(i * total) // parts for i in range(parts + 1)]


def _linear_states(num_frames: int, seq: SequenceHMM) -> np.ndarray:
    counts = [seq.index.locals[seq.index.instances == m].size
              for m in range(len(seq.transcript.labels))]
    total = int(sum(counts))
    if num_frames < total:
        raise InfeasibleAlignmentError(
            f"{seq.video_id}: {num_frames} frames cannot cover {total} states"
        )
    bounds = _segment_bounds(num_frames, len(counts))
    states = np.empty(num_frames, dtype=np.int64)
    base = 0
    for i, n in enumerate(counts):
        seg_len = bounds[i + 1] - bounds[i]
        if seg_len < n:
            raise InfeasibleAlignmentError(
                f"{seq.video_id}: segment {i} gets {seg_len} frames for {n} states"
            )
        sub = _segment_bounds(seg_len, n)
        for j in range(n):
            states[bounds[i] + sub[j]: bounds[i] + sub[j + 1]] = base + j
        base += n
    return states


def linear_init(video, transcript: Transcript, models: ModelSet) -> StateAlignment:
    """Flat-start alignment: equal video split over instances, then over states.

    Segment i of k ends at floor(i*T/k); within a segment, state j of n ends at
    floor(j*len/n). The log probability is NaN since no scores exist yet.
    """
    num_frames = video.num_frames if isinstance(video, FeatureSequence) else int(video)
    seq = models.sequence_hmm(transcript)
    states = _linear_states(num_frames, seq)
    return StateAlignment(seq.video_id, states, float("nan"), seq.index)


def naive_segmentation(num_frames: int, transcript: Transcript) -> Segmentation:
    """Uniform baseline: split the video into k equal segments, one per entry."""
    k = len(transcript.labels)
    if num_frames < k:
        raise InfeasibleAlignmentError(
            f"{transcript.video_id}: {num_frames} frames for {k} transcript entries"
        )
    bounds = _segment_bounds(num_frames, k)
    segs = [
        Segment(bounds[i], bounds[i + 1] - 1, transcript.labels[i])
        for i in range(k)
    ]
    return Segmentation(transcript.video_id, segs)


def _one_hot(states: np.ndarray, n_states: int) -> np.ndarray:
    w = np.zeros((states.shape[0], n_states))
    w[np.arange(states.shape[0]), states] = 1.0
    return w


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _corpus_global_gaussian(corpus: TrainingCorpus, video_ids, covariance: str,
                            variance_floor: float) -> GaussianModel:
    stats = GaussianStats(corpus.dim, covariance)
    for vid in video_ids:
        x = corpus.features(vid).features
        stats.add(x, np.ones(x.shape[0]))
    return stats.finalize(variance_floor)


def fit_from_alignments(corpus: TrainingCorpus, alignments: dict, models: ModelSet,
                        *, at_init: bool = False, jobs: int = 1,
                        seqs: dict | None = None) -> ModelSet:
    """Refit every class state's Gaussian from per-frame weights.

    alignments maps video_id to either a StateAlignment (hard assignment) or a
    (T, sequence-states) weight matrix. Statistics pool per (label, local
    state) across videos and instances. States with zero mass keep their
    previous Gaussian, or fall back to corpus-global statistics at
    initialization (with a warning).
    """
    n_cls = models.n_class_states
    video_ids = [v for v in corpus.video_ids if v in alignments]

    def video_stats(vid):
        seq = seqs[vid] if seqs else models.sequence_hmm(corpus.transcript(vid))
        x = corpus.features(vid).features
        a = alignments[vid]
        w = _one_hot(a.states, seq.n_states) if isinstance(a, StateAlignment) else a
        if w.shape != (x.shape[0], seq.n_states):
            raise InvalidDataError(f"{vid}: weight matrix must be (T, states)")
        local = {}
        for j in range(seq.n_states):
            cs = int(seq.class_states[j])
            st = local.get(cs)
            if st is None:
                st = local[cs] = GaussianStats(x.shape[1], models.covariance)
            st.add(x, w[:, j])
        return local

    per_video = _pmap(video_stats, video_ids, jobs)
    stats = [GaussianStats(corpus.dim, models.covariance) for _ in range(n_cls)]
    for local in per_video:  # corpus order: deterministic merge
        for cs in sorted(local):
            stats[cs].merge(local[cs])

    fallback = None
    gaussians_by_label = {}
    for name in models.label_space:
        am = models.models[name]
        base = models.state_offset(name)
        fitted = []
        starved = 0
        for local_state in range(am.n_states):
            st = stats[base + local_state]
            if st.weight > 0.0:
                fitted.append(st.finalize(models.variance_floor))
            elif not at_init and am.is_fitted:
                fitted.append(am.state_models[local_state])
            else:
                if fallback is None:
                    fallback = _corpus_global_gaussian(
                        corpus, video_ids, models.covariance, models.variance_floor
                    )
                fitted.append(fallback)
                starved += 1
        if starved:
            warnings.warn(
                f"label {name!r}: {starved} state(s) had no aligned frames; "
                "using corpus-global statistics"
            )
        gaussians_by_label[name] = fitted
    return models.replace_gaussians(gaussians_by_label)


def train(corpus: TrainingCorpus, config: TrainConfig | None = None,
          groundtruth: dict | None = None) -> TrainResult:
    """Run the weakly supervised training loop.

    Flat-start: linear alignments fit the first models. Each of
    config.iterations rounds then recomputes scores, reweights frames by
    forward-backward (soft) or the Viterbi path (hard), and refits. Videos
    too short for their sequence HMM are skipped and reported; training fails
    only if nothing remains. groundtruth (video_id -> FrameLabeling) enables
    the per-iteration MoF history.
    """
    config = config or TrainConfig()
    n_states = states_for_class(corpus.mean_action_length(), config.frames_per_state)
    proto = ModelSet(
        corpus.label_space,
        {
            name: build_action_model(name, n_states, config.frames_per_state)
            for name in corpus.label_space
        },
        config.frames_per_state,
        config.covariance,
        config.variance_floor,
    )

    seqs = {}
    init_aligns = {}
    skipped = []
    for vid in corpus.video_ids:
        seq = proto.sequence_hmm(corpus.transcript(vid))
        try:
            states = _linear_states(corpus.features(vid).num_frames, seq)
        except InfeasibleAlignmentError as e:
            skipped.append((vid, str(e)))
            continue
        seqs[vid] = seq
        init_aligns[vid] = StateAlignment(vid, states, float("nan"), seq.index)
    usable_ids = [v for v in corpus.video_ids if v in seqs]
    if not usable_ids:
        raise EmptyCorpusError("every video is infeasible for its sequence HMM")
    usable = corpus.subset(usable_ids)

    proto.skipped = skipped
    models = fit_from_alignments(
        usable, init_aligns, proto, at_init=True, jobs=config.jobs, seqs=seqs
    )
    models.iterations_run = 0

    soft = config.update == "soft"
    alignments_history = []
    loglik_history = []
    mof_history = [] if groundtruth is not None else None

    def iteration_pass(vid):
        seq = seqs[vid]
        sc = gather_scores(models.score_frames(usable.features(vid).features), seq)
        align = viterbi_align(seq, sc)
        if soft:
            weights, ll = _forward_backward_ll(seq, sc)
        else:
            weights, ll = None, sequence_log_likelihood(seq, sc)
        return align, weights, ll

    for i in range(config.iterations + 1):
        results = _pmap(iteration_pass, usable_ids, config.jobs)
        aligns = {vid: r[0] for vid, r in zip(usable_ids, results)}
        alignments_history.append(aligns)
        loglik_history.append(sum(r[2] for r in results))
        if mof_history is not None:
            mof_history.append(_alignment_mof(aligns, groundtruth))
        if i == config.iterations:
            break
        if soft:
            refit_weights = {vid: r[1] for vid, r in zip(usable_ids, results)}
        else:
            refit_weights = aligns
        models = fit_from_alignments(
            usable, refit_weights, models, jobs=config.jobs, seqs=seqs
        )
        models.iterations_run = i + 1

    return TrainResult(models, alignments_history, loglik_history, mof_history)


def _alignment_mof(aligns: dict, groundtruth: dict) -> float:
    correct = 0
    total = 0
    for vid, a in aligns.items():
        gt = groundtruth.get(vid)
        if gt is None:
            continue
        hyp = a.labels
        if len(gt.labels) != len(hyp):
            raise InvalidDataError(
                f"{vid}: ground truth has {len(gt.labels)} frames, alignment {len(hyp)}"
            )
        correct += sum(g == h for g, h in zip(gt.labels, hyp))
        total += len(hyp)
    return correct / total if total else float("nan")


def _shrunk_sequence(models: ModelSet, transcript: Transcript, num_frames: int) -> SequenceHMM:
    """Sequence HMM with proportionally fewer states so num_frames suffices.

    Per instance, n' = max(1, floor(n * T / total)); leftover overflow is
    removed from the largest instances. Shrunk state j' reuses the Gaussian
    and class identity of original state floor(j' * n / n').
    """
    orig = [models.models[l].n_states for l in transcript.labels]
    total = sum(orig)
    k = len(orig)
    if num_frames < k:
        raise InfeasibleAlignmentError(
            f"{transcript.video_id}: {num_frames} frames for {k} instances"
        )
    counts = [max(1, (n * num_frames) // total) for n in orig]
    while sum(counts) > num_frames:
        i = counts.index(max(counts))
        if counts[i] == 1:
            raise InfeasibleAlignmentError(
                f"{transcript.video_id}: cannot shrink below one state per instance"
            )
        counts[i] -= 1

    labels, instances, locals_ = [], [], []
    self_lp, next_lp, cls = [], [], []
    for m, label in enumerate(transcript.labels):
        am = models.models[label]
        n_new = counts[m]
        picks = [(j * am.n_states) // n_new for j in range(n_new)]
        labels.extend([label] * n_new)
        instances.extend([m] * n_new)
        locals_.extend(range(n_new))
        self_lp.extend(am.self_logprob[p] for p in picks)
        next_lp.extend(am.forward_logprob[p] for p in picks)
        cls.extend(models.state_offset(label) + p for p in picks)
    index = StateIndex(labels, instances, locals_)
    return SequenceHMM(
        transcript, index,
        np.asarray(self_lp), np.asarray(next_lp),
        np.asarray(cls, dtype=np.int64),
    )


def align_corpus_states(models: ModelSet, corpus: TrainingCorpus, *, jobs: int = 1,
                        scores_for=None, shrink_infeasible: bool = False):
    """Viterbi-align every video; returns (video_id -> StateAlignment, skipped list).

    scores_for(video_id) may supply a precomputed class-state score matrix
    (external posteriors); by default Gaussian scores are computed.
    """
    def work(vid):
        transcript = corpus.transcript(vid)
        x = corpus.features(vid).features
        seq = models.sequence_hmm(transcript)
        if x.shape[0] < seq.n_states:
            if not shrink_infeasible:
                return vid, None, f"{x.shape[0]} frames cannot cover {seq.n_states} states"
            try:
                seq = _shrunk_sequence(models, transcript, x.shape[0])
            except InfeasibleAlignmentError as e:
                return vid, None, str(e)
        cls_scores = scores_for(vid) if scores_for else models.score_frames(x)
        try:
            return vid, viterbi_align(seq, gather_scores(cls_scores, seq)), None
        except NoValidPathError as e:
            return vid, None, str(e)

    results = _pmap(work, list(corpus.video_ids), jobs)
    aligns = {vid: a for vid, a, _ in results if a is not None}
    skipped = [(vid, reason) for vid, _, reason in results if reason is not None]
    return aligns, skipped


def align_corpus(models: ModelSet, corpus: TrainingCorpus, *, jobs: int = 1,
                 scores_for=None, shrink_infeasible: bool = False):
    """Transcript-constrained segmentation of a corpus.

    Returns (video_id -> Segmentation, skipped list of (video_id, reason)).
    """
    aligns, skipped = align_corpus_states(
        models, corpus, jobs=jobs, scores_for=scores_for,
        shrink_infeasible=shrink_infeasible,
    )
    segs = {vid: segmentation_from_alignment(a) for vid, a in aligns.items()}
    return segs, skipped


# ---------------------------------------------------------------------------
# model directory format


def write_model_dir(model_dir, models: ModelSet) -> None:
    """Write model.txt (Gaussians in global state order) and topology.txt."""
    os.makedirs(model_dir, exist_ok=True)
    if not models.is_fitted:
        raise InvalidDataError("cannot write an unfitted model set")
    flat = models.flat_state_models()
    dim = flat[0].dim
    lines = [
        f"dim {dim}",
        f"states {models.n_class_states}",
        f"covariance {models.covariance}",
        f"floor {fmt_float(models.variance_floor)}",
    ]
    for sid, g in enumerate(flat):
        lines.append(f"state {sid}")
        lines.append("mean " + " ".join(fmt_float(v) for v in g.mean))
        if models.covariance == "full":
            for row in g.cov:
                lines.append("cov " + " ".join(fmt_float(v) for v in row))
        else:
            lines.append("cov " + " ".join(fmt_float(v) for v in g.cov))
    atomic_write_text(os.path.join(model_dir, "model.txt"), "\n".join(lines) + "\n")

    topo = [
        f"{name} {models.models[name].n_states} {models.frames_per_state}"
        for name in models.label_space
    ]
    atomic_write_text(os.path.join(model_dir, "topology.txt"), "\n".join(topo) + "\n")


def _parse_header_line(line: str, key: str, path: str) -> str:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise InvalidDataError(f"{path}: expected header line '{key} ...'")
    return parts[1]


def read_model_dir(model_dir) -> ModelSet:
    """Load a ModelSet written by write_model_dir."""
    topo_path = os.path.join(model_dir, "topology.txt")
    model_path = os.path.join(model_dir, "model.txt")
    names, counts, fps_values = [], [], []
    with open(topo_path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidDataError(f"{topo_path}:{ln}: expected `label n_states fps`")
            names.append(parts[0])
            counts.append(int(parts[1]))
            fps_values.append(int(parts[2]))
    if not names:
        raise InvalidDataError(f"{topo_path}: empty topology")
    if len(set(fps_values)) != 1:
        raise InvalidDataError(f"{topo_path}: frames_per_state must be uniform")
    fps = fps_values[0]

    with open(model_path) as fh:
        raw = [l.rstrip("\n") for l in fh if l.rstrip("\n")]
    if len(raw) < 4:
        raise InvalidDataError(f"{model_path}: truncated header")
    dim = int(_parse_header_line(raw[0], "dim", model_path))
    n_states = int(_parse_header_line(raw[1], "states", model_path))
    covariance = _parse_header_line(raw[2], "covariance", model_path)
    floor = float(_parse_header_line(raw[3], "floor", model_path))
    if covariance not in COV_MODES:
        raise InvalidDataError(f"{model_path}: unknown covariance mode {covariance!r}")
    if n_states != sum(counts):
        raise InvalidDataError(
            f"{model_path}: {n_states} states but topology declares {sum(counts)}"
        )
    gaussians = []
    pos = 4
    for sid in range(n_states):
        if pos >= len(raw) or raw[pos].split() != ["state", str(sid)]:
            raise InvalidDataError(f"{model_path}: missing record for state {sid}")
        mean_parts = raw[pos + 1].split()
        if mean_parts[0] != "mean" or len(mean_parts) != dim + 1:
            raise InvalidDataError(f"{model_path}: bad mean for state {sid}")
        mean = np.asarray([float(v) for v in mean_parts[1:]])
        rows = []
        n_cov_lines = dim if covariance == "full" else 1
        for r in range(n_cov_lines):
            parts = raw[pos + 2 + r].split()
            if parts[0] != "cov" or len(parts) != dim + 1:
                raise InvalidDataError(f"{model_path}: bad covariance for state {sid}")
            rows.append([float(v) for v in parts[1:]])
        cov = np.asarray(rows) if covariance == "full" else np.asarray(rows[0])
        gaussians.append(GaussianModel(mean, cov, covariance))
        pos += 2 + n_cov_lines
    if pos != len(raw):
        raise InvalidDataError(f"{model_path}: trailing content after state records")

    models = {}
    base = 0
    for name, n in zip(names, counts):
        models[name] = build_action_model(name, n, fps, gaussians[base: base + n])
        base += n
    return ModelSet(LabelSpace(names), models, fps, covariance, floor)
