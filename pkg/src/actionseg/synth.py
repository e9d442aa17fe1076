"""Seeded synthetic corpora with planted HMMs and Gaussians.

Every quantity flows from one PCG64 generator seeded by SynthSpec.seed, so a
spec generates bit-identical corpora on every run. Class means sit on distinct
integer lattice points scaled by separation * sigma, which makes the minimum
inter-mean distance exactly `separation` standard deviations.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields

import numpy as np

from .corpus import (
    FeatureSequence,
    FrameLabeling,
    LabelSpace,
    Segment,
    Segmentation,
    Transcript,
    atomic_write_text,
    fmt_float,
    write_activity_file,
    write_feature_file,
    write_label_space,
    write_labeling_file,
    write_transcript_file,
)
from .errors import InvalidDataError
from .gaussians import GaussianModel
from .hmm import build_action_model
from .training import ModelSet, TrainingCorpus

__all__ = [
    "SynthSpec",
    "SynthResult",
    "synth_generate",
    "write_synth_corpus",
    "read_synth_spec",
    "write_synth_spec",
]


@dataclass
class SynthSpec:
    """Generator parameters; defaults match the reference acceptance corpus."""

    classes: int = 3
    states_min: int = 2
    states_max: int = 4
    dim: int = 8
    separation: float = 6.0
    sigma: float = 1.0
    videos: int = 20  # per split
    transcript_min: int = 2
    transcript_max: int = 5
    grammar_style: str = "activities"  # or "paths"
    templates: int = 5
    frames_per_state: int = 10
    seed: int = 20240829

    def __post_init__(self):
        if min(self.classes, self.states_min, self.dim, self.videos,
               self.transcript_min, self.templates, self.frames_per_state) < 1:
            raise ValueError("all counts must be >= 1")
        if self.states_max < self.states_min:
            raise ValueError("states_max must be >= states_min")
        if self.transcript_max < self.transcript_min:
            raise ValueError("transcript_max must be >= transcript_min")
        if not (self.separation > 0 and self.sigma > 0):
            raise ValueError("separation and sigma must be positive")
        if self.grammar_style not in ("paths", "activities"):
            raise ValueError("grammar_style must be 'paths' or 'activities'")


@dataclass
class SynthResult:
    spec: SynthSpec
    label_space: LabelSpace
    generating_models: ModelSet
    train_corpus: TrainingCorpus
    train_groundtruth: dict
    train_segmentations: dict
    train_activities: dict
    test_corpus: TrainingCorpus
    test_groundtruth: dict
    test_segmentations: dict
    test_activities: dict


def _lattice_means(rng, count: int, dim: int, scale: float) -> np.ndarray:
    side = max(2, math.ceil(count ** (1.0 / dim)) + 1)
    seen = set()
    means = np.empty((count, dim))
    k = 0
    while k < count:
        p = tuple(int(v) for v in rng.integers(0, side, size=dim))
        if p in seen:
            continue
        seen.add(p)
        means[k] = np.asarray(p, dtype=np.float64) * scale
        k += 1
    return means


def _sample_templates(rng, spec: SynthSpec, names):
    templates = []
    for p in range(spec.templates):
        k = int(rng.integers(spec.transcript_min, spec.transcript_max + 1))
        seq = [int(rng.integers(spec.classes))]
        for _ in range(k - 1):
            r = int(rng.integers(spec.classes - 1)) if spec.classes > 1 else 0
            nxt = r if (spec.classes > 1 and r < seq[-1]) else (r + 1 if spec.classes > 1 else 0)
            seq.append(nxt)
        labels = tuple(names[i] for i in seq)
        tag = f"activity{p:02d}" if spec.grammar_style == "activities" else None
        templates.append((labels, tag))
    return templates


def _sample_video(rng, spec: SynthSpec, vid: str, template, models: ModelSet):
    labels, tag = template
    chunks = []
    frame_labels = []
    segs = []
    start = 0
    for label in labels:
        am = models.models[label]
        inst_len = 0
        for g in am.state_models:
            dwell = int(rng.geometric(1.0 / spec.frames_per_state))
            chunks.append(g.mean + spec.sigma * rng.standard_normal((dwell, spec.dim)))
            inst_len += dwell
        frame_labels.extend([label] * inst_len)
        segs.append(Segment(start, start + inst_len - 1, label))
        start += inst_len
    feats = FeatureSequence(vid, np.vstack(chunks))
    return (
        feats,
        Transcript(vid, labels, tag),
        FrameLabeling(vid, tuple(frame_labels)),
        Segmentation(vid, segs),
    )


def synth_generate(spec: SynthSpec | None = None) -> SynthResult:
    """Plant per-class HMMs and sample train/test splits from them."""
    spec = spec or SynthSpec()
    rng = np.random.default_rng(spec.seed)
    names = [f"act{i:02d}" for i in range(spec.classes)]
    label_space = LabelSpace(names)

    n_states = rng.integers(spec.states_min, spec.states_max + 1, size=spec.classes)
    total_states = int(n_states.sum())
    means = _lattice_means(rng, total_states, spec.dim, spec.separation * spec.sigma)
    var = np.full(spec.dim, spec.sigma * spec.sigma)

    models = {}
    base = 0
    for name, n in zip(names, n_states):
        gaussians = [GaussianModel(means[base + j], var.copy(), "diag") for j in range(int(n))]
        models[name] = build_action_model(name, int(n), spec.frames_per_state, gaussians)
        base += int(n)
    model_set = ModelSet(label_space, models, spec.frames_per_state, covariance="diag")

    templates = _sample_templates(rng, spec, names)

    splits = {}
    for split in ("train", "test"):
        seqs, transcripts, gts, segs, tags = [], [], {}, {}, {}
        for v in range(spec.videos):
            vid = f"{split}_{v:03d}"
            template = templates[int(rng.integers(len(templates)))]
            feats, tr, gt, seg = _sample_video(rng, spec, vid, template, model_set)
            seqs.append(feats)
            transcripts.append(tr)
            gts[vid] = gt
            segs[vid] = seg
            if tr.activity is not None:
                tags[vid] = tr.activity
        splits[split] = (
            TrainingCorpus(seqs, transcripts, label_space), gts, segs, tags,
        )

    return SynthResult(
        spec, label_space, model_set,
        splits["train"][0], splits["train"][1], splits["train"][2], splits["train"][3],
        splits["test"][0], splits["test"][1], splits["test"][2], splits["test"][3],
    )


def write_synth_corpus(out_dir, result: SynthResult) -> None:
    """Lay the generated corpus out on disk in the CLI's expected structure."""
    os.makedirs(out_dir, exist_ok=True)
    write_label_space(os.path.join(out_dir, "labels.txt"), result.label_space)
    for split, corpus, gts, tags in (
        ("train", result.train_corpus, result.train_groundtruth, result.train_activities),
        ("test", result.test_corpus, result.test_groundtruth, result.test_activities),
    ):
        split_dir = os.path.join(out_dir, split)
        feat_dir = os.path.join(split_dir, "features")
        os.makedirs(feat_dir, exist_ok=True)
        for vid in corpus.video_ids:
            write_feature_file(os.path.join(feat_dir, f"{vid}.txt"), corpus.features(vid))
        write_transcript_file(
            os.path.join(split_dir, "transcripts.txt"),
            [corpus.transcript(v) for v in corpus.video_ids],
        )
        write_labeling_file(
            os.path.join(split_dir, "groundtruth.txt"),
            [gts[v] for v in corpus.video_ids],
        )
        if tags:
            write_activity_file(os.path.join(split_dir, "activities.txt"), tags)


_SPEC_TYPES = {f.name: f.type for f in fields(SynthSpec)}


def read_synth_spec(path) -> SynthSpec:
    """Parse `key = value` lines; unknown keys are an error, missing keys default."""
    path = os.fspath(path)
    kwargs = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidDataError(f"{path}:{ln}: expected `key = value`")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _SPEC_TYPES:
                raise InvalidDataError(f"{path}:{ln}: unknown key {key!r}")
            kind = _SPEC_TYPES[key]
            try:
                if kind == "int":
                    kwargs[key] = int(value)
                elif kind == "float":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise InvalidDataError(f"{path}:{ln}: bad value for {key}") from None
    try:
        return SynthSpec(**kwargs)
    except ValueError as e:
        raise InvalidDataError(f"{path}: {e}") from None


def write_synth_spec(path, spec: SynthSpec) -> None:
    lines = []
    for f in fields(SynthSpec):
        v = getattr(spec, f.name)
        lines.append(f"{f.name} = {fmt_float(v) if isinstance(v, float) else v}")
    atomic_write_text(path, "\n".join(lines) + "\n")
