"""Command line pipeline: synth, train, align, segment, eval.

Exit codes: 0 success, 2 for usage or data errors (one-line diagnostic on
stderr). All outputs are written atomically per file, so reruns and parallel
workers never leave partial files behind.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import corpus as corpus_io
from .corpus import (
    LabelSpace,
    Transcript,
    atomic_write_text,
    fmt_float,
    labeling_from_segmentation,
    normalize_features,
    read_activity_file,
    read_feature_file,
    read_label_space,
    read_labeling_file,
    read_segmentation_file,
    read_transcript_file,
    write_segmentation_file,
    write_transcript_file,
)
from .errors import ActionsegError, NoValidPathError
from .gaussians import (
    combine_scores,
    estimate_priors,
    posterior_to_loglikelihood,
    read_posterior_file,
    read_priors,
    write_priors,
)
from .grammar import (
    build_bigram,
    build_path_grammar,
    decode,
    read_bigram,
    read_grammar,
    write_bigram,
    write_grammar,
)
from .hmm import write_alignment_dump
from .metrics import evaluate
from .synth import SynthSpec, read_synth_spec, synth_generate, write_synth_corpus
from .training import (
    ModelSet,
    TrainConfig,
    TrainingCorpus,
    _pmap,
    align_corpus_states,
    read_model_dir,
    train,
    write_model_dir,
)


def _load_corpus(features_dir: str, transcripts_path: str, label_space: LabelSpace,
                 l2norm: bool) -> TrainingCorpus:
    transcripts = read_transcript_file(transcripts_path)
    sequences = []
    for t in transcripts:
        seq = read_feature_file(os.path.join(features_dir, f"{t.video_id}.txt"))
        if l2norm:
            seq = normalize_features(seq)
        sequences.append(seq)
    return TrainingCorpus(sequences, transcripts, label_space)


def _scores_provider(args, models: ModelSet, features_by_vid):
    """Returns a per-video class-state score function honoring posterior flags."""
    if not args.ext_posteriors:
        if args.combine:
            raise ValueError("--combine requires --ext-posteriors")
        return None
    if not args.priors:
        raise ValueError("--ext-posteriors requires --priors")
    priors = read_priors(args.priors, models.n_class_states)
    mode = args.combine or "ext"

    def scores_for(vid):
        post = read_posterior_file(
            os.path.join(args.ext_posteriors, f"{vid}.txt"), models.n_class_states
        )
        ext = posterior_to_loglikelihood(post, priors)
        if mode == "ext":
            return ext
        gauss = models.score_frames(features_by_vid(vid))
        return combine_scores(gauss, ext)

    return scores_for


def _cmd_train(args) -> int:
    label_space = read_label_space(args.labels)
    corpus = _load_corpus(args.features, args.transcripts, label_space, args.l2norm)
    config = TrainConfig(
        iterations=args.iters,
        frames_per_state=args.fps_state,
        covariance=args.cov,
        variance_floor=args.floor,
        update=args.update,
        jobs=args.jobs,
    )
    groundtruth = None
    if args.gt:
        groundtruth = {l.video_id: l for l in read_labeling_file(args.gt)}

    result = train(corpus, config, groundtruth)
    models = result.models
    os.makedirs(args.out, exist_ok=True)
    write_model_dir(args.out, models)

    # priors from the final alignments, over the global class-state layout
    final = result.alignments[-1]
    id_arrays = []
    for vid in corpus.video_ids:
        if vid in final:
            seq = models.sequence_hmm(corpus.transcript(vid))
            id_arrays.append(seq.class_states[final[vid].states])
    write_priors(
        os.path.join(args.out, "priors.txt"),
        estimate_priors(id_arrays, models.n_class_states),
    )

    transcripts = [corpus.transcript(v) for v in corpus.video_ids]
    write_grammar(os.path.join(args.out, "grammar.txt"), build_path_grammar(transcripts))
    write_bigram(
        os.path.join(args.out, "bigram.txt"),
        build_bigram(transcripts, args.bigram_smoothing, label_space),
    )

    for i, aligns in enumerate(result.alignments):
        it_dir = os.path.join(args.out, "alignments", f"iter{i}")
        os.makedirs(it_dir, exist_ok=True)
        for vid, a in aligns.items():
            write_alignment_dump(os.path.join(it_dir, f"{vid}.txt"), a)

    log_lines = [f"skipped {vid} {reason}" for vid, reason in models.skipped]
    for i, ll in enumerate(result.loglik):
        line = f"iteration {i} loglik {fmt_float(ll)}"
        if result.mof is not None:
            line += f" mof {fmt_float(result.mof[i])}"
        log_lines.append(line)
    atomic_write_text(os.path.join(args.out, "train.log"), "\n".join(log_lines) + "\n")

    for vid, reason in models.skipped:
        print(f"skipped {vid}: {reason}", file=sys.stderr)
    print(
        f"trained {len(label_space)} classes, {models.n_class_states} states, "
        f"{config.iterations} iterations -> {args.out}"
    )
    return 0


def _cmd_align(args) -> int:
    models = read_model_dir(args.models)
    corpus = _load_corpus(args.features, args.transcripts, models.label_space, args.l2norm)
    scores_for = _scores_provider(args, models, lambda vid: corpus.features(vid).features)
    aligns, skipped = align_corpus_states(
        models, corpus, jobs=args.jobs, scores_for=scores_for,
        shrink_infeasible=args.shrink,
    )
    os.makedirs(args.out, exist_ok=True)
    for vid in corpus.video_ids:
        if vid in aligns:
            seg = corpus_io.segmentation_from_alignment(aligns[vid])
            write_segmentation_file(os.path.join(args.out, f"{vid}.txt"), seg)
    for vid, reason in skipped:
        print(f"skipped {vid}: {reason}", file=sys.stderr)
    if not aligns:
        print("error: no video could be aligned", file=sys.stderr)
        return 2
    print(f"aligned {len(aligns)} videos -> {args.out}")
    return 0


def _cmd_segment(args) -> int:
    models = read_model_dir(args.models)
    kind, _, gpath = args.grammar.partition(":")
    if kind == "path":
        grammar = read_grammar(gpath)
    elif kind == "bigram":
        grammar = read_bigram(gpath)
    else:
        raise ValueError("--grammar must look like path:FILE or bigram:FILE")

    names = sorted(n for n in os.listdir(args.features) if n.endswith(".txt"))
    if not names:
        raise ValueError(f"no feature files in {args.features}")
    videos = []
    for n in names:
        seq = read_feature_file(os.path.join(args.features, n))
        if args.l2norm:
            seq = normalize_features(seq)
        videos.append(seq)
    scores_for = _scores_provider(
        args, models, lambda vid: next(v.features for v in videos if v.video_id == vid)
    )

    def work(video):
        try:
            sc = scores_for(video.video_id) if scores_for else None
            res = decode(models, grammar, video, class_scores=sc,
                         use_path_prior=args.use_path_prior)
            return video.video_id, res, None
        except NoValidPathError as e:
            return video.video_id, None, str(e)

    results = _pmap(work, videos, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    recognized = []
    n_ok = 0
    for vid, res, err in results:
        if res is None:
            print(f"skipped {vid}: {err}", file=sys.stderr)
            continue
        write_segmentation_file(os.path.join(args.out, f"{vid}.txt"), res.segmentation)
        recognized.append(
            Transcript(vid, res.transcript.labels, res.activity)
        )
        n_ok += 1
    if recognized:
        write_transcript_file(os.path.join(args.out, "recognized.txt"), recognized)
    if n_ok == 0:
        print("error: no video could be segmented", file=sys.stderr)
        return 2
    print(f"segmented {n_ok} videos -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    gt = {l.video_id: l for l in read_labeling_file(args.gt)}
    hyp = {}
    for vid in gt:
        p = os.path.join(args.hyp, f"{vid}.txt")
        if os.path.exists(p):
            hyp[vid] = labeling_from_segmentation(read_segmentation_file(p))
    gt_tags = hyp_tags = None
    if args.activities:
        gt_tags = read_activity_file(args.activities)
        hyp_tags = {}
        rec_path = os.path.join(args.hyp, "recognized.txt")
        if os.path.exists(rec_path):
            for t in read_transcript_file(rec_path):
                if t.activity is not None:
                    hyp_tags[t.video_id] = t.activity
    report = evaluate(gt, hyp, gt_tags, hyp_tags)

    if args.kv:
        lines = [
            f"mof {report.mof:.4f}",
            f"moc {report.moc:.4f}",
            f"jacc_iou {report.jacc_iou:.4f}",
            f"jacc_iod {report.jacc_iod:.4f}",
        ]
        if report.activity_accuracy is not None:
            lines.append(f"activity {report.activity_accuracy:.4f}")
        lines.append(f"videos_evaluated {report.videos_evaluated}")
        lines.append(f"videos_skipped {report.videos_skipped}")
        print("\n".join(lines))
    else:
        line = (
            f"MoF {report.mof:.4f} MoC {report.moc:.4f} "
            f"Jacc(IoU) {report.jacc_iou:.4f} Jacc(IoD) {report.jacc_iod:.4f}"
        )
        if report.activity_accuracy is not None:
            line += f" Activity {report.activity_accuracy:.4f}"
        print(line)
    if args.per_class:
        for name, row in report.per_class.items():
            cells = [f"class {name}"]
            for key in ("acc", "iou", "iod"):
                v = row[key]
                cells.append(f"{key} {v:.4f}" if v is not None else f"{key} -")
            print(" ".join(cells))
    return 0


def _cmd_synth(args) -> int:
    spec = read_synth_spec(args.spec) if args.spec else SynthSpec()
    result = synth_generate(spec)
    write_synth_corpus(args.out, result)
    print(
        f"synthesized {spec.classes} classes, {spec.videos} train + "
        f"{spec.videos} test videos -> {args.out}"
    )
    return 0


def _add_posterior_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ext-posteriors", metavar="DIR",
                   help="per-video posterior matrices from an external classifier")
    p.add_argument("--priors", metavar="FILE",
                   help="state prior table matching the model layout")
    p.add_argument("--combine", choices=("ext", "mean"),
                   help="use external scores alone or average with Gaussian scores")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actionseg",
        description="Weakly supervised temporal action segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn action HMMs from transcripts")
    p.add_argument("--features", required=True, metavar="DIR")
    p.add_argument("--transcripts", required=True, metavar="FILE")
    p.add_argument("--labels", required=True, metavar="FILE")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--fps-state", type=int, default=10,
                   help="average frames per HMM state")
    p.add_argument("--cov", choices=("full", "diag"), default="full")
    p.add_argument("--update", choices=("soft", "hard"), default="soft")
    p.add_argument("--floor", type=float, default=1e-4,
                   help="variance floor for fitted Gaussians")
    p.add_argument("--gt", metavar="FILE",
                   help="ground-truth labelings for the training log's MoF column")
    p.add_argument("--bigram-smoothing", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--l2norm", action="store_true",
                   help="L2-normalize each feature dimension per video at load")
    p.add_argument("--out", required=True, metavar="MODELDIR")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("align", help="align given transcripts to videos")
    p.add_argument("--models", required=True, metavar="MODELDIR")
    p.add_argument("--features", required=True, metavar="DIR")
    p.add_argument("--transcripts", required=True, metavar="FILE")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--l2norm", action="store_true")
    p.add_argument("--shrink", action="store_true",
                   help="shrink state counts proportionally for too-short videos")
    _add_posterior_flags(p)
    p.add_argument("--out", required=True, metavar="SEGDIR")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("segment", help="joint segmentation and classification")
    p.add_argument("--models", required=True, metavar="MODELDIR")
    p.add_argument("--features", required=True, metavar="DIR")
    p.add_argument("--grammar", required=True, metavar="KIND:FILE",
                   help="path:FILE or bigram:FILE")
    p.add_argument("--use-path-prior", action="store_true",
                   help="score paths with log relative frequency added")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--l2norm", action="store_true")
    _add_posterior_flags(p)
    p.add_argument("--out", required=True, metavar="SEGDIR")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("eval", help="score hypothesized segmentations")
    p.add_argument("--gt", required=True, metavar="FILE")
    p.add_argument("--hyp", required=True, metavar="SEGDIR")
    p.add_argument("--activities", metavar="FILE",
                   help="ground-truth activity tags enable the Activity metric")
    p.add_argument("--kv", action="store_true", help="machine-readable key/value lines")
    p.add_argument("--per-class", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--spec", metavar="FILE", help="key = value overrides; defaults otherwise")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ActionsegError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
