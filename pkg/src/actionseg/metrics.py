"""Frame-level segmentation metrics: MoF, MoC, Jaccard IoU/IoD, activity accuracy.

All metrics pool frames across videos first, then form per-class ratios.
Background is an ordinary class. Class exclusion rules: MoC averages over
classes present in ground truth, IoU over classes present in either side,
IoD over classes present in the hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidDataError

__all__ = [
    "EvalReport",
    "mof",
    "moc",
    "jaccard_iou",
    "jaccard_iod",
    "activity_accuracy",
    "evaluate",
]


def _as_labeling_dict(labelings) -> dict:
    if isinstance(labelings, dict):
        return labelings
    return {l.video_id: l for l in labelings}


def _pooled_counts(gt, hyp):
    """Per-class pooled (gt frames, hyp frames, intersection frames)."""
    gt = _as_labeling_dict(gt)
    hyp = _as_labeling_dict(hyp)
    if set(gt) != set(hyp):
        raise InvalidDataError("ground truth and hypothesis cover different videos")
    if not gt:
        raise ValueError("no videos to evaluate")
    counts: dict[str, list[int]] = {}
    for vid in gt:
        g = gt[vid].labels
        h = hyp[vid].labels
        if len(g) != len(h):
            raise InvalidDataError(
                f"{vid}: ground truth has {len(g)} frames, hypothesis {len(h)}"
            )
        for a, b in zip(g, h):
            ca = counts.setdefault(a, [0, 0, 0])
            ca[0] += 1
            cb = counts.setdefault(b, [0, 0, 0])
            cb[1] += 1
            if a == b:
                ca[2] += 1
    return counts


def mof(gt, hyp) -> float:
    """Correct frames over total frames, pooled over the whole corpus."""
    counts = _pooled_counts(gt, hyp)
    total = sum(c[0] for c in counts.values())
    correct = sum(c[2] for c in counts.values())
    return correct / total


def moc(gt, hyp) -> float:
    """Mean of per-class frame accuracy over classes present in ground truth."""
    counts = _pooled_counts(gt, hyp)
    accs = [c[2] / c[0] for _, c in sorted(counts.items()) if c[0] > 0]
    return sum(accs) / len(accs)


def jaccard_iou(gt, hyp) -> float:
    """Mean per-class |G∩D| / |G∪D| over classes present in gt or hyp."""
    counts = _pooled_counts(gt, hyp)
    vals = [
        c[2] / (c[0] + c[1] - c[2])
        for _, c in sorted(counts.items())
        if c[0] + c[1] > 0
    ]
    return sum(vals) / len(vals)


def jaccard_iod(gt, hyp) -> float:
    """Mean per-class |G∩D| / |D| over classes present in the hypothesis."""
    counts = _pooled_counts(gt, hyp)
    vals = [c[2] / c[1] for _, c in sorted(counts.items()) if c[1] > 0]
    return sum(vals) / len(vals)


def activity_accuracy(gt_tags: dict, hyp_tags: dict) -> float:
    """Fraction of videos whose hypothesized activity tag matches; missing is wrong."""
    if not gt_tags:
        raise ValueError("no videos to evaluate")
    correct = sum(
        1 for vid, tag in gt_tags.items() if hyp_tags.get(vid) == tag
    )
    return correct / len(gt_tags)


@dataclass
class EvalReport:
    mof: float
    moc: float
    jacc_iou: float
    jacc_iod: float
    per_class: dict
    activity_accuracy: float | None = None
    videos_evaluated: int = 0
    videos_skipped: int = 0


def evaluate(gt, hyp, gt_tags: dict | None = None,
             hyp_tags: dict | None = None) -> EvalReport:
    """Full report over the videos present in both gt and hyp.

    Ground-truth videos missing from hyp count as skipped and are excluded
    from the frame pools.
    """
    gt = _as_labeling_dict(gt)
    hyp = _as_labeling_dict(hyp)
    shared = [v for v in gt if v in hyp]
    skipped = len(gt) - len(shared)
    if not shared:
        raise InvalidDataError("no overlapping videos between ground truth and hypothesis")
    gt_used = {v: gt[v] for v in shared}
    hyp_used = {v: hyp[v] for v in shared}
    counts = _pooled_counts(gt_used, hyp_used)
    per_class = {
        name: {
            "gt_frames": c[0],
            "hyp_frames": c[1],
            "correct": c[2],
            "acc": (c[2] / c[0]) if c[0] > 0 else None,
            "iou": (c[2] / (c[0] + c[1] - c[2])) if c[0] + c[1] > 0 else None,
            "iod": (c[2] / c[1]) if c[1] > 0 else None,
        }
        for name, c in sorted(counts.items())
    }
    aa = None
    if gt_tags is not None:
        aa = activity_accuracy(gt_tags, hyp_tags or {})
    return EvalReport(
        mof=mof(gt_used, hyp_used),
        moc=moc(gt_used, hyp_used),
        jacc_iou=jaccard_iou(gt_used, hyp_used),
        jacc_iod=jaccard_iod(gt_used, hyp_used),
        per_class=per_class,
        activity_accuracy=aa,
        videos_evaluated=len(shared),
        videos_skipped=skipped,
    )
