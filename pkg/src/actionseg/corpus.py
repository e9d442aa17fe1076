"""Core data types and text file formats for sequences, transcripts and labelings.

All files are plain text. Floats serialize via repr() so a parse/serialize
round trip of a canonical file is byte identical.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDataError

__all__ = [
    "FeatureSequence",
    "LabelSpace",
    "Transcript",
    "FrameLabeling",
    "Segment",
    "Segmentation",
    "normalize_features",
    "segmentation_from_alignment",
    "labeling_from_segmentation",
    "segmentation_from_labeling",
    "read_feature_file",
    "write_feature_file",
    "read_transcript_file",
    "write_transcript_file",
    "read_labeling_file",
    "write_labeling_file",
    "read_label_space",
    "write_label_space",
    "read_segmentation_file",
    "write_segmentation_file",
    "read_activity_file",
    "write_activity_file",
    "atomic_write_text",
    "fmt_float",
]


def fmt_float(x: float) -> str:
    """Shortest exact decimal form of a float (round trips via float())."""
    return repr(float(x))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write text to path via a temp file and rename, so readers never see partial output."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=".txt")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_label_name(name: str) -> str:
    if not name or any(c.isspace() for c in name) or name.startswith("@"):
        raise InvalidDataError(f"bad label name {name!r}")
    return name


@dataclass
class FeatureSequence:
    """One video's frame features, shape (T, dim), finite float64."""

    video_id: str
    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise InvalidDataError(
                f"{self.video_id}: features must be 2-D with at least one frame, got shape {f.shape}"
            )
        if not np.all(np.isfinite(f)):
            raise InvalidDataError(f"{self.video_id}: non-finite feature values")
        self.features = f

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class LabelSpace:
    """Ordered set of action label names; order defines all global state layouts."""

    def __init__(self, names):
        names = [_check_label_name(str(n)) for n in names]
        if len(set(names)) != len(names):
            raise InvalidDataError("duplicate labels in label space")
        if not names:
            raise InvalidDataError("empty label space")
        self.names: tuple[str, ...] = tuple(names)
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other):
        return isinstance(other, LabelSpace) and self.names == other.names

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InvalidDataError(f"label {name!r} not in label space") from None

    def name(self, i: int) -> str:
        return self.names[i]


@dataclass
class Transcript:
    """Ordered action labels for one video, with an optional activity tag."""

    video_id: str
    labels: tuple[str, ...]
    activity: str | None = None

    def __post_init__(self):
        self.labels = tuple(str(l) for l in self.labels)
        if not self.labels:
            raise InvalidDataError(f"{self.video_id}: empty transcript")
        for l in self.labels:
            _check_label_name(l)


@dataclass
class FrameLabeling:
    """One label per frame."""

    video_id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        self.labels = tuple(str(l) for l in self.labels)
        if not self.labels:
            raise InvalidDataError(f"{self.video_id}: empty labeling")

    @property
    def num_frames(self) -> int:
        return len(self.labels)


@dataclass
class Segment:
    """Inclusive frame span [start, end] carrying one label."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise InvalidDataError(f"bad segment bounds [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class Segmentation:
    """Contiguous, gap-free cover of [0, T-1] by labeled segments.

    Adjacent segments with equal labels are legal: distinct action instances
    of the same class stay split.
    """

    video_id: str
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        segs = list(self.segments)
        if not segs:
            raise InvalidDataError(f"{self.video_id}: empty segmentation")
        if segs[0].start != 0:
            raise InvalidDataError(f"{self.video_id}: segmentation must start at frame 0")
        for a, b in zip(segs, segs[1:]):
            if b.start != a.end + 1:
                raise InvalidDataError(
                    f"{self.video_id}: gap or overlap between segments at frame {a.end}"
                )
        self.segments = segs

    @property
    def num_frames(self) -> int:
        return self.segments[-1].end + 1

    def transcript_labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.segments)


def normalize_features(x):
    """Scale every feature dimension to unit L2 norm over the sequence.

    A dimension with zero norm is left as is. Accepts a FeatureSequence or a
    plain (T, dim) array and returns the same kind. Idempotent.
    """
    if isinstance(x, FeatureSequence):
        return FeatureSequence(x.video_id, normalize_features(x.features))
    f = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.sum(f * f, axis=0))
    scale = np.where(norms > 0.0, norms, 1.0)
    return f / scale


def segmentation_from_alignment(alignment, state_index=None) -> Segmentation:
    """Collapse a per-frame state alignment into segments, one per action instance.

    Consecutive frames of the same instance merge into one segment, so two
    back-to-back instances of one class yield two segments. state_index
    defaults to the index the alignment was produced with.
    """
    if state_index is None:
        labels = alignment.labels
        instances = alignment.instances
    else:
        labels = tuple(state_index.labels[s] for s in alignment.states)
        instances = state_index.instances[alignment.states]
    if len(labels) != len(instances) or len(labels) == 0:
        raise InvalidDataError("alignment with mismatched or empty frame annotations")
    segs = []
    start = 0
    for t in range(1, len(labels)):
        if instances[t] != instances[t - 1]:
            segs.append(Segment(start, t - 1, labels[start]))
            start = t
    segs.append(Segment(start, len(labels) - 1, labels[start]))
    return Segmentation(alignment.video_id, segs)


def labeling_from_segmentation(seg: Segmentation) -> FrameLabeling:
    """Expand segments to one label per frame."""
    labels = []
    for s in seg.segments:
        labels.extend([s.label] * s.length)
    return FrameLabeling(seg.video_id, tuple(labels))


def segmentation_from_labeling(lab: FrameLabeling) -> Segmentation:
    """Merge maximal same-label runs of a frame labeling into segments."""
    labels = lab.labels
    segs = []
    start = 0
    for t in range(1, len(labels)):
        if labels[t] != labels[t - 1]:
            segs.append(Segment(start, t - 1, labels[start]))
            start = t
    segs.append(Segment(start, len(labels) - 1, labels[start]))
    return Segmentation(lab.video_id, segs)


# ---------------------------------------------------------------------------
# file formats


def _video_id_from_path(path) -> str:
    return os.path.splitext(os.path.basename(os.fspath(path)))[0]


def read_feature_file(path) -> FeatureSequence:
    """Read a feature file: header line "T dim", then T whitespace-separated rows."""
    path = os.fspath(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InvalidDataError(f"{path}: feature header must be 'T dim'")
        try:
            T, dim = int(header[0]), int(header[1])
        except ValueError:
            raise InvalidDataError(f"{path}: feature header must be two integers") from None
        if T < 1 or dim < 1:
            raise InvalidDataError(f"{path}: header declares empty sequence")
        try:
            data = np.loadtxt(fh, dtype=np.float64, ndmin=2, max_rows=T)
        except ValueError as e:
            raise InvalidDataError(f"{path}: {e}") from None
    if data.shape != (T, dim):
        raise InvalidDataError(
            f"{path}: header declares {(T, dim)} but data has shape {data.shape}"
        )
    if not np.all(np.isfinite(data)):
        raise InvalidDataError(f"{path}: non-finite feature values")
    return FeatureSequence(_video_id_from_path(path), data)


def write_feature_file(path, seq: FeatureSequence) -> None:
    lines = [f"{seq.num_frames} {seq.dim}"]
    for row in seq.features:
        lines.append(" ".join(fmt_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_transcript_file(path) -> list[Transcript]:
    """Read transcripts: one line per video, `video_id<TAB>lab lab ...[<TAB>@tag]`."""
    path = os.fspath(path)
    out = []
    seen = set()
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise InvalidDataError(f"{path}:{ln}: expected 2 or 3 tab-separated fields")
            vid = parts[0]
            labels = tuple(parts[1].split())
            activity = None
            if len(parts) == 3:
                if not parts[2].startswith("@") or len(parts[2]) < 2:
                    raise InvalidDataError(f"{path}:{ln}: activity tag must start with '@'")
                activity = parts[2][1:]
            if vid in seen:
                raise InvalidDataError(f"{path}:{ln}: duplicate video id {vid!r}")
            seen.add(vid)
            out.append(Transcript(vid, labels, activity))
    if not out:
        raise InvalidDataError(f"{path}: no transcripts")
    return out


def write_transcript_file(path, transcripts) -> None:
    lines = []
    for t in transcripts:
        line = f"{t.video_id}\t{' '.join(t.labels)}"
        if t.activity is not None:
            line += f"\t@{t.activity}"
        lines.append(line)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labeling_file(path) -> list[FrameLabeling]:
    """Read frame labelings: one line per video, `video_id<TAB>l1 l2 ... lT`."""
    path = os.fspath(path)
    out = []
    seen = set()
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InvalidDataError(f"{path}:{ln}: expected `video_id<TAB>labels`")
            vid = parts[0]
            if vid in seen:
                raise InvalidDataError(f"{path}:{ln}: duplicate video id {vid!r}")
            seen.add(vid)
            out.append(FrameLabeling(vid, tuple(parts[1].split())))
    if not out:
        raise InvalidDataError(f"{path}: no labelings")
    return out


def write_labeling_file(path, labelings) -> None:
    lines = [f"{l.video_id}\t{' '.join(l.labels)}" for l in labelings]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_label_space(path) -> LabelSpace:
    """Read the label space: one label per line; line order fixes the global order."""
    path = os.fspath(path)
    with open(path) as fh:
        names = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    try:
        return LabelSpace(names)
    except InvalidDataError as e:
        raise InvalidDataError(f"{path}: {e}") from None


def write_label_space(path, space: LabelSpace) -> None:
    atomic_write_text(path, "\n".join(space.names) + "\n")


def read_activity_file(path) -> dict:
    """Read per-video activity tags: `video_id<TAB>activity` lines."""
    path = os.fspath(path)
    tags = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1]:
                raise InvalidDataError(f"{path}:{ln}: expected `video_id<TAB>activity`")
            if parts[0] in tags:
                raise InvalidDataError(f"{path}:{ln}: duplicate video id {parts[0]!r}")
            tags[parts[0]] = parts[1]
    if not tags:
        raise InvalidDataError(f"{path}: no activity tags")
    return tags


def write_activity_file(path, tags: dict) -> None:
    lines = [f"{vid}\t{tag}" for vid, tag in tags.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_segmentation_file(path) -> Segmentation:
    """Read a segmentation: lines of `start end label` with inclusive bounds."""
    path = os.fspath(path)
    segs = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidDataError(f"{path}:{ln}: expected `start end label`")
            try:
                start, end = int(parts[0]), int(parts[1])
            except ValueError:
                raise InvalidDataError(f"{path}:{ln}: bounds must be integers") from None
            segs.append(Segment(start, end, parts[2]))
    if not segs:
        raise InvalidDataError(f"{path}: no segments")
    return Segmentation(_video_id_from_path(path), segs)


def write_segmentation_file(path, seg: Segmentation) -> None:
    lines = [f"{s.start} {s.end} {s.label}" for s in seg.segments]
    atomic_write_text(path, "\n".join(lines) + "\n")
