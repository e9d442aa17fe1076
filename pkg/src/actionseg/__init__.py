"""Weakly supervised temporal action segmentation.

Learns one left-to-right HMM per action class from videos paired only with
ordered action transcripts, aligns transcripts to frames, and jointly
segments and classifies unseen videos under a grammar mined from training
transcripts.
"""

from .corpus import (
    FeatureSequence,
    FrameLabeling,
    LabelSpace,
    Segment,
    Segmentation,
    Transcript,
    labeling_from_segmentation,
    normalize_features,
    read_feature_file,
    read_label_space,
    read_labeling_file,
    read_segmentation_file,
    read_transcript_file,
    segmentation_from_alignment,
    segmentation_from_labeling,
    write_feature_file,
    write_label_space,
    write_labeling_file,
    write_segmentation_file,
    write_transcript_file,
)
from .errors import (
    ActionsegError,
    DegenerateStatisticsError,
    EmptyCorpusError,
    InconsistentPriorError,
    InfeasibleAlignmentError,
    InvalidDataError,
    MissingModelError,
    NoValidPathError,
)
from .gaussians import (
    GaussianModel,
    GaussianStats,
    combine_scores,
    estimate_priors,
    fit_weighted,
    log_density,
    posterior_to_loglikelihood,
    read_posterior_file,
    read_priors,
    score_frames,
    write_posterior_file,
    write_priors,
)
from .grammar import (
    BigramModel,
    DecodeResult,
    GrammarPath,
    PathGrammar,
    build_bigram,
    build_path_grammar,
    decode,
    read_bigram,
    read_grammar,
    write_bigram,
    write_grammar,
)
from .hmm import (
    ActionModel,
    SequenceHMM,
    StateAlignment,
    StateIndex,
    build_action_model,
    concat,
    forward_backward,
    sequence_log_likelihood,
    states_for_class,
    viterbi_align,
)
from .kernels import active_backend
from .metrics import (
    EvalReport,
    activity_accuracy,
    evaluate,
    jaccard_iod,
    jaccard_iou,
    moc,
    mof,
)
from .synth import SynthSpec, read_synth_spec, synth_generate, write_synth_corpus
from .training import (
    ModelSet,
    TrainConfig,
    TrainResult,
    TrainingCorpus,
    align_corpus,
    fit_from_alignments,
    gather_scores,
    linear_init,
    naive_segmentation,
    read_model_dir,
    train,
    write_model_dir,
)

__version__ = "0.1.0"

__all__ = [
    "ActionModel",
    "ActionsegError",
    "BigramModel",
    "DecodeResult",
    "DegenerateStatisticsError",
    "EmptyCorpusError",
    "EvalReport",
    "FeatureSequence",
    "FrameLabeling",
    "GaussianModel",
    "GaussianStats",
    "GrammarPath",
    "InconsistentPriorError",
    "InfeasibleAlignmentError",
    "InvalidDataError",
    "LabelSpace",
    "MissingModelError",
    "ModelSet",
    "NoValidPathError",
    "PathGrammar",
    "Segment",
    "Segmentation",
    "SequenceHMM",
    "StateAlignment",
    "StateIndex",
    "SynthSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingCorpus",
    "Transcript",
    "active_backend",
    "activity_accuracy",
    "align_corpus",
    "build_action_model",
    "build_bigram",
    "build_path_grammar",
    "combine_scores",
    "concat",
    "decode",
    "estimate_priors",
    "evaluate",
    "fit_from_alignments",
    "fit_weighted",
    "forward_backward",
    "gather_scores",
    "jaccard_iod",
    "jaccard_iou",
    "labeling_from_segmentation",
    "linear_init",
    "log_density",
    "moc",
    "mof",
    "naive_segmentation",
    "normalize_features",
    "posterior_to_loglikelihood",
    "read_bigram",
    "read_feature_file",
    "read_grammar",
    "read_label_space",
    "read_labeling_file",
    "read_model_dir",
    "read_posterior_file",
    "read_priors",
    "read_segmentation_file",
    "read_synth_spec",
    "read_transcript_file",
    "score_frames",
    "segmentation_from_alignment",
    "segmentation_from_labeling",
    "sequence_log_likelihood",
    "states_for_class",
    "synth_generate",
    "train",
    "viterbi_align",
    "write_bigram",
    "write_feature_file",
    "write_grammar",
    "write_label_space",
    "write_labeling_file",
    "write_model_dir",
    "write_posterior_file",
    "write_priors",
    "write_segmentation_file",
    "write_synth_corpus",
    "write_transcript_file",
]
