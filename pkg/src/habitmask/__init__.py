"""Two-stream habitual-action recognizer: skeleton attention, action
masks, dual-rate RGB appearance and channel fusion, with a synthetic
planted-signal benchmark and a training harness.
"""

from .datamodel import (
    BBox,
    ClipAnnotation,
    ClipTensor,
    Joint,
    LabelSpace,
    PersonFrame,
    Skeleton,
    assign_person_ids,
    crop_resize,
    parse_annotation,
    read_clip,
    write_annotation,
    write_clip,
)
from .action_mask import ActionMask, MaskConfig, apply_mask, build_mask, mask_clip, top_k_joints
from .estimators import TwoStreamActionClassifier
from .fusion import FusionConfig, score_fuse
from .harness import EvalReport, SplitSpec, TrainConfig, TrainedModel, evaluate, split, stats, train
from .synthgen import SynthConfig, gen_clip, gen_dataset

__all__ = [
    "BBox",
    "ClipAnnotation",
    "ClipTensor",
    "Joint",
    "LabelSpace",
    "PersonFrame",
    "Skeleton",
    "assign_person_ids",
    "crop_resize",
    "parse_annotation",
    "read_clip",
    "write_annotation",
    "write_clip",
    "ActionMask",
    "MaskConfig",
    "apply_mask",
    "build_mask",
    "mask_clip",
    "top_k_joints",
    "TwoStreamActionClassifier",
    "FusionConfig",
    "score_fuse",
    "EvalReport",
    "SplitSpec",
    "TrainConfig",
    "TrainedModel",
    "evaluate",
    "split",
    "stats",
    "train",
    "SynthConfig",
    "gen_clip",
    "gen_dataset",
]

__version__ = "0.1.0"
