"""Domain types and on-disk formats for annotated person clips.

Annotations are JSON Lines (one frame per line); clip pixel data lives in a
small binary ".hclip" container. All pixel values are normalized to [0, 1]
at ingest; annotation coordinates stay in source-pixel space.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInput,
    FormatError,
    InvalidGeometry,
    InvariantError,
    ParseError,
    SchemaError,
)

NUM_JOINTS = 15

# Canonical joint order; adjacency and mask placement depend on it.
JOINT_NAMES = (
    "nose",
    "head_bottom",
    "head_top",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

DEFAULT_CATEGORIES = (
    "rub hands",
    "cross arms",
    "cross legs",
    "touch nose",
    "touch ear",
    "scratch head",
    "play with hair",
    "bite nails",
    "tap fingers",
    "shake leg",
    "crack knuckles",
    "rub eyes",
    "touch chin",
    "cover mouth",
    "bite lip",
    "rub neck",
    "adjust glasses",
    "tilt head",
    "rest chin on hand",
    "clasp hands",
    "tap foot",
    "scratch face",
    "touch forehead",
    "hands in pockets",
    "lick lips",
    "rub chin",
    "adjust clothes",
    "scratch arm",
    "stretch neck",
    "wipe forehead",
)

# Emotion attributes are seeded only for the categories with an attested
# association; the rest stay untagged.
DEFAULT_EMOTION_ATTRS = {
    "rub hands": ("anxiety/irritability",),
    "scratch head": ("anxiety/irritability",),
    "touch nose": ("anxiety/irritability",),
    "play with hair": ("relaxed",),
}


@dataclass(frozen=True)
class Joint:
    """One 2D keypoint with detector confidence."""

    x: float
    y: float
    conf: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvariantError(f"non-finite joint coordinate ({self.x}, {self.y})")
        if not (math.isfinite(self.conf) and 0.0 <= self.conf <= 1.0):
            raise InvariantError(f"confidence {self.conf} outside [0, 1]")


@dataclass(frozen=True)
class Skeleton:
    """Fixed 15-joint pose in the canonical joint order."""

    joints: tuple[Joint, ...]

    def __post_init__(self):
        if len(self.joints) != NUM_JOINTS:
            raise InvariantError(f"skeleton has {len(self.joints)} joints, expected {NUM_JOINTS}")

    def as_array(self) -> np.ndarray:
        """(15, 3) array of x, y, conf."""
        return np.array([[j.x, j.y, j.conf] for j in self.joints], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "Skeleton":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (NUM_JOINTS, 3):
            raise InvariantError(f"expected shape (15, 3), got {arr.shape}")
        return cls(tuple(Joint(float(x), float(y), float(c)) for x, y, c in arr))


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidGeometry(f"non-finite bbox {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidGeometry(f"degenerate bbox {vals}")

    @property
    def center_x(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def center_y(self) -> float:
        return 0.5 * (self.y_min + self.y_max)


@dataclass(frozen=True)
class PersonFrame:
    """One person in one frame: id, box, pose and the action label name.

    ``label`` is a category name resolved against a LabelSpace at load
    time, or "none" when the person performs no target action.
    """

    person_id: str
    bbox: BBox
    skeleton: Skeleton
    label: str = "none"


@dataclass(frozen=True)
class ClipAnnotation:
    """Per-frame, per-person annotation for one video clip."""

    clip_id: str
    fps: float
    frames: tuple[tuple[PersonFrame, ...], ...]

    def __post_init__(self):
        if not self.frames:
            raise InvariantError("annotation has no frames")
        for idx, persons in enumerate(self.frames):
            ids = [p.person_id for p in persons]
            expected = [f"P{k}" for k in range(1, len(ids) + 1)]
            if sorted(ids, key=_person_rank) != expected:
                raise InvariantError(f"frame {idx}: person ids {ids} not dense P1..Pn")

    def labels(self) -> set[str]:
        out = set()
        for persons in self.frames:
            for p in persons:
                if p.label != "none":
                    out.add(p.label)
        return out


def _person_rank(pid: str) -> int:
    try:
        if not pid.startswith("P"):
            raise ValueError
        k = int(pid[1:])
        if k < 1:
            raise ValueError
        return k
    except ValueError:
        raise SchemaError(f"bad person id {pid!r}") from None


@dataclass(frozen=True)
class ClipTensor:
    """One clip's pixel data, shaped (c, L, w, h), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if arr.ndim != 4:
            raise InvariantError(f"clip tensor must be rank 4, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise InvariantError("clip tensor contains non-finite values")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise InvariantError("clip tensor values outside [0, 1]")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape)


@dataclass(frozen=True)
class LabelSpace:
    """Ordered action categories plus optional emotion tags per category."""

    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    emotion_attrs: dict = field(default_factory=lambda: dict(DEFAULT_EMOTION_ATTRS))

    def __post_init__(self):
        if len(self.categories) < 2:
            raise InvariantError("need at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise InvariantError("category names must be unique")

    def __len__(self) -> int:
        return len(self.categories)

    def index(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise SchemaError(f"unknown category {name!r}") from None

    def emotions(self, name: str) -> tuple[str, ...]:
        self.index(name)
        return tuple(self.emotion_attrs.get(name, ()))


def assign_person_ids(bboxes) -> list[str]:
    """Assign "P1".."Pn" by left-to-right bbox center.

    Ties on center x break by ascending y_min, then input order. The result
    is aligned with the input list: out[i] is the id for bboxes[i].
    """
    boxes = list(bboxes)
    if not boxes:
        raise EmptyInput("no bounding boxes")
    for b in boxes:
        if not isinstance(b, BBox):
            raise InvalidGeometry(f"expected BBox, got {type(b).__name__}")
    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].center_x, boxes[i].y_min, i))
    ids = [""] * len(boxes)
    for rank, i in enumerate(order, start=1):
        ids[i] = f"P{rank}"
    return ids


# --- annotation JSON Lines ---


def _person_to_json(p: PersonFrame) -> dict:
    return {
        "id": p.person_id,
        "bbox": [p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max],
        "joints": [[j.x, j.y, j.conf] for j in p.skeleton.joints],
        "label": p.label,
    }


def write_annotation(ann: ClipAnnotation) -> str:
    """Serialize to JSON Lines; the first line additionally carries fps."""
    lines = []
    for idx, persons in enumerate(ann.frames):
        obj = {
            "clip_id": ann.clip_id,
            "frame_idx": idx,
            "persons": [_person_to_json(p) for p in persons],
        }
        if idx == 0:
            obj["fps"] = ann.fps
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def parse_annotation(text) -> ClipAnnotation:
    """Parse JSON Lines produced by write_annotation (or compatible tools)."""
    if hasattr(text, "read"):
        text = text.read()
    frames = []
    clip_id = None
    fps = 30.0
    line_no = 0
    for raw in text.splitlines():
        line_no += 1
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(line_no, f"invalid JSON: {e.msg}")
        try:
            this_id = obj["clip_id"]
            frame_idx = obj["frame_idx"]
            raw_persons = obj["persons"]
        except (KeyError, TypeError):
            raise ParseError(line_no, "missing clip_id/frame_idx/persons")
        if clip_id is None:
            clip_id = this_id
            fps = float(obj.get("fps", fps))
        elif this_id != clip_id:
            raise SchemaError(f"mixed clip ids {clip_id!r} and {this_id!r}")
        if frame_idx != len(frames):
            raise SchemaError(f"frame_idx {frame_idx} out of order (expected {len(frames)})")
        persons = []
        for rp in raw_persons:
            try:
                joints = rp["joints"]
                if len(joints) != NUM_JOINTS:
                    raise SchemaError(f"person {rp.get('id')!r} has {len(joints)} joints, expected {NUM_JOINTS}")
                x0, y0, x1, y1 = rp["bbox"]
                persons.append(
                    PersonFrame(
                        person_id=str(rp["id"]),
                        bbox=BBox(float(x0), float(y0), float(x1), float(y1)),
                        skeleton=Skeleton(tuple(Joint(float(j[0]), float(j[1]), float(j[2])) for j in joints)),
                        label=str(rp.get("label", "none")),
                    )
                )
            except (KeyError, TypeError, ValueError):
                raise ParseError(line_no, "malformed person record")
        frames.append(tuple(persons))
    if not frames:
        raise ParseError(max(line_no, 1), "no frame records")
    try:
        return ClipAnnotation(clip_id=clip_id, fps=fps, frames=tuple(frames))
    except InvariantError as e:
        raise SchemaError(str(e)) from None


# --- binary clip container ---

HCLIP_MAGIC = b"HCLP"
HCLIP_VERSION = 1
_HCLIP_HEADER = struct.Struct("<4sH4I")


def write_clip(path, clip: ClipTensor) -> None:
    c, length, w, h = clip.dims
    header = _HCLIP_HEADER.pack(HCLIP_MAGIC, HCLIP_VERSION, c, length, w, h)
    payload = np.ascontiguousarray(clip.data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_clip(path) -> ClipTensor:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HCLIP_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, c, length, w, h = _HCLIP_HEADER.unpack_from(blob)
    if magic != HCLIP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != HCLIP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n = c * length * w * h
    expected = _HCLIP_HEADER.size + 4 * n
    if len(blob) != expected:
        raise FormatError(f"{path}: payload is {len(blob) - _HCLIP_HEADER.size} bytes, expected {4 * n}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HCLIP_HEADER.size).reshape(c, length, w, h)
    return ClipTensor(data=np.array(data, dtype=np.float32))


def crop_resize(frame: np.ndarray, bbox: BBox, side: int) -> np.ndarray:
    """Bilinear-resample the bbox region of ``frame`` to (c, side, side).

    ``frame`` is (c, W, H) indexed [channel, x, y]. Boxes partly outside the
    frame are clamped first; a box that collapses after clamping is an error.
    Sampling uses half-pixel centers with edge clamping.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise InvalidGeometry(f"frame must be (c, W, H), got rank {frame.ndim}")
    _, width, height = frame.shape
    x0 = min(max(bbox.x_min, 0.0), float(width))
    x1 = min(max(bbox.x_max, 0.0), float(width))
    y0 = min(max(bbox.y_min, 0.0), float(height))
    y1 = min(max(bbox.y_max, 0.0), float(height))
    if not (x0 < x1 and y0 < y1):
        raise InvalidGeometry(f"bbox degenerate after clamping to {width}x{height} frame")

    def _coords(lo, hi, n_src, n_out):
        src = lo + (np.arange(n_out) + 0.5) * (hi - lo) / n_out - 0.5
        src = np.clip(src, 0.0, n_src - 1.0)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_src - 1)
        frac = src - i0
        return i0, i1, frac

    xi0, xi1, xf = _coords(x0, x1, width, side)
    yi0, yi1, yf = _coords(y0, y1, height, side)
    xf = xf[:, None]
    yf = yf[None, :]
    top = frame[:, xi0][:, :, yi0] * (1 - xf) * (1 - yf) + frame[:, xi1][:, :, yi0] * xf * (1 - yf)
    bot = frame[:, xi0][:, :, yi1] * (1 - xf) * yf + frame[:, xi1][:, :, yi1] * xf * yf
    return np.clip(top + bot, 0.0, 1.0)
