"""Synthetic clip generator with planted, joint-localized class signals.

Each clip shows a noisy "body" of 15 joints following a smooth random
walk. Class identity is planted twice: as a posture deformation of a few
designated joints (skeleton channel) and as a textured patch glued to
each of those joints (RGB channel). Background clutter patches drawn from the
same texture family stand in for scene distraction; the clutter density
knob controls how hard the RGB channel has to work.

Categories are paired: members of a pair share a distinctive posture
deformation, oscillation traits and signal joints, and differ only by a
small extra offset of the signal joints, so the skeleton channel
separates pairs easily but members only partly; textures are unique per
category. This yields complementary channels at different difficulty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .datamodel import (
    BBox,
    ClipAnnotation,
    ClipTensor,
    LabelSpace,
    NUM_JOINTS,
    PersonFrame,
    Skeleton,
    write_annotation,
    write_clip,
)
from .errors import ContractError

# Template pose in fractions of the crop side; (x, y), y grows downward.
POSE_TEMPLATE = np.array(
    [
        (0.50, 0.15),  # nose
        (0.50, 0.25),  # head bottom
        (0.50, 0.06),  # head top
        (0.36, 0.30),  # shoulders
        (0.64, 0.30),
        (0.30, 0.45),  # elbows
        (0.70, 0.45),
        (0.26, 0.60),  # wrists
        (0.74, 0.60),
        (0.42, 0.58),  # hips
        (0.58, 0.58),
        (0.40, 0.75),  # knees
        (0.60, 0.75),
        (0.40, 0.92),  # ankles
        (0.60, 0.92),
    ]
)

# Joints eligible to carry a planted signal (expressive extremities).
SIGNAL_POOL = (0, 5, 6, 7, 8, 11, 12)


@dataclass(frozen=True)
class SynthConfig:
    num_categories: int = 30
    clips_per_category: int = 10
    length: int = 32
    side: int = 64
    seed: int = 0
    jitter: float = 1.2  # per-frame gaussian joint noise, pixels
    clutter: int = 6  # distractor patches per clip
    patch_size: int = 10
    motion_amp: float = 3.0  # oscillation amplitude of signal joints, pixels
    pose_scale: float = 6.0  # per-pair signal-joint deformation, pixels
    within_amp: float = 1.5  # extra offset separating pair members, pixels

    def __post_init__(self):
        if self.num_categories < 2 or self.clips_per_category < 1:
            raise ContractError("need >= 2 categories and >= 1 clip per category")
        if self.length < 1 or self.side < 8 or self.patch_size < 2:
            raise ContractError("degenerate clip geometry")
        if self.patch_size > self.side // 2:
            raise ContractError("patch larger than half the frame")


@dataclass(frozen=True)
class SynthClip:
    clip: ClipTensor
    annotation: ClipAnnotation
    category: int
    signal_joints: tuple[int, ...]  # 3 joints, each carrying the texture patch


def category_texture(category: int, cfg: SynthConfig) -> np.ndarray:
    """Deterministic (3, g, g) texture for one category."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7, category)))
    return rng.uniform(0.0, 1.0, (3, cfg.patch_size, cfg.patch_size)).astype(np.float32)


def _pair_traits(category: int, cfg: SynthConfig):
    pair = category // 2
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11, pair)))
    joints = tuple(int(j) for j in rng.choice(SIGNAL_POOL, size=3, replace=False))
    freq = float(rng.uniform(0.5, 1.4))
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    axes = rng.integers(0, 2, size=3)  # 0: oscillate in x, 1: in y
    # static posture deformation shared by the pair, concentrated on the
    # signal joints so joint attention has a reason to settle there; a
    # smaller offset on the same joints separates the two members partially
    pose_offset = np.zeros((NUM_JOINTS, 2))
    pose_offset[list(joints)] = rng.normal(0.0, cfg.pose_scale, (3, 2))
    within_dir = rng.normal(0.0, 1.0, (3, 2))
    within_dir *= cfg.within_amp / np.linalg.norm(within_dir, axis=1, keepdims=True)
    return joints, freq, phases, axes, pose_offset, within_dir


def _paste(frame: np.ndarray, texture: np.ndarray, cx: float, cy: float, side: int):
    g = texture.shape[1]
    x0 = int(round(cx)) - g // 2
    y0 = int(round(cy)) - g // 2
    x0 = min(max(x0, 0), side - g)
    y0 = min(max(y0, 0), side - g)
    frame[:, x0 : x0 + g, y0 : y0 + g] = texture


def gen_clip(category: int, cfg: SynthConfig, seed: int = 0) -> SynthClip:
    """Deterministic function of (category, cfg, seed)."""
    if not (0 <= category < cfg.num_categories):
        raise ContractError(f"category {category} outside [0, {cfg.num_categories})")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, category, seed)))
    s = cfg.side
    length = cfg.length
    joints3, freq, phases, axes, pose_offset, within_dir = _pair_traits(category, cfg)
    within = category % 2

    # trajectories: deformed template + shared drift + oscillation + jitter
    base = POSE_TEMPLATE * s + pose_offset
    if within:
        base = base.copy()
        base[list(joints3)] += within_dir
    drift = np.cumsum(rng.normal(0.0, 0.35, (length, 2)), axis=0)
    t = np.arange(length)
    coords = np.empty((length, NUM_JOINTS, 2))
    coords[:] = base[None, :, :]
    coords += drift[:, None, :]
    for slot, j in enumerate(joints3):
        wave = cfg.motion_amp * np.sin(freq * t + phases[slot])
        coords[:, j, axes[slot]] += wave
    coords += rng.normal(0.0, cfg.jitter, coords.shape)
    coords = np.clip(coords, 1.0, s - 2.0)
    conf = rng.uniform(0.55, 1.0, (length, NUM_JOINTS))

    # rgb frames: static noisy background, wandering clutter, signal patch
    background = np.clip(
        0.45 + rng.normal(0.0, 0.04, (3, s, s)), 0.0, 1.0
    ).astype(np.float32)
    others = [c for c in range(cfg.num_categories) if c != category]
    n_clutter = min(cfg.clutter, len(others))
    clutter_cats = rng.choice(others, size=n_clutter, replace=False) if n_clutter else []
    clutter_tex = [category_texture(int(c), cfg) for c in clutter_cats]
    margin = cfg.patch_size / 2 + 1
    clutter_pos = rng.uniform(margin, s - margin, (n_clutter, 2))
    clutter_steps = np.cumsum(rng.normal(0.0, 0.8, (length, n_clutter, 2)), axis=0)
    signal_tex = category_texture(category, cfg)

    data = np.empty((3, length, s, s), dtype=np.float32)
    for frame_idx in range(length):
        frame = background.copy()
        for d in range(n_clutter):
            cx, cy = np.clip(clutter_pos[d] + clutter_steps[frame_idx, d], margin, s - margin)
            _paste(frame, clutter_tex[d], cx, cy, s)
        for j in joints3:
            jx, jy = coords[frame_idx, j]
            _paste(frame, signal_tex, jx, jy, s)
        data[:, frame_idx] = frame

    label_space = LabelSpace() if cfg.num_categories == 30 else None
    label = label_space.categories[category] if label_space else f"cat{category:02d}"
    frames = []
    for frame_idx in range(length):
        skel = Skeleton.from_array(
            np.concatenate([coords[frame_idx], conf[frame_idx][:, None]], axis=1)
        )
        frames.append(
            (
                PersonFrame(
                    person_id="P1",
                    bbox=BBox(0.0, 0.0, float(s), float(s)),
                    skeleton=skel,
                    label=label,
                ),
            )
        )
    ann = ClipAnnotation(clip_id=f"synth-{category:02d}-{seed:04d}", fps=16.0, frames=tuple(frames))
    return SynthClip(
        clip=ClipTensor(data=data),
        annotation=ann,
        category=category,
        signal_joints=joints3,
    )


def gen_dataset(cfg: SynthConfig, out_dir) -> dict:
    """Write clips, annotations and a manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for category in range(cfg.num_categories):
        for idx in range(cfg.clips_per_category):
            sc = gen_clip(category, cfg, seed=idx)
            stem = f"clip_{category:02d}_{idx:03d}"
            clip_path = out / f"{stem}.hclip"
            ann_path = out / f"{stem}.jsonl"
            write_clip(clip_path, sc.clip)
            ann_path.write_text(write_annotation(sc.annotation), encoding="utf-8")
            entries.append(
                {
                    "path": clip_path.name,
                    "annotation_path": ann_path.name,
                    "label": sc.annotation.frames[0][0].label,
                    "category": category,
                }
            )
    manifest = {"format_version": 1, "cfg": asdict(cfg), "clips": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest
