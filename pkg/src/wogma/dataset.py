"""Skeleton sequence I/O, preprocessing, and the synthetic dataset generator.

Sequences are stored as JSONL: one object per line with video_id, fps,
label, optional gt_segments, and the raw T x N x 3 frame array (x, y,
confidence per joint). Preprocessing truncates/pads to a fixed length and
normalises each frame by neck position and median trunk length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError
from .graph import JOINT_COUNT, L_HIP, NECK, R_HIP

# joints that carry limb motion in the generator (elbows, wrists, knees, ankles)
LIMB_JOINTS = [3, 4, 6, 7, 9, 10, 12, 13]

# canonical supine 18-joint layout, pixel-ish units, trunk length 100
BASE_POSE = np.array([
    [0.0, -80.0],    # nose
    [0.0, -50.0],    # neck
    [-30.0, -50.0],  # r_shoulder
    [-55.0, -20.0],  # r_elbow
    [-70.0, 15.0],   # r_wrist
    [30.0, -50.0],   # l_shoulder
    [55.0, -20.0],   # l_elbow
    [70.0, 15.0],    # l_wrist
    [-20.0, 50.0],   # r_hip
    [-25.0, 100.0],  # r_knee
    [-30.0, 150.0],  # r_ankle
    [20.0, 50.0],    # l_hip
    [25.0, 100.0],   # l_knee
    [30.0, 150.0],   # l_ankle
    [-8.0, -88.0],   # r_eye
    [8.0, -88.0],    # l_eye
    [-16.0, -82.0],  # r_ear
    [16.0, -82.0],   # l_ear
])


@dataclass
class SkeletonSequence:
    video_id: str
    fps: float
    labels: list[int]                                  # one {0,1} entry per class
    frames: np.ndarray                                 # (T, N, 3) float64
    gt_segments: list[tuple[int, int, int]] | None = None  # (start, end, class), 1-indexed

    @property
    def length(self) -> int:
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# JSONL I/O
# ---------------------------------------------------------------------------

def _label_list(raw) -> list[int]:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return [int(raw)]
    if isinstance(raw, list):
        return [int(v) for v in raw]
    raise DataFormatError(f"label must be an integer or list, got {raw!r}")


def save_sequences(path, sequences: list[SkeletonSequence]) -> None:
    with open(path, "w") as handle:
        for seq in sequences:
            obj = {
                "video_id": seq.video_id,
                "fps": seq.fps,
                "label": seq.labels[0] if len(seq.labels) == 1 else seq.labels,
                "gt_segments": None if seq.gt_segments is None
                else [[int(s), int(e), int(c)] for s, e, c in seq.gt_segments],
                "frames": seq.frames.tolist(),
            }
            handle.write(json.dumps(obj, separators=(",", ":")) + "\n")


def load_sequences(path, joint_count: int = JOINT_COUNT) -> list[SkeletonSequence]:
    sequences: list[SkeletonSequence] = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        try:
            frames = np.asarray(obj["frames"], dtype=np.float64)
            video_id = str(obj["video_id"])
            fps = float(obj["fps"])
            labels = _label_list(obj["label"])
            raw_segments = obj.get("gt_segments")
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise DataFormatError(
                f"{path}:{lineno}: frames must be T x N x 3, got shape {frames.shape}")
        if frames.shape[1] != joint_count:
            raise DataFormatError(
                f"{path}:{lineno}: expected {joint_count} joints, got {frames.shape[1]}")
        conf = frames[:, :, 2]
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise DataFormatError(f"{path}:{lineno}: confidences must lie in [0, 1]")
        segments = None
        if raw_segments is not None:
            segments = []
            for seg in raw_segments:
                start, end, cls = int(seg[0]), int(seg[1]), int(seg[2])
                if start > end:
                    raise DataFormatError(
                        f"{path}:{lineno}: segment start {start} after end {end}")
                segments.append((start, end, cls))
        sequences.append(SkeletonSequence(video_id=video_id, fps=fps, labels=labels,
                                          frames=frames, gt_segments=segments))
    return sequences


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def preprocess(seq: SkeletonSequence, max_frames: int) -> SkeletonSequence:
    """Truncate/pad to max_frames, then neck-centre and trunk-scale each frame.

    Frames beyond max_frames are dropped; short sequences are padded with
    all-zero frames. Coordinates are shifted so the neck sits at the origin
    and divided by the median neck-to-mid-hip distance over non-padded
    frames. Joints with zero confidence are left at the origin. Idempotent
    on already-processed sequences (the scale step is skipped when the
    median trunk length is already 1).
    """
    keep = min(seq.length, max_frames)
    out = np.zeros((max_frames, seq.frames.shape[1], 3))
    out[:keep] = seq.frames[:keep]

    conf = out[:, :, 2]
    valid = conf.max(axis=1) > 0.0
    if not valid.any():
        raise DataFormatError(f"{seq.video_id}: no valid joints in any frame")
    anchors = valid & (conf[:, NECK] > 0) & (conf[:, R_HIP] > 0) & (conf[:, L_HIP] > 0)
    if not anchors.any():
        raise DataFormatError(f"{seq.video_id}: neck/hip joints never visible")

    coords = out[:, :, :2]
    midhip = (coords[:, R_HIP] + coords[:, L_HIP]) / 2.0
    trunk = np.linalg.norm(coords[:, NECK] - midhip, axis=1)
    scale = float(np.median(trunk[anchors]))
    if scale <= 0.0:
        raise DataFormatError(f"{seq.video_id}: degenerate trunk length")

    centred = coords - coords[:, NECK][:, None, :]
    if abs(scale - 1.0) > 1e-12:
        centred = centred / scale
    centred[conf == 0.0] = 0.0
    centred[~valid] = 0.0

    frames = np.concatenate([centred, conf[:, :, None]], axis=2)
    segments = None
    if seq.gt_segments is not None:
        segments = [(s, min(e, max_frames), c) for s, e, c in seq.gt_segments
                    if s <= max_frames]
    return SkeletonSequence(video_id=seq.video_id, fps=seq.fps, labels=list(seq.labels),
                            frames=frames, gt_segments=segments)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass
class SynthParams:
    """Generator knobs; defaults give a minutes-scale separable dataset.

    Positive videos overlay small fast multi-directional oscillations on the
    limb joints inside ground-truth segments; negative videos carry large
    slow limb swings instead. Both share body drift and per-joint jitter.
    """

    n_videos: int = 200
    frames: int = 600
    fps: float = 20.0
    positive_fraction: float = 0.5
    segments_min: int = 1
    segments_max: int = 3
    segment_len_min: int = 100
    segment_len_max: int = 200
    segment_gap: int = 20
    fidget_amp: tuple[float, float] = (6.0, 12.0)
    fidget_freq: tuple[float, float] = (2.0, 5.0)
    fidget_waves: int = 2
    swing_amp: tuple[float, float] = (30.0, 60.0)
    swing_freq: tuple[float, float] = (0.15, 0.4)
    drift_amp: tuple[float, float] = (5.0, 15.0)
    drift_freq: tuple[float, float] = (0.05, 0.15)
    noise: float = 1.0
    seed: int = 0

    def validate(self) -> "SynthParams":
        if self.n_videos < 1:
            raise ConfigurationError(f"n_videos must be >= 1, got {self.n_videos}")
        if self.segment_len_max > self.frames:
            raise ConfigurationError(
                f"segment length {self.segment_len_max} exceeds video length {self.frames}")
        if self.segment_len_min > self.segment_len_max:
            raise ConfigurationError("segment_len_min exceeds segment_len_max")
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ConfigurationError("positive_fraction must lie in [0, 1]")
        # fidgety motion must stay small against the 100-unit trunk
        if self.fidget_amp[1] > 30.0:
            raise ConfigurationError(
                f"fidget amplitude {self.fidget_amp[1]} too large for the trunk scale")
        return self


def _place_segments(rng: np.random.Generator, params: SynthParams) -> list[tuple[int, int]]:
    count = int(rng.integers(params.segments_min, params.segments_max + 1))
    placed: list[tuple[int, int]] = []
    for _ in range(count):
        length = int(rng.integers(params.segment_len_min, params.segment_len_max + 1))
        for _ in range(200):
            start = int(rng.integers(1, params.frames - length + 2))
            end = start + length - 1
            gap = params.segment_gap
            if all(end + gap < s or start > e + gap for s, e in placed):
                placed.append((start, end))
                break
    placed.sort()
    return placed


def _sinusoids(rng: np.random.Generator, t: np.ndarray, waves: int,
               amp_range, freq_range) -> np.ndarray:
    """Sum of `waves` random-direction sinusoids, shaped (len(t), 2)."""
    total = np.zeros((t.size, 2))
    for _ in range(waves):
        amp = rng.uniform(*amp_range)
        freq = rng.uniform(*freq_range)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        direction = np.array([math.cos(angle), math.sin(angle)])
        total += amp * np.sin(2.0 * math.pi * freq * t + phase)[:, None] * direction
    return total


def synthesize(params: SynthParams) -> list[SkeletonSequence]:
    """Deterministic synthetic dataset with video labels and gt segments."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    n_pos = int(round(params.n_videos * params.positive_fraction))
    labels = np.zeros(params.n_videos, dtype=int)
    labels[:n_pos] = 1
    labels = labels[rng.permutation(params.n_videos)]

    t = np.arange(params.frames) / params.fps
    sequences = []
    for idx in range(params.n_videos):
        positive = bool(labels[idx])
        coords = np.tile(BASE_POSE, (params.frames, 1, 1))
        coords += _sinusoids(rng, t, 2, params.drift_amp, params.drift_freq)[:, None, :]
        coords += rng.normal(0.0, params.noise, size=coords.shape)

        segments: list[tuple[int, int, int]] = []
        if positive:
            for start, end in _place_segments(rng, params):
                rows = slice(start - 1, end)
                span = t[rows]
                for joint in LIMB_JOINTS:
                    coords[rows, joint] += _sinusoids(rng, span, params.fidget_waves,
                                                      params.fidget_amp, params.fidget_freq)
                segments.append((start, end, 1))
        else:
            swing_joints = rng.choice(LIMB_JOINTS, size=4, replace=False)
            for joint in swing_joints:
                coords[:, joint] += _sinusoids(rng, t, 1, params.swing_amp, params.swing_freq)

        conf = rng.uniform(0.6, 1.0, size=(params.frames, coords.shape[1], 1))
        frames = np.concatenate([coords, conf], axis=2)
        sequences.append(SkeletonSequence(
            video_id=f"synth-{idx:04d}", fps=params.fps, labels=[int(positive)],
            frames=frames, gt_segments=segments))
    return sequences
