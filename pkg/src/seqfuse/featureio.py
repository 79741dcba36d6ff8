"""Feature/label file parsing, frame alignment, fusion, synthetic data.

File formats
------------
Feature CSV (one file per video per track)::

    start_ms,end_ms,f0,...,f{d-1}
    0,250,1.0,0.0
    250,500,3.0,2.0

One row per token; ``start_ms`` inclusive, ``end_ms`` exclusive, integer
milliseconds. Already frame-aligned features use ``start_ms = j*250`` and
``end_ms = (j+1)*250``.

Label CSV (one file per video per target)::

    frame_ms,value
    0,-0.25
    250,-0.11

Row ``j`` must have ``frame_ms = j*250`` and ``value`` in [-1, 1].

Dataset manifest JSON::

    {"videos": {
        "vid001": {"partition": "train",
                   "features": {"track0": "features/vid001_track0.csv"},
                   "labels": {"arousal": "labels/vid001_arousal.csv"}}}}

Relative paths are resolved against the manifest's directory. Floats are
written with shortest round-trip formatting so write/parse is bitwise exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimMismatchError,
    EmptyTrackError,
    LengthMismatchError,
    MalformedRowError,
)
from .util import fmt_float, parse_float, seeded_rng

DEFAULT_FRAME_LEN_MS = 250

TARGETS = ("arousal", "valence")


@dataclass(eq=False)
class TokenFeature:
    """One token-level feature vector with its half-open time span."""

    start_ms: int
    end_ms: int
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1:
            raise DimMismatchError("token vector must be 1-D")
        if self.start_ms >= self.end_ms:
            raise MalformedRowError(
                f"token span [{self.start_ms}, {self.end_ms}) is empty"
            )
        if not np.all(np.isfinite(self.vector)):
            raise MalformedRowError("token vector contains NaN/Inf")


@dataclass(eq=False)
class TokenTrack:
    """Ordered token features for one modality of one video.

    Tokens are stably sorted by ``start_ms`` on construction; overlapping and
    duplicate spans are legal (subwords may share a span).
    """

    name: str
    dim: int
    tokens: list[TokenFeature]

    def __post_init__(self):
        if self.dim < 1:
            raise DimMismatchError("track dim must be positive")
        for tok in self.tokens:
            if tok.vector.shape != (self.dim,):
                raise DimMismatchError(
                    f"track {self.name!r}: token vector has length "
                    f"{tok.vector.shape[0]}, expected {self.dim}"
                )
        self.tokens = sorted(self.tokens, key=lambda tok: tok.start_ms)


@dataclass(eq=False)
class FrameTrack:
    """Frame-aligned features: row ``j`` covers [j*frame_len_ms, (j+1)*frame_len_ms)."""

    name: str
    dim: int
    frame_len_ms: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.dim:
            raise DimMismatchError(
                f"track {self.name!r}: frames must be (t, {self.dim})"
            )
        if self.frame_len_ms < 1:
            raise MalformedRowError("frame_len_ms must be positive")
        if not np.all(np.isfinite(self.frames)):
            raise MalformedRowError(f"track {self.name!r}: non-finite frame value")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(eq=False)
class LabeledSequence:
    """One video: aligned feature tracks plus per-frame labels in [-1, 1]."""

    video_id: str
    tracks: list[FrameTrack]
    labels: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.tracks:
            raise LengthMismatchError(f"{self.video_id}: needs at least one track")
        lengths = {tr.n_frames for tr in self.tracks}
        if len(lengths) != 1:
            raise LengthMismatchError(
                f"{self.video_id}: tracks disagree on frame count {sorted(lengths)}"
            )
        t = lengths.pop()
        if t < 1:
            raise LengthMismatchError(f"{self.video_id}: zero frames")
        self.labels = {k: np.asarray(v, dtype=np.float64) for k, v in self.labels.items()}
        for name, values in self.labels.items():
            if values.shape != (t,):
                raise LengthMismatchError(
                    f"{self.video_id}: labels {name!r} have length "
                    f"{values.shape[0]}, tracks have {t} frames"
                )
            if not np.all(np.isfinite(values)):
                raise MalformedRowError(f"{self.video_id}: non-finite label")
            if np.any(values < -1.0) or np.any(values > 1.0):
                raise MalformedRowError(f"{self.video_id}: label outside [-1, 1]")

    @property
    def n_frames(self) -> int:
        return self.tracks[0].n_frames


@dataclass(eq=False)
class FusedSequence:
    """One video after fusion: a t x D matrix whose column blocks follow track order."""

    video_id: str
    data: np.ndarray
    labels: dict[str, np.ndarray]
    track_dims: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DimMismatchError(f"{self.video_id}: fused data must be 2-D")
        if self.track_dims is not None:
            self.track_dims = tuple((str(n), int(d)) for n, d in self.track_dims)
            if sum(d for _, d in self.track_dims) != self.data.shape[1]:
                raise DimMismatchError(
                    f"{self.video_id}: track dims sum to "
                    f"{sum(d for _, d in self.track_dims)}, data has "
                    f"{self.data.shape[1]} columns"
                )
        t = self.data.shape[0]
        for name, values in self.labels.items():
            values = np.asarray(values, dtype=np.float64)
            self.labels[name] = values
            if values.shape != (t,):
                raise LengthMismatchError(
                    f"{self.video_id}: labels {name!r} length {values.shape[0]} != t={t}"
                )

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def track_slice(self, name: str) -> np.ndarray:
        """Column block of one constituent track (requires track metadata)."""
        if self.track_dims is None:
            raise ConfigError(f"{self.video_id}: no track metadata recorded")
        offset = 0
        for track_name, dim in self.track_dims:
            if track_name == name:
                return self.data[:, offset : offset + dim]
            offset += dim
        raise ConfigError(f"{self.video_id}: no track named {name!r}")


# ---------------------------------------------------------------------------
# CSV parsing and writing
# ---------------------------------------------------------------------------


def _feature_header(dim: int) -> list[str]:
    return ["start_ms", "end_ms"] + [f"f{i}" for i in range(dim)]


def parse_feature_csv(
    path: str | Path, expected_dim: int | None = None, name: str | None = None
) -> TokenTrack:
    """Read a Feature CSV into a TokenTrack.

    The track name defaults to the file stem. Raises MalformedRowError on a
    bad header, wrong column count, non-numeric or non-finite cells;
    DimMismatchError when ``expected_dim`` is given and violated;
    EmptyTrackError when the file has no data rows.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MalformedRowError(f"{path}: empty file, missing header")
    header = lines[0].split(",")
    if len(header) < 3 or header[:2] != ["start_ms", "end_ms"]:
        raise MalformedRowError(f"{path}: bad header {lines[0]!r}")
    dim = len(header) - 2
    if header != _feature_header(dim):
        raise MalformedRowError(f"{path}: bad feature column names in header")
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatchError(f"{path}: header has dim {dim}, expected {expected_dim}")

    tokens = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise MalformedRowError(
                f"{path}:{lineno}: expected {dim + 2} columns, got {len(cells)}"
            )
        try:
            start_ms, end_ms = int(cells[0]), int(cells[1])
            vector = np.array([parse_float(c) for c in cells[2:]], dtype=np.float64)
        except ValueError as exc:
            raise MalformedRowError(f"{path}:{lineno}: {exc}") from exc
        try:
            tokens.append(TokenFeature(start_ms, end_ms, vector))
        except MalformedRowError as exc:
            raise MalformedRowError(f"{path}:{lineno}: {exc}") from exc
    if not tokens:
        raise EmptyTrackError(f"{path}: no data rows")
    return TokenTrack(name=name or path.stem, dim=dim, tokens=tokens)


def write_feature_csv(path: str | Path, track: TokenTrack) -> None:
    """Write a TokenTrack as a Feature CSV (LF endings, round-trip exact floats)."""
    rows = [",".join(_feature_header(track.dim))]
    for tok in track.tokens:
        cells = [str(tok.start_ms), str(tok.end_ms)]
        cells += [fmt_float(v) for v in tok.vector]
        rows.append(",".join(cells))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def frame_track_to_tokens(track: FrameTrack) -> TokenTrack:
    """View an aligned track as tokens tiling [0, t*frame_len_ms)."""
    step = track.frame_len_ms
    tokens = [
        TokenFeature(j * step, (j + 1) * step, track.frames[j])
        for j in range(track.n_frames)
    ]
    return TokenTrack(track.name, track.dim, tokens)


def read_label_csv(path: str | Path, frame_len_ms: int = DEFAULT_FRAME_LEN_MS) -> np.ndarray:
    """Read a Label CSV; validates the frame grid and the [-1, 1] range."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "frame_ms,value":
        raise MalformedRowError(f"{path}: bad label header")
    values = []
    for j, line in enumerate(line for line in lines[1:] if line):
        cells = line.split(",")
        if len(cells) != 2:
            raise MalformedRowError(f"{path}: row {j}: expected 2 columns")
        try:
            frame_ms = int(cells[0])
            value = parse_float(cells[1])
        except ValueError as exc:
            raise MalformedRowError(f"{path}: row {j}: {exc}") from exc
        if frame_ms != j * frame_len_ms:
            raise MalformedRowError(
                f"{path}: row {j}: frame_ms {frame_ms} != {j * frame_len_ms}"
            )
        if not -1.0 <= value <= 1.0:
            raise MalformedRowError(f"{path}: row {j}: label {value} outside [-1, 1]")
        values.append(value)
    if not values:
        raise EmptyTrackError(f"{path}: no label rows")
    return np.array(values, dtype=np.float64)


def write_label_csv(
    path: str | Path, values: np.ndarray, frame_len_ms: int = DEFAULT_FRAME_LEN_MS
) -> None:
    rows = ["frame_ms,value"]
    rows += [f"{j * frame_len_ms},{fmt_float(v)}" for j, v in enumerate(values)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# Alignment and fusion
# ---------------------------------------------------------------------------


def align_tokens_to_frames(
    track: TokenTrack, frame_len_ms: int, n_frames: int
) -> FrameTrack:
    """Average token vectors onto a fixed frame grid.

    Frame ``j`` is the unweighted mean of every token whose half-open span
    intersects [j*frame_len_ms, (j+1)*frame_len_ms); any nonempty millisecond
    overlap counts, with no duration weighting. Frames overlapped by no token
    are zero vectors. Accumulation runs in token order (ascending start_ms) so
    results are reproducible bit for bit.
    """
    if n_frames < 1:
        raise LengthMismatchError("n_frames must be >= 1")
    if frame_len_ms < 1:
        raise MalformedRowError("frame_len_ms must be >= 1")
    sums = np.zeros((n_frames, track.dim), dtype=np.float64)
    counts = np.zeros(n_frames, dtype=np.int64)
    for tok in track.tokens:
        first = tok.start_ms // frame_len_ms
        last = (tok.end_ms - 1) // frame_len_ms
        lo = max(first, 0)
        hi = min(last, n_frames - 1)
        if lo > hi:
            continue
        sums[lo : hi + 1] += tok.vector
        counts[lo : hi + 1] += 1
    covered = counts > 0
    sums[covered] /= counts[covered, None]
    return FrameTrack(track.name, track.dim, frame_len_ms, sums)


def fuse(
    tracks: list[FrameTrack],
    labels: dict[str, np.ndarray],
    video_id: str = "",
) -> FusedSequence:
    """Concatenate aligned tracks column-wise, in list order."""
    if not tracks:
        raise LengthMismatchError("fuse needs at least one track")
    lengths = {tr.n_frames for tr in tracks}
    if len(lengths) != 1:
        raise LengthMismatchError(
            f"tracks disagree on frame count: {sorted(lengths)}"
        )
    t = lengths.pop()
    for name, values in labels.items():
        if len(values) != t:
            raise LengthMismatchError(
                f"labels {name!r} have length {len(values)}, tracks have {t}"
            )
    data = np.hstack([tr.frames for tr in tracks])
    track_dims = tuple((tr.name, tr.dim) for tr in tracks)
    return FusedSequence(video_id, data, dict(labels), track_dims)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def _smooth_labels(rng: np.random.Generator, t: int) -> np.ndarray:
    # Sum of three low-frequency sinusoids; amplitude budget < 1 keeps the
    # clip a no-op in practice, so labels rarely saturate at the range edges.
    freqs = rng.uniform(0.5, 3.0, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    amps = rng.uniform(0.1, 0.3, size=3)
    u = np.arange(t, dtype=np.float64) / t
    y = np.zeros(t, dtype=np.float64)
    for a, f, p in zip(amps, freqs, phases):
        y += a * np.sin(2.0 * np.pi * f * u + p)
    return np.clip(y, -1.0, 1.0)


def synth_generate(
    seed: int,
    n_videos: int,
    t_range: tuple[int, int],
    dims: list[int],
    snr: float,
) -> list[LabeledSequence]:
    """Deterministic synthetic dataset with labels learnable from features.

    Each video gets smooth arousal/valence label curves (clipped sums of
    low-frequency sinusoids) and one frame-aligned track per entry of
    ``dims``. Track ``k`` is a fixed linear image of the stacked label pair,
    shared across videos, plus Gaussian noise scaled by ``1/snr``. The same
    seed yields bitwise-identical output.
    """
    lo, hi = int(t_range[0]), int(t_range[1])
    if lo < 2 or hi < lo:
        raise ConfigError(f"t_range ({lo}, {hi}) must satisfy 2 <= lo <= hi")
    if n_videos < 1:
        raise ConfigError("n_videos must be >= 1")
    if not dims or any(d < 1 for d in dims):
        raise ConfigError("dims must be a nonempty list of positive integers")
    if snr <= 0:
        raise ConfigError("snr must be positive")

    rng = seeded_rng(seed)
    mixers = [rng.normal(size=(dim, len(TARGETS))) for dim in dims]
    videos = []
    for v in range(n_videos):
        t = int(rng.integers(lo, hi + 1))
        labels = {target: _smooth_labels(rng, t) for target in TARGETS}
        stacked = np.stack([labels[target] for target in TARGETS], axis=1)
        tracks = []
        for k, dim in enumerate(dims):
            noise = rng.normal(size=(t, dim)) / snr
            frames = stacked @ mixers[k].T + noise
            tracks.append(FrameTrack(f"track{k}", dim, DEFAULT_FRAME_LEN_MS, frames))
        videos.append(LabeledSequence(f"video{v:03d}", tracks, labels))
    return videos


# ---------------------------------------------------------------------------
# Manifest handling and dataset assembly
# ---------------------------------------------------------------------------

PARTITIONS = ("train", "devel", "test")


@dataclass
class VideoEntry:
    partition: str
    features: dict[str, str]
    labels: dict[str, str]


@dataclass
class Manifest:
    """Dataset manifest; ``root`` anchors the entries' relative paths."""

    videos: dict[str, VideoEntry]
    root: Path = field(default_factory=Path)

    def video_ids(self, partition: str | None = None) -> list[str]:
        """Video ids in manifest order, optionally filtered by partition."""
        if partition is None or partition == "all":
            return list(self.videos)
        return [vid for vid, entry in self.videos.items() if entry.partition == partition]

    def resolve(self, relpath: str) -> Path:
        path = Path(relpath)
        return path if path.is_absolute() else self.root / path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "videos" not in raw:
        raise ConfigError(f"{path}: manifest must contain a 'videos' object")
    videos = {}
    for vid, entry in raw["videos"].items():
        try:
            partition = entry["partition"]
            features = dict(entry["features"])
            labels = dict(entry["labels"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: video {vid!r}: bad entry ({exc})") from exc
        if partition not in PARTITIONS:
            raise ConfigError(
                f"{path}: video {vid!r}: partition {partition!r} not in {PARTITIONS}"
            )
        if not features or not labels:
            raise ConfigError(f"{path}: video {vid!r}: needs features and labels")
        videos[vid] = VideoEntry(partition, features, labels)
    if not videos:
        raise ConfigError(f"{path}: manifest lists no videos")
    return Manifest(videos, root=path.parent)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    payload = {
        "videos": {
            vid: {
                "partition": entry.partition,
                "features": entry.features,
                "labels": entry.labels,
            }
            for vid, entry in manifest.videos.items()
        }
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_labeled_sequence(
    manifest: Manifest,
    video_id: str,
    track_order: list[str] | None = None,
    frame_len_ms: int = DEFAULT_FRAME_LEN_MS,
) -> LabeledSequence:
    """Parse, align and assemble one manifest video.

    The number of frames comes from the label files (features beyond the
    labelled horizon are dropped); all label targets must agree on length.
    """
    entry = manifest.videos[video_id]
    labels = {}
    t = None
    for target, relpath in entry.labels.items():
        values = read_label_csv(manifest.resolve(relpath), frame_len_ms)
        if t is None:
            t = len(values)
        elif len(values) != t:
            raise LengthMismatchError(
                f"{video_id}: label files disagree on length ({target!r} has "
                f"{len(values)}, expected {t})"
            )
        labels[target] = values
    order = track_order if track_order is not None else sorted(entry.features)
    tracks = []
    for track_name in order:
        if track_name not in entry.features:
            raise ConfigError(f"{video_id}: manifest has no track {track_name!r}")
        token_track = parse_feature_csv(
            manifest.resolve(entry.features[track_name]), name=track_name
        )
        tracks.append(align_tokens_to_frames(token_track, frame_len_ms, t))
    return LabeledSequence(video_id, tracks, labels)


def load_fused_dataset(
    manifest: Manifest,
    partition: str,
    track_order: list[str] | None = None,
    frame_len_ms: int = DEFAULT_FRAME_LEN_MS,
) -> list[FusedSequence]:
    """Fused sequences for one partition, in manifest video order."""
    sequences = []
    for vid in manifest.video_ids(partition):
        seq = load_labeled_sequence(manifest, vid, track_order, frame_len_ms)
        sequences.append(fuse(seq.tracks, seq.labels, video_id=vid))
    return sequences
