"""Segmented video assets, manifests and manifest-preserving pollution."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import PurePosixPath

from .kernels import keystream, xor_keystream

DEFAULT_BYTES_PER_SECOND = 300_000  # 3,000,000 bytes per 10 s segment


class MediaError(Exception):
    pass


class InvalidArgument(MediaError, ValueError):
    pass


class SegmentNotFound(MediaError, LookupError):
    pass


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an ordered tuple of labels."""
    material = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "little")


@dataclass(frozen=True)
class SegmentMeta:
    video_id: str
    index: int
    duration_ms: int
    byte_len: int
    content_digest: str


@dataclass(frozen=True)
class Manifest:
    video_id: str
    entries: tuple[tuple[str, int], ...]  # (segment name, duration in ms)
    manifest_digest: str

    @staticmethod
    def serialize(entries) -> bytes:
        return "\n".join(f"{name},{dur}" for name, dur in entries).encode()

    @classmethod
    def from_entries(cls, video_id: str, entries) -> "Manifest":
        entries = tuple((str(n), int(d)) for n, d in entries)
        return cls(video_id, entries, digest(cls.serialize(entries)))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PollutionSpec:
    target_indices: frozenset[int]
    pollution_seed: int

    def __init__(self, target_indices, pollution_seed: int):
        object.__setattr__(self, "target_indices", frozenset(int(i) for i in target_indices))
        object.__setattr__(self, "pollution_seed", int(pollution_seed))


@dataclass(frozen=True)
class VideoAsset:
    video_id: str
    total_duration: float
    segment_duration: float
    generation_seed: int
    bytes_per_second: int
    segments: tuple[SegmentMeta, ...]
    manifest: Manifest
    pollution: tuple[PollutionSpec, ...] = field(default=())

    @property
    def manifest_digest(self) -> str:
        return self.manifest.manifest_digest

    @property
    def total_bytes(self) -> int:
        return sum(s.byte_len for s in self.segments)

    @property
    def is_polluted(self) -> bool:
        return any(p.target_indices for p in self.pollution)

    def __len__(self) -> int:
        return len(self.segments)


def _segment_name(video_id: str, index: int) -> str:
    stem = PurePosixPath(video_id.split("?", 1)[0]).stem or "seg"
    return f"{stem}_{index:05d}.ts"


@lru_cache(maxsize=64)
def _render(video_id: str, index: int, seed: int, byte_len: int,
            pollution: tuple[PollutionSpec, ...]) -> bytes:
    data = keystream(derive_seed("content", video_id, index, seed), byte_len)
    for spec in pollution:
        if index in spec.target_indices:
            data = xor_keystream(data, derive_seed("pollute", video_id, index, spec.pollution_seed))
    return data


def build_video(video_id: str, total_duration: float, segment_duration: float,
                generation_seed: int, bytes_per_second: int = DEFAULT_BYTES_PER_SECOND) -> VideoAsset:
    """Split a stream into fixed-duration segments and digest each one.

    Durations are in seconds and are held internally in whole milliseconds.
    The last segment carries the remainder and its byte length is scaled
    down proportionally.
    """
    if not total_duration > 0 or not segment_duration > 0:
        raise InvalidArgument("durations must be positive")
    if bytes_per_second <= 0:
        raise InvalidArgument("bytes_per_second must be positive")
    total_ms = round(total_duration * 1000)
    seg_ms = round(segment_duration * 1000)
    if total_ms <= 0 or seg_ms <= 0:
        raise InvalidArgument("durations must be at least 1 ms")
    count = math.ceil(total_ms / seg_ms)
    metas = []
    entries = []
    for i in range(count):
        dur = min(seg_ms, total_ms - i * seg_ms)
        byte_len = bytes_per_second * dur // 1000
        data = _render(video_id, i, generation_seed, byte_len, ())
        metas.append(SegmentMeta(video_id, i, dur, byte_len, digest(data)))
        entries.append((_segment_name(video_id, i), dur))
    return VideoAsset(
        video_id=video_id,
        total_duration=total_duration,
        segment_duration=segment_duration,
        generation_seed=generation_seed,
        bytes_per_second=bytes_per_second,
        segments=tuple(metas),
        manifest=Manifest.from_entries(video_id, entries),
    )


def segment_bytes(asset: VideoAsset, index: int) -> bytes:
    if not 0 <= index < len(asset.segments):
        raise SegmentNotFound(f"{asset.video_id} has no segment {index}")
    meta = asset.segments[index]
    return _render(asset.video_id, index, asset.generation_seed, meta.byte_len, asset.pollution)


def pollute(asset: VideoAsset, spec: PollutionSpec) -> VideoAsset:
    """Return a copy of ``asset`` with the target segments' bytes replaced.

    The manifest and every segment's byte length are kept, so the polluted
    stream is indistinguishable from the original by its manifest.
    """
    bad = [i for i in spec.target_indices if not 0 <= i < len(asset.segments)]
    if bad:
        raise InvalidArgument(f"indices outside asset: {sorted(bad)}")
    if not spec.target_indices:
        return asset
    pollution = asset.pollution + (spec,)
    metas = list(asset.segments)
    for i in sorted(spec.target_indices):
        data = _render(asset.video_id, i, asset.generation_seed, metas[i].byte_len, pollution)
        metas[i] = replace(metas[i], content_digest=digest(data))
    return replace(asset, segments=tuple(metas), pollution=pollution)


def forge_manifest(asset: VideoAsset, seed: int) -> VideoAsset:
    """Re-encode a stream with a different manifest (the naive pollution route).

    Segment names change, so the manifest digest no longer matches the
    original stream's.
    """
    tag = derive_seed("forge", asset.video_id, seed) & 0xFFFF
    entries = [(f"x{tag:04x}_{name}", dur) for name, dur in asset.manifest.entries]
    forged = Manifest.from_entries(asset.video_id, entries)
    return replace(asset, manifest=forged)
