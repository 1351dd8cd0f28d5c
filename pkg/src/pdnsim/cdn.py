"""Origin/CDN stub: serves manifests and segments and accounts every byte."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .media import Manifest, VideoAsset, segment_bytes

TRACKER_ACCOUNT = "__tracker__"


class AssetNotFound(LookupError):
    pass


@dataclass
class TrafficCounter:
    origin_bytes_served: int = 0
    request_count: int = 0


class TrafficAccount:
    """Origin traffic per (account, stream) with derived per-scope totals."""

    def __init__(self):
        self.cells: dict[tuple[str, str], TrafficCounter] = defaultdict(TrafficCounter)

    def record(self, account: str, video_id: str, nbytes: int) -> None:
        cell = self.cells[(account, video_id)]
        cell.origin_bytes_served += nbytes
        cell.request_count += 1

    def bytes_for(self, account: str | None = None, video_id: str | None = None) -> int:
        return sum(c.origin_bytes_served for (a, v), c in self.cells.items()
                   if (account is None or a == account) and (video_id is None or v == video_id))

    def requests_for(self, account: str | None = None, video_id: str | None = None) -> int:
        return sum(c.request_count for (a, v), c in self.cells.items()
                   if (account is None or a == account) and (video_id is None or v == video_id))

    @property
    def total_bytes(self) -> int:
        return self.bytes_for()


class OriginStore:
    """Always-honest origin. Serves only registered assets."""

    def __init__(self, node_id: str = "cdn"):
        self.node_id = node_id
        self.assets: dict[str, VideoAsset] = {}
        self.traffic = TrafficAccount()
        self.manifest_requests = 0
        self.available = True

    def add_asset(self, asset: VideoAsset) -> None:
        if asset.is_polluted:
            raise ValueError("the origin only stores authentic assets")
        self.assets[asset.video_id] = asset

    def asset(self, video_id: str) -> VideoAsset:
        try:
            return self.assets[video_id]
        except KeyError:
            raise AssetNotFound(video_id) from None

    def get_manifest(self, video_id: str) -> Manifest:
        manifest = self.asset(video_id).manifest
        self.manifest_requests += 1
        return manifest

    def get_segment(self, video_id: str, index: int, requesting_account: str) -> bytes:
        if not self.available:
            raise ConnectionError("origin unavailable")
        data = segment_bytes(self.asset(video_id), index)
        self.traffic.record(requesting_account, video_id, len(data))
        return data


def offload_ratio(origin_bytes: int, consumed_bytes: int) -> float | None:
    """1 - origin/consumed; ``None`` when nothing was consumed."""
    if consumed_bytes <= 0:
        return None
    return 1.0 - origin_bytes / consumed_bytes
