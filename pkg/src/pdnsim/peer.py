"""Viewer-side PDN logic: join, address exchange, P2P-first segment fetching
with CDN fallback, serving under resource flags, SIM checks, and the
attacker roles (polluter, harvester, free rider)."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .auth_token import AuthError
from .media import VideoAsset, digest, segment_bytes
from .simnet import Message, NetAddr, World
from .tracker import PENDING, IntegrityMetadata, SignedIM, verify_sim

if TYPE_CHECKING:
    from .sim import Simulation

log = logging.getLogger(__name__)

ROLES = ("honest", "polluter", "harvester", "free_rider")
CELLULAR_MODES = ("leech", "full", "disable")
NETWORK_TYPES = ("wifi", "cellular")


@dataclass
class PeerConfig:
    role: str = "honest"
    deployment: int = 100
    mobile: str = "enable"
    cellular_mode: str = "leech"
    network_type: str = "wifi"
    defense_enabled: bool = False
    playback_rate: int = 1  # segments consumed per segment duration
    prefetch: int = 3
    p2p_timeout_ms: int = 200
    p2p_attempts: int = 4
    heartbeat_ms: int = 3_000
    candidate_refresh_ms: int = 3_000
    join_at_ms: int = 0
    leave_at_ms: int | None = None
    serve_enabled: bool = True
    preloaded: bool = False  # starts holding the whole stream (attacker copy)
    claim_cdn: bool = True  # polluter: declare CDN fetches for its targets
    sender_im: bool = False  # compute IM before serving each segment
    hash_rate: int = 100_000  # bytes per simulated ms for IM hashing

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not 0 <= self.deployment <= 100:
            raise ValueError("deployment is a percentage 0-100")
        if self.mobile not in ("enable", "disable"):
            raise ValueError("mobile must be 'enable' or 'disable'")
        if self.cellular_mode not in CELLULAR_MODES:
            raise ValueError(f"cellular_mode must be one of {CELLULAR_MODES}")
        if self.network_type not in NETWORK_TYPES:
            raise ValueError(f"network_type must be one of {NETWORK_TYPES}")
        if self.playback_rate < 1 or self.prefetch < 1:
            raise ValueError("playback_rate and prefetch must be >= 1")

    def hash_ms(self, nbytes: int) -> int:
        return math.ceil(nbytes / self.hash_rate)


@dataclass
class CacheEntry:
    data: bytes
    digest: str
    source: str  # cdn | p2p | local
    fetched_at: int


@dataclass
class PeerStats:
    # bytes[direction][source][network_type]
    bytes: dict = field(default_factory=lambda: {
        d: {s: {n: 0 for n in NETWORK_TYPES} for s in ("cdn", "p2p")} for d in ("down", "up")})
    discarded_p2p: int = 0
    refusals_sent: int = 0
    policy_refusals: int = 0  # had the segment, declined to upload it
    stalls: int = 0
    stall_ms: int = 0
    p2p_timeouts: int = 0
    sim_mismatches: int = 0

    def add(self, direction: str, source: str, network: str, n: int) -> None:
        self.bytes[direction][source][network] += n

    def total(self, direction: str, source: str | None = None) -> int:
        srcs = [source] if source else ["cdn", "p2p"]
        return sum(self.bytes[direction][s][n] for s in srcs for n in NETWORK_TYPES)


@dataclass
class BindingExchange:
    requester: NetAddr
    responder: NetAddr
    success: bool
    at: int


@dataclass
class _Fetch:
    index: int
    queue: list
    sim: SignedIM | None
    started: int
    tries: int = 0
    current: int | None = None  # peer id being asked
    req_id: int = 0
    timer: object = None
    t_send: int | None = None


def deployment_enabled(world: World, node_id: str, deployment: int) -> bool:
    """Seeded draw in [0, 100); P2P is on when the draw is below ``deployment``."""
    return world.rng(f"deploy:{node_id}").random() * 100 < deployment


class Peer:
    """One viewer. Owned by a :class:`~pdnsim.sim.Simulation`."""

    def __init__(self, sim: "Simulation", node_id: str, config: PeerConfig, asset: VideoAsset,
                 credential=None, declared_origin: str = "", customer_id: str = "",
                 canonical: VideoAsset | None = None):
        self.sim = sim
        self.world = sim.world
        self.node_id = node_id
        self.config = config
        self.asset = asset  # what this peer holds or wants; polluted for polluters
        self.canonical = canonical or asset
        self.credential = credential
        self.declared_origin = declared_origin
        self.customer_id = customer_id
        self.network = config.network_type

        self.peer_id: int | None = None
        self.reflected: NetAddr | None = None
        self.stream_id: str | None = None
        self.p2p_enabled = False
        self.registered = False
        self.auth_error: str | None = None
        self.joined = False
        self.active = False
        self.left = False

        self.cache: dict[int, CacheEntry] = {}
        self.cache_log: list[tuple[int, int, str, str]] = []  # (time, index, digest, source)
        self.playback_log: list[str] = []
        self.played_at: list[tuple[int, int]] = []  # (time, index)
        self.stats = PeerStats()
        self.candidates: list[tuple[int, NetAddr]] = []
        self.candidate_log: list[tuple[int, NetAddr]] = []
        self.harvested: set[NetAddr] = set()
        self.bogons: set[NetAddr] = set()
        self.bindings: list[BindingExchange] = []
        self._bound: set[int] = set()
        self.banned: set[int] = set()  # peers caught serving bad bytes
        self.latency_samples: list[tuple[int, int]] = []  # (index, T_recv - T_send)
        self._pending_reports: set[int] = set()
        self._reported: set[int] = set()
        self._fetch: _Fetch | None = None
        self._next_fetch = 0
        self._play_pos = 0
        self._playing = False
        self._tick_armed = False
        self._req_seq = 0
        self.heartbeats_sent = 0
        self.issued_token = None  # set by the customer-server stub in token mode

    # -- helpers ----------------------------------------------------------

    @property
    def n_segments(self) -> int:
        return len(self.asset.segments)

    @property
    def on_cellular(self) -> bool:
        return self.network == "cellular"

    def _rpc(self, kind: str, call: Callable, on_reply=None, request_size=0, reply_size=0):
        return self.world.rpc(self.node_id, self.sim.tracker_node, kind, call,
                              self._guard(on_reply) if on_reply else None, request_size, reply_size)

    def _guard(self, fn):
        def wrapped(*args):
            if not self.left:
                fn(*args)
        return wrapped

    def _schedule(self, delay: int, fn, label: str):
        return self.world.schedule(delay, self._guard(fn), label=f"{label}:{self.node_id}")

    def _send_peer(self, peer_id: int, kind: str, body: dict, size: int = 0) -> None:
        dst = self.sim.node_of(peer_id)
        body = dict(body, sender=self.node_id, sender_pid=self.peer_id)
        if self.sim.tracker.policy.variant == "relay_only":
            self.world.send(self.node_id, self.sim.relay_node,
                            Message("relay", self.node_id, self.sim.relay_node, (dst, kind, body, size)), size)
        else:
            self.world.send(self.node_id, dst, Message(kind, self.node_id, dst, body), size)

    def _counterpart_addr(self) -> NetAddr:
        if self.sim.tracker.policy.variant == "relay_only":
            return self.sim.relay_addr
        return self.reflected

    def _observe(self, addr: NetAddr) -> None:
        if addr is None:
            return
        if addr == self.sim.relay_addr:
            return
        if addr.is_bogon:
            self.bogons.add(addr)
        else:
            self.harvested.add(addr)

    # -- join ---------------------------------------------------------------

    def start(self) -> None:
        self._schedule(self.config.join_at_ms, self.join, "join")
        if self.config.leave_at_ms is not None:
            self._schedule(self.config.leave_at_ms, self.leave, "leave")

    def join(self) -> None:
        """Fetch the manifest, then (if P2P applies) STUN, register and start heartbeats."""
        cfg = self.config
        self.joined = True
        self.active = True
        if cfg.preloaded:
            for i in range(self.n_segments):
                data = segment_bytes(self.asset, i)
                self._store(i, data, "local")
        p2p = deployment_enabled(self.world, self.node_id, cfg.deployment)
        if self.on_cellular and (cfg.cellular_mode == "disable" or cfg.mobile == "disable"):
            p2p = False
        self.p2p_enabled = p2p

        def got_manifest(manifest, error):
            if error is not None:
                log.warning("%s: manifest fetch failed: %s", self.node_id, error)
                return
            # forged manifests (naive pollution) travel with the peer's own asset
            self.stream_id = (self.asset.manifest_digest if cfg.role == "polluter"
                              else manifest.manifest_digest)
            if self.p2p_enabled:
                self.world.stun_query(self.node_id, self._guard(self._on_stun))
            else:
                self._start_streaming()

        self.world.rpc(self.node_id, self.sim.cdn_node, "manifest",
                       lambda: self.sim.origin.get_manifest(self.asset.video_id),
                       self._guard(got_manifest), 0, 1_000)

    def _on_stun(self, reflected: NetAddr) -> None:
        self.reflected = reflected
        cred = self.credential(self) if callable(self.credential) else self.credential
        tracker = self.sim.tracker

        def call():
            return tracker.register(cred, self.declared_origin, self.stream_id, reflected,
                                    reflected.country, reflected.isp, self.asset.video_id, self.node_id)

        self._rpc("register", call, self._on_registered, request_size=300)

    def _on_registered(self, peer_id, error) -> None:
        if error is not None:
            if not isinstance(error, AuthError):
                raise error
            self.auth_error = f"{type(error).__name__}:{getattr(error, 'reason', error)}"
            self.p2p_enabled = False
            self._start_streaming()
            return
        self.peer_id = peer_id
        self.registered = True
        self.sim.bind_peer_id(peer_id, self)
        if self.config.claim_cdn and self.config.role == "polluter":
            for i in sorted(self._pollution_targets()):
                self._rpc("declare", lambda i=i: self.sim.tracker.declare_cdn_fetch(peer_id, self.asset.video_id, i))
        self._schedule(self.config.heartbeat_ms, self._heartbeat, "heartbeat")
        self._refresh_candidates(then=self._start_streaming)

    def _pollution_targets(self) -> set[int]:
        out: set[int] = set()
        for spec in self.asset.pollution:
            out |= spec.target_indices
        return out

    def _heartbeat(self) -> None:
        pid = self.peer_id
        self.heartbeats_sent += 1
        self._rpc("heartbeat", lambda: self.sim.tracker.heartbeat(pid))
        self._schedule(self.config.heartbeat_ms, self._heartbeat, "heartbeat")

    def _refresh_candidates(self, then=None) -> None:
        pid = self.peer_id

        def got(result, error):
            if error is None:
                self.candidates = list(result)
                for cand_pid, addr in result:
                    self.candidate_log.append((cand_pid, addr))
                    self._observe(addr)
                if self.config.role == "harvester":
                    for cand_pid, _ in result:
                        self._bind(cand_pid)
            if then is not None:
                then()
            self._schedule(self.config.candidate_refresh_ms, self._refresh_candidates, "candidates")

        self._rpc("candidates", lambda: self.sim.tracker.candidates(pid), got, reply_size=100)

    def leave(self) -> None:
        self.active = False
        self.left = True
        self.cache.clear()  # session-scoped cache

    # -- streaming loop -------------------------------------------------------

    def _start_streaming(self) -> None:
        if self.config.role == "harvester" or self._playing:
            return
        self._playing = True
        self._pump()

    def _pump(self) -> None:
        if self._fetch is not None or not self.active:
            return
        while self._next_fetch < self.n_segments and self._next_fetch in self.cache:
            self._next_fetch += 1
        if self._next_fetch < self.n_segments and self._next_fetch < self._play_pos + self.config.prefetch:
            self.fetch_segment(self._next_fetch)
        if not self._tick_armed and 0 in self.cache:
            self._tick_armed = True
            self._play_tick()

    def _play_tick(self) -> None:
        if self._play_pos >= self.n_segments:
            return
        batch = range(self._play_pos, min(self._play_pos + self.config.playback_rate, self.n_segments))
        missing = [i for i in batch if i not in self.cache]
        if missing:
            self.stats.stalls += 1
            self.stats.stall_ms += 100
            self._schedule(100, self._play_tick, "stall")
            return
        for i in batch:
            self.playback_log.append(self.cache[i].digest)
            self.played_at.append((self.world.now, i))
        duration = sum(self.asset.segments[i].duration_ms for i in batch)
        self._play_pos = batch[-1] + 1
        self._pump()
        if self._play_pos < self.n_segments:
            self._schedule(duration, self._play_tick, "play")

    def _store(self, index: int, data: bytes, source: str) -> None:
        entry = CacheEntry(data, digest(data), source, self.world.now)
        self.cache[index] = entry
        self.cache_log.append((self.world.now, index, entry.digest, source))

    # -- fetching -------------------------------------------------------------

    def fetch_segment(self, index: int) -> None:
        """P2P first from the candidate list, CDN on refusal, timeout or bad bytes."""
        f = _Fetch(index, [], None, self.world.now)
        self._fetch = f
        usable = [pid for pid, _ in self.candidates if pid not in self.banned]
        if not (self.registered and self.p2p_enabled and usable):
            self._cdn_fetch(f)
            return
        f.queue = usable[: self.config.p2p_attempts]
        if not self.config.defense_enabled:
            self._try_next(f)
            return
        pid = self.peer_id

        def got_sim(result, error):
            if error is not None or result is PENDING or not verify_sim(self.sim.tracker.key, result):
                self._cdn_fetch(f)  # no usable SIM yet: CDN only
                return
            f.sim = result
            self._try_next(f)

        self._rpc("get_sim", lambda: self.sim.tracker.get_sim(pid, self.asset.video_id, index), got_sim,
                  reply_size=200)

    def _try_next(self, f: _Fetch) -> None:
        if f is not self._fetch:
            return
        if not f.queue:
            self._cdn_fetch(f)
            return
        target = f.queue.pop(0)
        f.tries += 1
        f.current = target
        self._req_seq += 1
        f.req_id = self._req_seq
        self._bind(target)
        self._send_peer(target, "seg_req", {"req": f.req_id, "video": self.asset.video_id, "index": f.index})
        req = f.req_id

        def timeout():
            if self._fetch is f and f.req_id == req and f.timer is not None:
                self.stats.p2p_timeouts += 1
                f.timer = None
                self._try_next(f)

        f.timer = self._schedule(self.config.p2p_timeout_ms, timeout, "p2p-timeout")

    def _bind(self, target: int) -> None:
        if target in self._bound:
            return
        self._bound.add(target)
        self._send_peer(target, "bind_req", {"addr": self._counterpart_addr()})

    def _cdn_fetch(self, f: _Fetch) -> None:
        index = f.index
        video = self.asset.video_id
        if self.registered:
            pid = self.peer_id
            self._rpc("declare", lambda: self.sim.tracker.declare_cdn_fetch(pid, video, index))
        size = self.asset.segments[index].byte_len
        account = self.customer_id

        def got(data, error):
            if error is not None:
                log.warning("%s: CDN fetch of %d failed: %s", self.node_id, index, error)
                self._fetch = None
                return
            self.stats.add("down", "cdn", self.network, len(data))
            self._store(index, data, "cdn")
            if index in self._pending_reports:
                self._send_report(index)
            self._fetch_done(f)

        self.world.rpc(self.node_id, self.sim.cdn_node, "segment",
                       lambda: self.sim.origin.get_segment(self.canonical.video_id, index, account),
                       self._guard(got), 0, size)

    def _fetch_done(self, f: _Fetch) -> None:
        if self._fetch is f:
            self._fetch = None
            self._next_fetch = max(self._next_fetch, f.index + 1)
        self._pump()

    # -- IM reporting ---------------------------------------------------------

    def on_report_request(self, video_id: str, index: int) -> None:
        entry = self.cache.get(index)
        if entry is not None and entry.source in ("cdn", "local"):
            self._send_report(index)
        else:
            self._pending_reports.add(index)

    def _send_report(self, index: int) -> None:
        if index in self._reported:
            return
        self._reported.add(index)
        self._pending_reports.discard(index)
        entry = self.cache[index]
        im = IntegrityMetadata.compute(entry.data, self.asset.video_id, index)
        pid = self.peer_id

        def call():
            return self.sim.tracker.report_im(pid, im)

        delay = self.config.hash_ms(len(entry.data))
        self._schedule(delay, lambda: self._rpc("report_im", call, lambda r, e: None, request_size=200), "im")

    # -- message handling -----------------------------------------------------

    def handle(self, msg: Message) -> None:
        if self.left:
            return
        body = msg.body
        if msg.kind == "report_request":
            self.on_report_request(*body)
        elif msg.kind == "bind_req":
            self._on_bind_req(body)
        elif msg.kind == "bind_resp":
            self._observe(body["addr"])
            self.bindings.append(BindingExchange(self._counterpart_addr(), body["addr"], True, self.world.now))
        elif msg.kind == "seg_req":
            self.serve_segment(body)
        elif msg.kind == "seg_refuse":
            self._on_refuse(body)
        elif msg.kind == "seg_grant":
            self._on_grant(body)
        elif msg.kind == "seg_data":
            self._on_data(body)

    def _on_bind_req(self, body: dict) -> None:
        self._observe(body["addr"])
        self.bindings.append(BindingExchange(body["addr"], self._counterpart_addr(), True, self.world.now))
        if body.get("sender_pid") is not None:
            self._bound.add(body["sender_pid"])
        self._send_peer(body["sender_pid"], "bind_resp", {"addr": self._counterpart_addr()})

    def serve_segment(self, request: dict) -> bool:
        """Grant or refuse an upload request. Returns True on grant."""
        cfg = self.config
        index = request["index"]
        reply = {"req": request["req"], "index": index}
        held = request.get("video") == self.asset.video_id and index in self.cache
        withheld = (
            not cfg.serve_enabled
            or not self.registered
            or (self.on_cellular and (cfg.cellular_mode in ("leech", "disable") or cfg.mobile == "disable"))
        )
        if withheld or not held:
            self.stats.refusals_sent += 1
            if held:
                self.stats.policy_refusals += 1
            self._send_peer(request["sender_pid"], "seg_refuse", reply)
            return False
        entry = self.cache[index]
        t_send = self.world.now
        size = len(entry.data)
        self.stats.add("up", "p2p", self.network, size)
        self._send_peer(request["sender_pid"], "seg_grant", reply)
        payload = dict(reply, data=entry.data, t_send=t_send)
        if cfg.sender_im:
            im = IntegrityMetadata.compute(entry.data, self.asset.video_id, index)
            payload["im"] = im.digest
            pid = request["sender_pid"]
            self._schedule(cfg.hash_ms(size), lambda: self._send_peer(pid, "seg_data", payload, size), "sender-im")
        else:
            self._send_peer(request["sender_pid"], "seg_data", payload, size)
        return True

    def _current(self, body: dict) -> _Fetch | None:
        f = self._fetch
        if f is None or f.req_id != body["req"] or f.current != body["sender_pid"]:
            return None
        return f

    def _on_refuse(self, body: dict) -> None:
        f = self._current(body)
        if f is None or f.timer is None:
            return
        self.world.cancel(f.timer)
        f.timer = None
        self._try_next(f)

    def _on_grant(self, body: dict) -> None:
        f = self._current(body)
        if f is None or f.timer is None:
            return
        self.world.cancel(f.timer)
        f.timer = None  # data follows on the same ordered channel

    def _on_data(self, body: dict) -> None:
        f = self._current(body)
        data = body["data"]
        sender = body["sender_pid"]
        self.stats.add("down", "p2p", self.network, len(data))
        if self.registered:
            self.sim.tracker.record_p2p_bytes(self.peer_id, len(data))
        if f is None:
            self.stats.discarded_p2p += len(data)
            return
        if f.sim is None:
            self._accept_p2p(f, data, body["t_send"])
            return
        delay = self.config.hash_ms(len(data))
        self._schedule(delay, lambda: self._verify_p2p(f, data, sender, body["t_send"]), "verify")

    def _verify_p2p(self, f: _Fetch, data: bytes, sender: int, t_send: int) -> None:
        im = IntegrityMetadata.compute(data, self.asset.video_id, f.index)
        if im.digest == f.sim.im.digest:
            self._accept_p2p(f, data, t_send)
            return
        self.stats.sim_mismatches += 1
        self.stats.discarded_p2p += len(data)
        self.banned.add(sender)
        me, video, index = self.peer_id, self.asset.video_id, f.index
        self._rpc("misbehavior", lambda: self.sim.tracker.report_misbehavior(me, sender, video, index))
        self._cdn_fetch(f)

    def _accept_p2p(self, f: _Fetch, data: bytes, t_send: int) -> None:
        self._store(f.index, data, "p2p")
        self.latency_samples.append((f.index, self.world.now - t_send))
        self._fetch_done(f)

    # -- attacker views -------------------------------------------------------

    def harvest(self) -> set[NetAddr]:
        """Every distinct counterpart address seen in candidate lists or bindings."""
        return set(self.harvested)


@dataclass
class FreeRideOutcome:
    registered: int
    rejected: dict[str, int]
    viewers: list[Peer]


def free_ride(sim: "Simulation", credential, own_asset: VideoAsset, declared_origin: str,
              viewers: int = 2, join_spacing_ms: int = 1_000, attacker_account: str = "attacker",
              run: bool = True) -> FreeRideOutcome:
    """Put an attacker site's viewers on the PDN with someone else's credential."""
    if own_asset.video_id not in sim.origin.assets:
        sim.origin.add_asset(own_asset)
    peers = []
    for i in range(viewers):
        cfg = PeerConfig(role="free_rider", join_at_ms=sim.world.now + i * join_spacing_ms)
        peers.append(sim.add_peer(cfg, own_asset, credential=credential, declared_origin=declared_origin,
                                  customer_id=attacker_account, name=f"freerider{i}"))
    if run:
        sim.run()
    rejected: dict[str, int] = defaultdict(int)
    for p in peers:
        if p.auth_error:
            rejected[p.auth_error] += 1
    return FreeRideOutcome(sum(p.registered for p in peers), dict(rejected), peers)
