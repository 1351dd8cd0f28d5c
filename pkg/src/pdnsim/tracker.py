"""The PDN server: authentication, stream grouping, candidate exposure,
the integrity-metadata service and the peer blacklist."""

from __future__ import annotations

import hashlib
import hmac
import logging
import random
from collections import Counter
from math import comb
from dataclasses import dataclass, field

from . import auth_token
from .auth_token import AuthError, TokenInvalid, UsageLedger
from .cdn import TRACKER_ACCOUNT, AssetNotFound, OriginStore
from .media import SegmentNotFound
from .simnet import NetAddr

log = logging.getLogger(__name__)

POLICIES = ("unrestricted", "same_country", "same_isp", "relay_only")
DEFAULT_EPOCH = 1619814238  # Unix seconds at simulated t=0


class UnknownKey(AuthError):
    pass


class OriginRejected(AuthError):
    pass


class PeerRejected(LookupError):
    """Unknown or blacklisted peer."""


class ReportRejected(ValueError):
    pass


class NotFound(LookupError):
    pass


@dataclass(frozen=True)
class StaticKey:
    key: str


@dataclass(frozen=True)
class Token:
    token: auth_token.SignedToken | bytes | str


@dataclass
class CustomerAccount:
    customer_id: str
    api_key: str
    whitelist_enabled: bool = False
    allowed_origins: frozenset[str] = frozenset()
    token_secret: bytes = b""
    billed_p2p_bytes: int = 0
    billed_sessions: int = 0


@dataclass
class PeerRecord:
    peer_id: int
    addr: NetAddr
    stream_id: str
    video_id: str
    declared_origin: str
    geo: str
    isp: str
    customer_id: str
    last_seen: int
    node_id: str | None = None
    blacklisted: bool = False
    blacklist_reason: str | None = None


@dataclass(frozen=True)
class CandidatePolicy:
    variant: str = "unrestricted"
    max_candidates: int = 20

    def __post_init__(self):
        if self.variant not in POLICIES:
            raise ValueError(f"unknown candidate policy {self.variant!r}")
        if self.max_candidates <= 0:
            raise ValueError("max_candidates must be > 0")


@dataclass(frozen=True)
class IntegrityMetadata:
    video_id: str
    segment_index: int
    digest: str

    @classmethod
    def compute(cls, data: bytes, video_id: str, index: int) -> "IntegrityMetadata":
        vid = video_id.encode()
        # content | video id | len(video id) | index: parsed from the end, unambiguous
        h = hashlib.sha256(data)
        h.update(vid)
        h.update(len(vid).to_bytes(4, "big"))
        h.update(int(index).to_bytes(8, "big"))
        return cls(video_id, int(index), h.hexdigest())

    def signing_bytes(self) -> bytes:
        return f"{self.video_id}\n{self.segment_index}\n{self.digest}".encode()


@dataclass(frozen=True)
class SignedIM:
    im: IntegrityMetadata
    signature: bytes


def sign_im(key: bytes, im: IntegrityMetadata) -> SignedIM:
    return SignedIM(im, hmac.new(key, im.signing_bytes(), hashlib.sha256).digest())


def verify_sim(key: bytes, sim: SignedIM) -> bool:
    expected = hmac.new(key, sim.im.signing_bytes(), hashlib.sha256).digest()
    return hmac.compare_digest(expected, sim.signature)


class _Pending:
    def __repr__(self):
        return "PENDING"

    def __bool__(self):
        return False


PENDING = _Pending()

COLLECTING = "collecting"
AUTHENTIC = "authentic"
CONFLICT_RESOLVED = "conflicted_resolved"
UNRESOLVED = "unresolved"


@dataclass
class IMEntry:
    video_id: str
    index: int
    pool: list[int] = field(default_factory=list)  # declared CDN fetchers, arrival order
    selected: tuple[int, ...] = ()
    k: int = 0
    reports: dict[int, str] = field(default_factory=dict)
    state: str = COLLECTING
    sim: SignedIM | None = None
    opened_at: int = 0
    timer: object = None

    @property
    def final(self) -> bool:
        return self.state in (AUTHENTIC, CONFLICT_RESOLVED)


def draw_reporters(eligible, k: int, rng: random.Random) -> tuple[int, ...]:
    """Uniform subset of size ``min(k, len(eligible))``, returned sorted."""
    pool = sorted(eligible)
    return tuple(sorted(rng.sample(pool, min(k, len(pool)))))


class Tracker:
    """PDN server state. Time comes from the attached world, if any."""

    def __init__(self, world=None, origin: OriginStore | None = None, *,
                 key: bytes = b"tracker-im-key", policy: CandidatePolicy | None = None,
                 k: int = 3, liveness_timeout_ms: int = 10_000, auth_mode: str = "static_key",
                 relay_addr: NetAddr | None = None, epoch: int = DEFAULT_EPOCH,
                 im_window_ms: int = 10_000, im_pool_size: int | None = None,
                 token_skew: int = 0, seed: int = 0, node_id: str = "tracker"):
        if auth_mode not in ("static_key", "token"):
            raise ValueError(f"unknown auth mode {auth_mode!r}")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.world = world
        self.origin = origin
        self.key = key
        self.policy = policy or CandidatePolicy()
        self.k = k
        self.liveness_timeout_ms = liveness_timeout_ms
        self.auth_mode = auth_mode
        self.relay_addr = relay_addr
        self.epoch = epoch
        self.im_window_ms = im_window_ms
        self.im_pool_size = im_pool_size or k
        self.token_skew = token_skew
        self.node_id = node_id
        self._seed = seed
        self._rngs: dict[str, random.Random] = {}
        self._manual_now = 0

        self.accounts: dict[str, CustomerAccount] = {}
        self._by_key: dict[str, CustomerAccount] = {}
        self.peers: dict[int, PeerRecord] = {}
        self._next_id = 1
        self._rounds: Counter[int] = Counter()
        self.usage = UsageLedger()
        self.ledger: dict[tuple[str, int], IMEntry] = {}
        # hook(peer_id, video_id, index) fired for each selected reporter
        self.on_reporter_selected = None
        self.stats = Counter()
        self.blacklist_log: list[tuple[int, int, str]] = []  # (time, peer, reason)
        self.auth_log: list[tuple[int, str, str]] = []  # (time, outcome, detail)

    # -- plumbing ---------------------------------------------------------

    def now(self) -> int:
        return self.world.now if self.world is not None else self._manual_now

    def unix_now(self) -> int:
        return self.epoch + self.now() // 1000

    def rng(self, label: str) -> random.Random:
        if self.world is not None:
            return self.world.rng(f"tracker:{label}")
        r = self._rngs.get(label)
        if r is None:
            material = f"{self._seed}\x1f{label}".encode()
            r = random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "little"))
            self._rngs[label] = r
        return r

    def add_account(self, account: CustomerAccount) -> CustomerAccount:
        if account.api_key in self._by_key:
            raise ValueError("api_key already in use")
        self.accounts[account.customer_id] = account
        self._by_key[account.api_key] = account
        return account

    def _peer(self, peer_id: int) -> PeerRecord:
        rec = self.peers.get(peer_id)
        if rec is None:
            raise PeerRejected(f"unknown peer {peer_id}")
        return rec

    def alive(self, rec: PeerRecord) -> bool:
        return self.now() - rec.last_seen <= self.liveness_timeout_ms

    # -- registration -----------------------------------------------------

    def register(self, credential, declared_origin: str, stream_id: str, addr: NetAddr,
                 geo: str, isp: str, video_id: str = "", node_id: str | None = None) -> int:
        """Authenticate a joining peer and open its session.

        The declared origin is whatever the client says it is; the tracker
        has no way to check it.
        """
        try:
            account = self._authenticate(credential, declared_origin, video_id)
        except AuthError as exc:
            self.stats["auth_rejected"] += 1
            self.auth_log.append((self.now(), "rejected", f"{type(exc).__name__}:{exc}"))
            raise
        peer_id = self._next_id
        self._next_id += 1
        self.peers[peer_id] = PeerRecord(peer_id, addr, stream_id, video_id, declared_origin,
                                         geo, isp, account.customer_id, self.now(), node_id)
        account.billed_sessions += 1
        self.stats["registered"] += 1
        self.auth_log.append((self.now(), "accepted", f"{account.customer_id}:{peer_id}"))
        return peer_id

    def _authenticate(self, credential, declared_origin: str, video_id: str) -> CustomerAccount:
        if isinstance(credential, StaticKey):
            if self.auth_mode != "static_key":
                raise UnknownKey("static keys are not accepted in token mode")
            account = self._by_key.get(credential.key)
            if account is None:
                raise UnknownKey("no account for key")
            if account.whitelist_enabled and declared_origin not in account.allowed_origins:
                raise OriginRejected(declared_origin)
            return account
        if isinstance(credential, Token):
            if self.auth_mode != "token":
                raise UnknownKey("tokens are not accepted in static-key mode")
            secrets = {c.customer_id: c.token_secret for c in self.accounts.values() if c.token_secret}
            accepted = auth_token.verify(credential.token, self.unix_now(), video_id, self.usage,
                                         secrets, skew=self.token_skew)
            return self.accounts[accepted.customer_id]
        raise TypeError(f"unsupported credential {type(credential).__name__}")

    def record_p2p_bytes(self, peer_id: int, nbytes: int) -> None:
        rec = self._peer(peer_id)
        self.accounts[rec.customer_id].billed_p2p_bytes += nbytes

    # -- candidates & liveness -------------------------------------------

    def candidates(self, peer_id: int) -> list[tuple[int, NetAddr]]:
        """Other live, non-blacklisted peers on the same stream, filtered by policy.

        Selection is a seeded shuffle keyed by (requester, round), truncated
        to ``max_candidates``, then returned in ascending peer id.
        """
        me = self._peer(peer_id)
        if me.blacklisted:
            raise PeerRejected(f"peer {peer_id} is blacklisted")
        pol = self.policy
        pool = [r for r in self.peers.values()
                if r.peer_id != peer_id and r.stream_id == me.stream_id
                and not r.blacklisted and self.alive(r)]
        if pol.variant == "same_country":
            pool = [r for r in pool if r.geo == me.geo]
        elif pol.variant == "same_isp":
            pool = [r for r in pool if r.isp == me.isp]
        pool.sort(key=lambda r: r.peer_id)
        rnd = self._rounds[peer_id]
        self._rounds[peer_id] += 1
        self.rng(f"cand:{peer_id}:{rnd}").shuffle(pool)
        chosen = sorted(pool[: pol.max_candidates], key=lambda r: r.peer_id)
        if pol.variant == "relay_only":
            if self.relay_addr is None:
                raise RuntimeError("relay_only policy needs a relay address")
            return [(r.peer_id, self.relay_addr) for r in chosen]
        return [(r.peer_id, r.addr) for r in chosen]

    def heartbeat(self, peer_id: int, now: int | None = None) -> None:
        rec = self._peer(peer_id)
        if now is not None and self.world is None:
            self._manual_now = max(self._manual_now, now)
        if rec.blacklisted:
            return
        rec.last_seen = self.now() if now is None else now

    def advance(self, now: int) -> None:
        """Set the clock when running without a world."""
        if self.world is not None:
            raise RuntimeError("clock is owned by the world")
        self._manual_now = max(self._manual_now, now)

    # -- integrity metadata ----------------------------------------------

    def _entry(self, video_id: str, index: int) -> IMEntry:
        key = (video_id, index)
        entry = self.ledger.get(key)
        if entry is None:
            entry = self.ledger[key] = IMEntry(video_id, index, opened_at=self.now())
        return entry

    def _eligible(self, entry: IMEntry) -> list[int]:
        return [p for p in entry.pool if not self.peers[p].blacklisted]

    def declare_cdn_fetch(self, peer_id: int, video_id: str, index: int) -> None:
        """A peer announces it is fetching this segment from the CDN.

        The declaration is taken on trust; it makes the peer eligible to report.
        """
        rec = self._peer(peer_id)
        if rec.blacklisted or rec.video_id != video_id:
            return
        entry = self._entry(video_id, index)
        if entry.final or entry.selected or peer_id in entry.pool:
            return
        entry.pool.append(peer_id)
        if len(self._eligible(entry)) >= self.im_pool_size:
            self._select(entry)
        elif len(entry.pool) == 1 and self.world is not None and self.im_window_ms > 0:
            entry.timer = self.world.schedule(self.im_window_ms, lambda: self._window_expired(entry),
                                              label=f"im-window:{video_id}:{index}")

    def _window_expired(self, entry: IMEntry) -> None:
        entry.timer = None
        if not entry.selected and not entry.final and self._eligible(entry):
            self._select(entry)

    def _select(self, entry: IMEntry) -> None:
        if entry.timer is not None and self.world is not None:
            self.world.cancel(entry.timer)
            entry.timer = None
        chosen = self.select_reporters(entry.video_id, entry.index, self.k)
        for p in chosen:
            if self.on_reporter_selected is not None:
                self.on_reporter_selected(p, entry.video_id, entry.index)

    def select_reporters(self, video_id: str, index: int, k: int | None = None) -> set[int]:
        """Draw reporters uniformly from the eligible CDN fetchers."""
        entry = self._entry(video_id, index)
        if entry.final or entry.reports:
            return set(entry.selected)
        eligible = self._eligible(entry)
        if not eligible:
            return set()
        k = self.k if k is None else k
        entry.selected = draw_reporters(eligible, k, self.rng(f"reporters:{video_id}:{index}"))
        entry.k = len(entry.selected)
        self.stats["selections"] += 1
        return set(entry.selected)

    def report_im(self, peer_id: int, im: IntegrityMetadata) -> SignedIM | None:
        """Record one reporter's IM. Finalizes once every selected reporter is in."""
        self._peer(peer_id)
        entry = self.ledger.get((im.video_id, im.segment_index))
        try:
            if entry is None or peer_id not in entry.selected:
                raise ReportRejected("unsolicited report")
            if entry.final:
                raise ReportRejected("entry already finalized")
            if peer_id in entry.reports:
                raise ReportRejected("duplicate report")
            if self.peers[peer_id].blacklisted:
                raise ReportRejected("reporter is blacklisted")
        except ReportRejected:
            self.stats["suspicious_reports"] += 1
            raise
        entry.reports[peer_id] = im.digest
        self.stats["reports"] += 1
        if len(entry.reports) == entry.k:
            return self.finalize_im(im.video_id, im.segment_index)
        return None

    def finalize_im(self, video_id: str, index: int) -> SignedIM | None:
        entry = self.ledger.get((video_id, index))
        if entry is None:
            raise NotFound(f"no IM entry for {video_id}#{index}")
        if entry.final:
            return entry.sim
        if len(entry.reports) < entry.k or entry.k == 0:
            raise ReportRejected("reports still missing")
        digests = set(entry.reports.values())
        if len(digests) == 1:
            entry.sim = sign_im(self.key, IntegrityMetadata(video_id, index, digests.pop()))
            entry.state = AUTHENTIC
            self.stats["authentic"] += 1
            return entry.sim
        self.stats["conflicts"] += 1
        try:
            if self.origin is None:
                raise ConnectionError("no origin configured")
            data = self.origin.get_segment(video_id, index, TRACKER_ACCOUNT)
        except (ConnectionError, AssetNotFound, SegmentNotFound) as exc:
            log.warning("conflict on %s#%d unresolved: %s", video_id, index, exc)
            entry.state = UNRESOLVED
            self.stats["unresolved"] += 1
            return None
        self.stats["origin_fetches"] += 1
        truth = IntegrityMetadata.compute(data, video_id, index)
        entry.sim = sign_im(self.key, truth)
        entry.state = CONFLICT_RESOLVED
        for reporter, reported in sorted(entry.reports.items()):
            if reported != truth.digest:
                self.blacklist(reporter, f"falsified IM for {video_id}#{index}")
        return entry.sim

    def retry_unresolved(self, video_id: str, index: int) -> SignedIM | None:
        entry = self.ledger[(video_id, index)]
        if entry.state == UNRESOLVED:
            entry.state = COLLECTING
            return self.finalize_im(video_id, index)
        return entry.sim

    def get_sim(self, peer_id: int, video_id: str, index: int):
        self._peer(peer_id)
        if self.origin is not None:
            try:
                asset = self.origin.asset(video_id)
            except AssetNotFound:
                raise NotFound(video_id) from None
            if not 0 <= index < len(asset.segments):
                raise NotFound(f"{video_id}#{index}")
        entry = self.ledger.get((video_id, index))
        if entry is None or not entry.final:
            return PENDING
        return entry.sim

    # -- blacklist --------------------------------------------------------

    def blacklist(self, peer_id: int, reason: str) -> None:
        rec = self._peer(peer_id)
        if rec.blacklisted:
            return
        rec.blacklisted = True
        rec.blacklist_reason = reason
        self.blacklist_log.append((self.now(), peer_id, reason))
        self.stats["blacklisted"] += 1
        log.info("blacklisted peer %d: %s", peer_id, reason)
        # a pending reporter that is now blacklisted is replaced or dropped
        for entry in list(self.ledger.values()):
            if entry.final or peer_id not in entry.selected or peer_id in entry.reports:
                continue
            spare = [p for p in self._eligible(entry) if p not in entry.selected]
            kept = [p for p in entry.selected if p != peer_id]
            added = []
            if spare:
                added = [self.rng(f"replace:{entry.video_id}:{entry.index}").choice(sorted(spare))]
            entry.selected = tuple(sorted(kept + added))
            entry.k = len(entry.selected)
            for p in added:
                if self.on_reporter_selected is not None:
                    self.on_reporter_selected(p, entry.video_id, entry.index)
            if entry.k and len(entry.reports) == entry.k:
                self.finalize_im(entry.video_id, entry.index)

    def report_misbehavior(self, reporter_id: int, offender_id: int, video_id: str, index: int) -> bool:
        """A peer saw bytes from ``offender_id`` that failed SIM verification."""
        reporter = self._peer(reporter_id)
        if reporter.blacklisted:
            return False
        entry = self.ledger.get((video_id, index))
        if entry is None or not entry.final:
            return False
        self.blacklist(offender_id, f"served segment failing SIM {video_id}#{index}")
        return True


def hypergeometric_all_malicious(pool: int, malicious: int, k: int) -> float:
    """P(all k uniformly drawn reporters are malicious)."""
    if k > pool:
        k = pool
    return comb(malicious, k) / comb(pool, k) if malicious >= k else 0.0
