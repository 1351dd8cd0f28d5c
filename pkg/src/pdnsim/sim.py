"""Wiring of one simulated PDN: world, STUN, origin, tracker, relay, peers."""

from __future__ import annotations

from .cdn import OriginStore
from .media import VideoAsset
from .peer import Peer, PeerConfig
from .simnet import LinkModel, Message, NetAddr, World
from .tracker import CandidatePolicy, CustomerAccount, Tracker

SERVER_LINK = LinkModel(latency=10, bandwidth=1_000_000_000)
PUBLIC_BASE = NetAddr.ip("81.0.0.0")
PRIVATE_BASE = NetAddr.ip("10.0.0.0")


class Simulation:
    def __init__(self, seed: int = 0, *, peer_link: LinkModel | None = None,
                 server_link: LinkModel = SERVER_LINK, policy: CandidatePolicy | None = None,
                 tracker_options: dict | None = None):
        self.world = World(seed, default_link=peer_link or LinkModel())
        self.world.add_stun_server(link=server_link)
        self.cdn_node = "cdn"
        self.tracker_node = "tracker"
        self.relay_node = "relay"
        self.origin = OriginStore(self.cdn_node)
        self.world.add_node(self.cdn_node, _server_addr("192.0.2.10", 443), server_link)
        self.world.add_node(self.tracker_node, _server_addr("192.0.2.20", 443), server_link)
        self.relay_addr = _server_addr("192.0.2.30", 3478)
        self.world.add_node(self.relay_node, self.relay_addr, server_link, handler=self._relay)
        self.tracker = Tracker(self.world, self.origin, policy=policy, relay_addr=self.relay_addr,
                               **(tracker_options or {}))
        self.tracker.on_reporter_selected = self._notify_reporter
        self.peers: dict[str, Peer] = {}
        self._by_pid: dict[int, Peer] = {}
        self._addr_counter = 0
        self.relayed_bytes = 0

    # -- setup -------------------------------------------------------------

    def add_asset(self, asset: VideoAsset) -> None:
        self.origin.add_asset(asset)

    def add_customer(self, account: CustomerAccount) -> CustomerAccount:
        return self.tracker.add_account(account)

    def allocate_addr(self, *, country: str = "US", isp: str = "isp0", behind_nat: bool = True) -> NetAddr:
        n = self._addr_counter
        self._addr_counter += 1
        rng = self.world.rng("addr")
        public = PUBLIC_BASE + (n // 250) * 256 + 1 + n % 250
        port = rng.randrange(1024, 65536)
        private = PRIVATE_BASE + (n // 250) * 256 + 2 + n % 250 if behind_nat else public
        return NetAddr(public, port, private, behind_nat, country, isp)

    def add_peer(self, config: PeerConfig, asset: VideoAsset, *, credential=None,
                 declared_origin: str = "", customer_id: str = "", name: str | None = None,
                 country: str = "US", isp: str = "isp0", behind_nat: bool = True,
                 broken_reflection: bool = False, link: LinkModel | None = None,
                 canonical: VideoAsset | None = None) -> Peer:
        node_id = name or f"peer{len(self.peers)}"
        addr = self.allocate_addr(country=country, isp=isp, behind_nat=behind_nat)
        peer = Peer(self, node_id, config, asset, credential, declared_origin, customer_id, canonical)
        self.world.add_node(node_id, addr, link, handler=peer.handle, broken_reflection=broken_reflection)
        self.peers[node_id] = peer
        peer.start()
        return peer

    # -- routing -----------------------------------------------------------

    def bind_peer_id(self, peer_id: int, peer: Peer) -> None:
        self._by_pid[peer_id] = peer

    def node_of(self, peer_id: int) -> str:
        return self._by_pid[peer_id].node_id

    def peer_by_id(self, peer_id: int) -> Peer:
        return self._by_pid[peer_id]

    def _notify_reporter(self, peer_id: int, video_id: str, index: int) -> None:
        self.world.send(self.tracker_node, self.node_of(peer_id),
                        Message("report_request", self.tracker_node, "", (video_id, index)))

    def _relay(self, msg: Message) -> None:
        dst, kind, body, size = msg.body
        self.relayed_bytes += size
        self.world.send(self.relay_node, dst, Message(kind, self.relay_node, dst, body), size)

    # -- running -----------------------------------------------------------

    def default_horizon(self) -> int:
        ends = [p.config.join_at_ms + sum(s.duration_ms for s in p.asset.segments)
                for p in self.peers.values()]
        return max(ends, default=0) + 15_000

    def run(self, until: int | None = None) -> int:
        return self.world.run_until(self.default_horizon() if until is None else until)


def _server_addr(ip: str, port: int) -> NetAddr:
    value = NetAddr.ip(ip)
    return NetAddr(value, port, value, False, "ZZ", "server")
