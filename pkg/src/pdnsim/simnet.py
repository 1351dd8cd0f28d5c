"""Deterministic discrete-event network: clock, event queue, links and STUN.

Time is integer milliseconds. Events fire in ``(fire_time, sequence)`` order,
sequence being assigned in scheduling order, so runs are reproducible and
ties are FIFO. Every processed event is folded into a running trace hash.
"""

from __future__ import annotations

import hashlib
import heapq
import ipaddress
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable

log = logging.getLogger(__name__)

STUN_NODE = "stun"


class NodeNotFound(LookupError):
    pass


@dataclass(frozen=True)
class NetAddr:
    public_ip: int
    port: int
    private_ip: int
    behind_nat: bool = False
    country: str = "ZZ"
    isp: str = "isp0"

    def __post_init__(self):
        if not 0 <= self.public_ip < 2**32 or not 0 <= self.private_ip < 2**32:
            raise ValueError("addresses are 32-bit")
        if not 0 <= self.port < 2**16:
            raise ValueError("port is 16-bit")
        if self.behind_nat and self.public_ip == self.private_ip:
            raise ValueError("a NATed node needs distinct public and private addresses")
        if not self.country or not self.isp:
            raise ValueError("country and isp labels must be non-empty")

    @property
    def endpoint(self) -> str:
        return f"{ipaddress.IPv4Address(self.public_ip)}:{self.port}"

    @property
    def is_bogon(self) -> bool:
        ip = ipaddress.IPv4Address(self.public_ip)
        return ip.is_private or ip.is_reserved or ip.is_unspecified or ip in _CGNAT

    @staticmethod
    def ip(text: str) -> int:
        return int(ipaddress.IPv4Address(text))


_CGNAT = ipaddress.IPv4Network("100.64.0.0/10")


@dataclass(frozen=True)
class LinkModel:
    latency: int = 20  # ms
    bandwidth: int = 10_000_000  # bytes per second

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")

    def transfer_ms(self, size_bytes: int) -> int:
        return self.latency + math.ceil(size_bytes * 1000 / self.bandwidth)


@dataclass(order=True)
class SimEvent:
    fire_time: int
    sequence: int
    label: str = field(compare=False)
    action: Callable[[], Any] | None = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


@dataclass
class Message:
    kind: str
    src: str
    dst: str
    body: Any = None
    size: int = 0


@dataclass
class Node:
    node_id: str
    addr: NetAddr
    link: LinkModel
    handler: Callable[[Message], Any] | None = None
    broken_reflection: bool = False


class World:
    """Single-threaded simulation world.

    All randomness comes from ``rng(label)`` sub-streams derived from the
    world seed, so adding a consumer never perturbs another one.
    """

    def __init__(self, seed: int = 0, default_link: LinkModel | None = None):
        self.seed = int(seed)
        self.now = 0
        self.default_link = default_link or LinkModel()
        self.nodes: dict[str, Node] = {}
        self.pair_links: dict[tuple[str, str], LinkModel] = {}
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._last_fire = 0
        self._last_delivery: dict[tuple[str, str], int] = {}
        self._trace = hashlib.sha256()
        self.processed = 0
        self._rngs: dict[str, random.Random] = {}

    # -- randomness -------------------------------------------------------

    def rng(self, label: str) -> random.Random:
        r = self._rngs.get(label)
        if r is None:
            material = f"{self.seed}\x1f{label}".encode()
            r = random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "little"))
            self._rngs[label] = r
        return r

    # -- topology ---------------------------------------------------------

    def add_node(self, node_id: str, addr: NetAddr, link: LinkModel | None = None,
                 handler=None, broken_reflection: bool = False) -> Node:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node {node_id!r}")
        node = Node(node_id, addr, link or self.default_link, handler, broken_reflection)
        self.nodes[node_id] = node
        return node

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NodeNotFound(node_id) from None

    def set_link(self, a: str, b: str, link: LinkModel, symmetric: bool = True) -> None:
        self.pair_links[(a, b)] = link
        if symmetric:
            self.pair_links[(b, a)] = link

    def link_between(self, src: str, dst: str) -> LinkModel:
        override = self.pair_links.get((src, dst))
        if override is not None:
            return override
        a, b = self.node(src).link, self.node(dst).link
        # slower endpoint dominates
        return LinkModel(max(a.latency, b.latency), min(a.bandwidth, b.bandwidth))

    # -- events -----------------------------------------------------------

    def schedule(self, delay_ms: int, action: Callable[[], Any] | None = None,
                 label: str = "timer") -> SimEvent:
        if delay_ms < 0:
            raise ValueError("delay must be >= 0")
        return self._push(self.now + int(delay_ms), label, action)

    def _push(self, fire_time: int, label: str, action) -> SimEvent:
        ev = SimEvent(fire_time, self._seq, label, action)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    @staticmethod
    def cancel(event: SimEvent) -> None:
        event.cancelled = True

    def _arrival(self, src: str, dst: str, size_bytes: int) -> int:
        at = self.now + self.link_between(src, dst).transfer_ms(size_bytes)
        # FIFO per ordered pair: never overtake an earlier message
        at = max(at, self._last_delivery.get((src, dst), 0))
        self._last_delivery[(src, dst)] = at
        return at

    def send(self, src: str, dst: str, message: Message | Any, size_bytes: int = 0) -> SimEvent:
        """Deliver ``message`` to ``dst``'s handler after the link transfer time."""
        self.node(src)
        target = self.node(dst)
        if not isinstance(message, Message):
            message = Message("data", src, dst, message, size_bytes)
        else:
            message.src, message.dst, message.size = src, dst, size_bytes
        at = self._arrival(src, dst, size_bytes)

        def deliver():
            if target.handler is not None:
                target.handler(message)

        return self._push(at, f"msg:{message.kind}:{src}>{dst}:{size_bytes}", deliver)

    def rpc(self, src: str, dst: str, kind: str, call: Callable[[], Any],
            on_reply: Callable[[Any, BaseException | None], Any] | None = None,
            request_size: int = 0, reply_size: int = 0) -> SimEvent:
        """Request/response round trip of control messages.

        ``call`` runs when the request reaches ``dst``; its result (or the
        exception it raised) is handed to ``on_reply`` when the response
        arrives back at ``src``.
        """
        self.node(src)
        self.node(dst)

        def at_server():
            try:
                result, error = call(), None
            except Exception as exc:  # delivered to the caller, like a wire error
                result, error = None, exc
            back_at = self._arrival(dst, src, reply_size)
            if on_reply is not None:
                self._push(back_at, f"rpc-reply:{kind}:{dst}>{src}", lambda: on_reply(result, error))

        at = self._arrival(src, dst, request_size)
        return self._push(at, f"rpc:{kind}:{src}>{dst}", at_server)

    # -- STUN -------------------------------------------------------------

    def add_stun_server(self, addr: NetAddr | None = None, link: LinkModel | None = None) -> Node:
        addr = addr or NetAddr(NetAddr.ip("198.51.100.1"), 3478, NetAddr.ip("198.51.100.1"))
        return self.add_node(STUN_NODE, addr, link)

    def reflect(self, node_id: str) -> NetAddr:
        node = self.node(node_id)
        a = node.addr
        if node.broken_reflection:
            # failed binding: the private address leaks instead of the mapping
            return NetAddr(a.private_ip, a.port, a.private_ip, False, a.country, a.isp)
        return NetAddr(a.public_ip, a.port, a.public_ip, False, a.country, a.isp)

    def stun_query(self, node_id: str, on_response: Callable[[NetAddr], Any] | None = None) -> NetAddr:
        """Binding request to the STUN node.

        Returns the reflected address immediately; ``on_response`` receives it
        after one simulated round trip.
        """
        if STUN_NODE not in self.nodes:
            raise NodeNotFound("no STUN server in this world")
        self.node(node_id)
        reflected = self.reflect(node_id)
        cb = (lambda result, error: on_response(result)) if on_response else None
        self.rpc(node_id, STUN_NODE, "stun", lambda: reflected, cb)
        return reflected

    # -- running ----------------------------------------------------------

    def _head(self) -> SimEvent | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0] if self._queue else None

    def step(self) -> bool:
        if self._head() is not None:
            ev = heapq.heappop(self._queue)
            assert ev.fire_time >= self._last_fire, "causality violated"
            self._last_fire = ev.fire_time
            self.now = ev.fire_time
            self._trace.update(f"{ev.fire_time}|{ev.sequence}|{ev.label}\n".encode())
            self.processed += 1
            if ev.action is not None:
                ev.action()
            return True
        return False

    def run_until(self, t_ms: int) -> int:
        if t_ms < self.now:
            raise ValueError("cannot run backwards")
        count = 0
        while (head := self._head()) is not None and head.fire_time <= t_ms:
            self.step()
            count += 1
        self.now = t_ms
        return count

    def run(self, max_events: int | None = None) -> int:
        count = 0
        while self.step():
            count += 1
            if max_events is not None and count >= max_events:
                break
        return count

    @property
    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    @property
    def trace_hash(self) -> str:
        return self._trace.hexdigest()
