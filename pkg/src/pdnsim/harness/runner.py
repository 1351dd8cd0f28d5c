"""Build a Simulation from a ScenarioConfig and collect per-run metrics."""

from __future__ import annotations

import dataclasses
from statistics import mean

from ..auth_token import issue
from ..cdn import TRACKER_ACCOUNT, offload_ratio
from ..media import PollutionSpec, VideoAsset, build_video, forge_manifest, pollute
from ..peer import Peer, PeerConfig
from ..sim import Simulation
from ..simnet import LinkModel
from ..tracker import CandidatePolicy, CustomerAccount, StaticKey, Token
from .config import PeerGroup, ScenarioConfig

ATTACKER = "attacker"
CUSTOMERS = {
    "victim": ("victim-api-key-3f9a", b"victim-token-secret"),
    ATTACKER: ("attacker-api-key-77c1", b"attacker-token-secret"),
}


def build_asset(cfg: ScenarioConfig) -> VideoAsset:
    s = cfg.stream
    return build_video(s.video_id, s.duration_s, s.segment_duration_s, s.generation_seed, s.bytes_per_second)


def token_credential(sim: Simulation, customer: str, video_ids, ttl: int, usage_limit: int):
    """Customer web-server stub: signs a fresh token when the viewer loads the page."""
    secret = sim.tracker.accounts[customer].token_secret

    def make(peer: Peer):
        signed = issue(secret, customer, peer.node_id, list(video_ids), ttl, usage_limit, sim.tracker.unix_now())
        peer.issued_token = signed
        return Token(signed)

    return make


def draw(rng, dist: dict[str, float]) -> str:
    labels = sorted(dist)
    return rng.choices(labels, weights=[dist[k] for k in labels])[0]


def build_sim(cfg: ScenarioConfig, *, policy: str | None = None, groups: list[PeerGroup] | None = None,
              asset: VideoAsset | None = None, tracker_overrides: dict | None = None) -> tuple[Simulation, VideoAsset]:
    t = cfg.tracker
    tracker_options = dict(k=t.k, liveness_timeout_ms=t.liveness_timeout_ms, auth_mode=t.auth_mode,
                           im_window_ms=t.im_window_ms)
    tracker_options.update(tracker_overrides or {})
    sim = Simulation(
        cfg.seed,
        peer_link=LinkModel(cfg.link.latency_ms, cfg.link.bandwidth_bps),
        policy=CandidatePolicy(policy or t.policy, t.max_candidates),
        tracker_options=tracker_options,
    )
    for cid, (key, secret) in CUSTOMERS.items():
        sim.add_customer(CustomerAccount(
            cid, key,
            whitelist_enabled=t.whitelist and cid == "victim",
            allowed_origins=frozenset(t.allowed_origins) if cid == "victim" else frozenset(),
            token_secret=secret,
        ))
    asset = asset or build_asset(cfg)
    sim.add_asset(asset)
    roster_rng = sim.world.rng("roster")
    for gi, g in enumerate(groups if groups is not None else cfg.peers):
        for j in range(g.count):
            name = f"{g.name or g.role}{j}" if g.count > 1 or not g.name else g.name
            add_group_peer(sim, cfg, g, j, name, asset, roster_rng)
    return sim, asset


def add_group_peer(sim: Simulation, cfg: ScenarioConfig, g: PeerGroup, j: int, name: str,
                   asset: VideoAsset, rng) -> Peer:
    pc = PeerConfig(
        role=g.role, deployment=g.deployment, mobile=g.mobile, cellular_mode=g.cellular_mode,
        network_type=g.network_type, defense_enabled=g.defense, prefetch=g.prefetch,
        p2p_attempts=g.p2p_attempts, join_at_ms=g.join_at_ms + j * g.join_spacing_ms,
        leave_at_ms=g.leave_at_ms, serve_enabled=g.serve, preloaded=g.preloaded,
        sender_im=g.sender_im, hash_rate=g.hash_rate,
    )
    held = asset
    if g.pollute:
        held = pollute(held, PollutionSpec(g.pollute, cfg.run.pollution_seed))
    if g.forge_manifest:
        held = forge_manifest(held, cfg.run.pollution_seed)
    country = draw(rng, g.countries)
    isp = draw(rng, g.isps)
    behind_nat = rng.random() < g.behind_nat
    broken = rng.random() < g.broken_reflection
    if cfg.tracker.auth_mode == "token":
        cred = token_credential(sim, g.customer, [asset.video_id], cfg.tracker.token_ttl, cfg.tracker.token_usage_limit)
    else:
        cred = StaticKey(CUSTOMERS[g.customer][0])
    return sim.add_peer(pc, held, credential=cred, declared_origin=g.declared_origin, customer_id=g.customer,
                        name=name, country=country, isp=isp, behind_nat=behind_nat,
                        broken_reflection=broken, canonical=asset)


# -- metrics -------------------------------------------------------------------


def polluted_indices(peer: Peer, canonical: VideoAsset) -> list[int]:
    played = [i for _, i in peer.played_at]
    return [i for i, d in zip(played, peer.playback_log) if d != canonical.segments[i].content_digest]


def propagation_curve(sim: Simulation, canonical: VideoAsset, end: int, step: int) -> list[list[float]]:
    """Fraction of honest peers holding at least one polluted segment, over time."""
    honest = [p for p in sim.peers.values() if p.config.role == "honest"]
    if not honest:
        return []
    first_bad = []
    for p in honest:
        bad = [t for t, i, d, _ in p.cache_log if d != canonical.segments[i].content_digest]
        first_bad.append(min(bad) if bad else None)
    curve = []
    for t in range(0, end + 1, step):
        holding = sum(1 for fb in first_bad if fb is not None and fb <= t)
        curve.append([t, round(holding / len(honest), 6)])
    return curve


def peer_row(p: Peer, canonical: VideoAsset) -> dict:
    bad = polluted_indices(p, canonical)
    lat = [v for _, v in p.latency_samples]
    return {
        "node": p.node_id,
        "role": p.config.role,
        "network": p.network,
        "country": p.world.node(p.node_id).addr.country,
        "cellular_mode": p.config.cellular_mode,
        "deployment": p.config.deployment,
        "defense": p.config.defense_enabled,
        "p2p_enabled": p.p2p_enabled,
        "registered": p.registered,
        "peer_id": p.peer_id,
        "blacklisted": bool(p.peer_id and p.sim.tracker.peers[p.peer_id].blacklisted),
        "auth_error": p.auth_error,
        "bytes": p.stats.bytes,
        "down_cdn": p.stats.total("down", "cdn"),
        "down_p2p": p.stats.total("down", "p2p"),
        "up_p2p": p.stats.total("up", "p2p"),
        "discarded_p2p": p.stats.discarded_p2p,
        "policy_refusals": p.stats.policy_refusals,
        "sim_mismatches": p.stats.sim_mismatches,
        "stalls": p.stats.stalls,
        "played": len(p.playback_log),
        "polluted_played": bad,
        "verdict": ("polluted" if bad else "clean") if p.playback_log else "none",
        "harvested": len(p.harvested),
        "bogons": len(p.bogons),
        "latency_samples": len(lat),
        "latency_mean_ms": round(mean(lat), 3) if lat else None,
    }


def offload_scopes(sim: Simulation) -> dict:
    traffic = sim.origin.traffic
    peers = list(sim.peers.values())
    consumed = lambda ps: sum(p.stats.total("down") for p in ps)
    out = {"global": offload_ratio(traffic.total_bytes, consumed(peers)), "stream": {}, "customer": {}}
    for vid in sorted({p.canonical.video_id for p in peers}):
        ps = [p for p in peers if p.canonical.video_id == vid]
        out["stream"][vid] = offload_ratio(traffic.bytes_for(video_id=vid), consumed(ps))
    for cid in sorted({p.customer_id for p in peers}):
        ps = [p for p in peers if p.customer_id == cid]
        out["customer"][cid] = offload_ratio(traffic.bytes_for(account=cid), consumed(ps))
    return out


def collect_run(sim: Simulation, label: str, canonical: VideoAsset, *, sample_ms: int = 1_000,
                latency_samples: bool = False) -> dict:
    tr = sim.tracker
    peers = sorted(sim.peers.values(), key=lambda p: (p.config.join_at_ms, p.node_id))
    rows = [peer_row(p, canonical) for p in peers]
    honest = [r for r in rows if r["role"] == "honest"]
    run = {
        "label": label,
        "policy": tr.policy.variant,
        "end_ms": sim.world.now,
        "events": sim.world.processed,
        "trace_hash": sim.world.trace_hash,
        "peers": rows,
        "offload": offload_scopes(sim),
        "origin_bytes": {
            "total": sim.origin.traffic.total_bytes,
            "by_account": {a: sim.origin.traffic.bytes_for(account=a)
                           for a in sorted({a for a, _ in sim.origin.traffic.cells})},
            "tracker_conflict_fetches": sim.origin.traffic.bytes_for(account=TRACKER_ACCOUNT),
        },
        "p2p_conservation": {
            "received": sum(r["down_p2p"] for r in rows),
            "uploaded": sum(r["up_p2p"] for r in rows),
        },
        "leaks": {r["node"]: {"harvested": r["harvested"], "bogons": r["bogons"]}
                  for r in rows if r["harvested"] or r["bogons"]},
        "propagation": propagation_curve(sim, canonical, sim.world.now, sample_ms),
        "playback": {
            "honest_polluted": sum(1 for r in honest if r["polluted_played"]),
            "honest_total": len(honest),
            "verdicts": {r["node"]: r["verdict"] for r in rows},
        },
        "im_service": {
            "stats": {k: tr.stats[k] for k in sorted(tr.stats)},
            "blacklist": [[t, sim.peer_by_id(pid).node_id, reason] for t, pid, reason in tr.blacklist_log],
            "entries": _im_states(tr),
        },
        "billing": {cid: {"billed_sessions": a.billed_sessions, "billed_p2p_bytes": a.billed_p2p_bytes}
                    for cid, a in sorted(tr.accounts.items())},
        "auth": [list(x) for x in tr.auth_log],
    }
    if latency_samples:
        run["latency_samples"] = {p.node_id: [v for _, v in p.latency_samples]
                                  for p in peers if p.latency_samples}
    return run


def _im_states(tr) -> dict:
    counts: dict[str, int] = {}
    for entry in tr.ledger.values():
        counts[entry.state] = counts.get(entry.state, 0) + 1
    return dict(sorted(counts.items()))


def group(**kw) -> PeerGroup:
    return dataclasses.replace(PeerGroup(), **kw)
