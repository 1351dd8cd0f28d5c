import pytest

from pdnsim.media import PollutionSpec, build_video, pollute
from pdnsim.peer import PeerConfig, deployment_enabled, free_ride
from pdnsim.sim import Simulation
from pdnsim.simnet import World
from pdnsim.tracker import CandidatePolicy, CustomerAccount, StaticKey, Token

VID = "https://victim.example/live/show.m3u8"
KEY = "victim-key"


@pytest.fixture(scope="module")
def asset():
    return build_video(VID, 60, 10, 1, 2_000)


def make_sim(asset, policy="unrestricted", seed=3, **tracker_options):
    sim = Simulation(seed, policy=CandidatePolicy(policy, 50), tracker_options=tracker_options or None)
    sim.add_customer(CustomerAccount("victim", KEY, token_secret=b"s"))
    sim.add_customer(CustomerAccount("attacker", "attacker-key"))
    sim.add_asset(asset)
    return sim


def add(sim, asset, name, held=None, country="US", isp="isp0", **cfg):
    return sim.add_peer(PeerConfig(**cfg), held or asset, credential=StaticKey(KEY),
                        declared_origin="victim.example", customer_id="victim", name=name,
                        country=country, isp=isp, canonical=asset)


def test_config_validation():
    for bad in (dict(role="x"), dict(deployment=101), dict(mobile="maybe"), dict(cellular_mode="half"),
                dict(network_type="5g"), dict(prefetch=0)):
        with pytest.raises(ValueError):
            PeerConfig(**bad)


def test_second_peer_gets_p2p(asset):
    sim = make_sim(asset)
    a = add(sim, asset, "a")
    b = add(sim, asset, "b", join_at_ms=15_000)
    sim.run()
    assert a.registered and b.registered
    assert b.stats.total("down", "p2p") > 0
    assert any(src == "p2p" for _, _, _, src in b.cache_log)
    assert b.playback_log == [s.content_digest for s in asset.segments]
    # what one uploads the other receives
    assert a.stats.total("up", "p2p") == b.stats.total("down", "p2p")


def test_deployment_zero_is_cdn_only(asset):
    sim = make_sim(asset)
    add(sim, asset, "a")
    b = add(sim, asset, "b", join_at_ms=5_000, deployment=0)
    sim.run()
    assert not b.registered and b.peer_id is None
    assert b.stats.total("down", "p2p") == 0
    assert b.stats.total("down", "cdn") == asset.total_bytes
    assert len(sim.tracker.peers) == 1


def test_cellular_disable_never_registers(asset):
    sim = make_sim(asset)
    p = add(sim, asset, "p", network_type="cellular", cellular_mode="disable")
    q = add(sim, asset, "q", network_type="cellular", cellular_mode="full", mobile="disable")
    sim.run()
    assert not p.registered and not q.registered
    assert len(p.playback_log) == len(asset.segments)


def test_cellular_leech_refuses_but_downloads(asset):
    sim = make_sim(asset)
    leech = add(sim, asset, "leech", network_type="cellular", cellular_mode="leech")
    other = add(sim, asset, "other", join_at_ms=15_000)
    sim.run()
    assert leech.stats.bytes["up"]["p2p"]["cellular"] == 0
    assert leech.stats.policy_refusals > 0
    assert other.stats.total("down", "p2p") == 0
    assert len(leech.playback_log) == len(asset.segments)


def test_cellular_full_uploads(asset):
    sim = make_sim(asset)
    full = add(sim, asset, "full", network_type="cellular", cellular_mode="full")
    add(sim, asset, "other", join_at_ms=15_000)
    sim.run()
    assert full.stats.bytes["up"]["p2p"]["cellular"] > 0


def test_deployment_fraction():
    w = World(9)
    for d in (0, 25, 50, 100):
        frac = sum(deployment_enabled(w, f"v{i}", d) for i in range(10_000)) / 10_000
        assert abs(frac - d / 100) <= 0.01


def polluted_swarm(asset, defense, targets=(2, 4)):
    sim = make_sim(asset)
    bad = pollute(asset, PollutionSpec(set(targets), 99))
    pol = add(sim, asset, "polluter", held=bad, role="polluter", preloaded=True)
    honest = [add(sim, asset, f"h{i}", join_at_ms=1_000 + 2_000 * i, defense_enabled=defense)
              for i in range(4)]
    sim.run()
    return sim, pol, honest, bad


def test_pollution_succeeds_without_defense(asset):
    sim, pol, honest, bad = polluted_swarm(asset, False)
    victims = [h for h in honest if h.playback_log != [s.content_digest for s in asset.segments]]
    assert victims
    assert any(bad.segments[2].content_digest in h.playback_log for h in victims)


def test_defense_blocks_pollution(asset):
    sim, pol, honest, bad = polluted_swarm(asset, True)
    clean = [s.content_digest for s in asset.segments]
    for h in honest:
        assert h.playback_log == clean
        # every p2p entry in a defended cache matched its SIM
        for _, i, d, src in h.cache_log:
            if src == "p2p":
                assert d == clean[i]
    assert sim.tracker.peers[pol.peer_id].blacklisted
    assert not any(sim.tracker.peers[h.peer_id].blacklisted for h in honest)


def test_polluter_serves_non_targets_honestly(asset):
    sim, pol, honest, bad = polluted_swarm(asset, False, targets=(5,))
    for h in honest:
        for idx, d in enumerate(h.playback_log):
            if idx != 5:
                assert d == asset.segments[idx].content_digest


def roster(sim, asset, n, countries):
    return [add(sim, asset, f"v{i}", country=countries[i % len(countries)], join_at_ms=50 * i)
            for i in range(n)]


@pytest.mark.parametrize("policy", ["unrestricted", "same_country", "relay_only"])
def test_harvest(asset, policy):
    sim = make_sim(asset, policy=policy)
    viewers = roster(sim, asset, 9, ["US", "US", "GB"])
    h = add(sim, asset, "harvester", role="harvester", join_at_ms=2_000, country="US")
    sim.run()
    got = h.harvest()
    expected = {sim.world.reflect(v.node_id) for v in viewers
                if policy == "unrestricted" or sim.world.node(v.node_id).addr.country == "US"}
    if policy == "relay_only":
        assert got == set()
        assert all(addr == sim.relay_addr for _, addr in h.candidate_log)
    else:
        assert got == expected
    assert h.playback_log == []
    # conservation: nothing beyond what candidate lists and bindings delivered
    delivered = {a for _, a in h.candidate_log} | {b.responder for b in h.bindings} | {b.requester for b in h.bindings}
    assert got <= delivered


def test_broken_reflection_counts_as_bogon(asset):
    sim = make_sim(asset)
    sim.add_peer(PeerConfig(), asset, credential=StaticKey(KEY), declared_origin="victim.example",
                 customer_id="victim", name="broken", broken_reflection=True)
    h = add(sim, asset, "harvester", role="harvester", join_at_ms=1_000)
    sim.run()
    assert len(h.bogons) == 1 and h.harvest() == set()


def test_free_ride_static_key(asset):
    sim = make_sim(asset)
    own = build_video("https://attacker.example/p.m3u8", 30, 10, 5, 2_000)
    out = free_ride(sim, StaticKey(KEY), own, "attacker.example", viewers=3)
    assert out.registered == 3
    assert sim.tracker.accounts["victim"].billed_sessions == 3
    assert sim.tracker.accounts["victim"].billed_p2p_bytes > 0
    assert sim.tracker.accounts["attacker"].billed_sessions == 0


def test_free_ride_token_mismatch(asset):
    sim = make_sim(asset, auth_mode="token")
    from pdnsim.auth_token import issue
    stolen = issue(b"s", "victim", "1", [VID], 3_600, 10, sim.tracker.unix_now())
    own = build_video("https://attacker.example/p.m3u8", 30, 10, 5, 2_000)
    out = free_ride(sim, Token(stolen), own, "victim.example", viewers=2)
    assert out.registered == 0
    assert out.rejected == {"TokenInvalid:VideoMismatch": 2}
    assert all(len(v.playback_log) == 3 for v in out.viewers)  # still watch via CDN


def test_leave_clears_cache(asset):
    sim = make_sim(asset)
    p = add(sim, asset, "p", leave_at_ms=25_000)
    sim.run()
    assert p.left and p.cache == {}
    assert 0 < len(p.playback_log) < len(asset.segments)
