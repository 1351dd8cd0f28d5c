import itertools
import random
from fractions import Fraction
from math import comb

import pytest

from pdnsim.auth_token import AuthError, TokenInvalid, issue
from pdnsim.cdn import TRACKER_ACCOUNT, OriginStore
from pdnsim.media import PollutionSpec, build_video, pollute, segment_bytes
from pdnsim.simnet import NetAddr
from pdnsim.tracker import (AUTHENTIC, COLLECTING, CONFLICT_RESOLVED, PENDING, UNRESOLVED, CandidatePolicy,
                            CustomerAccount, IntegrityMetadata, NotFound, OriginRejected, PeerRejected,
                            ReportRejected, StaticKey, Token, Tracker, UnknownKey, draw_reporters,
                            hypergeometric_all_malicious, sign_im, verify_sim)

VID = "https://victim.example/live/show.m3u8"
KEY = "victim-key"
RELAY = NetAddr(NetAddr.ip("192.0.2.30"), 3478, NetAddr.ip("192.0.2.30"))


@pytest.fixture(scope="module")
def asset():
    return build_video(VID, 30, 10, 1, 1000)


def make_tracker(asset, policy="unrestricted", max_candidates=20, origin=True, **kw):
    o = None
    if origin:
        o = OriginStore()
        o.add_asset(asset)
    tr = Tracker(None, o, policy=CandidatePolicy(policy, max_candidates), relay_addr=RELAY, **kw)
    tr.add_account(CustomerAccount("victim", KEY, token_secret=b"s3cret"))
    return tr


def join(tr, asset, n, *, stream=None, geo="US", isp="isp0", start=1):
    ids = []
    for i in range(start, start + n):
        a = NetAddr(NetAddr.ip(f"81.0.1.{i}"), 4000 + i, NetAddr.ip(f"81.0.1.{i}"), False, geo, isp)
        ids.append(tr.register(StaticKey(KEY), "victim.example", stream or asset.manifest_digest,
                               a, geo, isp, video_id=asset.video_id))
    return ids


def true_im(asset, i):
    return IntegrityMetadata.compute(segment_bytes(asset, i), asset.video_id, i)


def fake_im(asset, i):
    bad = pollute(asset, PollutionSpec({i}, 5))
    return IntegrityMetadata.compute(segment_bytes(bad, i), asset.video_id, i)


# -- registration -------------------------------------------------------------

def test_whitelist_semantics(asset):
    tr = make_tracker(asset)
    tr.accounts["victim"].whitelist_enabled = True
    tr.accounts["victim"].allowed_origins = frozenset({"victim.example"})
    a = NetAddr(1, 1, 1)
    assert tr.register(StaticKey(KEY), "victim.example", "s", a, "US", "i") == 1  # spoof works
    with pytest.raises(OriginRejected):
        tr.register(StaticKey(KEY), "evil.example", "s", a, "US", "i")
    with pytest.raises(UnknownKey):
        tr.register(StaticKey("nope"), "victim.example", "s", a, "US", "i")
    assert tr.accounts["victim"].billed_sessions == 1


def test_token_mode_consumes_usage(asset):
    tr = make_tracker(asset, auth_mode="token")
    tok = issue(b"s3cret", "victim", "1", [VID], 60, 1, tr.unix_now())
    a = NetAddr(1, 1, 1)
    tr.register(Token(tok), "", "s", a, "US", "i", video_id=VID)
    with pytest.raises(TokenInvalid) as ei:
        tr.register(Token(tok), "", "s", a, "US", "i", video_id=VID)
    assert ei.value.reason == "UsageExceeded"
    with pytest.raises(AuthError):
        tr.register(StaticKey(KEY), "", "s", a, "US", "i", video_id=VID)


def test_duplicate_api_key():
    tr = Tracker(None)
    tr.add_account(CustomerAccount("a", "k"))
    with pytest.raises(ValueError):
        tr.add_account(CustomerAccount("b", "k"))


# -- candidates -----------------------------------------------------------------

def test_five_peers_four_candidates(asset):
    tr = make_tracker(asset)
    ids = join(tr, asset, 5)
    got = tr.candidates(ids[0])
    assert [p for p, _ in got] == ids[1:]


def test_stream_isolation_and_forged_manifest(asset):
    tr = make_tracker(asset)
    join(tr, asset, 4)
    (lone,) = join(tr, asset, 1, stream="forged-digest", start=50)
    for variant in ("unrestricted", "same_country", "same_isp", "relay_only"):
        tr.policy = CandidatePolicy(variant)
        assert tr.candidates(lone) == []
        for pid in range(1, 5):
            assert lone not in [p for p, _ in tr.candidates(pid)]


def test_same_country_brute_force(asset):
    tr = make_tracker(asset, policy="same_country")
    rng = random.Random(3)
    roster = {}
    me = join(tr, asset, 1, geo="X")[0]
    countries = ["X"] * 3 + ["Y"] * 6
    rng.shuffle(countries)
    for i, c in enumerate(countries):
        (pid,) = join(tr, asset, 1, geo=c, start=10 + i)
        roster[pid] = c
    expected = sorted(p for p, c in roster.items() if c == "X")
    assert [p for p, _ in tr.candidates(me)] == expected


def test_same_isp_and_relay(asset):
    tr = make_tracker(asset, policy="same_isp")
    me = join(tr, asset, 1, isp="a")[0]
    same = join(tr, asset, 2, isp="a", start=10)
    join(tr, asset, 3, isp="b", start=20)
    assert [p for p, _ in tr.candidates(me)] == same
    tr.policy = CandidatePolicy("relay_only")
    got = tr.candidates(me)
    assert len(got) == 5 and all(addr == RELAY for _, addr in got)


def test_truncation_deterministic_and_varied(asset):
    tr = make_tracker(asset, max_candidates=5)
    ids = join(tr, asset, 30)
    lists = [tuple(p for p, _ in tr.candidates(ids[0])) for _ in range(10)]
    assert all(len(l) == 5 and list(l) == sorted(l) for l in lists)
    assert len(set(lists)) > 1  # different rounds, different draws
    tr2 = make_tracker(asset, max_candidates=5)
    ids2 = join(tr2, asset, 30)
    assert lists == [tuple(p for p, _ in tr2.candidates(ids2[0])) for _ in range(10)]


def test_liveness(asset):
    tr = make_tracker(asset)
    a, b = join(tr, asset, 2)
    tr.advance(9_000)
    tr.heartbeat(a)
    assert [p for p, _ in tr.candidates(a)] == [b]
    tr.advance(10_001)
    assert tr.candidates(a) == []  # b went silent
    with pytest.raises(PeerRejected):
        tr.heartbeat(999)


def test_blacklist(asset):
    tr = make_tracker(asset)
    a, b, c = join(tr, asset, 3)
    tr.blacklist(b, "test")
    before = list(tr.blacklist_log)
    tr.blacklist(b, "again")
    assert tr.blacklist_log == before
    assert [p for p, _ in tr.candidates(a)] == [c]
    with pytest.raises(PeerRejected):
        tr.candidates(b)
    tr.heartbeat(b)
    assert tr.peers[b].blacklisted


# -- reporters and the IM ledger --------------------------------------------------

def test_selection_clamps(asset):
    rng = random.Random(0)
    assert draw_reporters([1, 2], 3, rng) == (1, 2)
    assert len(set(draw_reporters(range(10), 3, rng))) == 3
    assert draw_reporters([], 3, rng) == ()


def test_selection_frequency_uniform():
    rng = random.Random(11)
    counts = dict.fromkeys(range(10), 0)
    for _ in range(10_000):
        for p in draw_reporters(range(10), 3, rng):
            counts[p] += 1
    for c in counts.values():
        assert abs(c / 10_000 - 0.3) <= 0.02


def test_no_eligible_stays_collecting(asset):
    tr = make_tracker(asset)
    assert tr.select_reporters(VID, 0) == set()
    assert tr.ledger[(VID, 0)].state == COLLECTING


def collect(tr, asset, ids, index, liars=()):
    for p in ids:
        tr.declare_cdn_fetch(p, VID, index)
    entry = tr.ledger[(VID, index)]
    out = None
    for p in entry.selected:
        out = tr.report_im(p, fake_im(asset, index) if p in liars else true_im(asset, index))
    return entry, out


def test_unanimous_authentic(asset):
    tr = make_tracker(asset)
    ids = join(tr, asset, 3)
    assert tr.get_sim(ids[0], VID, 0) is PENDING
    entry, sim = collect(tr, asset, ids, 0)
    assert entry.state == AUTHENTIC and sim.im == true_im(asset, 0)
    assert verify_sim(tr.key, tr.get_sim(ids[0], VID, 0))
    assert tr.origin.traffic.total_bytes == 0


def test_partial_reports_still_collecting(asset):
    tr = make_tracker(asset)
    ids = join(tr, asset, 3)
    for p in ids:
        tr.declare_cdn_fetch(p, VID, 1)
    entry = tr.ledger[(VID, 1)]
    for p in entry.selected[:2]:
        assert tr.report_im(p, true_im(asset, 1)) is None
    assert entry.state == COLLECTING
    with pytest.raises(ReportRejected):
        tr.report_im(entry.selected[0], true_im(asset, 1))
    tr.report_im(entry.selected[2], true_im(asset, 1))
    with pytest.raises(ReportRejected):
        tr.report_im(entry.selected[2], true_im(asset, 1))


def test_unsolicited_report(asset):
    tr = make_tracker(asset)
    ids = join(tr, asset, 4)
    with pytest.raises(ReportRejected):
        tr.report_im(ids[0], true_im(asset, 0))
    assert tr.stats["suspicious_reports"] == 1


@pytest.mark.parametrize("n_liars", [1, 2])
def test_conflict_resolution(asset, n_liars):
    tr = make_tracker(asset)
    ids = join(tr, asset, 3)
    liars = set(ids[:n_liars])
    entry, sim = collect(tr, asset, ids, 2, liars)
    assert entry.state == CONFLICT_RESOLVED and sim.im == true_im(asset, 2)
    assert {p for p in ids if tr.peers[p].blacklisted} == liars
    assert tr.origin.traffic.bytes_for(account=TRACKER_ACCOUNT) == asset.segments[2].byte_len


def test_origin_outage_unresolved_then_retry(asset):
    tr = make_tracker(asset)
    tr.origin.available = False
    ids = join(tr, asset, 3)
    entry, sim = collect(tr, asset, ids, 0, {ids[0]})
    assert sim is None and entry.state == UNRESOLVED
    assert tr.get_sim(ids[1], VID, 0) is PENDING
    tr.origin.available = True
    assert tr.retry_unresolved(VID, 0).im == true_im(asset, 0)
    assert tr.peers[ids[0]].blacklisted


def test_get_sim_not_found(asset):
    tr = make_tracker(asset)
    (p,) = join(tr, asset, 1)
    with pytest.raises(NotFound):
        tr.get_sim(p, VID, 99)
    with pytest.raises(NotFound):
        tr.get_sim(p, "https://nope.example/x.m3u8", 0)


def test_mutated_sim_fails():
    im = IntegrityMetadata("v", 0, "ab" * 32)
    sim = sign_im(b"k", im)
    flipped = IntegrityMetadata("v", 0, "ab" * 31 + "aa")
    assert verify_sim(b"k", sim)
    assert not verify_sim(b"k", type(sim)(flipped, sim.signature))
    assert not verify_sim(b"other", sim)


def test_im_binds_video_and_position():
    data = b"segment"
    base = IntegrityMetadata.compute(data, "v1", 3)
    assert base != IntegrityMetadata.compute(data, "v2", 3)
    assert base != IntegrityMetadata.compute(data, "v1", 4)
    assert base != IntegrityMetadata.compute(data + b"x", "v1", 3)
    # the length prefix keeps (bytes, id) splits apart
    assert IntegrityMetadata.compute(b"ab", "c", 0).digest != IntegrityMetadata.compute(b"a", "bc", 0).digest


def test_blacklisted_pending_reporter_is_replaced(asset):
    tr = make_tracker(asset, im_pool_size=5)
    ids = join(tr, asset, 5)
    for p in ids:
        tr.declare_cdn_fetch(p, VID, 0)
    entry = tr.ledger[(VID, 0)]
    victim = entry.selected[0]
    tr.blacklist(victim, "test")
    assert victim not in entry.selected and len(entry.selected) == 3


# -- subversion probability ------------------------------------------------------

def enumerate_subversion(n, m, k):
    """Brute force: share of k-subsets of n peers made only of the m malicious ones."""
    subsets = list(itertools.combinations(range(n), k))
    bad = sum(1 for s in subsets if all(p < m for p in s))
    return Fraction(bad, len(subsets))


def test_enumeration_matches_closed_form_small_pools():
    for n in range(1, 6):
        for m in range(n + 1):
            for k in range(1, n + 1):
                exact = enumerate_subversion(n, m, k)
                assert Fraction(comb(m, k), comb(n, k)) == exact
                assert hypergeometric_all_malicious(n, m, k) == pytest.approx(float(exact), abs=0)


def test_ten_peer_oracle():
    assert enumerate_subversion(10, 3, 3) == Fraction(1, 120)
    assert hypergeometric_all_malicious(10, 3, 3) == pytest.approx(1 / 120)


def subversion_trial(asset, seed):
    """One polluted segment, 10 eligible reporters, 3 of them lying. True if the lie is signed."""
    tr = make_tracker(asset, k=3, im_pool_size=10, seed=seed)
    ids = join(tr, asset, 10)
    malicious = set(ids[:3])
    _, sim = collect(tr, asset, ids, 0, malicious)
    return sim is not None and sim.im == fake_im(asset, 0)


def test_empirical_subversion_frequency(asset):
    trials = 10_000
    hits = sum(subversion_trial(asset, s) for s in range(trials))
    assert abs(hits / trials - 1 / 120) <= 0.003
