import pytest

from pdnsim.media import (InvalidArgument, PollutionSpec, SegmentNotFound, build_video, digest,
                          forge_manifest, pollute, segment_bytes)

VID = "https://victim.example/live/show.m3u8"


def small(**kw):
    args = dict(video_id=VID, total_duration=60, segment_duration=10, generation_seed=1, bytes_per_second=1000)
    args.update(kw)
    return build_video(**args)


def test_segment_layout():
    a = small()
    assert len(a.segments) == 6
    assert [s.index for s in a.segments] == list(range(6))
    assert all(s.duration_ms == 10_000 and s.byte_len == 10_000 for s in a.segments)
    assert a.total_bytes == 60_000


def test_remainder_segment():
    a = small(total_duration=25)
    assert [s.duration_ms for s in a.segments] == [10_000, 10_000, 5_000]
    assert a.segments[-1].byte_len == 5_000


def test_default_segment_is_three_megabytes():
    a = build_video(VID, 10, 10, 1)
    assert a.segments[0].byte_len == 3_000_000


def test_deterministic():
    a, b = small(), small()
    assert a == b
    assert segment_bytes(a, 3) == segment_bytes(b, 3)
    assert small(generation_seed=2).segments[0].content_digest != a.segments[0].content_digest


def test_digests_match_bytes():
    a = small()
    for s in a.segments:
        assert digest(segment_bytes(a, s.index)) == s.content_digest


def test_different_videos_differ():
    a = small()
    b = small(video_id="https://other.example/live/feed.m3u8")
    assert a.manifest_digest != b.manifest_digest
    assert a.segments[0].content_digest != b.segments[0].content_digest


@pytest.mark.parametrize("kw", [dict(total_duration=0), dict(segment_duration=-1), dict(bytes_per_second=0)])
def test_invalid_arguments(kw):
    with pytest.raises(InvalidArgument):
        small(**kw)


def test_missing_segment():
    with pytest.raises(SegmentNotFound):
        segment_bytes(small(), 6)


def test_pollution_keeps_manifest_changes_bytes():
    a = small()
    p = pollute(a, PollutionSpec({1, 4}, 7))
    assert p.manifest_digest == a.manifest_digest
    assert p.is_polluted and not a.is_polluted
    for s, t in zip(a.segments, p.segments):
        assert s.byte_len == t.byte_len
        changed = s.content_digest != t.content_digest
        assert changed == (s.index in (1, 4))
        assert digest(segment_bytes(p, t.index)) == t.content_digest


def test_empty_pollution_is_identity():
    a = small()
    assert pollute(a, PollutionSpec(set(), 7)) is a


def test_pollution_out_of_range():
    with pytest.raises(InvalidArgument):
        pollute(small(), PollutionSpec({6}, 7))


def test_forged_manifest_changes_identity_only():
    a = small()
    f = forge_manifest(a, 3)
    assert f.manifest_digest != a.manifest_digest
    assert f.segments == a.segments
