import pytest

from pdnsim.simnet import LinkModel, Message, NetAddr, NodeNotFound, World


def addr(i, nat=False, **kw):
    pub = NetAddr.ip(f"81.0.0.{i}")
    priv = NetAddr.ip(f"10.0.0.{i}") if nat else pub
    return NetAddr(pub, 5000 + i, priv, nat, **kw)


def two_nodes(latency=20, bw=10_000_000):
    w = World(1, default_link=LinkModel(latency, bw))
    got = []
    w.add_node("a", addr(1))
    w.add_node("b", addr(2), handler=lambda m: got.append((w.now, m.kind, m.body)))
    return w, got


def test_transfer_time_exact():
    w, got = two_nodes()
    w.send("a", "b", Message("big", "", "", None), 3_000_000)
    w.send("a", "b", Message("ctl", "", "", None), 0)
    w.run()
    # FIFO: the control message cannot overtake the bulk transfer
    assert got == [(320, "big", None), (320, "ctl", None)]


def test_zero_byte_control_message():
    w, got = two_nodes()
    w.send("a", "b", Message("ctl", "", "", 1))
    w.run()
    assert got == [(20, "ctl", 1)]


def test_ceil_rounding():
    assert LinkModel(0, 3).transfer_ms(1) == 334


def test_pair_link_uses_slower_side():
    w = World(0, default_link=LinkModel(20, 10_000_000))
    w.add_node("a", addr(1), LinkModel(5, 1_000_000))
    w.add_node("b", addr(2), LinkModel(50, 100_000_000))
    assert w.link_between("a", "b") == LinkModel(50, 1_000_000)
    w.set_link("a", "b", LinkModel(1, 1))
    assert w.link_between("b", "a") == LinkModel(1, 1)


def test_ordering_same_time_by_sequence():
    w = World(0)
    out = []
    for i in range(5):
        w.schedule(10, lambda i=i: out.append(i))
    w.run()
    assert out == [0, 1, 2, 3, 4]


def test_cancel_and_horizon():
    w = World(0)
    out = []
    ev = w.schedule(5, lambda: out.append("x"))
    w.schedule(50, lambda: out.append("late"))
    w.cancel(ev)
    w.run_until(20)
    assert out == [] and w.now == 20
    w.run_until(50)
    assert out == ["late"]
    with pytest.raises(ValueError):
        w.run_until(10)


def test_trace_hash_reproducible():
    assert World(3).rng("x").random() == World(3).rng("x").random()
    assert World(3).rng("x").random() != World(3).rng("y").random()
    w1, w2 = World(5), World(5)
    for w in (w1, w2):
        r = w.rng("jitter")
        for _ in range(20):
            w.schedule(r.randrange(100), None, "tick")
        w.run()
    assert w1.trace_hash == w2.trace_hash


def test_stun_reflection_and_round_trip():
    w = World(0, default_link=LinkModel(15, 10_000_000))
    w.add_stun_server()
    w.add_node("n", addr(3, nat=True))
    seen = []
    reflected = w.stun_query("n", lambda a: seen.append((w.now, a)))
    w.run()
    assert reflected.public_ip == NetAddr.ip("81.0.0.3")
    assert seen == [(30, reflected)]


def test_stun_broken_reflection_leaks_private():
    w = World(0)
    w.add_stun_server()
    w.add_node("n", addr(4, nat=True), broken_reflection=True)
    r = w.stun_query("n")
    assert r.public_ip == NetAddr.ip("10.0.0.4") and r.is_bogon


def test_rpc_errors_are_delivered():
    w, _ = two_nodes()
    out = []

    def boom():
        raise KeyError("nope")

    w.rpc("a", "b", "x", boom, lambda res, err: out.append((w.now, res, type(err))))
    w.run()
    assert out == [(40, None, KeyError)]


def test_unknown_node():
    w, _ = two_nodes()
    with pytest.raises(NodeNotFound):
        w.send("a", "zz", "hi")


@pytest.mark.parametrize("kw", [dict(public_ip=-1), dict(port=70000), dict(behind_nat=True)])
def test_netaddr_validation(kw):
    base = dict(public_ip=1, port=1, private_ip=1)
    base.update(kw)
    with pytest.raises(ValueError):
        NetAddr(**base)
