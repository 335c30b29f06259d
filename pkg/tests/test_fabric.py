import networkx as nx
import pytest

from anonpub.engine import Simulator
from anonpub.fabric import DataPacket, Interest, Network, longest_prefix_match
from anonpub.names import Name
from anonpub.topology import Topology


class Recorder:
    def __init__(self, net=None, host=None, reply=None):
        self.interests, self.data = [], []
        self.net, self.host, self.reply = net, host, reply

    def on_interest(self, interest):
        self.interests.append((self.net.sim.now if self.net else 0, interest))
        if self.reply is not None:
            self.net.send(self.host, DataPacket(interest.name, self.reply))

    def on_data(self, data):
        self.data.append((self.net.sim.now if self.net else 0, data))


def line_network(n=5, **kw):
    g = nx.Graph()
    for i in range(n - 1):
        g.add_edge(i, i + 1, delay=2.0)
    sim = Simulator()
    return sim, Network(sim, Topology(g), **kw)


def N(s):
    return Name.parse(s)


def test_longest_prefix_match_cases():
    fib = {N("/a").components: ["i1"], N("/a/b").components: ["i2"]}
    assert longest_prefix_match(fib, N("/a/b/c")) == ["i2"]
    assert longest_prefix_match(fib, N("/z")) is None
    assert longest_prefix_match({(): ["i0"]}, N("/anything/at/all")) == ["i0"]


def test_packet_sizes():
    i = Interest(N("/ab/c"), 1, b"x" * 10)
    assert i.size_bytes == 24 + (2 + 2) + (1 + 2) + 10
    d = DataPacket(N("/ab"), b"yy", b"s", b"vv")
    assert d.size_bytes == 32 + 4 + 2 + 1 + 2


def test_fetch_and_cs_hit():
    sim, net = line_network()
    consumer = Recorder(net)
    net.attach_host("c", 0, consumer)
    net.attach_host("p", 4, None)
    net.set_app("p", Recorder(net, "p", reply=b"content"))
    net.register_route(N("/prod"), "p")
    net.send("c", Interest(N("/prod/x"), 1))
    sim.run()
    assert len(consumer.data) == 1
    # access 2 + 4 links * 2 + access 2, both ways
    assert consumer.data[0][0] == pytest.approx(24.0)
    # second request is answered by the consumer's first-hop router
    t0 = sim.now
    net.send("c", Interest(N("/prod/x"), 2))
    sim.run()
    assert net.stats["cs_hit"] == 1
    assert consumer.data[1][0] - t0 == pytest.approx(4.0)
    assert len(net.hosts["p"].interests) == 1


def test_pit_aggregation_one_upstream_forward():
    g = nx.Graph()
    g.add_edge(0, 1, delay=2.0)
    sim = Simulator()
    net = Network(sim, Topology(g))
    a, b = Recorder(net), Recorder(net)
    producer = Recorder(net)
    net.attach_host("a", 0, a)
    net.attach_host("b", 0, b)
    net.attach_host("p", 1, producer)
    net.register_route(N("/prod"), "p")
    net.send("a", Interest(N("/prod/x"), 1))
    net.send("b", Interest(N("/prod/x"), 2))
    sim.run()
    assert len(producer.interests) == 1
    assert net.stats["pit_aggregated"] == 1
    # the producer answers once; the router fans it out to both faces
    net.send("p", DataPacket(N("/prod/x"), b"c"))
    sim.run()
    assert len(a.data) == 1 and len(b.data) == 1
    assert N("/prod/x").components not in net.routers[0].pit
    assert N("/prod/x").components in net.routers[0].cs


def test_no_route_drop_and_unsolicited_data():
    sim, net = line_network(3)
    net.attach_host("c", 0, Recorder(net))
    net.send("c", Interest(N("/nowhere"), 1))
    net.send("c", DataPacket(N("/nowhere"), b""))
    sim.run()
    assert net.stats["drop_no_route"] == 1
    assert net.stats["drop_unsolicited"] == 1


def test_duplicate_nonce_is_loop():
    sim, net = line_network(2)
    net.attach_host("c", 0, Recorder(net))
    net.attach_host("p", 1, Recorder(net))
    net.register_route(N("/p"), "p")
    net.send("c", Interest(N("/p/x"), 7))
    net.send("c", Interest(N("/p/x"), 7))
    sim.run()
    assert net.stats["drop_loop"] == 1


def test_pit_expiry():
    sim, net = line_network(2, pit_lifetime_ms=10.0)
    c = Recorder(net)
    net.attach_host("c", 0, c)
    net.attach_host("p", 1, Recorder(net))
    net.register_route(N("/p"), "p")
    net.send("c", Interest(N("/p/x"), 1))
    sim.run()
    sim.schedule(50.0, net.send, "p", DataPacket(N("/p/x"), b""))
    sim.run()
    assert not c.data
    assert net.stats["drop_unsolicited"] == 1


def test_cs_capacity_lru():
    sim, net = line_network(2, cs_capacity=3)
    net.attach_host("c", 0, Recorder(net))
    net.attach_host("p", 1, None)
    net.set_app("p", Recorder(net, "p", reply=b"z"))
    net.register_route(N("/p"), "p")
    for i in range(10):
        net.send("c", Interest(N(f"/p/{i}"), i))
        sim.run()
        assert all(len(r.cs) <= 3 for r in net.routers.values())
    assert list(net.routers[0].cs) == [N(f"/p/{i}").components for i in (7, 8, 9)]


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_sync_publish_n_minus_one_deliveries(n):
    g = nx.random_labeled_tree(12, seed=3)
    nx.set_edge_attributes(g, 2.0, "delay")
    sim = Simulator()
    net = Network(sim, Topology(g))
    members = [f"m{i}" for i in range(n)]
    recs = {}
    for i, m in enumerate(members):
        recs[m] = Recorder(net)
        net.attach_host(m, (i * 5) % 12, recs[m])
    net.set_sync_group(members)
    msg = Interest(N("/sync/g/hello"), 1, b"payload")
    net.sync_publish(members[0], msg)
    sim.run()
    assert net.deliveries[msg.uid] == n - 1
    assert not recs[members[0]].interests
    assert all(len(recs[m].interests) == 1 for m in members[1:])


def test_sync_reply_follows_reverse_path():
    sim, net = line_network(4)
    a, b = Recorder(net), Recorder(net)
    net.attach_host("a", 0, a)
    net.attach_host("b", 3, None)
    net.set_app("b", Recorder(net, "b", reply=b"piece"))
    net.set_sync_group(["a", "b"])
    net.sync_publish("a", Interest(N("/sync/g/piece1"), 5))
    sim.run()
    assert len(a.data) == 1 and a.data[0][1].content == b"piece"


def border_network():
    # 0-1-2 inside; proxy hangs off router 2
    sim, net = line_network(3)
    inside, proxy = Recorder(net), Recorder(net)
    net.attach_host("peer", 0, inside)
    net.attach_host("proxy", 2, proxy, outside=True)
    return sim, net, inside, proxy


def test_decoy_prefix_egress_reaches_proxy():
    sim, net, _, proxy = border_network()
    net.register_decoy_prefix(N("/Mendeley"), "proxy")
    net.send("peer", Interest(N("/Mendeley/Data_ID/1"), 1))
    sim.run()
    assert [str(i.name) for _, i in proxy.interests] == ["/Mendeley/Data_ID/1"]


def test_non_decoy_external_prefix_blocked():
    sim, net, _, proxy = border_network()
    net.register_route(N("/producer-home"), "proxy")
    net.send("peer", Interest(N("/producer-home/video"), 1))
    sim.run()
    assert not proxy.interests
    assert net.stats["drop_border_egress"] == 1


def test_ingress_interest_blocked_but_reply_data_allowed():
    sim, net, inside, proxy = border_network()
    net.register_route(N("/inside"), "peer")
    net.register_decoy_prefix(N("/Mendeley"), "proxy")
    net.send("proxy", Interest(N("/inside/x"), 1))
    sim.run()
    assert not inside.interests
    assert net.stats["drop_border_ingress"] == 1
    net.send("peer", Interest(N("/Mendeley/q"), 2))
    sim.run()
    net.send("proxy", DataPacket(N("/Mendeley/q"), b"ack"))
    sim.run()
    assert len(inside.data) == 1


def test_two_decoy_prefixes_independent_paths():
    sim, net = line_network(5)
    p1, p2 = Recorder(net), Recorder(net)
    net.attach_host("peer", 2, Recorder(net))
    net.attach_host("px1", 0, p1, outside=True)
    net.attach_host("px2", 4, p2, outside=True)
    net.register_decoy_prefix(N("/Mendeley"), "px1")
    net.register_decoy_prefix(N("/Wikipedia"), "px2")
    net.send("peer", Interest(N("/Mendeley/a"), 1))
    net.send("peer", Interest(N("/Wikipedia/b"), 2))
    sim.run()
    assert [str(i.name) for _, i in p1.interests] == ["/Mendeley/a"]
    assert [str(i.name) for _, i in p2.interests] == ["/Wikipedia/b"]


def test_uplink_serialisation_queues_packets():
    sim, net = line_network(2, uplink_ms_per_byte=0.01)
    p = Recorder(net)
    net.attach_host("c", 0, Recorder(net))
    net.attach_host("p", 1, p)
    net.register_route(N("/p"), "p")
    a = Interest(N("/p/a"), 1, b"x" * 976)
    b = Interest(N("/p/b"), 2, b"x" * 976)
    net.send("c", a)
    net.send("c", b)
    sim.run()
    t_a, t_b = p.interests[0][0], p.interests[1][0]
    assert t_b - t_a == pytest.approx(b.size_bytes * 0.01)


def test_observer_sees_every_link_traversal():
    sim, net = line_network(3)
    net.attach_host("c", 0, Recorder(net))
    net.attach_host("p", 2, Recorder(net))
    net.register_route(N("/p"), "p")
    seen = []
    net.observers.append(lambda src, dst, pkt: seen.append((src, dst)))
    net.send("c", Interest(N("/p/x"), 1))
    sim.run()
    assert seen == [("c", 0), (0, 1), (1, 2), (2, "p")]
    assert net.link_bytes["other"] == 4 * Interest(N("/p/x"), 1).size_bytes
