"""NDN-style packet model and hop-by-hop forwarding.

Routers keep a FIB (longest-prefix routes), a PIT (pending Interests with
expiry) and an LRU content store. Hosts hang off a single router through an
access link whose uplink serialises packets at a configured per-byte cost.

Names under the sync prefix are delivered to every member of the sync group
over the shortest-path tree rooted at the sender; everything else follows the
FIB. Border routers (those with a proxy attached) only let Interests under a
registered decoy prefix leave the censoring network and never admit Interests
from outside.
"""

from __future__ import annotations

import itertools
from collections import Counter, OrderedDict, defaultdict
from dataclasses import dataclass
from typing import Callable, Protocol

import networkx as nx

from anonpub.engine import Simulator
from anonpub.names import Name
from anonpub.topology import Topology

INTEREST_HEADER = 24
DATA_HEADER = 32

_uids = itertools.count(1)


class Interest:
    __slots__ = ("name", "nonce", "payload", "kind", "origin", "uid", "size_bytes")

    def __init__(self, name: Name, nonce: int, payload: bytes = b"", kind: str = "other",
                 origin: str | None = None):
        self.name = name
        self.nonce = nonce
        self.payload = payload
        self.kind = kind
        # simulation bookkeeping: root of the multicast tree for sync names
        self.origin = origin
        self.uid = next(_uids)
        self.size_bytes = INTEREST_HEADER + name.byte_length + len(payload)

    def __repr__(self):
        return f"Interest({self.name}, {self.size_bytes}B)"


class DataPacket:
    __slots__ = ("name", "content", "signature_info", "signature_value", "kind", "uid", "size_bytes")

    def __init__(self, name: Name, content: bytes = b"", signature_info: bytes = b"",
                 signature_value: bytes = b"", kind: str = "other"):
        self.name = name
        self.content = content
        self.signature_info = signature_info
        self.signature_value = signature_value
        self.kind = kind
        self.uid = next(_uids)
        self.size_bytes = (DATA_HEADER + name.byte_length + len(content)
                           + len(signature_info) + len(signature_value))

    def __repr__(self):
        return f"Data({self.name}, {self.size_bytes}B)"


class HostApp(Protocol):
    def on_interest(self, interest: Interest) -> None: ...
    def on_data(self, data: DataPacket) -> None: ...


def longest_prefix_match(fib: dict[tuple[bytes, ...], list], name: Name):
    comps = name.components
    for n in range(len(comps), -1, -1):
        faces = fib.get(comps[:n])
        if faces is not None:
            return faces
    return None


@dataclass
class PitEntry:
    faces: list
    nonces: set
    expiry: float


class Router:
    def __init__(self, rid: int, net: "Network", cs_capacity: int, pit_lifetime_ms: float):
        self.rid = rid
        self.net = net
        self.fib: dict[tuple[bytes, ...], list] = {}
        # keyed by name components; tuple hashing is much cheaper than Name's
        self.pit: dict[tuple[bytes, ...], PitEntry] = {}
        self.cs: OrderedDict[tuple[bytes, ...], DataPacket] = OrderedDict()
        self.cs_capacity = cs_capacity
        self.pit_lifetime_ms = pit_lifetime_ms
        self.outside_faces: set = set()

    def add_route(self, prefix: Name, face) -> None:
        faces = self.fib.setdefault(prefix.components, [])
        if face not in faces:
            faces.append(face)

    def cs_insert(self, data: DataPacket) -> None:
        if self.cs_capacity <= 0:
            return
        key = data.name.components
        self.cs[key] = data
        self.cs.move_to_end(key)
        while len(self.cs) > self.cs_capacity:
            self.cs.popitem(last=False)

    def on_interest(self, interest: Interest, in_face) -> None:
        net = self.net
        stats = net.stats
        if in_face in self.outside_faces:
            stats["drop_border_ingress"] += 1
            return
        key = interest.name.components
        cached = self.cs.get(key)
        if cached is not None:
            self.cs.move_to_end(key)
            stats["cs_hit"] += 1
            net.transmit(self.rid, in_face, cached)
            return
        now = net.sim.now
        entry = self.pit.get(key)
        if entry is not None and entry.expiry >= now:
            if interest.nonce in entry.nonces:
                stats["drop_loop"] += 1
                return
            entry.nonces.add(interest.nonce)
            if in_face not in entry.faces:
                entry.faces.append(in_face)
            entry.expiry = max(entry.expiry, now + self.pit_lifetime_ms)
            stats["pit_aggregated"] += 1
            return
        if net.is_sync(interest.name):
            out = [f for f in net.multicast_children(interest.origin, self.rid) if f != in_face]
        else:
            faces = longest_prefix_match(self.fib, interest.name)
            out = [f for f in faces if f != in_face][:1] if faces else []
            if not out:
                stats["drop_no_route"] += 1
                return
            if out[0] in self.outside_faces and not net.is_decoy(interest.name):
                stats["drop_border_egress"] += 1
                return
        self.pit[key] = PitEntry([in_face], {interest.nonce}, now + self.pit_lifetime_ms)
        for face in out:
            net.transmit(self.rid, face, interest)

    def on_data(self, data: DataPacket, in_face) -> None:
        net = self.net
        entry = self.pit.pop(data.name.components, None)
        if entry is None or entry.expiry < net.sim.now:
            net.stats["drop_unsolicited"] += 1
            return
        for face in entry.faces:
            if face != in_face:
                net.transmit(self.rid, face, data)
        self.cs_insert(data)


class Network:
    def __init__(self, sim: Simulator, topology: Topology, *, access_delay_ms: float = 2.0,
                 uplink_ms_per_byte: float = 0.0, pit_lifetime_ms: float = 4000.0,
                 cs_capacity: int = 1000, sync_prefix: Name = Name.parse("/sync")):
        self.sim = sim
        self.topology = topology
        self.sync_prefix = sync_prefix
        self.uplink_ms_per_byte = uplink_ms_per_byte
        self.graph = nx.Graph()
        self.graph.add_edges_from(topology.graph.edges(data=True))
        self._link_delay = {(a, b): d["delay"] for a, b, d in self.graph.edges(data=True)}
        self._link_delay.update({(b, a): d for (a, b), d in list(self._link_delay.items())})
        self.routers = {r: Router(r, self, cs_capacity, pit_lifetime_ms) for r in topology.routers}
        self.hosts: dict[str, HostApp | None] = {}
        self.attachment: dict[str, int] = {}
        self.access_delay_ms = access_delay_ms
        self.uplink_free: dict[str, float] = {}
        self.sync_members: list[str] = []
        self._member_set: frozenset = frozenset()
        self._trees: dict[str, dict] = {}
        self.decoy_prefixes: list[Name] = []
        self.stats: Counter = Counter()
        self.link_bytes: Counter = Counter()
        self.deliveries: Counter = Counter()
        self.observers: list[Callable] = []
        self.trace: list[str] | None = None
        self._dijkstra: dict = {}

    # topology wiring

    def attach_host(self, host: str, router: int, app: HostApp | None = None, outside: bool = False) -> None:
        self.hosts[host] = app
        self.attachment[host] = router
        self.graph.add_edge(host, router, delay=self.access_delay_ms)
        self._link_delay[(router, host)] = self._link_delay[(host, router)] = self.access_delay_ms
        self.uplink_free[host] = 0.0
        if outside:
            self.routers[router].outside_faces.add(host)
        self._trees.clear()
        self._dijkstra.clear()

    def set_app(self, host: str, app: HostApp) -> None:
        self.hosts[host] = app

    def set_sync_group(self, members: list[str]) -> None:
        self.sync_members = list(members)
        self._member_set = frozenset(members)
        self._trees.clear()

    def is_sync(self, name: Name) -> bool:
        return self.sync_prefix.is_prefix_of(name)

    def is_decoy(self, name: Name) -> bool:
        return any(p.is_prefix_of(name) for p in self.decoy_prefixes)

    def shortest_paths(self, source):
        res = self._dijkstra.get(source)
        if res is None:
            res = nx.single_source_dijkstra(self.graph, source, weight="delay")
            self._dijkstra[source] = res
        return res

    def path_delay(self, a, b) -> float:
        return self.shortest_paths(a)[0][b]

    def path(self, a, b) -> list:
        return self.shortest_paths(a)[1][b]

    def register_route(self, prefix: Name, host: str) -> None:
        """Install FIB entries toward ``host`` in every router."""
        _, paths = self.shortest_paths(host)
        for rid, router in self.routers.items():
            p = paths.get(rid)
            if p is None or len(p) < 2:
                continue
            router.add_route(prefix, p[-2])

    def register_decoy_prefix(self, prefix: Name, egress_proxy: str) -> None:
        if prefix not in self.decoy_prefixes:
            self.decoy_prefixes.append(prefix)
        self.register_route(prefix, egress_proxy)

    def multicast_children(self, origin: str, node) -> list:
        tree = self._trees.get(origin)
        if tree is None:
            tree = defaultdict(list)
            _, paths = self.shortest_paths(origin)
            for member in self.sync_members:
                if member == origin:
                    continue
                p = paths[member]
                for u, v in zip(p, p[1:]):
                    if v not in tree[u]:
                        tree[u].append(v)
            self._trees[origin] = tree
        return tree.get(node, [])

    # packet movement

    def transmit(self, src, dst, packet) -> None:
        sim = self.sim
        if src in self.attachment:
            size = packet.size_bytes
            depart = max(sim.now, self.uplink_free[src]) + size * self.uplink_ms_per_byte
            self.uplink_free[src] = depart
            delay = depart - sim.now + self.access_delay_ms
        else:
            delay = self._link_delay[src, dst]
        self.link_bytes[packet.kind] += packet.size_bytes
        for observe in self.observers:
            observe(src, dst, packet)
        sim.schedule(delay, self._deliver, dst, packet, src)

    def send(self, host: str, packet) -> None:
        self.transmit(host, self.attachment[host], packet)

    def sync_publish(self, sender: str, interest: Interest) -> None:
        interest.origin = sender
        self.send(sender, interest)

    def _deliver(self, node, packet, from_face) -> None:
        if self.trace is not None:
            kind = "interest" if isinstance(packet, Interest) else "data"
            self.trace.append(f"{self.sim.now:.3f} {node} {kind} {packet.name} {packet.size_bytes}")
        router = self.routers.get(node)
        if router is not None:
            if isinstance(packet, Interest):
                router.on_interest(packet, from_face)
            else:
                router.on_data(packet, from_face)
            return
        app = self.hosts.get(node)
        self.deliveries[packet.uid] += 1
        if app is None:
            return
        if isinstance(packet, Interest):
            app.on_interest(packet)
        else:
            app.on_data(packet)
