"""Router-level topology files and actor placement.

File format: one link per line, ``node_a node_b [delay_ms]``; ``#`` starts a
comment; node ids are non-negative integers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import networkx as nx

DEFAULT_TOPOLOGY = "as1221_synthetic.topo"


class ParseError(ValueError):
    pass


class PlacementInfeasible(RuntimeError):
    pass


@dataclass
class Placement:
    attachments: dict[str, int]
    producer: str
    peers: list[str]
    censors: list[str]
    proxies: list[str]
    selected_proxy: str

    def role_of(self, host: str) -> str:
        if host == self.producer:
            return "producer"
        if host == self.selected_proxy:
            return "selected_proxy"
        if host in self.proxies:
            return "proxy"
        if host in self.censors:
            return "censor"
        return "peer"

    def dump(self) -> str:
        lines = ["# role host router"]
        for host in [*self.peers, *self.censors, *self.proxies]:
            lines.append(f"{self.role_of(host)} {host} {self.attachments[host]}")
        return "\n".join(lines) + "\n"


@dataclass
class Topology:
    graph: nx.Graph
    source: str = ""
    placement: Placement | None = None
    _hops: dict[int, dict[int, int]] = field(default_factory=dict, repr=False)

    @property
    def routers(self) -> list[int]:
        return sorted(self.graph.nodes)

    @property
    def links(self) -> list[tuple[int, int, float]]:
        return [(a, b, d["delay"]) for a, b, d in self.graph.edges(data=True)]

    def hop_distances(self, router: int) -> dict[int, int]:
        dist = self._hops.get(router)
        if dist is None:
            dist = nx.single_source_shortest_path_length(self.graph, router)
            self._hops[router] = dist
        return dist


def parse_topology(text: str, default_delay_ms: float = 2.0, source: str = "") -> Topology:
    graph = nx.Graph()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"line {lineno}: expected 'node_a node_b [delay_ms]'")
        try:
            a, b = int(parts[0]), int(parts[1])
            delay = float(parts[2]) if len(parts) == 3 else default_delay_ms
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if a < 0 or b < 0:
            raise ParseError(f"line {lineno}: node ids must be non-negative")
        if a == b:
            raise ParseError(f"line {lineno}: self-loop")
        if delay < 0:
            raise ParseError(f"line {lineno}: negative delay")
        graph.add_edge(a, b, delay=delay)
    if graph.number_of_nodes() == 0:
        raise ParseError("topology has no links")
    if not nx.is_connected(graph):
        raise ParseError("topology graph is not connected")
    return Topology(graph, source)


def default_topology_path() -> Path:
    return Path(str(resources.files("anonpub") / "data" / DEFAULT_TOPOLOGY))


def load_topology(path: str | Path | None = None, default_delay_ms: float = 2.0) -> Topology:
    p = Path(path) if path else default_topology_path()
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from None
    return parse_topology(text, default_delay_ms, str(p))


def synthesize_isp_topology(seed: int = 1221, routers: int = 278, links: int = 731) -> nx.Graph:
    """Three-tier core/gateway/leaf graph with exactly ``routers`` nodes and ``links`` edges."""
    rng = random.Random(seed)
    n_core = 24
    n_gw = 84
    core = list(range(n_core))
    gws = list(range(n_core, n_core + n_gw))
    leaves = list(range(n_core + n_gw, routers))
    g = nx.Graph()
    for i in core:
        g.add_edge(i, core[(i + 1) % n_core])
    for gw in gws:
        for c in rng.sample(core, 2):
            g.add_edge(gw, c)
    for leaf in leaves:
        g.add_edge(leaf, rng.choice(gws))
    # redundant leaf uplinks, then meshing inside the core until the link budget is met
    extra_leaf = rng.sample(leaves, 40)
    for leaf in extra_leaf:
        g.add_edge(leaf, rng.choice(gws))
    while g.number_of_edges() < links:
        a, b = rng.sample(core + gws[:30], 2)
        if a in core or b in core:
            g.add_edge(a, b)
    return g


def write_topology(graph: nx.Graph, path: str | Path, header: str = "") -> None:
    lines = [f"# {ln}" for ln in header.splitlines()] if header else []
    lines += [f"{a} {b}" for a, b in sorted(tuple(sorted(e)) for e in graph.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def place_actors(topology: Topology, peers: int, censors: int, proxies: int,
                 min_proxy_distance: int, seed: int, max_retries: int = 200,
                 censor_seed: int | None = None) -> Topology:
    """Attach hosts to routers; proxies must be ``min_proxy_distance`` hops from every peer.

    Host-to-host hop counts include both access links. Censor attachment uses its
    own stream and draws a fixed sequence, so the censor set for a smaller count
    is always a prefix of the set for a larger one.
    """
    if peers < 1 or proxies < 1 or censors < 0:
        raise PlacementInfeasible("need at least one peer and one proxy")
    routers = topology.routers
    rng = random.Random(seed)
    router_gap = max(0, min_proxy_distance - 2)
    for _ in range(max_retries):
        peer_routers = [rng.choice(routers) for _ in range(peers)]
        occupied = set(peer_routers)
        far = []
        for r in routers:
            dist = topology.hop_distances(r)
            if all(dist[p] >= router_gap for p in occupied):
                far.append(r)
        if len(far) < proxies:
            continue
        proxy_routers = rng.sample(far, proxies)
        break
    else:
        raise PlacementInfeasible(
            f"could not place {proxies} proxies {min_proxy_distance} hops from {peers} peers")
    attachments: dict[str, int] = {}
    peer_ids = [f"peer{i}" for i in range(peers)]
    for host, r in zip(peer_ids, peer_routers):
        attachments[host] = r
    proxy_ids = [f"proxy{i}" for i in range(proxies)]
    for host, r in zip(proxy_ids, proxy_routers):
        attachments[host] = r
    producer = rng.choice(peer_ids)
    selected = rng.choice(proxy_ids)
    crng = random.Random(seed * 7919 + 17 if censor_seed is None else censor_seed)
    censor_ids = [f"censor{i}" for i in range(censors)]
    inside = [r for r in routers if r not in set(proxy_routers)]
    for host in censor_ids:
        attachments[host] = crng.choice(inside)
    placement = Placement(attachments, producer, peer_ids, censor_ids, proxy_ids, selected)
    return Topology(topology.graph, topology.source, placement, topology._hops)


def peer_proxy_min_hops(topology: Topology) -> int:
    pl = topology.placement
    assert pl is not None
    best = None
    for proxy in pl.proxies:
        dist = topology.hop_distances(pl.attachments[proxy])
        for peer in pl.peers:
            d = dist[pl.attachments[peer]] + 2
            best = d if best is None else min(best, d)
    return best
