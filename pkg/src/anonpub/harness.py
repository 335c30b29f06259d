"""Scenario configuration, single runs and parameter sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

from anonpub import actors
from anonpub.crypto import AEAD_OVERHEAD, default_group, keygen, new_symmetric_key
from anonpub.engine import InvariantViolation, Simulator
from anonpub.fabric import Interest, Network
from anonpub.metrics import (
    OVERHEAD_KINDS,
    UploadTrace,
    compute_blocked_fraction,
    compute_delay_breakdown,
    compute_normalized_overhead,
    compute_per_packet_delays,
    compute_publication_delay,
    compute_success_rate,
    overhead_ratio,
)
from anonpub.names import Name
from anonpub.onion import build_circuit, closest_proxy, direct_upload, onion_upload, public_layer_overhead
from anonpub.proxysig import VerificationKeyCache
from anonpub.topology import Topology, load_topology, place_actors

log = logging.getLogger(__name__)

MODES = ("pull", "push", "hybrid", "onion", "direct")
CSV_COLUMNS = ["mode", "peers", "collab_peers", "censor_frac", "seed", "success_rate", "pub_delay_ms",
               "overhead_norm", "blocked_frac", "pct_metadata", "pct_pieces", "pct_egress"]


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    topology: str = ""
    peers: int = 0
    collab_peers: int = 20
    censor_frac: float = 0.0
    proxies: int = 5
    mode: str = "hybrid"
    data_size: int = 1 << 20
    packet_size: int = 1024
    piece_size: int = 8192
    threshold: int = 3
    max_pull_attempts: int = 5
    retry_timeout_ms: float = 2000.0
    min_proxy_distance: int = 5
    link_delay_ms: float = 2.0
    access_delay_ms: float = 2.0
    uplink_mbps: float = 50.0
    peer_egress_pps: float = 400.0
    proxy_relay_delay_ms: float = 10.0
    pit_lifetime_ms: float = 4000.0
    cs_capacity: int = 1000
    q_bits: int = 256
    horizon_ms: float = 600_000.0
    censor_strategy: str = "peer-masquerade"
    decoy_prefixes: str = "/Mendeley,/Wikipedia,/Dropbox,/ArXiv,/Zotero"
    onion_layer_scheme: str = "public"
    onion_encrypt_ms: float = 0.35
    onion_decrypt_ms: float = 0.18
    seeds: str = "1"

    def validate(self) -> "ScenarioConfig":
        if not 0.0 <= self.censor_frac <= 1.0:
            raise ConfigInvalid("censor_frac must lie in [0, 1]")
        if self.collab_peers < 1:
            raise ConfigInvalid("collab_peers must be at least 1")
        if self.peers and self.peers < self.collab_peers + 1:
            raise ConfigInvalid("peers must exceed collab_peers (the producer is one of the peers)")
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {', '.join(MODES)}")
        if self.proxies < 1:
            raise ConfigInvalid("need at least one proxy")
        if self.data_size < 1 or self.packet_size < 1 or self.piece_size < self.packet_size:
            raise ConfigInvalid("data_size, packet_size must be positive and piece_size >= packet_size")
        if self.threshold < 1 or self.max_pull_attempts < 1:
            raise ConfigInvalid("threshold and max_pull_attempts must be positive")
        if self.censor_strategy not in ("peer-masquerade", "border-block", "observe"):
            raise ConfigInvalid("unknown censor_strategy")
        if self.onion_layer_scheme not in ("public", "symmetric"):
            raise ConfigInvalid("onion_layer_scheme must be public or symmetric")
        if self.q_bits < 8:
            raise ConfigInvalid("q_bits must be at least 8")
        if not self.decoy_prefix_list:
            raise ConfigInvalid("need at least one decoy prefix")
        for v in (self.link_delay_ms, self.access_delay_ms, self.uplink_mbps, self.peer_egress_pps,
                  self.proxy_relay_delay_ms, self.onion_encrypt_ms, self.onion_decrypt_ms):
            if v < 0:
                raise ConfigInvalid("delays and rates must be non-negative")
        self.seed_list
        return self

    @property
    def total_peers(self) -> int:
        return self.peers or self.collab_peers + 1

    @property
    def censor_count(self) -> int:
        return round(self.censor_frac * self.collab_peers)

    @property
    def decoy_prefix_list(self) -> list[Name]:
        return [Name.parse(p.strip()) for p in self.decoy_prefixes.split(",") if p.strip()]

    @property
    def seed_list(self) -> list[int]:
        return parse_seeds(self.seeds)

    @property
    def ms_per_byte(self) -> float:
        return 8.0 / (self.uplink_mbps * 1000.0) if self.uplink_mbps else 0.0


def parse_seeds(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigInvalid(f"bad seed list entry {part!r}") from None
    return out


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    if name not in types:
        raise ConfigInvalid(f"unknown config key {name!r}")
    kind = types[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigInvalid(f"{name}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_key_values(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def config_from_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values = {k: _coerce(k, v) for k, v in parse_key_values(text)}
    return replace(base or ScenarioConfig(), **values).validate()


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from None
    return config_from_text(text)


def config_to_text(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


def stream(seed: int, name: str) -> random.Random:
    """Independent named random stream for one run."""
    return random.Random(f"{seed}/{name}")


@lru_cache(maxsize=8)
def _topology(path: str, link_delay_ms: float) -> Topology:
    return load_topology(path or None, default_delay_ms=link_delay_ms)


@dataclass
class RunMetrics:
    success_rate: float
    publication_delay: float
    per_packet_delays: list[float]
    normalized_overhead: float
    blocked_peer_fraction: float
    delay_breakdown: tuple[float, float, float]
    overhead_ratio: float
    complete: bool


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    metrics: RunMetrics
    trace: UploadTrace
    events: list[str] | None = None
    extras: dict = field(default_factory=dict)

    def csv_row(self) -> dict:
        m = self.metrics
        b = m.delay_breakdown
        return {
            "mode": self.config.mode, "peers": self.config.total_peers,
            "collab_peers": self.config.collab_peers, "censor_frac": self.config.censor_frac,
            "seed": self.seed, "success_rate": _fmt(m.success_rate), "pub_delay_ms": _fmt(m.publication_delay),
            "overhead_norm": _fmt(m.normalized_overhead), "blocked_frac": _fmt(m.blocked_peer_fraction),
            "pct_metadata": _fmt(b[0]), "pct_pieces": _fmt(b[1]), "pct_egress": _fmt(b[2]),
        }


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


class _Scenario:
    """Everything a run builds before the event loop starts."""

    def __init__(self, cfg: ScenarioConfig, seed: int, trace_events: bool):
        self.cfg, self.seed = cfg, seed
        base = _topology(cfg.topology, cfg.link_delay_ms)
        self.topology = place_actors(base, cfg.total_peers, cfg.censor_count, cfg.proxies,
                                     cfg.min_proxy_distance, seed)
        pl = self.topology.placement
        self.sim = Simulator(cfg.horizon_ms)
        self.net = Network(self.sim, self.topology, access_delay_ms=cfg.access_delay_ms,
                           uplink_ms_per_byte=cfg.ms_per_byte, pit_lifetime_ms=cfg.pit_lifetime_ms,
                           cs_capacity=cfg.cs_capacity, sync_prefix=actors.SYNC_PREFIX)
        if trace_events:
            self.net.trace = []
        for host in [*pl.peers, *pl.censors]:
            self.net.attach_host(host, pl.attachments[host])
        for host in pl.proxies:
            self.net.attach_host(host, pl.attachments[host], outside=True)
        self.decoys = cfg.decoy_prefix_list
        self.proxy_decoy = {}
        for i, prefix in enumerate(self.decoys):
            proxy = pl.proxies[i % len(pl.proxies)]
            self.net.register_decoy_prefix(prefix, proxy)
            self.proxy_decoy.setdefault(proxy, prefix)
        others = [p for p in pl.peers if p != pl.producer]
        self.collab = actors.select_collaborating_peers(others, cfg.collab_peers, stream(seed, "collab"))
        self.group = default_group(cfg.q_bits)
        krng = stream(seed, "keys")
        self.keys = {h: keygen(self.group, krng) for h in [*pl.peers, *pl.proxies]}
        self.session_key = new_symmetric_key(krng)
        ids = stream(seed, "identity")
        self.producer_prefix = Name.parse(f"/home-{ids.randbytes(6).hex()}")
        self.producer_cert = b"anon-cert:" + ids.randbytes(8).hex().encode()
        self.proxy_cert = b"proxy-cert:" + ids.randbytes(8).hex().encode()
        self.data = stream(seed, "data").randbytes(cfg.data_size)
        self.data_name = Name.parse(f"/news/uploads/{ids.randbytes(4).hex()}")
        self.trace = UploadTrace(math.ceil(cfg.data_size / cfg.packet_size), cfg.data_size,
                                 cfg.horizon_ms, collab_peers=cfg.collab_peers)
        self.seen_uids: set[int] = set()
        self.net.observers.append(self._scan)

    def _scan(self, src, dst, packet) -> None:
        if packet.uid in self.seen_uids:
            return
        self.seen_uids.add(packet.uid)
        needles = (self.producer_prefix.components[0], self.producer_cert)
        blobs = [*packet.name.components]
        if isinstance(packet, Interest):
            blobs.append(packet.payload)
        else:
            blobs += [packet.content, packet.signature_info, packet.signature_value]
        if any(n in b for n in needles for b in blobs):
            self.trace.anonymity_violations += 1

    def piece_size_range(self, ppp: int) -> tuple[int, int]:
        """Smallest and largest sealed full piece any collaborating peer can receive."""
        n = self.trace.total_packets
        payload = b"\0" * (self.cfg.packet_size + AEAD_OVERHEAD)
        data_id = b"0" * 16
        sizes = [
            len(actors.encode_piece([(actors.packet_name(d, data_id, s), payload)] * ppp)) + AEAD_OVERHEAD
            for d in self.decoys for s in (0, max(0, n - 1))
        ]
        return min(sizes), max(sizes)

    def params(self) -> actors.ProtocolParams:
        cfg = self.cfg
        ppp = max(1, cfg.piece_size // cfg.packet_size)
        return actors.ProtocolParams(
            mode=cfg.mode, threshold=cfg.threshold, max_pull_attempts=cfg.max_pull_attempts,
            retry_timeout_ms=cfg.retry_timeout_ms,
            egress_interval_ms=1000.0 / cfg.peer_egress_pps if cfg.peer_egress_pps else 0.0,
            proxy_relay_delay_ms=cfg.proxy_relay_delay_ms, censor_strategy=cfg.censor_strategy,
            bogus_piece_sizes=self.piece_size_range(ppp),
            publish_segment_size=cfg.piece_size)


def _run_protocol(sc: _Scenario) -> dict:
    cfg, net, pl = sc.cfg, sc.net, sc.topology.placement
    params = sc.params()
    seed = sc.seed
    registry = actors.ProxyRegistry()
    selected = None
    for proxy in pl.proxies:
        if proxy == pl.selected_proxy:
            selected = actors.SelectedProxy(proxy, net, registry, params, sc.group, sc.keys[proxy],
                                            sc.session_key, sc.producer_cert, sc.trace,
                                            stream(seed, "proxy"))
            net.set_app(proxy, selected)
        else:
            net.set_app(proxy, actors.CollaboratingProxy(proxy, net, registry, params))
    drng = stream(seed, "decoy")
    peers = {}
    for host in sc.collab:
        decoy = drng.choice(sc.decoys)
        peers[host] = actors.CollaboratingPeer(host, net, sc.keys[host], decoy, params, sc.trace,
                                               stream(seed, f"peer/{host}"))
        net.set_app(host, peers[host])
    for host in pl.peers:
        if host not in peers and host != pl.producer:
            net.set_app(host, actors.PassivePeer())
    crng = stream(seed, "censors")
    for host in pl.censors:
        net.set_app(host, actors.Censor(host, net, params, random.Random(crng.getrandbits(64))))
    net.set_sync_group([*pl.peers, *pl.censors])
    producer = actors.Producer(
        pl.producer, net, sc.group, sc.keys[pl.producer], sc.data, sc.data_name,
        [(h, sc.keys[h].public) for h in sc.collab], sc.keys[pl.selected_proxy].public, sc.proxy_cert,
        sc.proxy_decoy[pl.selected_proxy], sc.session_key, params, sc.trace, stream(seed, "producer"),
        cfg.packet_size, cfg.piece_size)
    net.set_app(pl.producer, producer)
    net.sim.schedule(0.0, producer.start)
    net.sim.run()
    trace = sc.trace
    trace.overhead_bytes = sum(net.link_bytes[k] for k in OVERHEAD_KINDS)
    if selected.published:
        published = b"".join(p.content for p in selected.published)
        trace.published_matches = published == sc.data and selected.plaintext == sc.data
        cache = VerificationKeyCache()
        trace.consumer_verified = all(
            actors.consumer_verify(sc.group, sc.keys[pl.producer].public, p, cache) for p in selected.published)
    if trace.complete and trace.hmac_ok is not True:
        log.warning("run %s/%s completed gathering but did not publish", cfg.mode, seed)
    return {"stats": dict(net.stats), "pulls": trace.pulls_issued, "bogus": trace.bogus_detected,
            "switched": len(trace.switched_to_push), "events": net.sim.events_run}


def _packet_payloads(cfg: ScenarioConfig) -> list[int]:
    full, rest = divmod(cfg.data_size, cfg.packet_size)
    sizes = [cfg.packet_size] * full + ([rest] if rest else [])
    return [s + AEAD_OVERHEAD for s in sizes]


def _run_baseline(sc: _Scenario) -> dict:
    cfg, net, pl = sc.cfg, sc.net, sc.topology.placement
    payloads = _packet_payloads(cfg)
    name_bytes = sc.decoys[0].byte_length + 2 + 16 + 2 + 4
    if cfg.mode == "direct":
        proxy = closest_proxy(net, pl.producer, pl.proxies)
        sc.trace.overhead_bytes = direct_upload(net, sc.trace, pl.producer, proxy, name_bytes, payloads,
                                                cfg.ms_per_byte)
        return {"proxy": proxy}
    censor_routers = {pl.attachments[c] for c in pl.censors}
    proxy_routers = {pl.attachments[p] for p in pl.proxies}
    eligible = [r for r in sc.topology.routers if r not in censor_routers and r not in proxy_routers]
    overhead = public_layer_overhead(sc.group) if cfg.onion_layer_scheme == "public" else AEAD_OVERHEAD
    circuit = build_circuit(net, eligible, pl.proxies, stream(sc.seed, "onion"),
                            cfg.onion_encrypt_ms, cfg.onion_decrypt_ms, overhead)
    sc.trace.overhead_bytes = onion_upload(net, sc.trace, pl.producer, circuit, name_bytes, payloads,
                                           cfg.ms_per_byte)
    return {"relays": circuit.relays, "exit": circuit.exit_proxy}


def run(config: ScenarioConfig, seed: int, pull_reference: float | None = None,
        trace_events: bool = False) -> RunResult:
    """One deterministic run. ``pull_reference`` is the matched Pull run's overhead ratio."""
    cfg = config.validate()
    sc = _Scenario(cfg, seed, trace_events)
    if cfg.mode in ("onion", "direct"):
        extras = _run_baseline(sc)
    else:
        extras = _run_protocol(sc)
    trace = sc.trace
    if trace.anonymity_violations:
        raise InvariantViolation(f"{trace.anonymity_violations} censor-visible packets expose the producer")
    if trace.published and not trace.published_matches:
        raise InvariantViolation("published data differs from the produced data")
    ratio = overhead_ratio(trace)
    if cfg.mode == "pull":
        pull_reference = ratio
    if pull_reference is None:
        pull_reference = run(replace(cfg, mode="pull"), seed).metrics.overhead_ratio
    metrics = RunMetrics(
        success_rate=compute_success_rate(trace),
        publication_delay=compute_publication_delay(trace),
        per_packet_delays=compute_per_packet_delays(trace),
        normalized_overhead=compute_normalized_overhead(trace, pull_reference) if pull_reference > 0 else float("nan"),
        blocked_peer_fraction=compute_blocked_fraction(trace),
        delay_breakdown=compute_delay_breakdown(trace),
        overhead_ratio=ratio,
        complete=trace.complete,
    )
    return RunResult(cfg, seed, metrics, trace, sc.net.trace, extras)


# sweeps


def parse_grid(text: str) -> tuple[dict[str, list], list[int]]:
    """Grid file: ``key = v1, v2, ...`` per line; ``seeds`` accepts ``a..b`` ranges."""
    grid: dict[str, list] = {}
    seeds = [1]
    for key, raw in parse_key_values(text):
        if key == "seeds":
            seeds = parse_seeds(raw)
            continue
        values = [v.strip() for v in raw.split(",")] if key != "decoy_prefixes" else [raw]
        grid[key] = [_coerce(key, v) for v in values if v]
    return grid, seeds


def sweep(grid: dict[str, list], seeds: list[int], base: ScenarioConfig | None = None,
          progress=None) -> tuple[list[RunResult | None], str]:
    """Run the cartesian product of ``grid`` for every seed; returns results and CSV text.

    Pull runs are executed first at each point so their overhead ratios can
    normalise the other modes without being recomputed.
    """
    base = base or ScenarioConfig()
    keys = list(grid)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))] if keys else []
    configs = []
    for p in points:
        try:
            configs.append(replace(base, **p).validate())
        except (ConfigInvalid, TypeError) as exc:
            raise ConfigInvalid(f"grid point {p}: {exc}") from None
    out = io.StringIO()
    writer = csv.DictWriter(out, CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    refs: dict[tuple, float] = {}
    results: list[RunResult | None] = []
    order = sorted(range(len(configs)), key=lambda i: configs[i].mode != "pull")
    by_index: dict[int, list] = {}
    for i in order:
        cfg = configs[i]
        rows = []
        for seed in seeds:
            key = (replace(cfg, mode="pull"), seed)
            try:
                res = run(cfg, seed, refs.get(key))
                if cfg.mode == "pull":
                    refs[key] = res.metrics.overhead_ratio
                rows.append(res)
            except Exception as exc:  # recorded per row; the sweep keeps going
                log.error("run %s seed %s failed: %s", cfg, seed, exc)
                rows.append((cfg, seed, exc))
            if progress:
                progress(cfg, seed)
        by_index[i] = rows
    for i, cfg in enumerate(configs):
        rows = by_index[i]
        ok = []
        for r in rows:
            if isinstance(r, RunResult):
                writer.writerow(r.csv_row())
                results.append(r)
                ok.append(r)
            else:
                _, seed, _ = r
                writer.writerow({**_blank_row(cfg), "seed": seed})
                results.append(None)
        if ok:
            writer.writerow(mean_row(cfg, ok))
    return results, out.getvalue()


def _blank_row(cfg: ScenarioConfig) -> dict:
    row = {c: "nan" for c in CSV_COLUMNS}
    row.update(mode=cfg.mode, peers=cfg.total_peers, collab_peers=cfg.collab_peers, censor_frac=cfg.censor_frac)
    return row


def mean_row(cfg: ScenarioConfig, results: list[RunResult]) -> dict:
    row = _blank_row(cfg)
    row["seed"] = "mean"
    for col in CSV_COLUMNS[5:]:
        vals = [float(r.csv_row()[col]) for r in results]
        vals = [v for v in vals if not math.isnan(v)]
        row[col] = _fmt(sum(vals) / len(vals)) if vals else "nan"
    return row


def results_csv(results: list[RunResult]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.csv_row())
    return out.getvalue()
