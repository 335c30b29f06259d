"""Protocol state machines for the anonymous upload session.

Actors are host applications on a :class:`~anonpub.fabric.Network`. The
producer delegates signing to a selected proxy over a decoy prefix, hands
sealed pieces of the data to collaborating peers over the sync group, and the
peers forward the packets inside those pieces towards the proxies under their
own decoy prefixes. Collaborating proxies relay packets carrying a registered
data id to the selected proxy, which reassembles, checks the HMAC and
publishes proxy-signed Data.

Sync names used by a session (``<sync>`` is the group prefix)::

    <sync>/Meta_<rand>               uploading metadata, sealed to one peer's key
    <sync>/Decoy_<tag>               a peer's decoy prefix, sealed under its pair key
    <sync>/Piece_<tag>_<j>/<n>       n-th pull request for piece j
    <sync>/Piece_<tag>_<j>/push      piece j pushed by the producer
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field

from anonpub.codec import bytes_to_int, decode_fields, decode_ints, encode_fields, encode_ints, int_to_bytes
from anonpub.crypto import (
    AuthenticationFailure,
    HmacKey,
    KeyPair,
    SchnorrGroup,
    SchnorrSignature,
    SymmetricKey,
    hmac_tag,
    hmac_verify,
    new_hmac_key,
    new_symmetric_key,
    open_sealed,
    pk_open,
    pk_seal,
    schnorr_sign,
    schnorr_verify,
    seal,
)
from anonpub.fabric import DataPacket, Interest, Network
from anonpub.metrics import UploadTrace
from anonpub.names import Name
from anonpub.proxysig import (
    Commitment,
    CommitmentInvalid,
    DelegationBundle,
    DelegationInvalid,
    ProxySignature,
    ProxySigningContext,
    VerificationKeyCache,
    Warrant,
    build_warrant,
    delegate,
    make_commitment,
    proxy_setup,
    proxy_sign,
    proxy_verify,
    verify_commitment,
)

SYNC_PREFIX = Name.parse("/sync/Game1")
PUSH = b"push"


class HmacMismatch(Exception):
    pass


class SessionAborted(Exception):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    mode: str = "hybrid"
    threshold: int = 3
    max_pull_attempts: int = 5
    retry_timeout_ms: float = 2000.0
    egress_interval_ms: float = 2.5
    proxy_relay_delay_ms: float = 10.0
    censor_strategy: str = "peer-masquerade"
    # bogus replies draw their length uniformly from this closed range
    bogus_piece_sizes: tuple[int, int] = (9000, 9000)
    publish_segment_size: int = 8192
    sync_prefix: Name = SYNC_PREFIX

    def __post_init__(self):
        if self.mode not in ("pull", "push", "hybrid"):
            raise ValueError(f"unknown sharing mode {self.mode!r}")
        if self.threshold < 1 or self.max_pull_attempts < 1:
            raise ValueError("threshold and max_pull_attempts must be positive")
        if self.censor_strategy not in ("peer-masquerade", "border-block", "observe"):
            raise ValueError(f"unknown censor strategy {self.censor_strategy!r}")
        lo, hi = self.bogus_piece_sizes
        if not 0 <= lo <= hi:
            raise ValueError("bogus piece size range must satisfy 0 <= low <= high")


# metadata records


@dataclass(frozen=True)
class DelegationMetadata:
    data_name: Name
    data_id: bytes
    data_hmac: bytes
    hmac_key: HmacKey
    data_key: SymmetricKey
    packet_count: int
    producer_public: int

    def to_bytes(self) -> bytes:
        return encode_fields([
            self.data_name.to_bytes(), self.data_id, self.data_hmac, self.hmac_key.key,
            self.data_key.key, self.data_key.key_id, int_to_bytes(self.packet_count),
            int_to_bytes(self.producer_public),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "DelegationMetadata":
        name, did, tag, hk, k, kid, count, pk = decode_fields(data, 8)
        return cls(Name.from_bytes(name), did, tag, HmacKey(hk), SymmetricKey(k, kid),
                   bytes_to_int(count), bytes_to_int(pk))


@dataclass(frozen=True)
class UploadingMetadata:
    pair_key: SymmetricKey
    tag: str
    piece_names: tuple[Name, ...]
    pull_first: bool

    def to_bytes(self) -> bytes:
        return encode_fields([
            self.pair_key.key, self.pair_key.key_id, self.tag.encode(),
            b"P" if self.pull_first else b"X", *(n.to_bytes() for n in self.piece_names),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "UploadingMetadata":
        key, kid, tag, flag, *names = decode_fields(data)
        return cls(SymmetricKey(key, kid), tag.decode(), tuple(Name.from_bytes(n) for n in names),
                   flag == b"P")


# naming and packing helpers


def piece_name(sync: Name, tag: str, j: int) -> Name:
    return sync.append(f"Piece_{tag}_{j}")


def parse_piece_label(label: bytes) -> tuple[str, int] | None:
    parts = label.split(b"_")
    if len(parts) != 3 or parts[0] != b"Piece" or not parts[2].isdigit():
        return None
    return parts[1].decode(), int(parts[2])


def packet_name(decoy: Name, data_id: bytes, seq: int) -> Name:
    return decoy.append(data_id, seq)


def packet_aad(seq: int) -> bytes:
    return str(seq).encode()


def split_packets(data: bytes, packet_size: int) -> list[bytes]:
    return [data[i:i + packet_size] for i in range(0, len(data), packet_size)]


def encode_piece(entries: list[tuple[Name, bytes]]) -> bytes:
    fields: list[bytes] = []
    for name, payload in entries:
        fields += [name.to_bytes(), payload]
    return encode_fields(fields)


def decode_piece(body: bytes) -> list[tuple[Name, bytes]]:
    fields = decode_fields(body)
    if len(fields) % 2:
        raise ValueError("odd field count in piece body")
    return [(Name.from_bytes(fields[i]), fields[i + 1]) for i in range(0, len(fields), 2)]


def select_collaborating_peers(peers: list[str], count: int, rng: random.Random) -> list[str]:
    if not 0 <= count <= len(peers):
        raise ValueError(f"cannot select {count} of {len(peers)} peers")
    return rng.sample(peers, count)


def plan_pieces(n_packets: int, packets_per_piece: int, n_peers: int, rng: random.Random,
                jitter: float = 0.2) -> list[list[range]]:
    """Split packet indices into pieces and hand each peer a contiguous run of them.

    Per-peer piece counts follow weights drawn from ``1 ± jitter`` so peers carry
    different volumes; counts are rounded by largest remainder.
    """
    if n_peers < 1:
        raise ValueError("need at least one peer")
    pieces = [range(s, min(s + packets_per_piece, n_packets))
              for s in range(0, n_packets, packets_per_piece)]
    weights = [1 + rng.uniform(-jitter, jitter) for _ in range(n_peers)]
    total = sum(weights)
    quotas = [w * len(pieces) / total for w in weights]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(n_peers), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in order[:len(pieces) - sum(counts)]:
        counts[i] += 1
    plan, start = [], 0
    for c in counts:
        plan.append(pieces[start:start + c])
        start += c
    return plan


# producer


@dataclass
class PeerUploadState:
    peer: str
    public: int
    tag: str
    pair_key: SymmetricKey
    pieces: list[range]
    mode: str
    decoy: Name | None = None
    sealed: list[bytes] = field(default_factory=list)
    ready: bool = False
    last_piece: int = -1
    consecutive: int = 0
    held: list[Interest] = field(default_factory=list)
    pushed_from: int | None = None


class Producer:
    def __init__(self, host: str, net: Network, group: SchnorrGroup, key: KeyPair, data: bytes,
                 data_name: Name, collab: list[tuple[str, int]], proxy_public: int, proxy_cert: bytes,
                 proxy_decoy: Name, session_key: SymmetricKey, params: ProtocolParams,
                 trace: UploadTrace, rng: random.Random, packet_size: int = 1024,
                 piece_size: int = 8192):
        self.host, self.net, self.group, self.key = host, net, group, key
        self.params, self.trace, self.rng = params, trace, rng
        self.proxy_public, self.proxy_cert = proxy_public, proxy_cert
        self.proxy_decoy, self.session_key = proxy_decoy, session_key
        self.data = data
        hk = new_hmac_key(rng)
        chunks = split_packets(data, packet_size)
        self.metadata = DelegationMetadata(
            data_name, rng.randbytes(8).hex().encode(), hmac_tag(hk, data), hk,
            new_symmetric_key(rng), len(chunks), key.public)
        self.sealed_packets = [seal(self.metadata.data_key, c, rng, packet_aad(s))
                               for s, c in enumerate(chunks)]
        plan = plan_pieces(len(chunks), max(1, piece_size // packet_size), len(collab), rng)
        initial = "push" if params.mode == "push" else "pull"
        self.peers: dict[str, PeerUploadState] = {}
        self.by_tag: dict[str, PeerUploadState] = {}
        for (peer, public), pieces in zip(collab, plan):
            st = PeerUploadState(peer, public, rng.randbytes(4).hex(), new_symmetric_key(rng),
                                 pieces, initial)
            self.peers[peer] = st
            self.by_tag[st.tag] = st
        self.token = rng.randbytes(6).hex()
        self.commitment: Commitment | None = None
        self.bundle: DelegationBundle | None = None
        self.delegated = False
        self.credentials_acked: bool | None = None
        self.push_queues: dict[str, deque[int]] = {}
        self.pumping = False

    def uploading_metadata(self, st: PeerUploadState) -> UploadingMetadata:
        sync = self.params.sync_prefix
        names = tuple(piece_name(sync, st.tag, j) for j in range(len(st.pieces)))
        return UploadingMetadata(st.pair_key, st.tag, names, st.mode == "pull")

    def _nonce(self) -> int:
        return self.rng.getrandbits(64)

    def start(self) -> None:
        self.trace.start_ms = self.net.sim.now
        body = self.metadata.to_bytes()
        sig = schnorr_sign(self.group, self.key, body, self.rng)
        payload = seal(self.session_key, encode_fields([body, sig.to_bytes()]), self.rng)
        self.net.send(self.host, Interest(self.proxy_decoy.append(self.token, "commit"),
                                          self._nonce(), payload, kind="delegation"))

    def _share_metadata(self) -> None:
        # only after the proxy has committed, so every pull finds its pieces ready
        sync = self.params.sync_prefix
        for st in self.peers.values():
            sealed = pk_seal(self.group, st.public, self.uploading_metadata(st).to_bytes(), self.rng)
            name = sync.append(f"Meta_{self.rng.randbytes(4).hex()}")
            self.net.sync_publish(self.host, Interest(name, self._nonce(), sealed, kind="metadata"))
        if not self.peers:
            self._check_metadata_done()

    # delegation

    def on_data(self, data: DataPacket) -> None:
        comps = data.name.components
        if len(comps) < 3 or comps[-2] != self.token.encode():
            return
        try:
            body = open_sealed(self.session_key, data.content)
        except AuthenticationFailure:
            self.trace.aborted = "delegation reply failed authentication"
            return
        if comps[-1] == b"commit":
            self._on_commitment(body)
        elif comps[-1] == b"cred":
            self.credentials_acked = body == b"ok"
            if not self.credentials_acked:
                self.trace.aborted = "proxy rejected delegation"

    def check_commitment(self, c: Commitment) -> None:
        m = self.metadata
        if not verify_commitment(self.group, self.proxy_public, c):
            raise SessionAborted("commitment signature invalid")
        if (c.data_name, c.data_hmac, c.hmac_key) != (m.data_name, m.data_hmac, m.hmac_key):
            raise SessionAborted("commitment does not match the metadata sent")

    def _on_commitment(self, body: bytes) -> None:
        if self.delegated:
            return
        try:
            c = Commitment.from_bytes(body)
            self.check_commitment(c)
            W = build_warrant(self.group, c, self.proxy_cert, self.proxy_public, self.key.public)
        except (SessionAborted, CommitmentInvalid, ValueError) as exc:
            self.trace.aborted = str(exc)
            return
        self.commitment = c
        self.bundle = delegate(self.group, self.key, W, self.rng)
        payload = seal(self.session_key, self.bundle.to_bytes(), self.rng)
        self.net.send(self.host, Interest(self.proxy_decoy.append(self.token, "cred"),
                                          self._nonce(), payload, kind="delegation"))
        self.delegated = True
        self._share_metadata()

    # uploading

    def on_interest(self, interest: Interest) -> None:
        comps = interest.name.components
        sync = self.params.sync_prefix
        if not sync.is_prefix_of(interest.name) or len(comps) <= len(sync):
            return
        label = comps[len(sync)]
        if label.startswith(b"Decoy_"):
            self._on_decoy(label[6:].decode(), interest.payload)
        elif len(comps) == len(sync) + 2 and comps[-1] != PUSH:
            parsed = parse_piece_label(label)
            if parsed:
                self._on_pull(parsed[0], parsed[1], interest)

    def _on_decoy(self, tag: str, payload: bytes) -> None:
        st = self.by_tag.get(tag)
        if st is None or st.decoy is not None:
            return
        try:
            st.decoy = Name.from_bytes(open_sealed(st.pair_key, payload))
        except (AuthenticationFailure, ValueError):
            return
        m = self.metadata
        for rng_ in st.pieces:
            entries = [(packet_name(st.decoy, m.data_id, s), self.sealed_packets[s]) for s in rng_]
            st.sealed.append(seal(st.pair_key, encode_piece(entries), self.rng))
        if self.delegated:
            self._make_ready(st)
        self._check_metadata_done()

    def _check_metadata_done(self) -> None:
        if self.trace.metadata_done_ms is None and self.delegated and all(
                st.decoy is not None for st in self.peers.values()):
            self.trace.metadata_done_ms = self.net.sim.now

    def _make_ready(self, st: PeerUploadState) -> None:
        if st.ready:
            return
        st.ready = True
        held, st.held = st.held, []
        if st.mode == "push":
            start, st.pushed_from = st.pushed_from or 0, None
            self._push(st, start)
            return
        for interest in held:
            self._answer_pull(st, interest)

    def _on_pull(self, tag: str, j: int, interest: Interest) -> None:
        st = self.by_tag.get(tag)
        if st is None or not 0 <= j < len(st.pieces) or st.mode == "push":
            return
        if j == st.last_piece:
            st.consecutive += 1
        else:
            st.last_piece, st.consecutive = j, 1
        if self.params.mode == "hybrid" and st.consecutive >= self.params.threshold:
            st.mode = "push"
            self.trace.switched_to_push[st.peer] = self.net.sim.now
            if st.ready:
                self._push(st, j)
            else:
                st.pushed_from = j
            return
        if not st.ready:
            st.held.append(interest)
            return
        self._answer_pull(st, interest)

    def _answer_pull(self, st: PeerUploadState, interest: Interest) -> None:
        j = parse_piece_label(interest.name.components[len(self.params.sync_prefix)])[1]
        self.trace.packet_sent(st.pieces[j], self.net.sim.now)
        self.net.send(self.host, DataPacket(interest.name, st.sealed[j], kind="piece"))

    def _push(self, st: PeerUploadState, start: int) -> None:
        for j in range(start, len(st.pieces)):
            self.push_queues.setdefault(st.peer, deque()).append(j)
        if not self.pumping:
            self._pump()

    def _pump(self) -> None:
        """Push queued pieces round-robin across peers, one whenever the uplink is idle."""
        sim = self.net.sim
        busy_until = self.net.uplink_free[self.host]
        if busy_until > sim.now:
            self.pumping = True
            sim.schedule(busy_until - sim.now, self._pump)
            return
        self.pumping = False
        if not self.push_queues:
            return
        peer = next(iter(self.push_queues))
        queue = self.push_queues.pop(peer)
        j = queue.popleft()
        if queue:
            self.push_queues[peer] = queue
        st = self.peers[peer]
        self.trace.packet_sent(st.pieces[j], sim.now)
        name = piece_name(self.params.sync_prefix, st.tag, j).append(PUSH)
        self.net.sync_publish(self.host, Interest(name, self._nonce(), st.sealed[j], kind="push"))
        self.pumping = True
        sim.schedule(self.net.uplink_free[self.host] - sim.now, self._pump)


# peers


class CollaboratingPeer:
    def __init__(self, host: str, net: Network, key: KeyPair, decoy: Name, params: ProtocolParams,
                 trace: UploadTrace, rng: random.Random):
        self.host, self.net, self.key, self.decoy = host, net, key, decoy
        self.params, self.trace, self.rng = params, trace, rng
        self.meta: UploadingMetadata | None = None
        self.delivered: set[int] = set()
        self.next_piece = 0
        self.attempt = 0
        self.outstanding: Name | None = None
        self.timer_token = 0
        self.pushed = False
        self.abandoned = False
        self.egress_free = 0.0
        self.egress_sent = 0

    def on_interest(self, interest: Interest) -> None:
        sync = self.params.sync_prefix
        comps = interest.name.components
        if not sync.is_prefix_of(interest.name) or len(comps) <= len(sync):
            return
        label = comps[len(sync)]
        if label.startswith(b"Meta_"):
            self._on_metadata(interest.payload)
        elif self.meta is not None and comps[-1] == PUSH:
            parsed = parse_piece_label(label)
            if parsed and parsed[0] == self.meta.tag:
                self.pushed = True
                self.outstanding = None
                self._on_piece(parsed[1], interest.payload)

    def _on_metadata(self, payload: bytes) -> None:
        if self.meta is not None:
            return
        try:
            meta = UploadingMetadata.from_bytes(pk_open(self.key, payload))
        except (AuthenticationFailure, ValueError):
            return
        self.meta = meta
        reply = seal(meta.pair_key, self.decoy.to_bytes(), self.rng)
        name = self.params.sync_prefix.append(f"Decoy_{meta.tag}")
        self.net.sync_publish(self.host, Interest(name, self.rng.getrandbits(64), reply, kind="decoy"))
        if meta.pull_first:
            self._pull_next()

    def _pull_next(self) -> None:
        meta = self.meta
        while self.next_piece in self.delivered:
            self.next_piece += 1
        if self.pushed or self.abandoned or self.next_piece >= len(meta.piece_names):
            self.outstanding = None
            return
        name = meta.piece_names[self.next_piece].append(self.attempt)
        self.outstanding = name
        self.trace.pulls_issued += 1
        self.net.sync_publish(self.host, Interest(name, self.rng.getrandbits(64), kind="pull"))
        self.timer_token += 1
        self.net.sim.schedule(self.params.retry_timeout_ms, self._on_timeout, self.timer_token)

    def _on_timeout(self, token: int) -> None:
        if token == self.timer_token and self.outstanding is not None:
            self._retry()

    def _retry(self) -> None:
        self.attempt += 1
        if self.attempt >= self.params.max_pull_attempts:
            self.abandoned = True
            self.outstanding = None
            self.trace.abandoned_peers.append(self.host)
            return
        self._pull_next()

    def on_data(self, data: DataPacket) -> None:
        if self.meta is None:
            return
        sync = self.params.sync_prefix
        comps = data.name.components
        if len(comps) != len(sync) + 2:
            return
        parsed = parse_piece_label(comps[len(sync)])
        if not parsed or parsed[0] != self.meta.tag or parsed[1] in self.delivered:
            return
        current = data.name == self.outstanding
        if self._on_piece(parsed[1], data.content):
            self.trace.pulled.setdefault(self.host, set()).add(parsed[1])
            return
        if current:
            self.trace.intercepted.setdefault(self.host, set()).add(parsed[1])
            self.trace.bogus_detected += 1
            self.timer_token += 1
            self._retry()

    def _on_piece(self, j: int, sealed: bytes) -> bool:
        if j in self.delivered or not 0 <= j < len(self.meta.piece_names):
            return j in self.delivered
        try:
            entries = decode_piece(open_sealed(self.meta.pair_key, sealed))
        except (AuthenticationFailure, ValueError):
            return False
        self.delivered.add(j)
        self.trace.piece_opened(self.net.sim.now)
        for name, payload in entries:
            self._egress(name, payload)
        if not self.pushed and j == self.next_piece:
            self.attempt = 0
            self.timer_token += 1
            self._pull_next()
        return True

    def _egress(self, name: Name, payload: bytes) -> None:
        sim = self.net.sim
        send_at = max(sim.now, self.egress_free)
        self.egress_free = send_at + self.params.egress_interval_ms
        self.egress_sent += 1
        interest = Interest(name, self.rng.getrandbits(64), payload, kind="egress")
        sim.schedule(send_at - sim.now, self.net.send, self.host, interest)


class PassivePeer:
    """Sync-group member that is not collaborating in this session."""

    def on_interest(self, interest: Interest) -> None:
        pass

    def on_data(self, data: DataPacket) -> None:
        pass


class Censor:
    """Censoring node posing as a peer in the sync group."""

    def __init__(self, host: str, net: Network, params: ProtocolParams, rng: random.Random):
        self.host, self.net, self.params, self.rng = host, net, params, rng
        self.observed: list[tuple[float, str, int]] = []
        self.bogus_sent = 0

    def on_interest(self, interest: Interest) -> None:
        self.observed.append((self.net.sim.now, str(interest.name), interest.size_bytes))
        if self.params.censor_strategy != "peer-masquerade":
            return
        sync = self.params.sync_prefix
        comps = interest.name.components
        if (len(comps) == len(sync) + 2 and comps[-1] != PUSH
                and parse_piece_label(comps[len(sync)]) is not None):
            junk = self.rng.randbytes(self.rng.randint(*self.params.bogus_piece_sizes))
            self.bogus_sent += 1
            self.net.send(self.host, DataPacket(interest.name, junk, kind="bogus"))

    def on_data(self, data: DataPacket) -> None:
        self.observed.append((self.net.sim.now, str(data.name), data.size_bytes))


# proxies


class ProxyRegistry:
    """Data ids shared by the selected proxy with every collaborating proxy."""

    def __init__(self):
        self.routes: dict[bytes, "SelectedProxy"] = {}

    def register(self, data_id: bytes, selected: "SelectedProxy") -> None:
        self.routes[data_id] = selected


class CollaboratingProxy:
    def __init__(self, host: str, net: Network, registry: ProxyRegistry, params: ProtocolParams):
        self.host, self.net, self.registry, self.params = host, net, registry, params
        self.relayed = 0
        self.ignored = 0

    def on_interest(self, interest: Interest) -> None:
        comps = interest.name.components
        selected = self.registry.routes.get(comps[1]) if len(comps) >= 3 else None
        if selected is None:
            self.handle_other(interest)
        elif selected is self:
            self.gather(interest)
        else:
            self.relayed += 1
            self.net.sim.schedule(self.params.proxy_relay_delay_ms, selected.gather, interest)

    def handle_other(self, interest: Interest) -> None:
        self.ignored += 1

    def on_data(self, data: DataPacket) -> None:
        pass


@dataclass
class ProxyGatherState:
    metadata: DelegationMetadata
    received: dict[int, bytes] = field(default_factory=dict)
    rejected: int = 0
    ctx: ProxySigningContext | None = None


def reconcile(state: ProxyGatherState) -> bytes:
    m = state.metadata
    if len(state.received) != m.packet_count:
        raise ValueError("gathering incomplete")
    plaintext = b"".join(state.received[s] for s in range(m.packet_count))
    if not hmac_verify(m.hmac_key, plaintext, m.data_hmac):
        raise HmacMismatch("reconciled data does not match the committed HMAC")
    return plaintext


def packet_message(name: Name, content: bytes) -> bytes:
    return encode_fields([name.to_bytes(), content, b""])


def publish(ctx: ProxySigningContext, data_name: Name, plaintext: bytes, producer_cert: bytes,
            segment_size: int, rng: random.Random) -> list[DataPacket]:
    info = encode_fields([producer_cert, ctx.warrant_bytes])
    out = []
    for seg, off in enumerate(range(0, len(plaintext), segment_size)):
        name = data_name.append(seg)
        content = plaintext[off:off + segment_size]
        sig = proxy_sign(ctx, packet_message(name, content), rng)
        out.append(DataPacket(name, content, info, encode_ints([sig.t, sig.a, sig.b]), kind="published"))
    return out


def consumer_verify(group: SchnorrGroup, producer_pk: int, packet: DataPacket,
                    cache: VerificationKeyCache | None = None) -> bool:
    try:
        _, warrant = decode_fields(packet.signature_info, 2)
        t, a, b = decode_ints(packet.signature_value, 3)
        sig = ProxySignature(packet_message(packet.name, packet.content), Warrant.from_bytes(warrant), t, a, b)
    except ValueError:
        return False
    return proxy_verify(group, producer_pk, sig, cache)


class SelectedProxy(CollaboratingProxy):
    def __init__(self, host: str, net: Network, registry: ProxyRegistry, params: ProtocolParams,
                 group: SchnorrGroup, key: KeyPair, session_key: SymmetricKey, producer_cert: bytes,
                 trace: UploadTrace, rng: random.Random, tamper_name: Name | None = None):
        super().__init__(host, net, registry, params)
        self.group, self.key, self.session_key = group, key, session_key
        self.producer_cert, self.trace, self.rng = producer_cert, trace, rng
        self.tamper_name = tamper_name
        self.state: ProxyGatherState | None = None
        self.published: list[DataPacket] = []
        self.plaintext: bytes | None = None

    def handle_other(self, interest: Interest) -> None:
        step = interest.name.components[-1]
        try:
            body = open_sealed(self.session_key, interest.payload)
        except AuthenticationFailure:
            self.ignored += 1
            return
        if step == b"commit":
            reply = self._commit(body)
        elif step == b"cred":
            reply = self._credentials(body)
        else:
            return
        if reply is not None:
            content = seal(self.session_key, reply, self.rng)
            self.net.send(self.host, DataPacket(interest.name, content, kind="delegation"))

    def _commit(self, body: bytes) -> bytes | None:
        try:
            meta_bytes, sig = decode_fields(body, 2)
            meta = DelegationMetadata.from_bytes(meta_bytes)
            if not schnorr_verify(self.group, meta.producer_public, meta_bytes,
                                  SchnorrSignature.from_bytes(sig)):
                return None
        except ValueError:
            return None
        self.state = ProxyGatherState(meta)
        self.registry.register(meta.data_id, self)
        name = self.tamper_name or meta.data_name
        return make_commitment(self.group, self.key, name, meta.data_hmac, meta.hmac_key, self.rng).to_bytes()

    def _credentials(self, body: bytes) -> bytes:
        if self.state is None:
            return b"fail"
        try:
            bundle = DelegationBundle.from_bytes(body)
            self.state.ctx = proxy_setup(self.group, bundle, self.state.metadata.producer_public)
        except (DelegationInvalid, ValueError):
            return b"fail"
        self._finish()
        return b"ok"

    def gather(self, interest: Interest) -> None:
        st = self.state
        comps = interest.name.components
        try:
            seq = int(comps[2])
            chunk = open_sealed(st.metadata.data_key, interest.payload, packet_aad(seq))
        except (ValueError, AuthenticationFailure):
            st.rejected += 1
            return
        if not 0 <= seq < st.metadata.packet_count or seq in st.received:
            return
        st.received[seq] = chunk
        self.trace.packet_received(seq, self.net.sim.now)
        if len(st.received) == st.metadata.packet_count:
            self.trace.complete_ms = self.net.sim.now
            self._finish()

    def _finish(self) -> None:
        st = self.state
        if st is None or st.ctx is None or self.plaintext is not None:
            return
        if len(st.received) != st.metadata.packet_count:
            return
        try:
            self.plaintext = reconcile(st)
        except HmacMismatch:
            self.trace.hmac_ok = False
            return
        self.trace.hmac_ok = True
        self.published = publish(st.ctx, st.metadata.data_name, self.plaintext, self.producer_cert,
                                 self.params.publish_segment_size, self.rng)
        self.trace.published = True
