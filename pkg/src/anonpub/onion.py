"""Onion-routing comparison baseline and the direct-upload reference.

Both baselines move the data packet by packet along fixed paths; delays are
propagation plus uplink serialisation plus modelled crypto time. The
producer wraps packets one after another on a single CPU, and each relay
peels its layer in arrival order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from anonpub.crypto import (
    AEAD_OVERHEAD,
    KeyPair,
    SchnorrGroup,
    SymmetricKey,
    new_symmetric_key,
    open_sealed,
    pk_open,
    pk_overhead,
    pk_seal,
    seal,
)
from anonpub.fabric import INTEREST_HEADER, Network
from anonpub.metrics import UploadTrace

LAYERS = 3


@dataclass(frozen=True)
class OnionCircuit:
    relays: tuple[int, int, int]
    layer_keys: tuple[SymmetricKey, SymmetricKey, SymmetricKey]
    encrypt_ms: float
    decrypt_ms: float
    exit_proxy: str
    layer_overhead: int = AEAD_OVERHEAD

    def __post_init__(self):
        if len(self.relays) != LAYERS or len(set(self.relays)) != LAYERS:
            raise ValueError("a circuit needs three distinct relays")
        if len(self.layer_keys) != LAYERS:
            raise ValueError("a circuit needs one key per relay")


def build_circuit(net: Network, eligible: list[int], proxies: list[str], rng: random.Random,
                  encrypt_ms: float, decrypt_ms: float, layer_overhead: int = AEAD_OVERHEAD) -> OnionCircuit:
    relays = tuple(rng.sample(eligible, LAYERS))
    keys = tuple(new_symmetric_key(rng) for _ in range(LAYERS))
    exit_proxy = min(proxies, key=lambda p: (net.path_delay(relays[-1], p), proxies.index(p)))
    return OnionCircuit(relays, keys, encrypt_ms, decrypt_ms, exit_proxy, layer_overhead)


def onion_wrap(circuit: OnionCircuit, payload: bytes, rng: random.Random) -> bytes:
    for key in reversed(circuit.layer_keys):
        payload = seal(key, payload, rng)
    return payload


def onion_unwrap(key: SymmetricKey, layered: bytes) -> bytes:
    return open_sealed(key, layered)


def onion_wrap_public(group: SchnorrGroup, relay_publics: list[int], payload: bytes,
                      rng: random.Random) -> bytes:
    """Per-packet layers sealed to each relay's public key, innermost first."""
    for public in reversed(relay_publics):
        payload = pk_seal(group, public, payload, rng)
    return payload


def onion_unwrap_public(relay: KeyPair, layered: bytes) -> bytes:
    return pk_open(relay, layered)


def public_layer_overhead(group: SchnorrGroup) -> int:
    return pk_overhead(group)


def _leg_hops(net: Network, a, b) -> int:
    return len(net.path(a, b)) - 1


def path_upload(net: Network, trace: UploadTrace, producer: str, waypoints: list, packet_sizes: list[int],
                *, source_cpu_ms: float = 0.0, hop_cpu_ms: float = 0.0, size_shrink: int = 0,
                ms_per_byte: float = 0.0) -> int:
    """Send every packet from ``producer`` through ``waypoints`` in order.

    ``waypoints`` are routers that process the packet (``hop_cpu_ms`` each,
    FIFO) followed by the destination host. Each processing hop strips
    ``size_shrink`` bytes. Fills ``trace`` and returns link-traversal bytes
    spent before the last waypoint leg.
    """
    start = trace.start_ms
    cpu_free = start
    uplink_free = start
    relay_free = [start] * (len(waypoints) - 1)
    legs = [producer, *waypoints]
    leg_delay = [net.path_delay(a, b) for a, b in zip(legs, legs[1:])]
    leg_hops = [_leg_hops(net, a, b) for a, b in zip(legs, legs[1:])]
    detour_bytes = 0
    for seq, size in enumerate(packet_sizes):
        cpu_done = cpu_free + source_cpu_ms
        cpu_free = cpu_done
        trace.packet_sent([seq], start)
        depart = max(cpu_done, uplink_free) + size * ms_per_byte
        uplink_free = depart
        t = depart + leg_delay[0]
        cur = size
        for i in range(len(relay_free)):
            detour_bytes += cur * leg_hops[i]
            begin = max(t, relay_free[i])
            relay_free[i] = begin + hop_cpu_ms
            cur -= size_shrink
            t = relay_free[i] + leg_delay[i + 1]
        trace.packet_received(seq, t)
    trace.complete_ms = max(trace.received.values(), default=start)
    trace.metadata_done_ms = start
    trace.pieces_done_ms = start
    return detour_bytes


def onion_upload(net: Network, trace: UploadTrace, producer: str, circuit: OnionCircuit,
                 name_bytes: int, packet_payloads: list[int], ms_per_byte: float = 0.0) -> int:
    """Onion delivery: three encryptions at the source, one decryption per relay."""
    sizes = [INTEREST_HEADER + name_bytes + p + LAYERS * circuit.layer_overhead for p in packet_payloads]
    return path_upload(net, trace, producer, [*circuit.relays, circuit.exit_proxy], sizes,
                       source_cpu_ms=LAYERS * circuit.encrypt_ms, hop_cpu_ms=circuit.decrypt_ms,
                       size_shrink=circuit.layer_overhead, ms_per_byte=ms_per_byte)


def closest_proxy(net: Network, producer: str, proxies: list[str]) -> str:
    return min(proxies, key=lambda p: (net.path_delay(producer, p), proxies.index(p)))


def direct_upload(net: Network, trace: UploadTrace, producer: str, proxy: str, name_bytes: int,
                  packet_payloads: list[int], ms_per_byte: float = 0.0) -> int:
    """Producer to its closest proxy over the shortest path, no protection."""
    sizes = [INTEREST_HEADER + name_bytes + p for p in packet_payloads]
    return path_upload(net, trace, producer, [proxy], sizes, ms_per_byte=ms_per_byte)
