"""Plain-text test-vector files for cross-validating other implementations.

Key files hold five hex lines: P, Q, g, private, public.
Signature files hold one record per line with twelve space-separated hex fields:
P Q g PR_A i W t PR_S M r a b.
"""

from __future__ import annotations

import random
from pathlib import Path

from anonpub.crypto import (
    KeyPair,
    SchnorrGroup,
    keygen,
    keypair_from_private,
    new_hmac_key,
    hmac_tag,
)
from anonpub.names import Name
from anonpub.proxysig import (
    Warrant,
    build_warrant,
    delegate,
    make_commitment,
    proxy_setup,
    proxy_sign,
    proxy_verify,
    ProxySignature,
    warrant_digest,
)

SIGNATURE_FIELDS = ("P", "Q", "g", "PR_A", "i", "W", "t", "PR_S", "M", "r", "a", "b")


def _hex(value: int | bytes) -> str:
    if isinstance(value, bytes):
        return value.hex() or "00"
    return format(value, "x")


def write_key_vector(path: str | Path, key: KeyPair) -> None:
    g = key.group
    Path(path).write_text("\n".join(_hex(v) for v in (g.P, g.Q, g.g, key.private, key.public)) + "\n")


def read_key_vector(path: str | Path) -> KeyPair:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) != 5:
        raise ValueError("key vector needs exactly five lines")
    P, Q, g, private, public = (int(ln, 16) for ln in lines)
    key = keypair_from_private(SchnorrGroup(P, Q, g), private)
    if key.public != public:
        raise ValueError("public key does not match g^private")
    return key


def signature_records(group: SchnorrGroup, count: int, rng: random.Random) -> list[dict]:
    proxy = keygen(group, rng)
    records = []
    for n in range(count):
        producer = keygen(group, rng)
        hk = new_hmac_key(rng)
        data_name = Name.parse(f"/vectors/data/{n}")
        commitment = make_commitment(group, proxy, data_name, hmac_tag(hk, b"payload"), hk, rng)
        W = build_warrant(group, commitment, b"cert:proxy", proxy.public, producer.public)
        i = rng.randrange(1, group.Q)
        bundle = delegate(group, producer, W, rng, nonce=i)
        ctx = proxy_setup(group, bundle, producer.public)
        M = rng.randbytes(32)
        r = rng.randrange(1, group.Q)
        sig = proxy_sign(ctx, M, rng, nonce=r)
        records.append({
            "P": group.P, "Q": group.Q, "g": group.g, "PR_A": producer.private, "i": i,
            "W": W.to_bytes(), "t": bundle.t, "PR_S": bundle.PR_S, "M": M, "r": r,
            "a": sig.a, "b": sig.b,
        })
    return records


def format_signature_record(rec: dict) -> str:
    return " ".join(_hex(rec[f]) for f in SIGNATURE_FIELDS)


def parse_signature_record(line: str) -> dict:
    parts = line.split()
    if len(parts) != len(SIGNATURE_FIELDS):
        raise ValueError(f"expected {len(SIGNATURE_FIELDS)} fields, got {len(parts)}")
    rec = {}
    for name, text in zip(SIGNATURE_FIELDS, parts):
        rec[name] = bytes.fromhex(text) if name in ("W", "M") else int(text, 16)
    return rec


def check_signature_record(rec: dict) -> bool:
    """Recompute every derived field of a record and verify the signature."""
    group = SchnorrGroup(rec["P"], rec["Q"], rec["g"])
    producer = keypair_from_private(group, rec["PR_A"])
    t = pow(group.g, rec["i"], group.P)
    w_h = warrant_digest(group, rec["W"], t)
    if t != rec["t"] or (w_h * rec["PR_A"] + rec["i"]) % group.Q != rec["PR_S"]:
        return False
    sig = ProxySignature(rec["M"], Warrant.from_bytes(rec["W"]), rec["t"], rec["a"], rec["b"])
    return proxy_verify(group, producer.public, sig)


def write_signature_vectors(path: str | Path, group: SchnorrGroup, count: int, rng: random.Random) -> int:
    records = signature_records(group, count, rng)
    Path(path).write_text("".join(format_signature_record(r) + "\n" for r in records))
    return len(records)


def read_signature_vectors(path: str | Path) -> list[dict]:
    return [parse_signature_record(ln) for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.startswith("#")]
