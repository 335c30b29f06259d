"""Warrant-based proxy signatures over a Schnorr group.

The producer (original signer) derives a delegated key ``PR_S`` for a proxy,
binding it to a warrant ``W`` through ``W_h = H(W || t)``. Consumers check a
proxy signature against the producer's public key alone:

    y   = PK_A^{W_h} * t            (verification key, cacheable per (W, t))
    k_v = g^b * y^a
    accept iff H(M || k_v) == a
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from anonpub.codec import DecodeError, bytes_to_int, decode_fields, encode_fields, int_to_bytes
from anonpub.crypto import (
    HmacKey,
    KeyPair,
    SchnorrGroup,
    SchnorrSignature,
    challenge,
    element_bytes,
    hash_to_zq,
    random_zq_star,
    schnorr_commitment,
    schnorr_response,
    schnorr_sign,
    schnorr_verify,
)
from anonpub.names import Name


class CommitmentInvalid(Exception):
    pass


class DelegationInvalid(Exception):
    pass


@dataclass(frozen=True)
class Commitment:
    data_name: Name
    data_hmac: bytes
    hmac_key: HmacKey
    signature: SchnorrSignature

    @staticmethod
    def signed_fields(data_name: Name, data_hmac: bytes, hmac_key: HmacKey) -> bytes:
        return encode_fields([data_name.to_bytes(), data_hmac, hmac_key.key])

    def to_bytes(self) -> bytes:
        return encode_fields([
            self.data_name.to_bytes(), self.data_hmac, self.hmac_key.key, self.signature.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Commitment":
        name, tag, key, sig = decode_fields(data, 4)
        return cls(Name.from_bytes(name), tag, HmacKey(key), SchnorrSignature.from_bytes(sig))


def make_commitment(group: SchnorrGroup, proxy: KeyPair, data_name: Name, data_hmac: bytes,
                    hmac_key: HmacKey, rng: random.Random) -> Commitment:
    """Proxy side: sign (data name, HMAC, HMAC key) with the primary key pair."""
    sig = schnorr_sign(group, proxy, Commitment.signed_fields(data_name, data_hmac, hmac_key), rng)
    return Commitment(data_name, data_hmac, hmac_key, sig)


def verify_commitment(group: SchnorrGroup, proxy_public: int, commitment: Commitment) -> bool:
    body = Commitment.signed_fields(commitment.data_name, commitment.data_hmac, commitment.hmac_key)
    return schnorr_verify(group, proxy_public, body, commitment.signature)


@dataclass(frozen=True)
class Warrant:
    commitment: Commitment
    proxy_certificate: bytes
    producer_public_key: int

    def to_bytes(self) -> bytes:
        return encode_fields([
            self.commitment.to_bytes(), self.proxy_certificate, int_to_bytes(self.producer_public_key),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Warrant":
        commitment, cert, pk = decode_fields(data, 3)
        return cls(Commitment.from_bytes(commitment), cert, bytes_to_int(pk))


def build_warrant(group: SchnorrGroup, commitment: Commitment, proxy_cert: bytes,
                  proxy_public: int, producer_pk: int) -> Warrant:
    if not verify_commitment(group, proxy_public, commitment):
        raise CommitmentInvalid("commitment signature does not verify under the proxy certificate")
    if not group.in_subgroup(producer_pk):
        raise CommitmentInvalid("producer public key outside the order-Q subgroup")
    return Warrant(commitment, proxy_cert, producer_pk)


@dataclass(frozen=True)
class DelegationBundle:
    PR_S: int
    W: Warrant
    t: int

    def to_bytes(self) -> bytes:
        return encode_fields([int_to_bytes(self.PR_S), self.W.to_bytes(), int_to_bytes(self.t)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "DelegationBundle":
        prs, w, t = decode_fields(data, 3)
        return cls(bytes_to_int(prs), Warrant.from_bytes(w), bytes_to_int(t))


def warrant_digest(group: SchnorrGroup, warrant_bytes: bytes, t: int) -> int:
    return hash_to_zq(group, warrant_bytes + element_bytes(group, t))


def derive_proxy_private(group: SchnorrGroup, producer_private: int, i: int, w_h: int) -> int:
    return (w_h * producer_private + i) % group.Q


def verification_key(group: SchnorrGroup, producer_pk: int, w_h: int, t: int) -> int:
    return pow(producer_pk, w_h, group.P) * t % group.P


def delegate(group: SchnorrGroup, producer: KeyPair, W: Warrant, rng: random.Random,
             *, nonce: int | None = None) -> DelegationBundle:
    i = random_zq_star(group, rng) if nonce is None else nonce
    t = pow(group.g, i, group.P)
    w_h = warrant_digest(group, W.to_bytes(), t)
    return DelegationBundle(derive_proxy_private(group, producer.private, i, w_h), W, t)


@dataclass(frozen=True)
class ProxySigningContext:
    group: SchnorrGroup
    bundle: DelegationBundle
    producer_pk: int
    PK_S: int
    warrant_bytes: bytes = field(repr=False)


def proxy_setup(group: SchnorrGroup, bundle: DelegationBundle, producer_pk: int) -> ProxySigningContext:
    if bundle.W.producer_public_key != producer_pk:
        raise DelegationInvalid("warrant names a different producer key")
    if not 1 <= bundle.t < group.P:
        raise DelegationInvalid("t outside Z*_P")
    pk_s = pow(group.g, bundle.PR_S, group.P)
    warrant_bytes = bundle.W.to_bytes()
    w_h = warrant_digest(group, warrant_bytes, bundle.t)
    if pk_s != verification_key(group, producer_pk, w_h, bundle.t):
        raise DelegationInvalid("PK_S is not congruent with PK_A^W_h * t")
    return ProxySigningContext(group, bundle, producer_pk, pk_s, warrant_bytes)


@dataclass(frozen=True)
class ProxySignature:
    M: bytes
    W: Warrant
    t: int
    a: int
    b: int

    def to_bytes(self) -> bytes:
        return encode_fields([
            self.M, self.W.to_bytes(), int_to_bytes(self.t), int_to_bytes(self.a), int_to_bytes(self.b),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProxySignature":
        m, w, t, a, b = decode_fields(data, 5)
        return cls(m, Warrant.from_bytes(w), bytes_to_int(t), bytes_to_int(a), bytes_to_int(b))


def proxy_sign(ctx: ProxySigningContext, M: bytes, rng: random.Random,
               *, nonce: int | None = None) -> ProxySignature:
    group = ctx.group
    r = random_zq_star(group, rng) if nonce is None else nonce
    k = pow(group.g, r, group.P)
    a = challenge(group, M, k)
    b = schnorr_response(group, ctx.bundle.PR_S, r, a)
    return ProxySignature(M, ctx.bundle.W, ctx.bundle.t, a, b)


class VerificationKeyCache:
    """Memoises y = PK_A^{W_h} * t so repeated verifications skip the derivation."""

    def __init__(self):
        self._keys: dict[tuple[bytes, int, int], int] = {}

    def get(self, group: SchnorrGroup, producer_pk: int, warrant_bytes: bytes, t: int) -> int:
        key = (warrant_bytes, t, producer_pk)
        y = self._keys.get(key)
        if y is None:
            y = verification_key(group, producer_pk, warrant_digest(group, warrant_bytes, t), t)
            self._keys[key] = y
        return y

    def __len__(self) -> int:
        return len(self._keys)


def proxy_verify(group: SchnorrGroup, producer_pk: int, sig: ProxySignature,
                 cache: VerificationKeyCache | None = None) -> bool:
    try:
        if sig.W.producer_public_key != producer_pk:
            return False
        if not (0 < sig.a < group.Q and 0 <= sig.b < group.Q and 1 <= sig.t < group.P):
            return False
        warrant_bytes = sig.W.to_bytes()
        if cache is None:
            y = verification_key(group, producer_pk, warrant_digest(group, warrant_bytes, sig.t), sig.t)
        else:
            y = cache.get(group, producer_pk, warrant_bytes, sig.t)
        k_v = schnorr_commitment(group, y, SchnorrSignature(sig.a, sig.b))
        return challenge(group, sig.M, k_v) == sig.a
    except (TypeError, ValueError, OverflowError):
        return False


def proxy_verify_encoded(group: SchnorrGroup, producer_pk: int, encoded: bytes,
                         cache: VerificationKeyCache | None = None) -> bool:
    try:
        sig = ProxySignature.from_bytes(encoded)
    except (DecodeError, ValueError, UnicodeDecodeError):
        return False
    return proxy_verify(group, producer_pk, sig, cache)
