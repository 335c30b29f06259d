"""Schnorr-group arithmetic, Schnorr signatures and the symmetric/hybrid sealing
used by every protocol message.

All randomness comes from an injected ``random.Random`` so simulation runs are
reproducible. That makes these primitives unsuitable for real deployments:
there is no constant-time arithmetic and the nonce source is not a CSPRNG.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import random
from dataclasses import dataclass, field
from functools import lru_cache

import sympy
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from anonpub.codec import DecodeError, decode_ints, encode_fields, encode_ints, int_to_bytes

AEAD_ALGORITHM = "AES-256-GCM"
AEAD_KEY_SIZE = 32
AEAD_NONCE_SIZE = 12
AEAD_TAG_SIZE = 16
AEAD_OVERHEAD = AEAD_NONCE_SIZE + AEAD_TAG_SIZE

HMAC_ALGORITHM = "HMAC-SHA256"
HMAC_DIGEST_SIZE = 32

HASH_ALGORITHM = "SHA-512"

MAX_GROUP_ATTEMPTS = 200_000


class GroupGenerationError(RuntimeError):
    pass


class AuthenticationFailure(Exception):
    """Authenticated decryption failed: wrong key or tampered ciphertext."""


@dataclass(frozen=True)
class SchnorrGroup:
    P: int
    Q: int
    g: int

    def __post_init__(self):
        if self.g in (0, 1) or not 1 < self.g < self.P:
            raise ValueError("generator must lie in (1, P)")
        if (self.P - 1) % self.Q:
            raise ValueError("Q must divide P - 1")

    @property
    def element_size(self) -> int:
        return (self.P.bit_length() + 7) // 8

    def is_valid(self) -> bool:
        return (
            sympy.isprime(self.P)
            and sympy.isprime(self.Q)
            and (self.P - 1) // self.Q >= 2
            and pow(self.g, self.Q, self.P) == 1
            and self.g != 1
        )

    def in_subgroup(self, y: int) -> bool:
        return 1 <= y < self.P and pow(y, self.Q, self.P) == 1

    def to_bytes(self) -> bytes:
        return encode_ints((self.P, self.Q, self.g))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SchnorrGroup":
        P, Q, g = decode_ints(data, 3)
        return cls(P, Q, g)


def group_from_q(Q: int, h: int = 2) -> SchnorrGroup:
    """Build the safe-prime group P = 2Q + 1 with generator g = h^2 mod P."""
    P = 2 * Q + 1
    r = 2
    while pow(h, r, P) == 1:
        h += 1
    return SchnorrGroup(P, Q, pow(h, r, P))


def generate_group(q_bits: int, rng: random.Random) -> SchnorrGroup:
    if q_bits < 8:
        raise ValueError("q_bits must be at least 8")
    top = 1 << (q_bits - 1)
    for _ in range(MAX_GROUP_ATTEMPTS):
        Q = rng.getrandbits(q_bits) | top | 1
        # Q ≡ 1 (mod 3) would make 2Q+1 divisible by 3
        if Q % 3 == 1 and Q != 3:
            continue
        if sympy.isprime(Q) and sympy.isprime(2 * Q + 1):
            return group_from_q(Q, h=2)
    raise GroupGenerationError(f"no safe prime found for q_bits={q_bits}")


@lru_cache(maxsize=16)
def default_group(q_bits: int = 256, seed: int = 0x5EED) -> SchnorrGroup:
    """Deterministic group shared by every party of a simulation."""
    return generate_group(q_bits, random.Random(seed))


@dataclass(frozen=True)
class KeyPair:
    private: int
    public: int
    group: SchnorrGroup = field(repr=False)

    def to_bytes(self) -> bytes:
        return encode_ints((self.private, self.public))


def keypair_from_private(group: SchnorrGroup, private: int) -> KeyPair:
    if not 1 <= private < group.Q:
        raise ValueError("private key outside Z*_Q")
    return KeyPair(private, pow(group.g, private, group.P), group)


def random_zq_star(group: SchnorrGroup, rng: random.Random) -> int:
    return rng.randrange(1, group.Q)


def keygen(group: SchnorrGroup, rng: random.Random) -> KeyPair:
    return keypair_from_private(group, random_zq_star(group, rng))


def hash_to_zq(group: SchnorrGroup, message: bytes) -> int:
    digest = hashlib.sha512(message).digest()
    return int.from_bytes(digest, "big") % (group.Q - 1) + 1


def element_bytes(group: SchnorrGroup, value: int) -> bytes:
    return value.to_bytes(group.element_size, "big")


def challenge(group: SchnorrGroup, message: bytes, k: int) -> int:
    """Digest of message || k, the ``a`` component of a Schnorr signature."""
    return hash_to_zq(group, message + element_bytes(group, k))


@dataclass(frozen=True)
class SchnorrSignature:
    a: int
    b: int

    def to_bytes(self) -> bytes:
        return encode_ints((self.a, self.b))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SchnorrSignature":
        a, b = decode_ints(data, 2)
        return cls(a, b)


def schnorr_response(group: SchnorrGroup, private: int, nonce: int, digest: int) -> int:
    return (nonce - private * digest) % group.Q


def schnorr_commitment(group: SchnorrGroup, public: int, sig: SchnorrSignature) -> int:
    """Recompute k_v = g^b * y^a mod P."""
    return pow(group.g, sig.b, group.P) * pow(public, sig.a, group.P) % group.P


def schnorr_sign(group: SchnorrGroup, signer: KeyPair, message: bytes,
                 rng: random.Random) -> SchnorrSignature:
    r = random_zq_star(group, rng)
    k = pow(group.g, r, group.P)
    a = challenge(group, message, k)
    return SchnorrSignature(a, schnorr_response(group, signer.private, r, a))


def signature_in_range(group: SchnorrGroup, sig: SchnorrSignature) -> bool:
    return 0 < sig.a < group.Q and 0 <= sig.b < group.Q


def schnorr_verify(group: SchnorrGroup, public: int, message: bytes,
                   sig: SchnorrSignature) -> bool:
    if not signature_in_range(group, sig) or not 1 <= public < group.P:
        return False
    return challenge(group, message, schnorr_commitment(group, public, sig)) == sig.a


@dataclass(frozen=True)
class HmacKey:
    key: bytes

    def __post_init__(self):
        if not self.key:
            raise ValueError("HMAC key must be non-empty")


def new_hmac_key(rng: random.Random, size: int = 32) -> HmacKey:
    return HmacKey(rng.randbytes(size))


def hmac_tag(key: HmacKey, data: bytes) -> bytes:
    return _hmac.new(key.key, data, hashlib.sha256).digest()


def hmac_verify(key: HmacKey, data: bytes, tag: bytes) -> bool:
    return _hmac.compare_digest(hmac_tag(key, data), tag)


@dataclass(frozen=True)
class SymmetricKey:
    key: bytes
    key_id: bytes = b""

    def __post_init__(self):
        if len(self.key) != AEAD_KEY_SIZE:
            raise ValueError(f"AEAD key must be {AEAD_KEY_SIZE} bytes")


def new_symmetric_key(rng: random.Random) -> SymmetricKey:
    return SymmetricKey(rng.randbytes(AEAD_KEY_SIZE), rng.randbytes(8))


def seal(key: SymmetricKey, plaintext: bytes, rng: random.Random, aad: bytes | None = None) -> bytes:
    nonce = rng.randbytes(AEAD_NONCE_SIZE)
    return nonce + AESGCM(key.key).encrypt(nonce, plaintext, aad)


def open_sealed(key: SymmetricKey, ciphertext: bytes, aad: bytes | None = None) -> bytes:
    if len(ciphertext) < AEAD_OVERHEAD:
        raise AuthenticationFailure("ciphertext shorter than AEAD framing")
    nonce, body = ciphertext[:AEAD_NONCE_SIZE], ciphertext[AEAD_NONCE_SIZE:]
    try:
        return AESGCM(key.key).decrypt(nonce, body, aad)
    except InvalidTag as exc:
        raise AuthenticationFailure("authentication tag mismatch") from exc


def pk_overhead(group: SchnorrGroup) -> int:
    return group.element_size + AEAD_OVERHEAD


def _kem_key(group: SchnorrGroup, ephemeral: int, shared: int) -> SymmetricKey:
    material = element_bytes(group, ephemeral) + element_bytes(group, shared)
    return SymmetricKey(hashlib.sha256(b"anonpub-kem" + material).digest())


def pk_seal(group: SchnorrGroup, recipient_public: int, plaintext: bytes,
            rng: random.Random) -> bytes:
    """Hybrid encryption: ephemeral Diffie-Hellman in the group, then AEAD."""
    e = random_zq_star(group, rng)
    ephemeral = pow(group.g, e, group.P)
    shared = pow(recipient_public, e, group.P)
    key = _kem_key(group, ephemeral, shared)
    return element_bytes(group, ephemeral) + seal(key, plaintext, rng)


def pk_open(recipient: KeyPair, ciphertext: bytes) -> bytes:
    group = recipient.group
    n = group.element_size
    if len(ciphertext) < n + AEAD_OVERHEAD:
        raise AuthenticationFailure("ciphertext shorter than hybrid framing")
    ephemeral = int.from_bytes(ciphertext[:n], "big")
    if not 1 < ephemeral < group.P:
        raise AuthenticationFailure("invalid ephemeral key")
    shared = pow(ephemeral, recipient.private, group.P)
    return open_sealed(_kem_key(group, ephemeral, shared), ciphertext[n:])


def crypto_metadata() -> dict[str, str]:
    return {"aead": AEAD_ALGORITHM, "hmac": HMAC_ALGORITHM, "hash": HASH_ALGORITHM}


__all__ = [
    "AEAD_OVERHEAD", "AuthenticationFailure", "DecodeError", "GroupGenerationError",
    "HmacKey", "KeyPair", "SchnorrGroup", "SchnorrSignature", "SymmetricKey",
    "challenge", "crypto_metadata", "default_group", "element_bytes", "encode_fields",
    "generate_group", "group_from_q", "hash_to_zq", "hmac_tag", "hmac_verify",
    "int_to_bytes", "keygen", "keypair_from_private", "new_hmac_key", "new_symmetric_key",
    "open_sealed", "pk_open", "pk_overhead", "pk_seal", "random_zq_star", "schnorr_commitment",
    "schnorr_response", "schnorr_sign", "schnorr_verify", "seal",
]
