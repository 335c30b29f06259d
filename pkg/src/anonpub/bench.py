"""Wall-clock micro-benchmarks for the signature schemes and onion layer crypto.

Each figure is milliseconds per operation, taken as the best of several
rounds so scheduler noise inflates it as little as possible.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable

from anonpub.crypto import (
    SchnorrGroup,
    keygen,
    new_hmac_key,
    new_symmetric_key,
    open_sealed,
    pk_open,
    pk_seal,
    schnorr_sign,
    schnorr_verify,
    seal,
)
from anonpub.names import Name
from anonpub.proxysig import (
    VerificationKeyCache,
    build_warrant,
    delegate,
    make_commitment,
    proxy_setup,
    proxy_sign,
    proxy_verify,
)


def best_per_op_ms(batch: Callable[[], int], rounds: int = 3) -> float:
    """``batch`` runs some operations and returns how many; the fastest round wins."""
    best = float("inf")
    for _ in range(rounds):
        start = time.perf_counter()
        n = batch()
        best = min(best, (time.perf_counter() - start) * 1000.0 / n)
    return best


@dataclass(frozen=True)
class SignatureTimings:
    schnorr_sign: float
    schnorr_verify: float
    delegate: float
    proxy_sign_unamortized: float
    proxy_sign_amortized: float
    proxy_verify_unamortized: float
    proxy_verify_amortized: float
    amortize_over: int

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("schnorr_sign", self.schnorr_sign),
            ("schnorr_verify", self.schnorr_verify),
            ("delegate", self.delegate),
            ("proxy_sign (unamortized)", self.proxy_sign_unamortized),
            (f"proxy_sign (amortized over {self.amortize_over})", self.proxy_sign_amortized),
            ("proxy_verify (unamortized)", self.proxy_verify_unamortized),
            (f"proxy_verify (amortized over {self.amortize_over})", self.proxy_verify_amortized),
        ]


def benchmark_signatures(group: SchnorrGroup, iterations: int = 200, amortize_over: int = 500,
                         seed: int = 1, rounds: int = 3) -> SignatureTimings:
    rng = random.Random(seed)
    producer, proxy = keygen(group, rng), keygen(group, rng)
    commitment = make_commitment(group, proxy, Name.parse("/news/clip"), rng.randbytes(32),
                                 new_hmac_key(rng), rng)
    W = build_warrant(group, commitment, b"proxy-cert", proxy.public, producer.public)
    bundle = delegate(group, producer, W, rng)
    messages = [rng.randbytes(64) for _ in range(max(iterations, amortize_over))]
    schnorr_sigs = [schnorr_sign(group, producer, m, rng) for m in messages[:iterations]]
    ctx = proxy_setup(group, bundle, producer.public)
    proxy_sigs = [proxy_sign(ctx, m, rng) for m in messages[:amortize_over]]

    def sign_batch():
        for m in messages[:iterations]:
            schnorr_sign(group, producer, m, rng)
        return iterations

    def verify_batch():
        for m, s in zip(messages, schnorr_sigs):
            schnorr_verify(group, producer.public, m, s)
        return iterations

    def delegate_batch():
        for _ in range(iterations):
            delegate(group, producer, W, rng)
        return iterations

    def proxy_sign_fresh():
        # every signature pays for its own setup and key congruence check
        for m in messages[:iterations]:
            proxy_sign(proxy_setup(group, bundle, producer.public), m, rng)
        return iterations

    def proxy_sign_shared():
        c = proxy_setup(group, bundle, producer.public)
        for m in messages[:amortize_over]:
            proxy_sign(c, m, rng)
        return amortize_over

    def proxy_verify_fresh():
        for s in proxy_sigs[:iterations]:
            proxy_verify(group, producer.public, s)
        return iterations

    def proxy_verify_shared():
        cache = VerificationKeyCache()
        for s in proxy_sigs:
            proxy_verify(group, producer.public, s, cache)
        return amortize_over

    return SignatureTimings(
        schnorr_sign=best_per_op_ms(sign_batch, rounds),
        schnorr_verify=best_per_op_ms(verify_batch, rounds),
        delegate=best_per_op_ms(delegate_batch, rounds),
        proxy_sign_unamortized=best_per_op_ms(proxy_sign_fresh, rounds),
        proxy_sign_amortized=best_per_op_ms(proxy_sign_shared, rounds),
        proxy_verify_unamortized=best_per_op_ms(proxy_verify_fresh, rounds),
        proxy_verify_amortized=best_per_op_ms(proxy_verify_shared, rounds),
        amortize_over=amortize_over,
    )


def measure_layer_costs(group: SchnorrGroup, scheme: str = "public", payload_size: int = 1052,
                        samples: int = 200, seed: int = 1, rounds: int = 3) -> tuple[float, float]:
    """Per-layer (encrypt, decrypt) milliseconds for one onion packet."""
    rng = random.Random(seed)
    payload = rng.randbytes(payload_size)
    if scheme == "public":
        relay = keygen(group, rng)
        sealed = [pk_seal(group, relay.public, payload, rng) for _ in range(samples)]

        def enc():
            for _ in range(samples):
                pk_seal(group, relay.public, payload, rng)
            return samples

        def dec():
            for c in sealed:
                pk_open(relay, c)
            return samples
    elif scheme == "symmetric":
        key = new_symmetric_key(rng)
        sealed = [seal(key, payload, rng) for _ in range(samples)]

        def enc():
            for _ in range(samples):
                seal(key, payload, rng)
            return samples

        def dec():
            for c in sealed:
                open_sealed(key, c)
            return samples
    else:
        raise ValueError(f"unknown layer scheme {scheme!r}")
    return best_per_op_ms(enc, rounds), best_per_op_ms(dec, rounds)
