"""Run trace and the evaluation metrics derived from it."""

from __future__ import annotations

from dataclasses import dataclass, field

OVERHEAD_KINDS = ("delegation", "metadata", "decoy", "pull", "piece", "push")


@dataclass
class UploadTrace:
    total_packets: int
    data_bytes: int
    horizon_ms: float
    collab_peers: int = 0
    start_ms: float = 0.0
    first_sent: dict[int, float] = field(default_factory=dict)
    received: dict[int, float] = field(default_factory=dict)
    metadata_done_ms: float | None = None
    pieces_done_ms: float | None = None
    complete_ms: float | None = None
    # piece indices per peer: answered with a bogus piece / obtained by pulling
    intercepted: dict[str, set[int]] = field(default_factory=dict)
    pulled: dict[str, set[int]] = field(default_factory=dict)
    switched_to_push: dict[str, float] = field(default_factory=dict)
    abandoned_peers: list[str] = field(default_factory=list)
    overhead_bytes: int = 0
    aborted: str | None = None
    published: bool = False
    hmac_ok: bool | None = None
    published_matches: bool | None = None
    consumer_verified: bool | None = None
    anonymity_violations: int = 0
    pulls_issued: int = 0
    bogus_detected: int = 0

    def packet_sent(self, seqs, now: float) -> None:
        for s in seqs:
            self.first_sent.setdefault(s, now)

    def packet_received(self, seq: int, now: float) -> None:
        self.received.setdefault(seq, now)

    def piece_opened(self, now: float) -> None:
        if self.pieces_done_ms is None or now > self.pieces_done_ms:
            self.pieces_done_ms = now

    @property
    def blocked_peers(self) -> list[str]:
        """Peers denied at least one piece they pulled; a retry that gets through clears it."""
        return sorted(p for p, js in self.intercepted.items() if js - self.pulled.get(p, set()))

    @property
    def complete(self) -> bool:
        return self.complete_ms is not None


def compute_success_rate(trace: UploadTrace) -> float:
    if trace.total_packets == 0:
        return 1.0
    return len(trace.received) / trace.total_packets


def compute_publication_delay(trace: UploadTrace) -> float:
    """Elapsed time until the proxies hold every packet; the horizon when incomplete."""
    if trace.complete_ms is None:
        return trace.horizon_ms
    return trace.complete_ms - trace.start_ms


def compute_per_packet_delays(trace: UploadTrace) -> list[float]:
    return [trace.received[s] - trace.first_sent[s] for s in sorted(trace.received)]


def overhead_ratio(trace: UploadTrace) -> float:
    return trace.overhead_bytes / trace.data_bytes


def compute_normalized_overhead(trace: UploadTrace, pull_reference_ratio: float) -> float:
    if pull_reference_ratio <= 0:
        raise ValueError("pull reference ratio must be positive")
    return overhead_ratio(trace) / pull_reference_ratio


def compute_blocked_fraction(trace: UploadTrace) -> float:
    if trace.collab_peers == 0:
        return 0.0
    return len(trace.blocked_peers) / trace.collab_peers


def compute_delay_breakdown(trace: UploadTrace) -> tuple[float, float, float]:
    """Percent of the publication delay spent on metadata, piece sharing and egress."""
    if trace.complete_ms is None:
        return (float("nan"),) * 3
    total = trace.complete_ms - trace.start_ms
    if total <= 0:
        return (0.0, 0.0, 100.0)
    meta_end = min(trace.metadata_done_ms or trace.start_ms, trace.complete_ms)
    pieces_end = min(max(trace.pieces_done_ms or meta_end, meta_end), trace.complete_ms)
    meta = meta_end - trace.start_ms
    pieces = pieces_end - meta_end
    egress = trace.complete_ms - pieces_end
    return (100 * meta / total, 100 * pieces / total, 100 * egress / total)


def cdf(values: list[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (value, cumulative fraction) rows, one per distinct value."""
    ordered = sorted(values)
    n = len(ordered)
    rows: list[tuple[float, float]] = []
    for i, v in enumerate(ordered, 1):
        if rows and rows[-1][0] == v:
            rows[-1] = (v, i / n)
        else:
            rows.append((v, i / n))
    return rows
