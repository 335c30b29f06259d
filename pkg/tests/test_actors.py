import random
from dataclasses import replace

import networkx as nx
import pytest

from anonpub import actors
from anonpub.crypto import (
    AuthenticationFailure,
    default_group,
    keygen,
    new_hmac_key,
    new_symmetric_key,
    pk_open,
    pk_seal,
    schnorr_sign,
    seal,
)
from anonpub.engine import Simulator
from anonpub.fabric import Interest, Network
from anonpub.metrics import UploadTrace
from anonpub.names import Name
from anonpub.proxysig import VerificationKeyCache, delegate, make_commitment
from anonpub.topology import Topology

MENDELEY = Name.parse("/Mendeley")
WIKIPEDIA = Name.parse("/Wikipedia")


class Session:
    """Producer at router 0; peers a (router 2) and b (router 4); proxies behind routers 5 and 6.

        0 - 1 - 2 - 3 - [6] col
            |
            4 - [5] sel
    """

    def __init__(self, mode="pull", censor_router=None, strategy="peer-masquerade", data_size=20 * 1024,
                 tamper_name=None, threshold=3, max_attempts=5, seed=7):
        g = nx.Graph()
        g.add_edges_from([(0, 1), (1, 2), (2, 3), (1, 4), (4, 5), (3, 6)], delay=2.0)
        self.sim = Simulator(60_000)
        self.net = Network(self.sim, Topology(g), sync_prefix=actors.SYNC_PREFIX)
        rng = random.Random(seed)
        self.group = default_group(256)
        self.keys = {h: keygen(self.group, rng) for h in ("prod", "a", "b", "sel", "col")}
        members = ["prod", "a", "b"]
        for host, r in (("prod", 0), ("a", 2), ("b", 4)):
            self.net.attach_host(host, r)
        self.net.attach_host("sel", 5, outside=True)
        self.net.attach_host("col", 6, outside=True)
        self.net.register_decoy_prefix(MENDELEY, "sel")
        self.net.register_decoy_prefix(WIKIPEDIA, "col")
        sizes = (4000, 4200)
        self.params = actors.ProtocolParams(mode=mode, threshold=threshold, max_pull_attempts=max_attempts,
                                            retry_timeout_ms=500.0, censor_strategy=strategy,
                                            bogus_piece_sizes=sizes, publish_segment_size=4096)
        self.data = rng.randbytes(data_size)
        self.trace = UploadTrace(-(-data_size // 1024), data_size, 60_000.0, collab_peers=2)
        self.session_key = new_symmetric_key(rng)
        self.cert = b"anon-cert:test"
        registry = actors.ProxyRegistry()
        self.selected = actors.SelectedProxy("sel", self.net, registry, self.params, self.group,
                                             self.keys["sel"], self.session_key, self.cert, self.trace,
                                             random.Random(1), tamper_name=tamper_name)
        self.collab_proxy = actors.CollaboratingProxy("col", self.net, registry, self.params)
        self.net.set_app("sel", self.selected)
        self.net.set_app("col", self.collab_proxy)
        self.peers = {
            "a": actors.CollaboratingPeer("a", self.net, self.keys["a"], MENDELEY, self.params, self.trace,
                                          random.Random(2)),
            "b": actors.CollaboratingPeer("b", self.net, self.keys["b"], WIKIPEDIA, self.params, self.trace,
                                          random.Random(3)),
        }
        for host, app in self.peers.items():
            self.net.set_app(host, app)
        self.censor = None
        if censor_router is not None:
            self.net.attach_host("cen", censor_router)
            self.censor = actors.Censor("cen", self.net, self.params, random.Random(4))
            self.net.set_app("cen", self.censor)
            members.append("cen")
        self.net.set_sync_group(members)
        self.producer = actors.Producer(
            "prod", self.net, self.group, self.keys["prod"], self.data, Name.parse("/news/clip"),
            [("a", self.keys["a"].public), ("b", self.keys["b"].public)], self.keys["sel"].public,
            b"proxy-cert:test", MENDELEY, self.session_key, self.params, self.trace, random.Random(5),
            packet_size=1024, piece_size=4096)
        self.net.set_app("prod", self.producer)

    def run(self):
        self.sim.schedule(0.0, self.producer.start)
        self.sim.run()
        return self


@pytest.fixture(scope="module")
def clean_pull():
    return Session("pull").run()


def test_clean_pull_session_publishes_verified_data(clean_pull):
    s = clean_pull
    assert s.producer.credentials_acked is True
    assert s.trace.complete and s.trace.hmac_ok is True
    assert s.selected.plaintext == s.data
    assert b"".join(p.content for p in s.selected.published) == s.data
    cache = VerificationKeyCache()
    assert all(actors.consumer_verify(s.group, s.keys["prod"].public, p, cache) for p in s.selected.published)
    assert s.trace.blocked_peers == []
    assert s.trace.metadata_done_ms < s.trace.pieces_done_ms <= s.trace.complete_ms


def test_delegation_metadata_round_trip(clean_pull):
    m = clean_pull.producer.metadata
    assert actors.DelegationMetadata.from_bytes(m.to_bytes()) == m


def test_uploading_metadata_round_trip_and_mode_flag_hides_size():
    key = new_symmetric_key(random.Random(1))
    names = (Name.parse("/sync/g/Piece_ab_0"), Name.parse("/sync/g/Piece_ab_1"))
    pull = actors.UploadingMetadata(key, "ab", names, True)
    push = replace(pull, pull_first=False)
    assert actors.UploadingMetadata.from_bytes(pull.to_bytes()) == pull
    assert actors.UploadingMetadata.from_bytes(push.to_bytes()) == push
    assert len(pull.to_bytes()) == len(push.to_bytes())


def test_metadata_sealed_to_one_peer_cannot_be_opened_by_another(group256):
    rng = random.Random(3)
    a, b = keygen(group256, rng), keygen(group256, rng)
    sealed = pk_seal(group256, a.public, b"uploading metadata", rng)
    assert pk_open(a, sealed) == b"uploading metadata"
    with pytest.raises(AuthenticationFailure):
        pk_open(b, sealed)


def test_tampered_commitment_aborts_before_any_data_moves():
    s = Session(tamper_name=Name.parse("/news/other")).run()
    assert "does not match" in s.trace.aborted
    assert s.producer.bundle is None
    assert s.net.link_bytes["metadata"] == 0 and s.net.link_bytes["piece"] == 0
    assert not s.trace.published


def test_commitment_from_another_session_is_rejected():
    s = Session()
    rng = random.Random(9)
    m = s.producer.metadata
    stale = make_commitment(s.group, s.keys["sel"], m.data_name, b"\x00" * 32, new_hmac_key(rng), rng)
    with pytest.raises(actors.SessionAborted):
        s.producer.check_commitment(stale)
    forged = make_commitment(s.group, s.keys["col"], m.data_name, m.data_hmac, m.hmac_key, rng)
    with pytest.raises(actors.SessionAborted, match="signature"):
        s.producer.check_commitment(forged)


def test_credentials_for_another_producer_are_refused():
    s = Session()
    m = s.producer.metadata
    body = m.to_bytes()
    sig = schnorr_sign(s.group, s.keys["prod"], body, random.Random(1))
    assert s.selected._commit(actors.encode_fields([body, sig.to_bytes()])) is not None
    commitment = actors.Commitment.from_bytes(
        make_commitment(s.group, s.keys["sel"], m.data_name, m.data_hmac, m.hmac_key, random.Random(2)).to_bytes())
    W = actors.build_warrant(s.group, commitment, b"proxy-cert:test", s.keys["sel"].public, s.keys["a"].public)
    stranger = delegate(s.group, s.keys["a"], W, random.Random(3))
    assert s.selected._credentials(stranger.to_bytes()) == b"fail"
    assert s.selected._credentials(b"garbage") == b"fail"


def test_commit_with_bad_producer_signature_gets_no_reply():
    s = Session()
    body = s.producer.metadata.to_bytes()
    sig = schnorr_sign(s.group, s.keys["a"], body, random.Random(1))
    assert s.selected._commit(actors.encode_fields([body, sig.to_bytes()])) is None
    assert s.selected.state is None


def test_plan_partitions_large_upload_exactly():
    n_packets = (100 << 20) // 1024
    plan = actors.plan_pieces(n_packets, 8, 60, random.Random(1))
    pieces = [p for runs in plan for p in runs]
    assert [i for p in pieces for i in p] == list(range(n_packets))
    counts = [len(runs) for runs in plan]
    mean = len(pieces) / 60
    assert all(0.8 * mean - 1 <= c <= 1.2 * mean + 1 for c in counts)


def test_plan_rejects_empty_peer_set():
    with pytest.raises(ValueError):
        actors.plan_pieces(10, 2, 0, random.Random(1))


def test_censor_next_to_peer_blocks_pull_and_peer_gives_up():
    s = Session("pull", censor_router=2).run()
    assert s.trace.bogus_detected >= 1
    assert s.trace.blocked_peers == ["a"]
    assert "a" in s.trace.abandoned_peers
    assert s.trace.pulls_issued > len(s.producer.peers["b"].pieces)
    assert not s.trace.complete


def test_censor_behind_producer_loses_race():
    s = Session("pull", censor_router=0).run()
    assert s.trace.blocked_peers == []
    assert s.trace.complete


def test_hybrid_switches_blocked_peer_to_push_and_completes():
    s = Session("hybrid", censor_router=2).run()
    assert list(s.trace.switched_to_push) == ["a"]
    assert s.trace.complete and s.trace.hmac_ok


def test_hybrid_threshold_counts_consecutive_requests_per_peer():
    s = Session("hybrid", threshold=3)
    p = s.producer
    st_a, st_b = p.peers["a"], p.peers["b"]

    def pull(st, j, n):
        p._on_pull(st.tag, j, Interest(actors.piece_name(s.params.sync_prefix, st.tag, j).append(n), n))

    pull(st_a, 0, 0)
    pull(st_a, 0, 1)
    pull(st_a, 1, 0)
    assert st_a.consecutive == 1 and st_a.mode == "pull"
    pull(st_b, 1, 0)
    pull(st_b, 1, 1)
    assert st_a.consecutive == 1 and st_b.consecutive == 2
    pull(st_a, 1, 1)
    pull(st_a, 1, 2)
    assert st_a.mode == "push" and st_a.pushed_from == 1
    assert st_b.mode == "pull"


def test_pull_mode_never_switches():
    s = Session("pull", threshold=1)
    st = s.producer.peers["a"]
    for n in range(4):
        s.producer._on_pull(st.tag, 0, Interest(actors.piece_name(s.params.sync_prefix, st.tag, 0).append(n), n))
    assert st.mode == "pull"


def test_push_mode_issues_no_pulls_and_censor_is_powerless():
    s = Session("push", censor_router=2).run()
    assert s.trace.pulls_issued == 0
    assert s.net.link_bytes["pull"] == 0 and s.net.link_bytes["bogus"] == 0
    assert s.trace.complete and s.trace.blocked_peers == []


def test_egress_names_carry_decoy_data_id_and_sequence(clean_pull):
    s = Session("pull")
    seen = []
    s.net.observers.append(lambda src, dst, pkt: seen.append((src, pkt)) if pkt.kind == "egress" else None)
    s.run()
    data_id = s.producer.metadata.data_id
    by_peer = {"a": MENDELEY, "b": WIKIPEDIA}
    sent = [(src, pkt) for src, pkt in seen if src in by_peer]
    assert sorted(int(pkt.name.components[2]) for _, pkt in sent) == list(range(s.trace.total_packets))
    for src, pkt in sent:
        comps = pkt.name.components
        assert len(comps) == 3
        assert Name(comps[:1]) == by_peer[src] and comps[1] == data_id


def test_collaborating_proxy_relays_only_registered_data_ids(clean_pull):
    s = clean_pull
    assert s.collab_proxy.relayed > 0
    before = s.collab_proxy.ignored
    s.net.send("b", Interest(WIKIPEDIA.append(b"feedfacefeedface", 0), 1, b"x", kind="egress"))
    s.sim.run()
    assert s.collab_proxy.ignored == before + 1


def test_gather_rejects_corrupted_packet():
    s = Session("pull")
    s.run()
    st = s.selected.state
    before = st.rejected
    m = st.metadata
    bad = seal(m.data_key, b"x" * 1024, random.Random(1), actors.packet_aad(1))
    s.selected.gather(Interest(MENDELEY.append(m.data_id, 0), 1, bad))
    assert st.rejected == before + 1


def test_reconcile_checks_hmac(clean_pull):
    st = clean_pull.selected.state
    assert actors.reconcile(st) == clean_pull.data
    broken = actors.ProxyGatherState(st.metadata, dict(st.received))
    broken.received[0] = b"\x00" * len(broken.received[0])
    with pytest.raises(actors.HmacMismatch):
        actors.reconcile(broken)
    partial = actors.ProxyGatherState(st.metadata, {0: st.received[0]})
    with pytest.raises(ValueError):
        actors.reconcile(partial)


def test_consumer_rejects_tampered_content_and_wrong_producer(clean_pull):
    s = clean_pull
    pkt = s.selected.published[0]
    tampered = actors.DataPacket(pkt.name, b"forged" + pkt.content[6:], pkt.signature_info, pkt.signature_value)
    assert not actors.consumer_verify(s.group, s.keys["prod"].public, tampered)
    assert not actors.consumer_verify(s.group, s.keys["a"].public, pkt)
    assert not actors.consumer_verify(s.group, s.keys["prod"].public,
                                      actors.DataPacket(pkt.name, pkt.content, b"", b""))


def test_observing_censor_changes_nothing(clean_pull):
    s = Session("pull", censor_router=2, strategy="observe").run()
    assert s.censor.observed and s.censor.bogus_sent == 0
    assert s.trace.blocked_peers == [] and s.trace.complete
    assert s.trace.complete_ms == pytest.approx(clean_pull.trace.complete_ms, abs=20.0)


def test_censor_never_sees_producer_identity():
    s = Session("hybrid", censor_router=2).run()
    blob = "".join(name for _, name, _ in s.censor.observed)
    assert "/news/clip" not in blob and "anon-cert" not in blob


def test_protocol_params_validation():
    with pytest.raises(ValueError):
        actors.ProtocolParams(mode="teleport")
    with pytest.raises(ValueError):
        actors.ProtocolParams(threshold=0)
    with pytest.raises(ValueError):
        actors.ProtocolParams(bogus_piece_sizes=(10, 5))
