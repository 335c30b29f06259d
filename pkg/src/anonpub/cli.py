"""Command-line entry point.

Exit codes: 0 success, 1 bad configuration or input, 2 actor placement
infeasible, 3 simulation invariant violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import random
import sys
from dataclasses import asdict, replace
from pathlib import Path

from anonpub import harness
from anonpub.bench import benchmark_signatures, measure_layer_costs
from anonpub.crypto import crypto_metadata, default_group, keygen
from anonpub.engine import InvariantViolation
from anonpub.metrics import cdf
from anonpub.topology import ParseError, PlacementInfeasible, load_topology, peer_proxy_min_hops, place_actors
from anonpub.vectors import write_key_vector, write_signature_vectors

EXIT_OK, EXIT_CONFIG, EXIT_PLACEMENT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("anonpub")


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise harness.ConfigInvalid(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = harness._coerce(k.strip(), v.strip())
    return out


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _metadata(cfg: harness.ScenarioConfig) -> dict:
    return {"config": asdict(cfg), "crypto": crypto_metadata()}


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config) if args.config else harness.ScenarioConfig()
    cfg = replace(cfg, **_overrides(args.set)).validate()
    seeds = [args.seed] if args.seed is not None else cfg.seed_list
    results = [harness.run(cfg, s, trace_events=bool(args.trace)) for s in seeds]
    _write(args.out, harness.results_csv(results))
    if args.cdf:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["seed", "delay_ms", "fraction"])
        for r in results:
            w.writerows((r.seed, f"{v:.6g}", f"{f:.6g}") for v, f in cdf(r.metrics.per_packet_delays))
        Path(args.cdf).write_text(out.getvalue())
    if args.trace:
        Path(args.trace).write_text("".join(f"# seed {r.seed}\n" + "\n".join(r.events or []) + "\n"
                                            for r in results))
    if args.meta:
        Path(args.meta).write_text(json.dumps(_metadata(cfg), indent=2, default=str) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        text = Path(args.grid).read_text()
    except OSError as exc:
        raise harness.ConfigInvalid(f"cannot read {args.grid}: {exc}") from None
    grid, seeds = harness.parse_grid(text)
    base = harness.load_config(args.base) if args.base else harness.ScenarioConfig()
    if args.seeds:
        seeds = harness.parse_seeds(args.seeds)

    def progress(cfg, seed):
        log.info("done %s peers=%s censors=%s seed=%s", cfg.mode, cfg.collab_peers, cfg.censor_frac, seed)

    results, csv_text = harness.sweep(grid, seeds, base, progress)
    _write(args.out, csv_text)
    if args.meta:
        Path(args.meta).write_text(json.dumps(_metadata(base), indent=2, default=str) + "\n")
    return EXIT_OK if all(r is not None for r in results) else EXIT_INVARIANT


def cmd_bench(args) -> int:
    group = default_group(args.q_bits)
    t = benchmark_signatures(group, args.iterations, args.amortize)
    print(f"# q_bits={args.q_bits} iterations={args.iterations}")
    print(f"{'operation':40s} {'ms/op':>10s} {'x schnorr':>10s}")
    for name, ms in t.rows():
        base = t.schnorr_verify if "verify" in name else t.schnorr_sign
        print(f"{name:40s} {ms:10.4f} {ms / base:10.2f}")
    for scheme in ("public", "symmetric"):
        enc, dec = measure_layer_costs(group, scheme)
        print(f"onion layer {scheme:9s} encrypt={enc:.4f} ms decrypt={dec:.4f} ms")
    return EXIT_OK


def cmd_vectors(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    group = default_group(args.q_bits)
    write_key_vector(out / "producer.key", keygen(group, rng))
    n = write_signature_vectors(out / "proxy_signatures.txt", group, args.count, rng)
    print(f"wrote {out / 'producer.key'} and {n} records to {out / 'proxy_signatures.txt'}")
    return EXIT_OK


def cmd_topology(args) -> int:
    topo = load_topology(args.path)
    delays = [d for _, _, d in topo.links]
    print(f"{topo.source}: {len(topo.routers)} routers, {len(delays)} links, "
          f"delay {min(delays):g}..{max(delays):g} ms")
    if args.peers:
        placed = place_actors(topo, args.peers, args.censors, args.proxies, args.min_distance, args.seed)
        print(f"placement ok: closest proxy is {peer_proxy_min_hops(placed)} hops from any peer")
        if args.dump:
            sys.stdout.write(placed.placement.dump())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anonpub", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--config", help="key = value scenario file")
    r.add_argument("--seed", type=int, help="overrides the config's seed list")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    r.add_argument("--out", help="metrics CSV (default stdout)")
    r.add_argument("--cdf", help="per-packet delay CDF CSV")
    r.add_argument("--trace", help="packet event trace")
    r.add_argument("--meta", help="JSON with the effective config and crypto choices")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("--grid", required=True, help="lines of 'key = v1, v2'; 'seeds = 1..10'")
    s.add_argument("--base", help="scenario file for keys the grid does not vary")
    s.add_argument("--seeds", help="overrides the grid's seeds line")
    s.add_argument("--out", help="metrics CSV (default stdout)")
    s.add_argument("--meta")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench-crypto", help="signature and onion-layer timings on this machine")
    b.add_argument("--q-bits", type=int, default=256)
    b.add_argument("--iterations", type=int, default=200)
    b.add_argument("--amortize", type=int, default=500)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("gen-vectors", help="write key and proxy-signature vector files")
    v.add_argument("--out", required=True, help="output directory")
    v.add_argument("--count", type=int, default=20)
    v.add_argument("--q-bits", type=int, default=256)
    v.add_argument("--seed", type=int, default=1)
    v.set_defaults(func=cmd_vectors)

    t = sub.add_parser("validate-topology", help="parse a topology and optionally place actors")
    t.add_argument("path", nargs="?", help="topology file (default: bundled ISP map)")
    t.add_argument("--peers", type=int, default=0)
    t.add_argument("--censors", type=int, default=0)
    t.add_argument("--proxies", type=int, default=5)
    t.add_argument("--min-distance", type=int, default=5)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--dump", action="store_true", help="print the role placement")
    t.set_defaults(func=cmd_topology)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigInvalid, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlacementInfeasible as exc:
        print(f"placement infeasible: {exc}", file=sys.stderr)
        return EXIT_PLACEMENT
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
