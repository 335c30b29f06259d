import json

from anonpub.cli import EXIT_CONFIG, EXIT_OK, EXIT_PLACEMENT, main
from anonpub.harness import CSV_COLUMNS
from anonpub.vectors import check_signature_record, read_key_vector, read_signature_vectors


def small_config(tmp_path):
    path = tmp_path / "s.conf"
    path.write_text("collab_peers = 4\ndata_size = 16384\nmode = hybrid\n")
    return path


def test_run_twice_gives_identical_csv(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(cfg), "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert a.read_text() == b.read_text()
    assert a.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_run_writes_cdf_trace_and_metadata(tmp_path):
    cfg = small_config(tmp_path)
    paths = {k: tmp_path / k for k in ("out", "cdf", "trace", "meta")}
    argv = ["run", "--config", str(cfg), "--seed", "1"]
    for k, p in paths.items():
        argv += [f"--{k}", str(p)]
    assert main(argv) == EXIT_OK
    assert paths["cdf"].read_text().splitlines()[-1].endswith(",1")
    assert "interest" in paths["trace"].read_text()
    meta = json.loads(paths["meta"].read_text())
    assert meta["config"]["collab_peers"] == 4 and "aead" in meta["crypto"]


def test_invalid_config_exits_with_diagnostic(tmp_path, capsys):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("censor_frac = 2\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert "censor_frac" in capsys.readouterr().err
    assert main(["run", "--set", "nonsense"]) == EXIT_CONFIG
    assert main(["sweep", "--grid", str(tmp_path / "missing.grid")]) == EXIT_CONFIG


def test_sweep_with_empty_grid_prints_header(tmp_path, capsys):
    grid = tmp_path / "empty.grid"
    grid.write_text("# nothing varies\n")
    assert main(["sweep", "--grid", str(grid)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == ",".join(CSV_COLUMNS)


def test_validate_topology_reports_and_places(tmp_path, capsys):
    assert main(["validate-topology", "--peers", "21", "--censors", "2", "--dump"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "278 routers, 731 links" in out and "censor censor1" in out
    broken = tmp_path / "bad.topo"
    broken.write_text("1 2 3 4\n")
    assert main(["validate-topology", str(broken)]) == EXIT_CONFIG


def test_infeasible_placement_exit_code():
    assert main(["validate-topology", "--peers", "270", "--min-distance", "9"]) == EXIT_PLACEMENT


def test_gen_vectors_round_trip(tmp_path):
    assert main(["gen-vectors", "--out", str(tmp_path), "--count", "3", "--q-bits", "64"]) == EXIT_OK
    read_key_vector(tmp_path / "producer.key")
    records = read_signature_vectors(tmp_path / "proxy_signatures.txt")
    assert len(records) == 3 and all(check_signature_record(r) for r in records)
