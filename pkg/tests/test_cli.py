import csv
import io
import shutil

import pytest
import yaml

from predtoll.cli import main
from predtoll.closed_loop import PerformanceReport, ReplicationResult
from predtoll.demand import TripRecord
from predtoll.network import Network, serialize_network
from predtoll.toy import diamond

from .conftest import TOY_CONFIG

FAST = ["--set", "replications=2", "--set", "ga.population_size=4", "--set", "ga.max_generations=2",
        "--set", "static_ga.population_size=4", "--set", "static_ga.max_generations=2"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report_file(path, means, intervals=4, delta=300.0):
    reps = []
    for r, mean in enumerate(means):
        trips = [TripRecord(k, 1, 3, h * delta + 1.0, experienced_tt=float(mean)) for k, h in enumerate(range(intervals))]
        reps.append(ReplicationResult(r, r, trips, []))
    rep = PerformanceReport("s", 1.0, delta, intervals * delta, (0.0, intervals * delta), None, reps)
    path.write_text(rep.to_csv())
    return str(path)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_no_toll(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run_cli(capsys, "run", "--config", str(TOY_CONFIG), "--out", str(out), *FAST,
                         "--set", "scenarios=[no_toll]")
    assert code == 0
    assert (out / "report_no_toll_L1.csv").exists()
    assert (out / "no_toll_L1" / "trips_rep0.csv").read_text().startswith("vehicle,origin,destination")
    assert (out / "no_toll_L1" / "cycles_rep1.csv").exists()
    assert (out / "table.csv").exists() and (out / "timing.csv").exists()


def test_missing_network(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("network: gone/net.txt\ndemand: d.csv\n")
    code, _, err = run_cli(capsys, "run", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert "gone/net.txt" in err


def test_override_interval_width(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run_cli(capsys, "run", "--config", str(TOY_CONFIG), "--out", str(out), *FAST,
                         "--set", "scenarios=[no_toll]", "--set", "delta=60")
    assert code == 0
    body = [l for l in (out / "report_no_toll_L1.csv").read_text().splitlines() if not l.startswith("#")]
    widths = {float(r["interval_end"]) - float(r["interval_start"]) for r in csv.DictReader(body)}
    assert widths == {60.0}


def test_run_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--config", str(TOY_CONFIG), *FAST, "--set", "replications=1"]
    assert run_cli(capsys, "run", "--out", str(a), *args)[0] == 0
    assert run_cli(capsys, "run", "--out", str(b), *args)[0] == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert len(files) > 10
    for rel in files:
        if rel.name == "timing.csv":
            continue
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    table = rows((a / "table.csv").read_text())
    assert {(r["treatment"], r["baseline"]) for r in table} == {
        ("predictive", "no_toll"), ("predictive", "static"), ("static", "no_toll")}


def test_compare_self(tmp_path, capsys):
    a = report_file(tmp_path / "a.csv", [100, 103, 98])
    code, out, _ = run_cli(capsys, "compare", a, a)
    assert code == 0
    (row,) = rows(out)
    assert float(row["tolling_improvement_pct"]) == 0.0
    assert row["tolling_significant"] == "0"


def test_compare_arithmetic(tmp_path, capsys):
    a = report_file(tmp_path / "a.csv", [99, 100, 101])
    b = report_file(tmp_path / "b.csv", [90, 91, 92])
    code, out, _ = run_cli(capsys, "compare", "--peak", "00:05-00:15", a, b)
    assert code == 0
    (row,) = rows(out)
    assert float(row["tolling_improvement_pct"]) == pytest.approx(9.0)
    assert float(row["peak_improvement_pct"]) == pytest.approx(9.0)
    assert row["tolling_significant"] == "1"


def test_compare_reverse_negates(tmp_path, capsys):
    a = report_file(tmp_path / "a.csv", [99, 100, 101])
    b = report_file(tmp_path / "b.csv", [90, 91, 93])
    ab = float(rows(run_cli(capsys, "compare", a, b)[1])[0]["tolling_improvement_pct"])
    ba = float(rows(run_cli(capsys, "compare", b, a)[1])[0]["tolling_improvement_pct"])
    assert ab > 0 > ba
    assert (1 - ab / 100) * (1 - ba / 100) == pytest.approx(1.0)


def test_compare_mismatch(tmp_path, capsys):
    a = report_file(tmp_path / "a.csv", [100, 101])
    b = report_file(tmp_path / "b.csv", [100, 101], intervals=6)
    code, _, err = run_cli(capsys, "compare", a, b)
    assert code == 1 and "interval" in err


def test_compare_usage(tmp_path, capsys):
    a = report_file(tmp_path / "a.csv", [100, 101])
    assert run_cli(capsys, "compare", a)[0] == 2
    assert run_cli(capsys, "compare", a, str(tmp_path / "missing.csv"))[0] == 2
    assert run_cli(capsys, "compare", "--peak", "soon", a, a)[0] == 2


def test_usage_errors(capsys):
    assert run_cli(capsys)[0] == 2
    assert run_cli(capsys, "frobnicate")[0] == 2
    assert run_cli(capsys, "run", "--config", str(TOY_CONFIG))[0] == 2
    assert run_cli(capsys, "validate", "--config", str(TOY_CONFIG), "--set", "nope=1")[0] == 2


def test_validate(capsys):
    code, out, _ = run_cli(capsys, "validate", "--config", str(TOY_CONFIG))
    assert code == 0 and out.startswith("ok: 4 links, 1 gantries")


def test_grid_oracle_one_gantry(capsys):
    code, out, err = run_cli(capsys, "grid-oracle", "--config", str(TOY_CONFIG), "--levels", "5", "--t0", "00:20")
    assert code == 0
    table = rows(out)
    assert len(table) == 5
    assert sum(int(r["argmin"]) for r in table) == 1
    best = next(r for r in table if r["argmin"] == "1")
    assert all(float(best["objective"]) <= float(r["objective"]) for r in table)
    assert "argmin:" in err


@pytest.fixture
def two_gantry_config(tmp_path):
    d = diamond()
    net = Network(d.nodes, d.links, (1, 3))
    (tmp_path / "net.txt").write_text(serialize_network(net))
    (tmp_path / "demand.csv").write_text("".join(f"1,4,{h},{r}\n" for h, r in enumerate([60, 120, 150, 120, 60])))
    raw = yaml.safe_load(TOY_CONFIG.read_text())
    raw.update(network="net.txt", demand="demand.csv")
    raw["cycle"].update(warmup=300, tolling=900, post=300, peak=None)
    p = tmp_path / "two.yaml"
    p.write_text(yaml.safe_dump(raw))
    return p


def test_grid_oracle_two_gantries(two_gantry_config, tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, _, _ = run_cli(capsys, "grid-oracle", "--config", str(two_gantry_config), "--levels", "3", "--out", str(out))
    assert code == 0
    table = rows(out.read_text())
    assert len(table) == 9
    assert len({(r["toll_1"], r["toll_3"]) for r in table}) == 9


def test_grid_oracle_guard(capsys):
    code, _, err = run_cli(capsys, "grid-oracle", "--config", str(TOY_CONFIG), "--levels", "10001")
    assert code == 2 and "exceeds" in err
