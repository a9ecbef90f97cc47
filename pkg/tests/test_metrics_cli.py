import json

import pytest

from optiloop.cli import main
from optiloop.loop import initial_solution
from optiloop.metrics import (
    CSV_COLUMNS,
    mean_hops,
    parse_csv,
    run_experiment,
    solution_from_dict,
    solution_to_dict,
    spare_ccat,
    to_csv,
    to_json,
)
from optiloop.model import LinkSpec, LogicalGraph, PhysicalGraph, Solution
from optiloop.scenario import dumps_scenario, operator_scenario, random_tiny_scenario

from conftest import single_node, two_nodes


# --------------------------------------------------------------------------
# metrics


def test_spare_ccat_zero_demand_is_total_capability():
    lg, pg, em = two_nodes(demand=0.0)
    cfg, sol = initial_solution(lg, pg, em)
    assert spare_ccat(cfg, sol, pg, lg) == pytest.approx(20.0)


def test_spare_ccat_saturated_node():
    lg, pg, em = single_node(demand=10.0, capacity=10.0, bandwidth=20.0)
    cfg, sol = initial_solution(lg, pg, em)
    assert spare_ccat(cfg, sol, pg, lg) == pytest.approx(0.0, abs=1e-9)


def test_mean_hops_adjacent():
    lg, pg, em = single_node()
    _, sol = initial_solution(lg, pg, em)
    assert mean_hops(sol, lg, pg) == pytest.approx(1.0)


def test_mean_hops_weighted():
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): 2.0}, {})
    pg = PhysicalGraph(("e",), ("a", "b", "c", "d"), {c: 10.0 for c in "abcd"},
                       {(i, j): LinkSpec(10.0) for i, j in [("e", "a"), ("a", "d"), ("a", "b"), ("b", "c"), ("c", "d")]})
    key = lambda i, j: (i, j, "e", "v", "v")  # noqa: E731
    sol = Solution(tau={
        key("e", "a"): 2.0, key("a", "d"): 1.0,  # 2 hops
        key("a", "b"): 1.0, key("b", "c"): 1.0, key("c", "d"): 1.0,  # 4 hops for the other half
    })
    assert mean_hops(sol, lg, pg) == pytest.approx(3.0)


def test_solution_document_round_trip():
    scn = random_tiny_scenario(2)
    _, sol = initial_solution(scn.logical, scn.physical, scn.energy)
    back = solution_from_dict(json.loads(json.dumps(solution_to_dict(sol))))
    assert back == sol


# --------------------------------------------------------------------------
# sweep


@pytest.fixture(scope="module")
def tiny_sweep():
    return run_experiment(random_tiny_scenario(3), ["all"], [0.5, 1.0, 2.0, 3.0])


def test_sweep_grid_shape(tiny_sweep):
    assert len(tiny_sweep) == 16
    keys = [(r.multiplier, r.strategy) for r in tiny_sweep]
    assert len(set(keys)) == 16
    assert tiny_sweep == sorted(tiny_sweep, key=lambda r: r.sort_key())


def test_sweep_rows_are_consistent(tiny_sweep):
    for r in tiny_sweep:
        if not r.ok:
            assert r.energy_total is None and r.status in {"infeasible", "budget", "skipped", "nonconvergence"}
            continue
        assert sum(r.breakdown.values()) == pytest.approx(r.energy_total, rel=1e-6)
        assert all(v >= -1e-12 for v in r.breakdown.values())
        assert r.savings <= 1.0 and r.spare_ccat >= 0


def test_csv_and_json_agree(tiny_sweep):
    rows = parse_csv(to_csv(tiny_sweep))
    docs = json.loads(to_json(tiny_sweep))["results"]
    assert len(rows) == len(docs)
    for row, doc in zip(rows, docs):
        for key in ("strategy", "multiplier", "status", "energy_w", "savings", "spare_ccat", "mean_hops", "lp_solves"):
            assert row[key] == doc[key]
        for k, v in doc["breakdown_w"].items():
            assert row[f"{k}_w"] == v
        assert row["vnf_instances"] == doc["vnf_instances"]


def test_csv_header_is_fixed(tiny_sweep):
    header = to_csv(tiny_sweep).splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    assert to_csv(tiny_sweep, timing=True).splitlines()[0].endswith(",wall_time")
    assert "\r" not in to_csv(tiny_sweep)


def test_processing_energy_same_for_every_strategy(tiny_sweep):
    for m in {r.multiplier for r in tiny_sweep}:
        procs = [r.breakdown["proc"] for r in tiny_sweep if r.multiplier == m and r.ok]
        for p in procs:
            assert p == pytest.approx(procs[0], rel=1e-6)


# --------------------------------------------------------------------------
# directional checks on one operator-scale scenario


@pytest.fixture(scope="module")
def operator_rows():
    scn = operator_scenario(0)
    return run_experiment(scn, ["all_on", "consolidation", "optiloop"], [0.5, 1.0, 2.0, 3.0])


def _pick(rows, strategy, m):
    (row,) = [r for r in rows if r.strategy == strategy and r.multiplier == m]
    return row


def test_operator_optiloop_always_saves(operator_rows):
    for m in (0.5, 1.0, 2.0, 3.0):
        row = _pick(operator_rows, "optiloop", m)
        assert row.ok and row.savings > 0


def test_operator_consolidation_leaves_more_spare_capability(operator_rows):
    row_c, row_o = _pick(operator_rows, "consolidation", 1.0), _pick(operator_rows, "optiloop", 1.0)
    assert row_c.spare_ccat >= row_o.spare_ccat


def test_operator_consolidation_takes_longer_paths(operator_rows):
    row_c, row_o = _pick(operator_rows, "consolidation", 1.0), _pick(operator_rows, "optiloop", 1.0)
    assert row_o.mean_hops <= row_c.mean_hops


# --------------------------------------------------------------------------
# command line


@pytest.fixture
def tiny_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(dumps_scenario(random_tiny_scenario(3)))
    return path


def test_cli_sweep_header(tiny_file, capsys):
    assert main(["sweep", str(tiny_file), "--strategy", "all", "--multipliers", "1"]) == 0
    header = capsys.readouterr().out.splitlines()[0].split(",")
    for col in ("strategy", "multiplier", "energy_w", "savings", "spare_ccat", "mean_hops"):
        assert col in header


def test_cli_sweep_is_byte_identical(tiny_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["sweep", str(tiny_file), "--strategy", "all", "--seed", "4", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_sweep_writes_both_formats(tiny_file, tmp_path):
    c, j = tmp_path / "r.csv", tmp_path / "r.json"
    assert main(["sweep", str(tiny_file), "--multipliers", "1", "--out", str(c), "--json", str(j)]) == 0
    assert parse_csv(c.read_text())[0]["energy_w"] == json.loads(j.read_text())["results"][0]["energy_w"]


def test_cli_verify_good_and_corrupted(tiny_file, tmp_path, capsys):
    sol_path = tmp_path / "sol.json"
    assert main(["solve", str(tiny_file), "--strategy", "optiloop", "--solution-out", str(sol_path)]) == 0
    assert main(["verify", str(tiny_file), str(sol_path)]) == 0
    doc = json.loads(sol_path.read_text())
    doc["x"] = [[i, j, 0.0] for i, j, _ in doc["x"]]  # switch every link off under the traffic
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["verify", str(tiny_file), str(bad)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert "CAPACITY_L" in err["tags"]


def test_cli_generate_scale_up(tmp_path, capsys):
    base = tmp_path / "op.json"
    assert main(["generate", "--seed", "0", "--out", str(base)]) == 0
    assert main(["generate", "--scenario", str(base), "--scale-up"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["physical"]["nodes"]) == 255


def test_cli_export_lp(tiny_file, capsys):
    assert main(["export-lp", str(tiny_file)]) == 0
    text = capsys.readouterr().out
    assert "Subject To" in text and "\\ MATCH" in text


def test_cli_errors_are_structured(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.json")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "io"
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"schema_version": 1}))
    assert main(["solve", str(broken)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "schema" and err["path"].startswith("/")


def test_cli_unknown_strategy(tiny_file, capsys):
    assert main(["solve", str(tiny_file), "--strategy", "magic"]) == 2
    assert "unknown strategy" in json.loads(capsys.readouterr().err)["message"]
