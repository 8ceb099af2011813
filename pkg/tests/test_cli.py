import csv
import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandembound.cli import fmt, main
from tandembound.scenario_file import (
    ScenarioError,
    dumps_scenario,
    parse_scenario,
    scenario_to_doc,
)

MM1 = {"arrival": {"type": "poisson", "rate": 0.7}, "services": [{"type": "poisson", "rate": 1.0}]}
DET = {
    "arrival": {"type": "deterministic", "rate": 0.5},
    "services": [{"type": "deterministic", "rate": 1.0}, {"type": "deterministic", "rate": 1.0}],
    "sim": {"horizon": 400, "replications": 2, "seed": 3},
}


@pytest.fixture
def write(tmp_path):
    def _write(doc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return str(path)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bound_delay(capsys, write):
    code, out, _ = run(capsys, "bound", write(MM1), "--metric", "delay", "--at", "112.5")
    assert code == 0
    rows = table(out)
    assert [r["method"] for r in rows] == ["demi", "exact-mm1", "mgf"]
    assert float(rows[0]["bound"]) == pytest.approx(2.2007019879753666e-15, rel=1e-12)
    assert out.splitlines()[0] == "at,method,bound,theta_star,valid,clipped"


def test_bound_at_zero(capsys, write):
    code, out, _ = run(capsys, "bound", write(MM1), "--at", "0")
    assert code == 0
    assert {float(r["bound"]) for r in table(out)} == {1.0}


def test_bound_backlog(capsys, write):
    code, out, _ = run(capsys, "bound", write(MM1), "--metric", "backlog", "--at", "20")
    assert code == 0
    assert float(table(out)[0]["bound"]) == pytest.approx(0.7**20, rel=1e-12)


def test_bound_unstable_exit_3(capsys, write):
    doc = {"arrival": {"type": "poisson", "rate": 1.3}, "services": [{"type": "poisson", "rate": 1.0}]}
    code, out, err = run(capsys, "bound", write(doc), "--at", "1")
    assert code == 3 and out == "" and "unstable" in err


@pytest.mark.parametrize(
    "doc",
    [
        {"arrival": {"type": "poisson", "rate": 0.7}},
        {**MM1, "extra": 1},
        {"arrival": {"type": "poisson", "rate": 0.7, "burst": 2}, "services": MM1["services"]},
        {"arrival": {"type": "gamma", "rate": 0.7}, "services": MM1["services"]},
        {**MM1, "sim": {"horizon": 1.5}},
        {**MM1, "services": []},
    ],
)
def test_bad_scenarios_exit_2(capsys, write, doc):
    code, _, err = run(capsys, "bound", write(doc), "--at", "1")
    assert code == 2 and err.startswith("error:")


def test_invalid_json_and_missing_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope", encoding="utf-8")
    assert run(capsys, "bound", str(bad), "--at", "1")[0] == 2
    assert run(capsys, "bound", str(tmp_path / "missing.json"), "--at", "1")[0] == 2


def test_figure2_defaults(capsys):
    code, out, _ = run(capsys, "figure2")
    assert code == 0
    rows = table(out)
    assert len(rows) == 20 and list(rows[0]) == ["H", "exact", "demi", "mgf"]
    h1, h2 = rows[0], rows[1]
    assert float(h1["exact"]) == pytest.approx(2.2007019879753666e-15, rel=1e-12)
    assert float(h1["demi"]) == pytest.approx(float(h1["exact"]), rel=1e-12)
    assert float(h2["exact"]) == pytest.approx(7.6474394082143991e-14, rel=1e-12)
    assert float(h2["demi"]) == pytest.approx(3.4100000290542599e-12, rel=1e-12)


def test_figure2_single_row_and_domain(capsys):
    code, out, _ = run(capsys, "figure2", "--hmax", "1")
    assert code == 0 and len(table(out)) == 1
    assert run(capsys, "figure2", "--rho", "1.2")[0] == 2
    assert run(capsys, "figure2", "--mud", "0")[0] == 2


def test_figure2_json(capsys):
    code, out, _ = run(capsys, "--format", "json", "figure2", "--hmax", "3")
    assert code == 0
    rows = json.loads(out)
    assert [r["H"] for r in rows] == [1, 2, 3]


def test_csv_values_parse_back_exactly(capsys):
    _, out_csv, _ = run(capsys, "figure2", "--hmax", "6")
    _, out_json, _ = run(capsys, "--format", "json", "figure2", "--hmax", "6")
    for row_csv, row_json in zip(table(out_csv), json.loads(out_json)):
        for key in ("exact", "demi", "mgf"):
            assert float(row_csv[key]) == row_json[key]


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_sweep_command(capsys, write):
    code, out, _ = run(capsys, "sweep", write(MM1), "--vary", "H", "--values", "1", "2", "--methods", "demi", "exact", "--d", "112.5")
    assert code == 0
    rows = table(out)
    assert len(rows) == 4 and list(rows[0])[0] == "H"
    assert float(rows[2]["bound"]) == pytest.approx(3.4100000290542599e-12, rel=1e-12)


def test_sweep_cell_error_is_reported(capsys, write):
    code, out, _ = run(capsys, "sweep", write(MM1), "--vary", "H", "--values", "2", "--methods", "eq16")
    assert code == 0
    assert table(out)[0]["error"]


def test_simulate_deterministic(capsys, write, tmp_path):
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "simulate", write(DET), "--out", str(out_dir))
    assert code == 0 and "containment,PASS" in out
    delay = table((out_dir / "delay_ccdf.csv").read_text())
    assert all(float(r["estimate"]) == 0.0 for r in delay)
    assert list(delay[0]) == ["threshold", "estimate", "half_width_95", "n_samples", "bound", "pass"]


def test_simulate_trace(capsys, write, tmp_path):
    trace = tmp_path / "trace.csv"
    code, _, _ = run(capsys, "--quiet", "simulate", write(DET), "--out", str(tmp_path / "o"), "--trace", str(trace))
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "t,backlog_1,backlog_2,arrivals,departures"
    assert len(lines) == 402


def test_simulate_repeatable_bytes(capsys, write, tmp_path):
    doc = {**MM1, "sim": {"horizon": 3000, "replications": 6, "seed": 11}}
    path = write(doc)
    run(capsys, "simulate", path, "--out", str(tmp_path / "a"), "--workers", "1")
    run(capsys, "simulate", path, "--out", str(tmp_path / "b"), "--workers", "3")
    for name in ("delay_ccdf.csv", "backlog_ccdf.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_seed_flag_overrides(capsys, write, tmp_path):
    doc = {**MM1, "sim": {"horizon": 3000, "replications": 2, "seed": 11}}
    path = write(doc)
    run(capsys, "simulate", path, "--out", str(tmp_path / "a"))
    run(capsys, "--seed", "12", "simulate", path, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "delay_ccdf.csv").read_bytes() != (tmp_path / "b" / "delay_ccdf.csv").read_bytes()


def test_simulate_io_error_exit_5(capsys, write, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(capsys, "simulate", write(DET), "--out", str(blocker / "sub"))
    assert code == 5


def test_verify_deterministic(capsys, write):
    code, out, _ = run(capsys, "verify", write(DET), "--replications", "500")
    assert code == 0
    rows = table(out)
    assert all(r["pass"] == "true" for r in rows)
    assert all(float(r["estimate"]) == 0.0 for r in rows)


def test_verify_mm1(capsys, write):
    code, out, _ = run(capsys, "--seed", "2010", "verify", write(MM1))
    assert code == 0
    assert {r["check"] for r in table(out)} == {"demisubmartingale", "doob"}


def test_verify_theta_out_of_range(capsys, write):
    ts = -math.log(0.7)
    assert run(capsys, "verify", write(MM1), "--theta", str(1.5 * ts))[0] == 2


def test_scenario_round_trip():
    doc = {
        "arrival": {"type": "bernoulli", "prob": 0.25, "size": 2.0},
        "services": [{"type": "poisson", "rate": 1.0}, {"type": "deterministic", "rate": 0.9}],
        "sim": {"horizon": 100, "replications": 3, "seed": 5, "warmup": 10},
    }
    first = parse_scenario(doc)
    again = parse_scenario(json.loads(dumps_scenario(first)))
    assert again == first
    assert scenario_to_doc(again) == doc


def test_bernoulli_rejects_rate():
    with pytest.raises(ScenarioError):
        parse_scenario({"arrival": {"type": "bernoulli", "prob": 0.2, "size": 1.0, "rate": 0.2}, "services": MM1["services"]})


def test_usage_error_exit_2(capsys):
    assert main(["bound"]) == 2
    capsys.readouterr()
