import json

import numpy as np
import pytest

from dsfnilm import cli
from dsfnilm.dataio import load_dataset, read_csv, write_series_csv

SPEC = {
    "num_appliances": 3,
    "num_lines": 2,
    "states": 3,
    "gap": 100,
    "horizon": 120,
    "seed": 4,
    "connectivity": [
        {"kind": "single_line", "line": 0},
        {"kind": "split_pair", "lines": [0, 1], "fraction": 0.5},
        {"kind": "single_line", "line": 1},
    ],
}


@pytest.fixture
def spec_path(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(SPEC))
    return p


@pytest.fixture
def house(tmp_path, spec_path):
    assert cli.main(["generate", "--spec", str(spec_path), "--out", str(tmp_path / "house")]) == 0
    return tmp_path / "house"


def _tree(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_generate_deterministic(tmp_path, spec_path, house):
    assert cli.main(["generate", "--spec", str(spec_path), "--out", str(tmp_path / "again")]) == 0
    assert _tree(house) == _tree(tmp_path / "again")
    assert {"aggregate.csv", "model.json", "truth.csv", "appliance_app1.csv"} <= set(_tree(house))


def test_generate_missing_spec(tmp_path, capsys):
    assert cli.main(["generate", "--spec", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    assert "no such file" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [{"noise_std": -1}, {"p_stay": 2}, {"bogus": 1}])
def test_generate_invalid_spec(tmp_path, patch):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({**SPEC, **patch}))
    assert cli.main(["generate", "--spec", str(p), "--out", str(tmp_path / "o")]) == 2


def test_generate_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["generate", "--spec", str(p), "--out", str(tmp_path / "o")]) == 2


def test_train_recovers_weights(tmp_path, house, capsys):
    out = tmp_path / "model.json"
    assert cli.main(["train", "--data", str(house), "--out", str(out)]) == 0
    model = json.loads(out.read_text())
    truth = json.loads((house / "model.json").read_text())
    for got, want in zip(model["appliances"], truth["appliances"]):
        np.testing.assert_allclose(got["weights"], want["weights"], atol=1e-2)
        assert len(got["mu"]) == 3
    assert "app1: mu=[" in capsys.readouterr().out


def test_train_state_list_and_errors(tmp_path, house):
    out = str(tmp_path / "m.json")
    assert cli.main(["train", "--data", str(house), "--states", "2,3,2", "--out", out]) == 0
    assert [len(a["mu"]) for a in json.loads((tmp_path / "m.json").read_text())["appliances"]] == [2, 3, 2]
    assert cli.main(["train", "--data", str(house), "--states", "2,3", "--out", out]) == 2
    assert cli.main(["train", "--data", str(house), "--states", "x", "--out", out]) == 2


def test_train_missing_appliances(tmp_path, house):
    for p in house.glob("appliance_*.csv"):
        p.unlink()
    assert cli.main(["train", "--data", str(house), "--out", str(tmp_path / "m.json")]) == 2


def test_train_malformed_csv(tmp_path, house):
    p = house / "appliance_app2.csv"
    p.write_text(p.read_text().replace("\n60,", "\n60,oops", 1))
    assert cli.main(["train", "--data", str(house), "--out", str(tmp_path / "m.json")]) == 2


def _disagg(house, out, *extra):
    return cli.main(["disaggregate", "--model", str(house / "model.json"), "--agg", str(house / "aggregate.csv"),
                     "--out", str(out), *extra])


def test_disaggregate_outputs_and_trace(tmp_path, house):
    out = tmp_path / "xhat.csv"
    assert _disagg(house, out, "--seed", "3") == 0
    header, ts, vals = read_csv(out)
    assert header == ["timestamp", "app1", "app2", "app3"]
    assert vals.shape == (120, 3)
    trace = json.loads((tmp_path / "xhat.trace.json").read_text())
    costs = trace["set_costs"]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert trace["stop_reason"] in ("converged", "max_iters")


def test_disaggregate_same_seed_identical(tmp_path, house):
    _disagg(house, tmp_path / "a.csv", "--seed", "9")
    _disagg(house, tmp_path / "b.csv", "--seed", "9")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.trace.json").read_bytes() == (tmp_path / "b.trace.json").read_bytes()


def test_disaggregate_line_mismatch(tmp_path, house, capsys):
    agg = tmp_path / "agg1.csv"
    lines = (house / "aggregate.csv").read_text().splitlines()
    agg.write_text("\n".join(",".join(line.split(",")[:2]) for line in lines) + "\n")
    code = cli.main(["disaggregate", "--model", str(house / "model.json"), "--agg", str(agg),
                     "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "lines" in capsys.readouterr().err


def test_disaggregate_bad_options(tmp_path, house):
    assert _disagg(house, tmp_path / "x.csv", "--max-iters", "0") == 2
    assert _disagg(house, tmp_path / "x.csv", "--lambda", "-1") == 2
    missing = cli.main(["disaggregate", "--model", str(tmp_path / "no.json"), "--agg", str(house / "aggregate.csv"),
                        "--out", str(tmp_path / "x.csv")])
    assert missing == 2


def test_evaluate_truth_against_itself(tmp_path, house):
    est = tmp_path / "est.csv"
    ds = load_dataset(house)
    write_series_csv(est, ds.timestamps, dict(zip(ds.names, ds.appliances)))
    report = tmp_path / "r.json"
    assert cli.main(["evaluate", "--truth", str(house), "--estimates", str(est), "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert set(doc["appliances"].values()) == {0.0}
    assert "skipped" in doc and "skipped_per_house" in doc


def test_evaluate_two_houses_pooled(tmp_path, house):
    ds = load_dataset(house)
    zero = {n: np.zeros(ds.horizon) for n in ds.names}
    write_series_csv(tmp_path / "zero.csv", ds.timestamps, zero)
    write_series_csv(tmp_path / "same.csv", ds.timestamps, dict(zip(ds.names, ds.appliances)))
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    cli.main(["evaluate", "--truth", str(house), "--estimates", str(tmp_path / "zero.csv"), "--report", str(r1)])
    cli.main(["evaluate", "--truth", str(house), "--estimates", str(tmp_path / "zero.csv"),
              "--truth", str(house), "--estimates", str(tmp_path / "same.csv"), "--report", str(r2)])
    one = json.loads(r1.read_text())["appliances"]
    two = json.loads(r2.read_text())["appliances"]
    for n in ds.names:
        assert two[n] == pytest.approx(one[n] / 2, rel=1e-12)


def test_evaluate_misaligned(tmp_path, house):
    ds = load_dataset(house)
    write_series_csv(tmp_path / "short.csv", ds.timestamps[:-1], {n: np.zeros(ds.horizon - 1) for n in ds.names})
    code = cli.main(["evaluate", "--truth", str(house), "--estimates", str(tmp_path / "short.csv"),
                     "--report", str(tmp_path / "r.json")])
    assert code == 2
    code = cli.main(["evaluate", "--truth", str(house), "--truth", str(house), "--estimates",
                     str(tmp_path / "short.csv"), "--report", str(tmp_path / "r.json")])
    assert code == 2


def test_split_command(tmp_path, house):
    code = cli.main(["split", "--data", str(house), "--train-out", str(tmp_path / "tr"),
                     "--test-out", str(tmp_path / "te")])
    assert code == 0
    assert load_dataset(tmp_path / "tr").horizon == 60 and load_dataset(tmp_path / "te").truth.states.shape == (3, 60)


def test_verify_passes(capsys):
    assert cli.main(["verify", "--size", "tiny", "--seeds", "3"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "submodular" in out


def test_verify_single_seed_fast_path():
    assert cli.main(["verify", "--seeds", "1"]) == 0


def test_verify_detects_sign_flip(capsys):
    assert cli.main(["verify", "--size", "tiny", "--seeds", "2", "--corrupt-lambda"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "seed 0" in out


def test_verify_bad_seed_count():
    assert cli.main(["verify", "--seeds", "0"]) == 2
