import json
import math

import numpy as np
import pytest

from asntr.errors import ConfigError
from asntr.finite_sum import DenseMlp, MlpProblem
from asntr.finite_sum.data import Dataset
from asntr.harness.cli import main
from asntr.harness.compare import CompareError, compare_directory, event_portions
from asntr.harness.config import load_config, parse_config
from asntr.harness.experiment import build_experiment, evaluate_test, prediction_accuracy
from asntr.harness.runner import common_grid, interpolate, mean_stderr, run_experiment, summarize
from asntr.trace import read_csv_rows

from test_data import write_idx

MINIMAL = """\
name: tiny
problem:
  kind: quadratic
  n_samples: 200
  dim: 10
optimizers:
  - name: asntr
    params: {C1: 1.0, C2: 1.0}
seeds: [0]
budget: 1000
"""

BLOBS = """\
name: pair
problem:
  kind: blobs-classification
  n_samples: 400
  n_test: 100
  dim: 5
  architecture: [5, 8, 3]
optimizers:
  - name: asntr
    params: {C2: 10.0}
  - name: storm_like
seeds: [0, 1]
budget: 6000
eval_every: 10
"""


def test_minimal_config_writes_three_files(tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text(MINIMAL)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["metrics_asntr_0.csv", "summary.json",
                                                       "trace_asntr_0.csv"]
    rows = read_csv_rows(out / "metrics_asntr_0.csv")
    assert all(float(r["N_g"]) <= 1000 + 200 for r in rows)
    assert [int(r["k"]) for r in rows] == list(range(len(rows)))


@pytest.mark.parametrize("text,field,line", [
    (MINIMAL.replace("budget: 1000", "budget: 1000\nbudgte: 3"), "budgte", 11),
    (MINIMAL.replace("dim: 10", "dim: ten"), "problem.dim", 5),
    (MINIMAL.replace("{C1: 1.0, C2: 1.0}", "{C1: 1.0, eta: 0.5}"), "optimizers[0].params", 8),
    (MINIMAL.replace("{C1: 1.0, C2: 1.0}", "{C1: 1.0, bogus: 1}"), "optimizers[0].params.bogus", 8),
    (MINIMAL.replace("name: asntr", "name: sgd"), "optimizers[0].name", 7),
    (MINIMAL.replace("seeds: [0]", "seeds: []"), "seeds", 9),
    (MINIMAL.replace("  dim: 10\n", "  dim: 10\n  colour: red\n"), "problem.colour", 6),
], ids=["unknown-top-key", "non-integer", "rejected-params", "unknown-param", "unknown-optimizer",
        "empty-seeds", "unknown-problem-key"])
def test_config_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == field
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_config_rejects_duplicates_and_reserved_keys():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "budget: 5\n")
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL.replace("{C1: 1.0, C2: 1.0}", "{budget: 10}"))
    assert "budget" in err.value.field


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(MINIMAL.replace("dim: 10", "dim: -3"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "problem.dim" in capsys.readouterr().err


def test_numbers_in_exponent_form_accepted():
    cfg = parse_config(MINIMAL.replace("C2: 1.0", "C2: 1e8"))
    assert cfg.optimizers[0].params["C2"] == 1e8


def test_shipped_configs_parse():
    from pathlib import Path

    for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.yaml")):
        load_config(path)


def test_idx_config_paths_resolved(tmp_path):
    rng = np.random.default_rng(0)
    for split, n in (("train", 30), ("test", 10)):
        write_idx(tmp_path / f"{split}-img.idx", rng.integers(0, 256, size=(n, 2, 2)))
        write_idx(tmp_path / f"{split}-lab.idx", np.arange(n) % 3)
    (tmp_path / "c.yaml").write_text(
        "problem:\n  kind: idx\n  train_images: train-img.idx\n  train_labels: train-lab.idx\n"
        "  test_images: test-img.idx\n  test_labels: test-lab.idx\n  n_classes: 3\n"
        "optimizers:\n  - name: asntr\nseeds: [0]\nbudget: 500\n")
    cfg = load_config(tmp_path / "c.yaml")
    exp = build_experiment(cfg.problem)
    assert exp.train.features.shape == (30, 4) and exp.test.targets.shape == (10, 3)
    assert exp.net.layer_sizes == (4, 32, 16, 3)


def test_evaluate_test_examples():
    net = DenseMlp((4, 10))
    X = np.random.default_rng(0).normal(size=(20, 4))
    Y = np.eye(10)[np.arange(20) % 10]
    prob = MlpProblem(net, Dataset(X, Y))
    loss, acc = evaluate_test(prob, np.zeros(net.n_params), Dataset(X, Y), "classification")
    assert acc == pytest.approx(10.0) and loss == pytest.approx(math.log(10))
    assert prediction_accuracy(Y * 5, Y, "classification") == 100.0

    reg = DenseMlp((2, 1), "half-mse")
    w = reg.pack([(np.array([[1.0], [1.0]]), np.array([0.0]))])
    Xr = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    exact = Dataset(Xr, Xr.sum(axis=1, keepdims=True))
    loss, acc = evaluate_test(MlpProblem(reg, exact), w, exact, "regression")
    assert loss == 0.0 and acc == 100.0


def test_regression_threshold_ten():
    out = np.array([[0.0], [0.0], [0.0], [0.0]])
    target = np.array([[9.9], [-10.0], [10.5], [-3.0]])
    assert prediction_accuracy(out, target, "regression") == 50.0
    assert prediction_accuracy(out, target, "regression", threshold=11) == 100.0


def test_stderr_over_five_seeds():
    vals = np.array([[1.0, 2.0], [2.0, 2.0], [4.0, 2.0], [3.0, 2.0], [5.0, 2.0]])
    mean, se = mean_stderr(vals)
    assert np.allclose(mean, [3.0, 2.0])
    assert se[0] == pytest.approx(np.std(vals[:, 0], ddof=1) / math.sqrt(5))
    assert se[1] == 0.0
    rows = {s: [{"N_g": 0, "train_loss": s}, {"N_g": 10, "train_loss": s + 1}] for s in range(5)}
    entry = summarize(rows, "asntr")["train_loss"]
    assert len(entry["grid"]) == 50
    assert entry["stderr"][0] == pytest.approx(np.std(range(5), ddof=1) / math.sqrt(5))


def test_grid_never_extrapolates():
    a = (np.array([0.0, 10.0, 20.0]), np.zeros(3))
    b = (np.array([5.0, 30.0]), np.zeros(2))
    grid = common_grid([a, b])
    assert grid[0] == 5.0 and grid[-1] == 20.0
    with pytest.raises(ValueError):
        interpolate(a[0], a[1], np.array([25.0]))
    assert common_grid([a, (np.array([40.0, 50.0]), np.zeros(2))]).size == 0


@pytest.fixture(scope="module")
def pair_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pair")
    run_experiment(parse_config(BLOBS), out)
    return out


def test_run_outputs_reproducible(pair_dir, tmp_path):
    run_experiment(parse_config(BLOBS), tmp_path)
    for path in pair_dir.glob("*.csv"):
        if path.name.startswith(("trace_", "metrics_")):
            assert path.read_bytes() == (tmp_path / path.name).read_bytes()
    summary = json.loads((pair_dir / "summary.json").read_text())
    assert {e["optimizer"] for e in summary["test_accuracy"]} == {"asntr", "storm_like"}


def test_compare_outputs(pair_dir):
    written = compare_directory(pair_dir)
    names = {p.name for p in written}
    assert {"compare.csv", "events.csv", "compare_train_loss.png", "events.png"} <= names
    events = read_csv_rows(pair_dir / "events.csv")
    for r in events:
        if r["optimizer"] == "asntr":
            total = sum(float(r[e]) for e in ("S0", "S1", "S2", "S3", "S4"))
            assert abs(total - 100.0) <= 0.01
    rows = read_csv_rows(pair_dir / "compare.csv")
    grid = {}
    for r in rows:
        grid.setdefault((r["seed"], r["metric"]), []).append(float(r["N_g"]))
    for seed in ("0", "1"):
        metrics = read_csv_rows(pair_dir / f"metrics_storm_like_{seed}.csv")
        assert max(max(g) for (s, _), g in grid.items() if s == seed) <= max(float(m["N_g"]) for m in metrics)


def test_compare_identical_runs_zero_difference(pair_dir, tmp_path):
    for seed in (0, 1):
        for kind in ("trace", "metrics"):
            src = pair_dir / f"{kind}_asntr_{seed}.csv"
            (tmp_path / src.name).write_bytes(src.read_bytes())
            (tmp_path / f"{kind}_storm_like_{seed}.csv").write_bytes(src.read_bytes())
    compare_directory(tmp_path, figures=False)
    rows = read_csv_rows(tmp_path / "compare.csv")
    assert rows and all(float(r["difference"]) == 0.0 for r in rows)


def test_compare_names_missing_run(pair_dir, tmp_path):
    for path in pair_dir.glob("*_*.csv"):
        if path.name != "metrics_storm_like_1.csv":
            (tmp_path / path.name).write_bytes(path.read_bytes())
    with pytest.raises(CompareError, match="storm_like seed 1"):
        compare_directory(tmp_path, figures=False)
    assert main(["compare", "--dir", str(tmp_path)]) == 1


def test_event_portions_partition():
    rows = [{"event": e} for e in ("S0", "S2", "S2", "S4", "S1", "S3", "S3")]
    portions, n = event_portions(rows)
    assert n == 7 and abs(sum(portions.values()) - 100.0) <= 1e-9


def test_selftest_cli(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 4
