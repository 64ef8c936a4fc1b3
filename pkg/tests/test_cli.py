import json

import pytest

from topoalloc.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY, improvement, main
from topoalloc.config import ExperimentConfig, apply_override, config_from_dict, load_config
from topoalloc.errors import ConfigError
from topoalloc.neural.io import load_policy

SIM = ["--set", "simulation.epochs=1", "--set", "workload.job_count=25",
       "--set", "workload.node_range=[2,8]", "--set", "solver.sa.max_iters=20",
       "--set", "solver.compare=[seq,sa-40]", "--set", "solver.improvement_baseline=sa-40"]
TRAIN = ["--set", "training.ppo.updates=2", "--set", "training.ppo.rollout_steps=48",
         "--set", "training.ppo.minibatch_size=16", "--set", "training.arch=FCN-1"]


def test_defaults():
    cfg = ExperimentConfig()
    cfg.validate()
    sa = cfg.sa_params()
    assert (sa.t_max_temp, sa.t_min_temp, sa.max_iters, sa.max_remove) == (2500.0, 2.5, 500, 2)
    assert cfg.topology.c == 1000.0 and cfg.solver.tau == 60.0


def test_yaml_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 3\nsolver:\n  tau: 30\n  sa: {max_iters: 50}\n")
    cfg = load_config(path, ["solver.tau=10", "topology.radix=4"])
    assert cfg.seed == 3 and cfg.solver.tau == 10 and cfg.topology.radix == 4
    assert cfg.sa_params().max_iters == 50


@pytest.mark.parametrize("raw", [{"bogus": 1}, {"solver": {"tau": -1}}, {"topology": {"radix": 5}},
                                 {"solver": {"sa": {"t_min_temp": 0}}},
                                 {"solver": {"scheduler": "Magic"}},
                                 {"training": {"arch": "RNN-1"}}, {"solver": {"colour": 1}},
                                 {"workload": {"node_range": [0, 3]}}])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_override_syntax():
    raw = {}
    apply_override(raw, "a.b=[1, 2]")
    assert raw == {"a": {"b": [1, 2]}}
    with pytest.raises(ConfigError):
        apply_override(raw, "novalue")


def test_digest_ignores_output_dir():
    a = config_from_dict({"output": {"dir": "x"}})
    b = config_from_dict({"output": {"dir": "y"}})
    c = config_from_dict({"seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_improvement():
    assert improvement(200.0, 150.0) == 0.25


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-o", str(out), *SIM]) == EXIT_OK
    header = (out / "epochs.csv").read_text().splitlines()[0].split(",")
    assert header[-1] == "impr" and "cost_seq" in header and "cost_reference" in header
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["config_hash"]) == 64
    assert "torch" in manifest["versions"]
    metrics = json.loads((out / "metrics.json").read_text())
    assert "solve_time_mean" in metrics["epochs"][0]


def test_simulate_csv_round_trip(tmp_path):
    import csv
    out = tmp_path / "run"
    main(["simulate", "-o", str(out), *SIM])
    rows = list(csv.DictReader(open(out / "epochs.csv")))
    metrics = json.loads((out / "metrics.json").read_text())["epochs"]
    for row, m in zip(rows, metrics):
        assert int(row["jobs"]) == m["jobs"]
        assert abs(float(row["avg_ch_cost"]) - m["avg_ch_cost"]) <= 1e-9
        assert float(row["avg_waiting_time"]) == m["avg_waiting_time"]


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "-o", str(tmp_path / d), *SIM]) == EXIT_OK
    for name in ("epochs.csv", "allocations.csv", "instances.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_perjob_simulation(tmp_path):
    assert main(["simulate", "-o", str(tmp_path), "--set", "solver.scheduler=FCFS",
                 "--set", "simulation.epochs=1", "--set", "workload.job_count=30"]) == EXIT_OK


def test_train_then_simulate_nsa(tmp_path):
    for d in ("a", "b"):
        assert main(["train", "-o", str(tmp_path / d), *TRAIN]) == EXIT_OK
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "policy.bin").read_bytes() == (b / "policy.bin").read_bytes()
    assert (a / "learning_curve.csv").read_bytes() == (b / "learning_curve.csv").read_bytes()
    assert len((a / "learning_curve.csv").read_text().splitlines()) == 3
    _, meta = load_policy(a / "policy.bin")
    assert meta["arch"] == "FCN-1" and meta["n_max"] == 8
    out = tmp_path / "nsa"
    assert main(["simulate", "-o", str(out), *SIM, "--set", "solver.scheduler=WindowNSA",
                 "--set", f"solver.policy={a / 'policy.bin'}"]) == EXIT_OK


def test_train_warm_start(tmp_path):
    first = tmp_path / "first"
    assert main(["train", "-o", str(first), *TRAIN]) == EXIT_OK
    start = first / "policy.bin"
    assert main(["train", "-o", str(tmp_path / "second"), *TRAIN,
                 "--set", f"training.init_policy={start}"]) == EXIT_OK
    _, meta = load_policy(tmp_path / "second" / "policy.bin")
    assert meta["updates"] == 4
    # a policy for a different architecture cannot seed the run
    assert main(["train", "-o", str(tmp_path / "third"), *TRAIN,
                 "--set", "training.arch=FCN-2",
                 "--set", f"training.init_policy={start}"]) == EXIT_RUNTIME


def test_missing_policy_is_an_error(tmp_path):
    assert main(["simulate", "-o", str(tmp_path), *SIM, "--set", "solver.scheduler=WindowNSA",
                 "--set", f"solver.policy={tmp_path / 'none.bin'}"]) == EXIT_RUNTIME
    assert main(["simulate", "-o", str(tmp_path), *SIM,
                 "--set", "solver.scheduler=WindowNSA"]) == EXIT_RUNTIME


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--no-such-flag"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_bad_config_file(tmp_path):
    assert main(["simulate", "-c", str(tmp_path / "nope.yaml")]) == EXIT_RUNTIME


def test_verify_reports_corrupt_policy(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert main(["verify", "--exact-count", "5", "--policy", str(bad)]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL policy-file" in out
    assert "PASS placement-enumeration: static=3 dynamic=6" in out


def test_verify_passes():
    assert main(["verify", "--exact-count", "20"]) == EXIT_OK


def test_gen_workload(tmp_path):
    assert main(["gen-workload", "-o", str(tmp_path), "--set", "simulation.epochs=2",
                 "--set", "workload.job_count=5"]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.jsonl")) == ["workload_000.jsonl",
                                                                 "workload_001.jsonl"]
