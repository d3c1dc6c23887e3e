import os

import numpy as np
import pytest

from taskgrad.cli import load_config, main

FAST_STREAM = ["--set", "stream.tasks=2", "--set", "stream.classes_per_task=2",
               "--set", "stream.train_per_class=15",
               "--set", "stream.test_per_class=10", "--set", "stream.input_dim=4",
               "--set", "model.hidden=6"]


def run_cli(*args):
    return main(list(args))


def read(path):
    with open(path) as fh:
        return fh.read()


# -- config parsing ---------------------------------------------------------------

def test_unknown_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[optim]\nlearing_rate = 0.1\n")
    code = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert code == 2
    assert "learing_rate" in capsys.readouterr().err


def test_unknown_section_and_bad_set(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[optimizer]\nlr = 0.1\n")
    assert run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    assert run_cli("run", "--set", "lr=0.1", "--out", str(tmp_path / "o2")) == 2
    assert run_cli("run", "--set", "optim.lr", "--out", str(tmp_path / "o3")) == 2


def test_load_config_defaults_and_overrides():
    conf = load_config(None, ["optim.lr=0.5", "run.method=er"])
    assert conf.one("optim", "lr") == 0.5
    assert conf.one("run", "method") == "er"
    assert conf.one("run", "batch_size") == 10
    assert conf.one("optim", "beta2", allow_default=True) is None
    with pytest.raises(ValueError):
        load_config(None, ["optim.nope=1"])


def test_missing_config_file(tmp_path, capsys):
    assert run_cli("run", "--config", str(tmp_path / "nope.ini"),
                   "--out", str(tmp_path / "o")) == 2


# -- run ---------------------------------------------------------------------------

def test_minimal_run_writes_bundle(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--out", out, "--seed", "0", *FAST_STREAM)
    assert code == 0
    for name in ("config.txt", "summary_seed0.txt", "matrix_seed0.csv",
                 "aggregate.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    agg = read(os.path.join(out, "aggregate.csv"))
    assert "naive-sgd" in agg


def test_run_five_seeds_aggregate_mean_std(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--out", out, "--seed", "0", "--seed", "1", "--seed", "2",
                   "--seed", "3", "--seed", "4", *FAST_STREAM)
    assert code == 0
    lines = [l for l in read(os.path.join(out, "aggregate.csv")).splitlines()
             if not l.startswith("#")]
    header = lines[0].split(",")
    assert header == ["method", "n_seeds", "accuracy_mean", "accuracy_std",
                      "forgetting_mean", "forgetting_std",
                      "learning_accuracy_mean", "learning_accuracy_std"]
    row = lines[1].split(",")
    assert row[0] == "naive-sgd" and row[1] == "5"
    accs = []
    for seed in range(5):
        for line in read(os.path.join(out, f"summary_seed{seed}.txt")).splitlines():
            if line.startswith("final_accuracy:"):
                accs.append(float(line.split(":")[1]))
    assert abs(float(row[2]) - np.mean(accs)) < 1e-12
    assert abs(float(row[3]) - np.std(accs, ddof=1)) < 1e-12


def test_run_deterministic_bitwise(tmp_path):
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    for out in outs:
        assert run_cli("run", "--out", out, "--seed", "3", "--set",
                       "run.method=tag-rmsprop", "--set", "optim.lr=0.01",
                       *FAST_STREAM) == 0
    for name in ("matrix_seed3.csv", "alpha_seed3.csv", "aggregate.csv"):
        a = open(os.path.join(outs[0], name), "rb").read()
        b = open(os.path.join(outs[1], name), "rb").read()
        assert a == b, name


def test_run_rejects_grid_lists(tmp_path, capsys):
    code = run_cli("run", "--out", str(tmp_path / "o"), "--set",
                   "optim.lr=0.1 0.01", *FAST_STREAM)
    assert code == 2
    assert "grid" in capsys.readouterr().err


def test_run_multitask_and_alpha_flag(tmp_path):
    out = str(tmp_path / "out")
    assert run_cli("run", "--out", out, "--set", "run.method=multitask",
                   *FAST_STREAM) == 0
    summary = read(os.path.join(out, "summary_seed0.txt"))
    assert "forgetting: nan" in summary
    out2 = str(tmp_path / "out2")
    assert run_cli("run", "--out", out2, "--set", "run.method=tag-adam",
                   "--alpha-trace", "full", *FAST_STREAM) == 0
    assert os.path.exists(os.path.join(out2, "alpha_full_seed0.csv"))
    # adam family defaults beta2 to 0.999 when unset
    assert "config.beta2: 0.999" in read(os.path.join(out2, "summary_seed0.txt"))


def test_config_echo_reproduces_run(tmp_path):
    out1 = str(tmp_path / "o1")
    assert run_cli("run", "--out", out1, "--seed", "7", "--set",
                   "run.method=er+rmsprop", "--set", "optim.lr=0.005",
                   *FAST_STREAM) == 0
    out2 = str(tmp_path / "o2")
    assert run_cli("run", "--config", os.path.join(out1, "config.txt"),
                   "--out", out2) == 0
    assert read(os.path.join(out1, "matrix_seed7.csv")) == \
        read(os.path.join(out2, "matrix_seed7.csv"))


# -- compare -------------------------------------------------------------------------

def test_compare_single_method(tmp_path):
    out = str(tmp_path / "out")
    assert run_cli("compare", "--out", out, "--methods", "naive-sgd",
                   *FAST_STREAM) == 0
    lines = [l for l in read(os.path.join(out, "comparison.csv")).splitlines()
             if not l.startswith("#")]
    assert lines[0] == ("method,seed,final_accuracy,forgetting,"
                        "learning_accuracy,wall_seconds")
    assert len(lines) == 2
    agg = [l for l in read(os.path.join(out, "aggregate.csv")).splitlines()
           if not l.startswith("#")]
    assert len(agg) == 2


def test_compare_tag_vs_naive_single_task(tmp_path):
    out = str(tmp_path / "out")
    assert run_cli("compare", "--out", out, "--methods", "naive-rmsprop,tag-rmsprop",
                   "--set", "stream.tasks=1", "--set", "optim.lr=0.01",
                   "--set", "stream.train_per_class=15",
                   "--set", "stream.test_per_class=10",
                   "--set", "stream.input_dim=4", "--set", "model.hidden=6") == 0
    rows = [l.split(",") for l in read(os.path.join(out, "comparison.csv")).splitlines()
            if not l.startswith("#")][1:]
    accs = {r[0]: float(r[2]) for r in rows}
    assert abs(accs["naive-rmsprop"] - accs["tag-rmsprop"]) <= 1e-12
    assert os.path.exists(os.path.join(out, "alpha_tag-rmsprop_seed0.csv"))
    assert not os.path.exists(os.path.join(out, "alpha_naive-rmsprop_seed0.csv"))


def test_compare_requires_methods(tmp_path, capsys):
    assert run_cli("compare", "--out", str(tmp_path / "o"), *FAST_STREAM) == 2


def test_memory_sweep_produces_three_aggregates(tmp_path):
    rows = {}
    for mem in (1, 5, 10):
        out = str(tmp_path / f"mem{mem}")
        assert run_cli("run", "--out", out, "--set", "run.method=er",
                       "--set", f"method.mem_per_class={mem}", "--set",
                       "optim.lr=0.1", *FAST_STREAM) == 0
        lines = [l for l in read(os.path.join(out, "aggregate.csv")).splitlines()
                 if not l.startswith("#")]
        rows[mem] = lines[1].split(",")
    assert all(rows[mem][0] == "er" for mem in rows)
    assert len(rows) == 3


# -- grid -----------------------------------------------------------------------------

def test_grid_two_by_two(tmp_path):
    out = str(tmp_path / "out")
    assert run_cli("grid", "--out", out, "--set", "optim.lr=0.1 0.01",
                   "--set", "optim.b=1 5", "--set", "run.method=tag-rmsprop",
                   *FAST_STREAM) == 0
    lines = [l for l in read(os.path.join(out, "grid.csv")).splitlines()
             if not l.startswith("#")]
    assert len(lines) == 5          # header + 4 combos
    header = lines[0].split(",")
    assert header[0] == "index" and "val_accuracy" in header
    sel = [l for l in lines[1:] if l.split(",")[header.index("selected")] == "1"]
    assert len(sel) == 1
    accs = [float(l.split(",")[header.index("val_accuracy")]) for l in lines[1:]]
    assert float(sel[0].split(",")[header.index("val_accuracy")]) == max(accs)
    best = read(os.path.join(out, "best_config.txt"))
    assert "[optim]" in best

    out2 = str(tmp_path / "out2")
    assert run_cli("grid", "--out", out2, "--set", "optim.lr=0.1 0.01",
                   "--set", "optim.b=1 5", "--set", "run.method=tag-rmsprop",
                   *FAST_STREAM) == 0
    assert read(os.path.join(out, "grid.csv")) == read(os.path.join(out2, "grid.csv"))


def test_grid_best_config_is_runnable(tmp_path):
    out = str(tmp_path / "out")
    assert run_cli("grid", "--out", out, "--set", "optim.lr=0.2 0.05",
                   *FAST_STREAM) == 0
    out2 = str(tmp_path / "out2")
    assert run_cli("run", "--config", os.path.join(out, "best_config.txt"),
                   "--out", out2) == 0
    assert os.path.exists(os.path.join(out2, "matrix_seed0.csv"))
