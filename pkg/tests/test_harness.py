import json

import numpy as np
import pytest

from sail.envs import load_demos
from sail.harness import (
    ALGOS,
    LOG_COLUMNS,
    PHASES,
    ConfigError,
    ExperimentConfig,
    RunAborted,
    gail_mode,
    parse_config,
    policy_from_checkpoint,
    rng_streams,
    run_training,
)
from sail.harness.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from sail.metrics import read_csv

QUICK = {"run.iterations": "3", "trpo.batch_steps": "200", "run.eval_every": "2", "run.eval_episodes": "2",
         "repr.batch_size": "64", "repr.state_repr_dim": "16", "gail.classifier_steps": "20"}


def quick(**extra):
    over = dict(QUICK)
    over.update({k.replace("__", "."): str(v) for k, v in extra.items()})
    return ExperimentConfig().with_overrides(over)


def test_config_roundtrip_and_hash():
    cfg = quick(run__algo="ours+2iwil", gail__psi=0.25, trpo__max_kl=0.02)
    again = parse_config(cfg.canonical())
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.with_overrides({"run.out": "elsewhere"}).hash() == cfg.hash()
    assert cfg.with_overrides({"run.seed": "1"}).hash() != cfg.hash()
    assert ExperimentConfig().iterations == 300 and quick().iterations == 3
    d = ExperimentConfig().to_dict()
    assert d["trpo"]["gamma"] == 0.995 and d["trpo"]["batch_steps"] == 5000
    assert d["repr"]["state"] == 100.0 and d["gail"]["alpha"] == 4.0


@pytest.mark.parametrize("text", [
    "[run]\nbogus = 1\n",
    "[nosection]\nx = 1\n",
    "[run]\nseed = abc\n",
    "[run]\nalgo = dagger\n",
    "[gail]\npsi = 0\n",
    "[run]\nalgo = ours+2iwil\n",
    "not an ini file",
])
def test_config_rejects_bad_input(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_rng_streams_independent_and_stable():
    a, b = rng_streams(3), rng_streams(3)
    assert [g.random() for g in a.values()] == [g.random() for g in b.values()]
    vals = {name: g.random() for name, g in rng_streams(3).items()}
    assert len(set(vals.values())) == len(vals)
    assert {gail_mode(x) for x in ALGOS} == {"plain", "weighted", "mixup"}


def test_zero_iterations_writes_artifacts(tmp_path):
    res = run_training(quick(run__iterations=0), out_dir=tmp_path)
    assert res.rows == [] and len(res.evals) == 1
    assert read_csv(tmp_path / "log.csv") == []
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["iterations"] == 0 and manifest["checkpoint_sha256"] == res.checkpoint_hash
    assert (tmp_path / "final.sail").exists() and (tmp_path / "metrics.csv").exists()


def test_run_logs_phase_order_and_is_deterministic(tmp_path):
    r1 = run_training(quick(), out_dir=tmp_path / "a")
    r2 = run_training(quick(), out_dir=tmp_path / "b")
    assert [ph for _, ph in r1.trace] == list(PHASES) * 3
    assert (tmp_path / "a" / "log.csv").read_bytes() == (tmp_path / "b" / "log.csv").read_bytes()
    assert r1.checkpoint_hash == r2.checkpoint_hash and r1.log_hash == r2.log_hash
    rows = read_csv(tmp_path / "a" / "log.csv")
    assert tuple(rows[0]) == LOG_COLUMNS and len(rows) == 3
    assert all(r["mode"] == "plain" for r in rows)
    assert rows[1]["eval_mean"] != "" and rows[0]["eval_mean"] == ""
    assert all(float(r["kl"]) <= 0.01 for r in rows if r["accepted"] == "1")
    r3 = run_training(quick(run__seed=1))
    assert r3.checkpoint_hash != r1.checkpoint_hash


def test_gail_arm_skips_repr_and_keeps_raw_inputs():
    res = run_training(quick(run__algo="gail"))
    assert all(r["L_F"] is None for r in res.rows)
    assert not any(k.startswith(("se.", "ae.", "fw.")) for k in res.params)
    assert [ph for k, ph in res.trace if k == 1] == list(PHASES)


@pytest.mark.parametrize("algo", ["ours+2iwil", "ours+2iwil+mm"])
def test_imperfect_arms_run(algo):
    res = run_training(quick(run__algo=algo, gail__psi=0.25))
    demos = res.manifest["demos"]
    assert demos["n_labeled"] + demos["n_unlabeled"] == demos["n"] == 100
    assert demos["beta"] == "3/5"
    assert res.rows[-1]["mode"] == gail_mode(algo)
    if algo.endswith("mm"):
        assert "gmm_fallback" in demos


def test_noise_dim_zero_runs():
    res = run_training(quick(repr__noise_dim=0))
    assert len(res.rows) == 3 and all(np.isfinite(r["L_F"]) for r in res.rows)


def test_numeric_failure_is_tagged(monkeypatch):
    import sail.harness.run as run_mod

    def boom(*a, **k):
        raise FloatingPointError("nan in discriminator")

    monkeypatch.setattr(run_mod.ail, "gail_update", boom)
    with pytest.raises(RunAborted) as info:
        run_training(quick())
    assert info.value.iteration == 1 and info.value.phase == "gail" and info.value.numeric


def test_cli_train_eval_and_exit_codes(tmp_path, capsys, monkeypatch):
    sets = sum((["--set", f"{k}={v}"] for k, v in QUICK.items()), [])
    out = tmp_path / "run"
    assert main(["train", "--seed", "0", "--out", str(out), *sets]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["checkpoint_sha256"]
    env, policy, params, meta = policy_from_checkpoint(out / "final.sail")
    assert meta["iteration"] == 3 and meta["algo"] == "ours"
    assert main(["eval", "--checkpoint", str(out / "final.sail"), "--episodes", "2",
                 "--out", str(tmp_path / "m.csv")]) == EXIT_OK
    assert len(read_csv(tmp_path / "m.csv")) == 1
    assert main(["train", "--algo", "dagger", *sets]) == EXIT_CONFIG
    assert main(["train", "--set", "run.nope=1"]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.sail")]) == EXIT_CONFIG

    import sail.harness.run as run_mod

    def boom(*a, **k):
        raise FloatingPointError("overflow")

    monkeypatch.setattr(run_mod.ail, "gail_update", boom)
    assert main(["train", "--out", str(tmp_path / "bad"), *sets]) == EXIT_NUMERIC
    # rows written before the failure survive; here none were
    assert (tmp_path / "bad" / "log.csv").exists()


def test_cli_config_file(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nalgo = gail\niterations = 1\neval_episodes = 1\n[trpo]\nbatch_steps = 100\n")
    assert main(["train", "--config", str(ini), "--out", str(tmp_path / "o")]) == EXIT_OK
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["run"]["algo"] == "gail" and manifest["mode"] == "plain"


def test_demo_gen_roundtrip(tmp_path, capsys):
    path = tmp_path / "d.csv"
    assert main(["demo-gen", "--n-expert", "50", "--optimality", "0.25", "--out", str(path)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    demos = load_demos(path)
    assert len(demos) == info["pairs"] == 50
    cfg = quick(run__demos=path, run__n_expert=50, run__iterations=1)
    res = run_training(cfg)
    assert res.manifest["demos"]["n"] == 50


def test_corrupt_bench_cardinality(tmp_path, capsys):
    out = tmp_path / "c.csv"
    args = ["corrupt-bench", "--rates", "0.3", "--seeds", "0,1,2", "--samples", "100", "--observed", "300",
            "--out", str(out)]
    assert main(args) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 12
    assert {r["method"] for r in rows} == {"swapping", "random", "mean", "each-dim"}
    assert main(["corrupt-bench", "--methods", "bogus"]) == EXIT_CONFIG
