import json

import numpy as np
import pytest

from qcam.agent import StepLog
from qcam.classifiers import Classifier, ClassifierConfig
from qcam.data import Dataset
from qcam.harness import (
    COLUMNS,
    CURVE_COLUMNS,
    ConfigError,
    GeneratedSet,
    ResultRow,
    ResultsTable,
    RunConfig,
    RunManifest,
    attack_split,
    baseline_dataset,
    bench_depth,
    chance_row,
    checkpoint_hash,
    curves_from_logs,
    depth_csv,
    dump_pgms,
    freeze_and_generate,
    load_row,
    policy_manifest,
    read_curves,
    reproduce_row,
    run_baselines,
    run_training,
    save_row,
    score_generated,
    summarize_training,
    write_curves,
)
from qcam.imageio import read_pgm
from qcam.nn import init_network

TINY = dict(catalog="reduced", policy="public_private", train_steps=60, batch_size=8,
            buffer_capacity=64, target_period=10, hidden=[8], log_interval=20,
            checkpoint_every=30, episode_length=8, default_shots=512, finetune_epochs=1)


def untrained(task, seed=0):
    cfg = ClassifierConfig(task=task)
    return Classifier(cfg, init_network(cfg.network_spec(), seed))


@pytest.fixture
def clfs():
    return {"public": untrained("public", 1), "private": untrained("private", 2)}


@pytest.fixture
def model_paths(tmp_path, clfs):
    return {k: c.save(tmp_path / f"{k}.qnn") for k, c in clfs.items()}


def small_set(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, 16, 16)) * 0.8, np.arange(n) * 5 % 36)


def test_config_round_trip_and_errors(tmp_path):
    cfg = RunConfig.from_dict(TINY)
    assert cfg.hidden == (8,)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(p) == cfg
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        RunConfig(catalog="huge")
    with pytest.raises(ConfigError):
        RunConfig(policy="greedy")
    with pytest.raises(ConfigError):
        RunConfig(gamma=1.5)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(p)
    assert RunConfig().agent_config().lr == 1e-4


def test_manifest_hash_ignores_timestamp():
    a = RunManifest("baseline", "blur", {"seed": 0}, {"run": 0}, "c", "d", {"public": "h"},
                    {"public": "/x"}, "2026-01-01T00:00:00")
    b = RunManifest.from_json(a.to_json())
    b.created = "2030-05-05T12:00:00"
    b.inputs = {"public": "/elsewhere"}
    assert a.digest() == b.digest()
    b.seeds = {"run": 1}
    assert a.digest() != b.digest()
    assert json.loads(a.to_json())["hash"] == a.digest()


def test_results_table_csv_round_trip():
    rows = [ResultRow("blur", 0.9, 0.91, 0.7, 0.8, None, "abc"),
            ResultRow("public_private", 0.75, 0.8, 0.2, 0.3, 2000, "def")]
    table = ResultsTable(rows).with_chance()
    text = table.to_csv()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert text.splitlines()[1].startswith("chance,0.500000,0.500000,0.027778,0.027778")
    back = ResultsTable.from_csv(text).rows
    assert [r.label for r in back] == [r.label for r in table.rows]
    assert [r.training_steps for r in back] == [None, None, 2000]
    for r, want in zip(back, table.rows):
        assert r.private_test == pytest.approx(want.private_test, abs=5e-7)
        assert r.manifest_hash == want.manifest_hash
    assert table.with_chance().rows == table.rows
    assert chance_row().private_test == pytest.approx(1 / 36)
    with pytest.raises(ValueError):
        ResultRow("x", 1.2, 0, 0, 0)


def test_curves_and_summary(tmp_path):
    logs = []
    for i in range(1, 201):
        learned = i > 10
        logs.append(StepLog(i, 0, float(i > 100), 1.0 - i / 400, False,
                            1.0 / i if learned else None,
                            1.0 if learned else None,
                            1.0 + 1.0 / i if learned else None))
    pts = curves_from_logs(logs, 50)
    assert [p.step for p in pts] == [50, 100, 150, 200]
    assert pts[1].reward_smoothed == 0.0 and pts[3].reward_smoothed == 1.0
    path = write_curves(tmp_path / "curves.csv", pts)
    back = read_curves(path)
    assert tuple(back) == CURVE_COLUMNS
    assert np.allclose(back["loss"], [p.loss for p in pts])
    s = summarize_training(logs)
    assert s.q_gap_shrinks and s.loss_non_increasing and s.reward_non_decreasing
    with pytest.raises(ValueError):
        summarize_training([StepLog(1, 0, 0.0, 1.0, False)])


def test_run_training_writes_artifacts(tmp_path, clfs):
    cfg = RunConfig.from_dict(TINY)
    run = run_training(cfg, clfs, small_set(), tmp_path / "agent")
    assert len(run.logs) == 60 and [p.step for p in run.curves] == [20, 40, 60]
    assert (tmp_path / "agent" / "checkpoints" / "step_0000030" / "online.qnn").exists()
    assert (tmp_path / "agent" / "checkpoint" / "agent.json").exists()
    lines = (tmp_path / "agent" / "steps.jsonl").read_text().splitlines()
    assert len(lines) == 60 and json.loads(lines[0])["step"] == 1
    again = run_training(cfg, clfs, small_set())
    assert again.agent.nets.online.digest() == run.agent.nets.online.digest()
    assert checkpoint_hash(tmp_path / "agent" / "checkpoint")


def test_freeze_and_generate(tmp_path, clfs):
    cfg = RunConfig.from_dict(TINY)
    agent = run_training(cfg, clfs, small_set()).agent
    test = small_set(20, seed=1)
    gen = freeze_and_generate(agent, cfg, clfs, test, seed=3)
    assert len(gen) == 20 and gen.labels.tolist() == test.labels.tolist()
    assert not any(np.array_equal(g, c) for g, c in zip(gen.images, test.images))
    again = freeze_and_generate(agent, cfg, clfs, test, seed=3)
    assert np.array_equal(gen.images, again.images) and np.array_equal(gen.actions, again.actions)
    back = GeneratedSet.load(gen.save(tmp_path / "g.npz"))
    assert np.array_equal(back.images, gen.images)
    pgms = dump_pgms(tmp_path / "pgm", gen, limit=3)
    assert len(pgms) == 3
    assert np.abs(read_pgm(pgms[0]).as_array() - gen.images[0]).max() <= 0.5 / 255 + 1e-12


def test_attack_split_halves():
    a, b = attack_split(11, 0)
    assert len(a) == 5 and len(b) == 6 and not set(a) & set(b)
    assert np.array_equal(attack_split(11, 0)[0], a)


def test_baselines_leave_originals_and_reproduce(tmp_path, clfs, model_paths):
    cfg = RunConfig.from_dict(TINY)
    test = small_set()
    before = test.images.copy()
    test_path = test.save(tmp_path / "test.npz")
    out = run_baselines(test, clfs, cfg, model_paths=model_paths, test_path=test_path)
    assert [r.label for r, _ in out] == ["quantum_random", "blur", "noise"]
    assert np.array_equal(test.images, before)
    for row, man in out:
        assert row.manifest_hash == man.digest()
        path = save_row(tmp_path / f"{row.label}.json", row, man)
        row2, man2 = load_row(path)
        assert row2 == row
        assert reproduce_row(man2) == row
    with pytest.raises(ValueError):
        baseline_dataset("fog", test, cfg)


def test_parallel_baselines_match_serial(clfs):
    test = small_set()
    serial = run_baselines(test, clfs, RunConfig.from_dict(TINY))
    parallel = run_baselines(test, clfs, RunConfig.from_dict({**TINY, "jobs": 2}))
    assert [r for r, _ in serial] == [r for r, _ in parallel]


def test_reproduce_detects_tampering(tmp_path, clfs, model_paths):
    cfg = RunConfig.from_dict(TINY)
    test = small_set()
    _, man = run_baselines(test, clfs, cfg, ("blur",), model_paths, test.save(tmp_path / "t.npz"))[0]
    untrained("public", 9).save(model_paths["public"])
    with pytest.raises(ValueError, match="public model"):
        reproduce_row(man)


def test_policy_row_reproduces(tmp_path, clfs, model_paths):
    cfg = RunConfig.from_dict(TINY)
    gen = GeneratedSet(small_set().images, small_set().labels, np.zeros(12, dtype=np.int64))
    gp = gen.save(tmp_path / "gen.npz")
    man = policy_manifest("public_private", cfg, gen, model_paths, gp, training_steps=123)
    row = score_generated("public_private", gen.dataset(), clfs, cfg, man.seeds["attack"], 123)
    again = reproduce_row(RunManifest.from_json(man.to_json()))
    assert again == ResultRow(**{**row.__dict__, "manifest_hash": man.digest()})
    assert again.training_steps == 123


def test_bench_depth_strictly_increasing():
    pts = bench_depth(max_gates=4, repeats=1)
    assert [p.gates for p in pts] == [0, 1, 2, 3, 4]
    assert [p.depth for p in pts] == [257, 258, 259, 260, 261]
    assert all(p.seconds > 0 for p in pts)
    assert depth_csv(pts).splitlines()[0] == "gates,depth,seconds"
    small = bench_depth(max_gates=2, side=4, repeats=1)
    assert all(a.depth < b.depth for a, b in zip(small, small[1:]))
