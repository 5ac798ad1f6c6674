"""Acceptance criteria A1-A11.

Each test records one PASS/FAIL line; the lines are printed together at the
end of the run (see conftest.py). A8-A10 share one desk-scale pipeline that
is driven entirely through the command-line entry point.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from qcam.actions import (
    count_action_sets,
    decode_action_index,
    default_catalog,
    encode_action_set,
    enumerate_action_sets,
    sample_action_set,
)
from qcam.agent import AgentConfig, DDQNAgent, Transition, double_q_target, q_values, run_episodes
from qcam.classifiers import Classifier, score
from qcam.cli import main
from qcam.data import Dataset, to_16x16
from qcam.frqi import (
    FrqiLayout,
    GrayImage,
    build_frqi_encoder_circuit,
    decode_histogram,
    image_to_angles,
    measure_image,
    prepare_frqi_state,
)
from qcam.harness import bench_depth, load_row
from qcam.nn import Network, NetworkSpec, grad_check
from qcam.qsim import (
    Circuit,
    Gate,
    MeasurementHistogram,
    apply_circuit,
    init_from_amplitudes,
    new_zero_state,
    probabilities,
    rx,
    rz,
    x,
    z,
)
from qcam.rng import make_rng
from qcam.toy import ChainMDP, optimal_q

from fixtures import fixture_glyph_28

DESK_CONFIG = Path(__file__).parent / "desk_config.json"
RESULTS: list[str] = []


def record(cid: str, ok: bool, detail: str) -> None:
    line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def exact_decode(state, layout):
    return decode_histogram(MeasurementHistogram(layout.num_qubits, probabilities(state)), layout)


# -- A1 ---------------------------------------------------------------------

def random_gate(n, rng):
    kind = ["X", "H", "Z", "RX", "RY", "RZ"][rng.integers(6)]
    qubits = rng.permutation(n)
    nctl = 0 if kind == "H" else int(rng.integers(0, min(3, n - 1) + 1))
    controls = tuple((int(q), int(rng.integers(2))) for q in qubits[1:1 + nctl])
    return Gate(kind, int(qubits[0]), controls, float(rng.uniform(-math.pi, math.pi)))


def test_a1_simulator():
    rng = np.random.default_rng(1)
    worst_norm = worst_back = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(2, 12))
        v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        s = init_from_amplitudes(v / np.linalg.norm(v))
        circ = Circuit(n, [random_gate(n, rng) for _ in range(200)])
        out = apply_circuit(s, circ)
        worst_norm = max(worst_norm, abs(np.linalg.norm(out.amplitudes) - 1))
        back = apply_circuit(out, circ.inverse())
        worst_back = max(worst_back, np.max(np.abs(back.amplitudes - s.amplitudes)))
    elapsed = time.perf_counter() - t0
    ok = worst_norm < 1e-9 and worst_back < 1e-9 and elapsed < 10
    record("A1", ok, f"norm err {worst_norm:.1e}, inverse err {worst_back:.1e}, "
                     f"100 circuits in {elapsed:.2f}s")


# -- A2 ---------------------------------------------------------------------

def test_a2_frqi_structure():
    rng = np.random.default_rng(2)
    qubits = {1 << n: FrqiLayout(n).num_qubits for n in (1, 2, 3, 4)}
    worst = 0.0
    for side in (2, 4):
        for _ in range(50):
            ang = image_to_angles(GrayImage(side, rng.random(side * side)))
            circ = build_frqi_encoder_circuit(ang)
            got = apply_circuit(new_zero_state(circ.num_qubits), circ)
            worst = max(worst, np.max(np.abs(got.amplitudes - prepare_frqi_state(ang).amplitudes)))
    ok = all(q == 2 * int(math.log2(s)) + 1 for s, q in qubits.items()) and qubits[16] == 9 and worst < 1e-9
    record("A2", ok, f"qubits per side {qubits}, encoder vs direct max err {worst:.1e} on 100 images")


# -- A3 ---------------------------------------------------------------------

def test_a3_round_trip():
    rng = np.random.default_rng(3)
    lay = FrqiLayout(4)
    worst = 0.0
    for _ in range(100):
        px = rng.random(256)
        out = exact_decode(prepare_frqi_state(image_to_angles(GrayImage(16, px)), lay), lay)
        worst = max(worst, np.max(np.abs(out.pixels - px)))
    img = GrayImage(2, np.array([0.1, 0.35, 0.6, 0.85]))
    state = prepare_frqi_state(image_to_angles(img))
    mae = float(np.mean(np.abs(measure_image(state, 10**6, 3, FrqiLayout(1)).pixels - img.pixels)))
    record("A3", worst <= 1e-6 and mae <= 0.01,
           f"exact decode max err {worst:.1e} (<=1e-6), 1e6-shot 2x2 MAE {mae:.4f} (<=0.01)")


# -- A4 ---------------------------------------------------------------------

def test_a4_shot_noise_law():
    img = to_16x16(fixture_glyph_28())
    lay = FrqiLayout(4)
    state = prepare_frqi_state(image_to_angles(img), lay)

    def mae(shots):
        return float(np.mean([np.abs(measure_image(state, shots, t, lay).pixels - img.pixels).mean()
                              for t in range(20)]))

    lo, hi = mae(2048), mae(8192)
    ratio = hi / lo
    record("A4", 0.4 <= ratio <= 0.6, f"MAE(8192)/MAE(2048) = {hi:.4f}/{lo:.4f} = {ratio:.3f} (in [0.4, 0.6])")


# -- A5 ---------------------------------------------------------------------

def brute_force_subsets(n, max_k):
    out = []

    def grow(prefix, start):
        if prefix:
            out.append(tuple(prefix))
        if len(prefix) < max_k:
            for i in range(start, n):
                grow(prefix + [i], i + 1)

    grow([], 0)
    return sorted(out, key=lambda t: (len(t), t))


def test_a5_action_space():
    cat = default_catalog()
    enumerated = [s.indices for s in enumerate_action_sets(cat)]
    brute = brute_force_subsets(28, 4)
    rng = np.random.default_rng(5)
    r = make_rng(5)
    bijective = True
    for _ in range(1000):
        i = int(rng.integers(24157))
        bijective &= encode_action_set(decode_action_index(i, 28, 4), 28) == i
        s = sample_action_set(cat, r)
        bijective &= decode_action_index(encode_action_set(s, 28), 28, 4) == s
    ok = (len(enumerated) == count_action_sets(28, 4) == cat.num_action_sets == 24157
          and enumerated == brute and bijective)
    record("A5", ok, f"{len(enumerated)} action sets (brute force {len(brute)}), "
                     f"codec bijective on 1000 samples: {bijective}")


# -- A6 ---------------------------------------------------------------------

def test_a6_gate_taxonomy():
    rng = np.random.default_rng(6)
    lay = FrqiLayout(4)
    idx = np.arange(256)
    counts = {"no change": 0, "translation": 0, "inversion": 0, "complex": 0}
    checks = 0
    for _ in range(20):
        img = GrayImage(16, rng.random(256))
        base = prepare_frqi_state(image_to_angles(img), lay)
        p0 = probabilities(base)
        for k in range(8):
            p = lay.positional(k)
            hit = (idx >> k) & 1 == 1
            for g in (z(0, ((p, 1),)), rz(rng.uniform(0.1, math.pi), 0, ((p, 1),))):
                counts["no change"] += bool(np.max(np.abs(probabilities(apply_circuit(base, [g])) - p0)) < 1e-12)
            out = exact_decode(apply_circuit(base, [x(p)]), lay).pixels
            counts["translation"] += np.allclose(out, img.pixels[idx ^ (1 << k)], atol=1e-9)
            out = exact_decode(apply_circuit(base, [x(0, ((p, 1),))]), lay).pixels
            counts["inversion"] += (np.allclose(out[hit], 1 - img.pixels[hit], atol=1e-9)
                                    and np.allclose(out[~hit], img.pixels[~hit], atol=1e-9))
            out = exact_decode(apply_circuit(base, [rx(math.pi / 2, 0, ((p, 1),))]), lay).pixels
            counts["complex"] += (not np.allclose(out, img.pixels, atol=1e-6)
                                  and not np.allclose(np.sort(out), np.sort(img.pixels), atol=1e-6)
                                  and not np.allclose(out[hit], 1 - img.pixels[hit], atol=1e-6))
            checks += 1
    ok = counts == {"no change": 2 * checks, "translation": checks, "inversion": checks, "complex": checks}
    record("A6", ok, f"{counts} over 20 images x 8 position qubits")


# -- A7 ---------------------------------------------------------------------

ALL_KINDS = NetworkSpec((1, 8, 8), (
    {"kind": "conv", "in": 1, "out": 3, "k": 3}, {"kind": "relu"}, {"kind": "maxpool", "size": 2},
    {"kind": "conv", "in": 3, "out": 4, "k": 3}, {"kind": "relu"}, {"kind": "maxpool", "size": 2},
    {"kind": "flatten"}, {"kind": "dense", "in": 16, "out": 6}, {"kind": "relu"},
    {"kind": "dense", "in": 6, "out": 5},
))


def fixed_net(values):
    values = np.asarray(values, dtype=float)
    spec = NetworkSpec((2,), ({"kind": "dense", "in": 2, "out": len(values)},))
    return Network(spec, {"0.W": np.zeros((2, len(values))), "0.b": values.copy()})


def test_a7_learning_core():
    worst = 0.0
    for loss in ("linear", "mse", "xent"):
        for seed in range(3):
            rep = grad_check(ALL_KINDS, seed=seed, loss=loss)
            worst = max(worst, rep.max_rel_error)
    cfg = AgentConfig(gamma=0.9, eps_decay_steps=4000, eps_end=0.1, batch_size=32,
                      buffer_capacity=10000, target_period=200, lr=1e-3, hidden=(32, 32))
    agent = DDQNAgent.create(5, 2, cfg, seed=0)
    run_episodes(agent, ChainMDP(), 10000, 0)
    q = q_values(agent.nets.online, np.eye(5))
    q_err = float(np.max(np.abs(q - optimal_q(0.9))))
    greedy_ok = list(q.argmax(axis=1)) == list(optimal_q(0.9).argmax(axis=1))
    t = Transition(np.zeros(2), 0, 0.45, np.zeros(2), False)
    y = double_q_target(fixed_net([0.1, 0.9, 0.2]), fixed_net([7.0, 5.0, 9.0]), t, 0.9)
    t.done = True
    y_done = double_q_target(fixed_net([0.1, 0.9, 0.2]), fixed_net([7.0, 5.0, 9.0]), t, 0.9)
    ok = worst < 1e-4 and q_err < 0.05 and greedy_ok and math.isclose(y, 4.95) and y_done == 0.45
    record("A7", ok, f"grad check max rel err {worst:.1e}; toy |Q-Q*| {q_err:.4f}, greedy optimal "
                     f"{greedy_ok}; stub target {y:.4f} (4.95), terminal {y_done}")


# -- desk pipeline (A8-A10) -------------------------------------------------

def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    base = ["--config", str(DESK_CONFIG), "--out", str(out)]
    agent = ["--catalog", "reduced"]
    timings = {}

    def cli(cmd, *extra):
        t0 = time.perf_counter()
        code = main([cmd, *base, *extra])
        timings[cmd] = time.perf_counter() - t0
        assert code == 0, f"qcam {cmd} exited {code}"

    cli("prep-data")
    cli("train-cnn")
    models = {t: sha(out / "models" / f"{t}.qnn") for t in ("public", "private")}
    cli("train-agent", *agent)
    cli("gen", *agent)
    cli("eval", *agent)
    cli("attack", *agent)
    cli("baselines")
    t0 = time.perf_counter()
    verify = main(["report", *base, "--verify"])
    timings["report"] = time.perf_counter() - t0
    return {"out": out, "models_before": models, "verify_exit": verify, "timings": timings}


def test_a8_classifier_floors(desk):
    out = desk["out"]
    clean = json.loads((out / "models" / "clean_test.json").read_text())
    test = Dataset.load(out / "data" / "test.npz")
    rng = np.random.default_rng(8)
    controls = {}
    ok = clean["public"] > 0.9 and clean["private"] > 0.5
    for task, k in (("public", 2), ("private", 36)):
        pred = Classifier.load(out / "models" / f"{task}.qnn").predict(test.images)
        acc = score(pred, rng.integers(0, k, len(test))).accuracy
        sigma = math.sqrt((1 / k) * (1 - 1 / k) / len(test))
        controls[task] = (acc, abs(acc - 1 / k) / sigma)
        ok &= abs(acc - 1 / k) < 3 * sigma
    record("A8", ok, f"clean public {clean['public']:.4f} (>0.9), private {clean['private']:.4f} (>0.5); "
                     f"shuffled-label controls public {controls['public'][0]:.4f} "
                     f"({controls['public'][1]:.1f} sigma), private {controls['private'][0]:.4f} "
                     f"({controls['private'][1]:.1f} sigma)")


def test_a9_desk_run(desk):
    out = desk["out"]
    s = json.loads((out / "agent" / "public_private" / "summary.json").read_text())
    clean = json.loads((out / "models" / "clean_test.json").read_text())
    gen = json.loads((out / "eval" / "public_private.json").read_text())
    drop = clean["private"] - gen["private_test"]
    hours = sum(desk["timings"].values()) / 3600
    ok = (s["q_gap_shrinks"] and s["loss_non_increasing"] and s["reward_non_decreasing"]
          and drop >= 0.20 and gen["public_test"] >= 0.5 and s["steps"] == 2000 and hours < 2)
    record("A9", ok,
           f"|Q gap| {s['q_gap_first']:.4f} -> {s['q_gap_last']:.4f}; loss {s['loss_first']:.4f} -> "
           f"{s['loss_last']:.4f}; smoothed reward {s['reward_first']:.3f} -> {s['reward_last']:.3f}; "
           f"generated private {gen['private_test']:.4f} vs clean {clean['private']:.4f} "
           f"(drop {drop * 100:.1f} pts, need >=20); generated public {gen['public_test']:.4f} (>=0.5); "
           f"pipeline {hours * 60:.1f} min")


def test_a10_attack_protocol(desk):
    out = desk["out"]
    row, _ = load_row(out / "rows" / "baseline_blur.json")
    rise = row.private_finetuned - row.private_test
    unchanged = all(sha(out / "models" / f"{t}.qnn") == h for t, h in desk["models_before"].items())
    reproduces = desk["verify_exit"] == 0
    record("A10", rise >= 0.20 and unchanged and reproduces,
           f"blur private {row.private_test:.4f} -> {row.private_finetuned:.4f} after finetune "
           f"(rise {rise * 100:.1f} pts, need >=20); models unchanged {unchanged}; "
           f"rows reproduce from manifests {reproduces}")


# -- A11 --------------------------------------------------------------------

def test_a11_depth_benchmark():
    pts = bench_depth(max_gates=4, seed=0, repeats=3)
    depths = [p.depth for p in pts]
    ok = all(a < b for a, b in zip(depths, depths[1:])) and len(depths) == 5
    times = ", ".join(f"{p.seconds * 1000:.1f}ms" for p in pts)
    record("A11", ok, f"depth for k=0..4: {depths}; sim time {times}")
