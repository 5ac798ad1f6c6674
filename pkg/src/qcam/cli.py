"""Command-line entry point: ``qcam <subcommand> [options]``.

Every subcommand reads an optional flat JSON config; any config key can be
overridden with ``--key value`` (underscores become dashes). Artifacts go to
``--out``, falling back to ``$QCAM_OUTPUT_DIR`` and then ``./qcam-out``.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import harness as H
from .agent import DDQNAgent
from .classifiers import evaluate
from .frqi import DEFAULT_SHOTS, FrqiLayout, GrayImage, decode_histogram, image_to_angles, prepare_frqi_state
from .imageio import read_pgm, write_pgm
from .qsim import Gate, apply_circuit, rx, rz, sample_measurements, x, z
from .rng import derive_seed

log = logging.getLogger("qcam")

EXIT_USAGE = 2
EXIT_RUNTIME = 1


class UsageError(Exception):
    pass


# -- gate specs for explore ------------------------------------------------

GATE_KINDS = ("crx", "crz", "cz", "cx", "x")


def parse_gate_spec(spec: str, layout: FrqiLayout) -> Gate:
    """``kind:k[:value]`` with k a positional qubit index, e.g. ``crx:3`` or ``crx:7:0``."""
    parts = spec.lower().split(":")
    if parts[0] not in GATE_KINDS or len(parts) not in (2, 3):
        raise UsageError(f"bad gate spec {spec!r}; expected kind:k[:value] with kind in {GATE_KINDS}")
    try:
        k = int(parts[1])
        value = int(parts[2]) if len(parts) == 3 else 1
    except ValueError:
        raise UsageError(f"bad gate spec {spec!r}: k and value must be integers") from None
    if not 0 <= k < 2 * layout.n or value not in (0, 1):
        raise UsageError(f"bad gate spec {spec!r}: k must be in [0, {2 * layout.n}) and value 0 or 1")
    c, p = layout.color_qubit, layout.positional(k)
    ctl = ((p, value),)
    if parts[0] == "crx":
        return rx(math.pi / 2, c, ctl)
    if parts[0] == "crz":
        return rz(math.pi / 2, c, ctl)
    if parts[0] == "cz":
        return z(c, ctl)
    if parts[0] == "cx":
        return x(c, ctl)
    return x(p)


# -- argument handling -----------------------------------------------------

def _config_flag_type(default):
    if isinstance(default, bool):
        return lambda s: s.lower() in ("1", "true", "yes")
    if isinstance(default, tuple):
        return lambda s: tuple(int(v) for v in s.split(","))
    return type(default)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    for f in fields(H.RunConfig):
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}",
                       type=_config_flag_type(f.default), default=None, metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    _add_config_flags(common)

    parser = argparse.ArgumentParser(prog="qcam", description="Quantum camera privacy pipeline")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("encode", parents=[common], help="measure one image through the FRQI camera")
    p.add_argument("--image", required=True, help="input PGM")
    p.add_argument("--shots", type=int, default=DEFAULT_SHOTS)

    p = sub.add_parser("explore", parents=[common], help="measured panels for every subset of gates")
    p.add_argument("--image", required=True, help="input PGM")
    p.add_argument("--gates", nargs="+", required=True, help="gate specs such as crx:3 crx:7")
    p.add_argument("--shots", type=int, default=DEFAULT_SHOTS)

    sub.add_parser("prep-data", parents=[common], help="load or synthesize data and split it")
    sub.add_parser("train-cnn", parents=[common], help="train the public and private classifiers")
    sub.add_parser("train-agent", parents=[common], help="train a DDQN agent for the configured reward policy")
    p = sub.add_parser("gen", parents=[common], help="run the frozen policy over the test split")
    p.add_argument("--dump-pgm", type=int, default=0, help="also write the first N images as PGM")
    sub.add_parser("eval", parents=[common], help="score the classifiers on a generated set")
    sub.add_parser("attack", parents=[common], help="finetune attack on a generated set; writes a result row")
    p = sub.add_parser("baselines", parents=[common], help="quantum-random, blur and noise rows")
    p.add_argument("--only", nargs="+", choices=H.BASELINES)
    p = sub.add_parser("bench-depth", parents=[common], help="circuit depth and time for 0..4 appended gates")
    p.add_argument("--max-gates", type=int, default=4)
    p = sub.add_parser("report", parents=[common], help="collect result rows into results_table.csv")
    p.add_argument("--verify", action="store_true", help="recompute every row from its manifest")
    return parser


def effective_config(args) -> H.RunConfig:
    raw = {}
    if args.config:
        raw = H.RunConfig.load(args.config).to_dict()
    for f in fields(H.RunConfig):
        v = getattr(args, f"cfg_{f.name}")
        if v is not None:
            raw[f.name] = v
    return H.RunConfig.from_dict(raw)


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get("QCAM_OUTPUT_DIR") or "qcam-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -----------------------------------------------------------

def _measure(img: GrayImage, gates, shots: int, seed: int):
    layout = FrqiLayout.for_side(img.side)
    state = apply_circuit(prepare_frqi_state(image_to_angles(img), layout), gates)
    hist = sample_measurements(state, shots, seed)
    return decode_histogram(hist, layout), hist


def cmd_encode(args, cfg, out):
    if args.shots < 1:
        raise UsageError("--shots must be >= 1")
    img = read_pgm(args.image)
    measured, hist = _measure(img, [], args.shots, derive_seed(cfg.seed, "encode"))
    d = out / "encode"
    d.mkdir(exist_ok=True)
    write_pgm(d / "clean.pgm", img)
    write_pgm(d / "measured.pgm", measured)
    (d / "histogram.csv").write_text(hist.to_csv())
    print(f"wrote {d / 'measured.pgm'} ({args.shots} shots)")


def cmd_explore(args, cfg, out):
    img = read_pgm(args.image)
    layout = FrqiLayout.for_side(img.side)
    gates = [parse_gate_spec(s, layout) for s in args.gates]
    d = out / "explore"
    d.mkdir(exist_ok=True)
    count = 0
    for r in range(len(gates) + 1):
        for combo in itertools.combinations(range(len(gates)), r):
            name = "none" if not combo else "+".join(args.gates[i].replace(":", "") for i in combo)
            seed = derive_seed(cfg.seed, "explore", name)
            measured, _ = _measure(img, [gates[i] for i in combo], args.shots, seed)
            write_pgm(d / f"panel_{count:02d}_{name}.pgm", measured)
            count += 1
    print(f"wrote {count} panels to {d}")


def cmd_prep_data(args, cfg, out):
    split = H.prepare_data(cfg)
    paths = H.save_split(out / "data", split)
    print("split sizes:", {k: len(getattr(split, k)) for k in paths})


def cmd_train_cnn(args, cfg, out):
    sp = H.load_split(out / "data")
    clfs = H.train_classifiers(cfg, sp["train"], sp["val"])
    d = out / "models"
    d.mkdir(exist_ok=True)
    summary = {}
    for task, clf in clfs.items():
        clf.save(d / f"{task}.qnn")
        summary[task] = evaluate(clf, sp["test"]).accuracy
        print(f"{task} clean test accuracy {summary[task]:.4f}")
    (d / "clean_test.json").write_text(json.dumps(summary, indent=1))


def _agent_dir(out: Path, cfg) -> Path:
    return out / "agent" / cfg.policy


def cmd_train_agent(args, cfg, out):
    sp = H.load_split(out / "data")
    clfs = H.load_classifiers(out / "models")
    run = H.run_training(cfg, clfs, sp["train"], _agent_dir(out, cfg))
    s = H.summarize_training(run.logs)
    summary = {**asdict(s), "q_gap_shrinks": s.q_gap_shrinks, "loss_non_increasing": s.loss_non_increasing,
               "reward_non_decreasing": s.reward_non_decreasing, "steps": run.agent.step}
    (run.out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    print(f"trained {run.agent.step} steps; curves at {run.out_dir / 'curves.csv'}")
    print(f"q gap {s.q_gap_first:.4f} -> {s.q_gap_last:.4f}; reward {s.reward_first:.3f} -> {s.reward_last:.3f}")


def _generated_path(out: Path, cfg) -> Path:
    return out / "generated" / f"{cfg.policy}.npz"


def cmd_gen(args, cfg, out):
    sp = H.load_split(out / "data")
    clfs = H.load_classifiers(out / "models")
    ckpt = _agent_dir(out, cfg) / "checkpoint"
    if not (ckpt / "agent.json").exists():
        raise FileNotFoundError(f"no agent checkpoint at {ckpt}; run train-agent first")
    agent = DDQNAgent.load(ckpt)
    gen = H.freeze_and_generate(agent, cfg, clfs, sp["test"], derive_seed(cfg.seed, "generate"))
    path = gen.save(_generated_path(out, cfg))
    if args.dump_pgm:
        H.dump_pgms(out / "generated" / f"{cfg.policy}_pgm", gen, args.dump_pgm)
    print(f"wrote {len(gen)} generated images to {path}")


def _load_generated(out, cfg) -> H.GeneratedSet:
    path = _generated_path(out, cfg)
    if not path.exists():
        raise FileNotFoundError(f"no generated set at {path}; run gen first")
    return H.GeneratedSet.load(path)


def cmd_eval(args, cfg, out):
    gen = _load_generated(out, cfg)
    clfs = H.load_classifiers(out / "models")
    pub, priv = H.evaluate_policy(gen.dataset(), clfs)
    d = out / "eval"
    d.mkdir(exist_ok=True)
    (d / f"{cfg.policy}.json").write_text(json.dumps({"public_test": pub, "private_test": priv}, indent=1))
    print(f"{cfg.policy}: public {pub:.4f} private {priv:.4f}")


def _model_paths(out: Path) -> dict:
    return {t: out / "models" / f"{t}.qnn" for t in ("public", "private")}


def cmd_attack(args, cfg, out):
    gen = _load_generated(out, cfg)
    clfs = H.load_classifiers(out / "models")
    ckpt = _agent_dir(out, cfg) / "checkpoint"
    steps = json.loads((ckpt / "agent.json").read_text())["step"] if (ckpt / "agent.json").exists() else None
    man = H.policy_manifest(cfg.policy, cfg, gen, _model_paths(out), _generated_path(out, cfg),
                            H.checkpoint_hash(ckpt) if steps is not None else "", steps)
    row = H.score_generated(cfg.policy, gen.dataset(), clfs, cfg, man.seeds["attack"], steps)
    row = replace(row, manifest_hash=man.digest())
    path = H.save_row(out / "rows" / f"policy_{cfg.policy}.json", row, man)
    print(f"{row.label}: public {row.public_test:.4f}->{row.public_finetuned:.4f} "
          f"private {row.private_test:.4f}->{row.private_finetuned:.4f} ({path})")


def cmd_baselines(args, cfg, out):
    sp = H.load_split(out / "data")
    clfs = H.load_classifiers(out / "models")
    kinds = tuple(args.only) if args.only else H.BASELINES
    results = H.run_baselines(sp["test"], clfs, cfg, kinds, _model_paths(out), out / "data" / "test.npz")
    for row, man in results:
        H.save_row(out / "rows" / f"baseline_{row.label}.json", row, man)
        print(f"{row.label}: public {row.public_test:.4f}->{row.public_finetuned:.4f} "
              f"private {row.private_test:.4f}->{row.private_finetuned:.4f}")


def cmd_bench_depth(args, cfg, out):
    if not 0 <= args.max_gates <= 16:
        raise UsageError("--max-gates must be in [0, 16]")
    points = H.bench_depth(args.max_gates, cfg.seed)
    (out / "bench_depth.csv").write_text(H.depth_csv(points))
    for p in points:
        print(f"k={p.gates} depth={p.depth} time={p.seconds:.4f}s")


def cmd_report(args, cfg, out):
    rows = []
    for path in sorted((out / "rows").glob("*.json")) if (out / "rows").exists() else []:
        row, man = H.load_row(path)
        if args.verify:
            again = H.reproduce_row(man)
            if again != row:
                raise RuntimeError(f"row {row.label} does not reproduce from its manifest")
            print(f"verified {row.label}")
        rows.append(row)
    table = H.ResultsTable(rows).with_chance()
    (out / "results_table.csv").write_text(table.to_csv())
    print(table.to_csv(), end="")


COMMANDS = {
    "encode": cmd_encode, "explore": cmd_explore, "prep-data": cmd_prep_data,
    "train-cnn": cmd_train_cnn, "train-agent": cmd_train_agent, "gen": cmd_gen,
    "eval": cmd_eval, "attack": cmd_attack, "baselines": cmd_baselines,
    "bench-depth": cmd_bench_depth, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = effective_config(args)
        out = output_dir(args)
        (out / "config.effective.json").write_text(json.dumps(cfg.to_dict(), indent=1))
        COMMANDS[args.command](args, cfg, out)
    except (H.ConfigError, UsageError) as e:
        print(f"qcam {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # runtime failure
        if args.verbose:
            raise
        print(f"qcam {args.command}: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
