"""Operator command line: gen, synth, train, oracle, verify.

Exit codes: 0 success; 1 valid run with unsolved targets or a failed
verification; 2 usage error; 3 malformed file; 4 violated internal
invariant.  With --ci, every randomized subcommand requires an explicit
--seed; otherwise a fresh entropy seed is drawn and printed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import oracle as oracle_mod
from . import search, targets, train
from .errors import (
    ArgumentError,
    CapacityError,
    FormatError,
    InvariantError,
    ShapeError,
    StateError,
)
from .ioutil import atomic_write_text
from .policy import init_weights, load_weights
from .tableau import read_tableaus, write_tableaus
from .targets import batch_header, parse_batch_header

REPORT_COLUMNS = (
    "target_id,n,family,difficulty,solved,cz_count,single_count,"
    "samples_used,wall_ms,decoder"
)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if args.ci:
        raise ArgumentError("--seed is required in --ci mode")
    seed = int(np.random.SeedSequence().entropy % (1 << 32))
    print(f"seed not given; using entropy seed {seed}", file=sys.stderr)
    return seed


def _make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# -- gen -------------------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = _resolve_seed(args)
    rng = _make_rng(seed)
    if args.uniform == (args.difficulty is not None):
        raise ArgumentError("exactly one of --uniform / --difficulty is required")
    out = []
    if args.uniform:
        family, d = "uniform", None
        for _ in range(args.count):
            out.append(targets.uniform_target(args.n, rng))
    else:
        family, d = "walk", args.difficulty
        for _ in range(args.count):
            t, _walk = targets.random_walk_target(args.n, args.difficulty, rng)
            out.append(t)
    header = batch_header(family, args.n, d, seed, args.count)
    write_tableaus(args.out, out, header=header)
    print(f"wrote {len(out)} {family} targets to {args.out}")
    return 0


# -- synth ------------------------------------------------------------------------


def _decode_config(args, n: int) -> search.DecodeConfig:
    # precedence: preset < config file < individual flags
    if args.preset == "bench6":
        cfg = search.bench6_preset()
    elif args.preset == "sweep":
        cfg = search.sweep_preset(n)
    else:  # greedy
        cfg = search.DecodeConfig()
    if args.decode_config:
        with open(args.decode_config, "r", encoding="utf-8") as fh:
            cfg = search.parse_decode_config(fh.read())
    kwargs = {}
    if args.budget is not None:
        kwargs["step_budget"] = args.budget
    if args.samples is not None:
        kwargs["num_samples"] = args.samples
    if args.temps is not None:
        try:
            kwargs["schedules"] = search.parse_schedules(args.temps)
        except FormatError as exc:  # a bad flag is a usage error, not a file error
            raise ArgumentError(str(exc)) from None
    if args.no_loop:
        kwargs["no_loop"] = True
    if args.no_inverse:
        kwargs["inverse_trick"] = False
    if kwargs:
        base = {
            "step_budget": cfg.step_budget,
            "num_samples": cfg.num_samples,
            "schedules": cfg.schedules,
            "no_loop": cfg.no_loop,
            "inverse_trick": cfg.inverse_trick,
        }
        base.update(kwargs)
        cfg = search.DecodeConfig(**base)
    return cfg


def cmd_synth(args) -> int:
    weights = load_weights(args.weights)
    batch = read_tableaus(args.targets)
    if not batch:
        raise FormatError(f"no tableau records in {args.targets}")
    with open(args.targets, "r", encoding="utf-8") as fh:
        meta = parse_batch_header(fh.read())
    family = meta.get("family", "")
    difficulty = meta.get("d", "")
    needs_seed = bool(args.samples) or args.preset == "bench6"
    seed = _resolve_seed(args) if needs_seed or args.seed is not None else 0
    os.makedirs(args.out_dir, exist_ok=True)
    if not os.path.exists(args.report):
        atomic_write_text(args.report, REPORT_COLUMNS + "\n")
    unsolved = 0
    for idx, target in enumerate(batch):
        cfg = _decode_config(args, target.n)
        decoder = "rollout" if cfg.num_samples else "greedy"
        if cfg.num_samples:
            res = search.rollout_decode(weights, target, cfg, seed + idx)
        else:
            res = search.greedy_decode(weights, target, cfg)
        tid = f"t{idx:04d}"
        if res.solved:
            search.write_circuit(os.path.join(args.out_dir, f"{tid}.circuit"), res.circuit)
        else:
            unsolved += 1
        row = (
            f"{tid},{target.n},{family},{difficulty},{int(res.solved)},"
            f"{res.cz_count},{res.single_count},{res.samples_used},"
            f"{res.wall_time * 1000:.2f},{decoder}"
        )
        with open(args.report, "a", encoding="utf-8") as fh:  # flush per target
            fh.write(row + "\n")
    print(f"synthesized {len(batch) - unsolved}/{len(batch)} targets; report {args.report}")
    return 1 if unsolved else 0


# -- train ------------------------------------------------------------------------


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = train.parse_train_config(fh.read())
    if args.resume:
        weights = load_weights(args.resume)
    else:
        weights = init_weights(args.width, args.rounds, _make_rng(seed))
    trainer = train.Trainer(weights, cfg, seed=seed, out_dir=args.out_dir, log=print)
    started = time.monotonic()
    trainer.run()
    print(
        f"trained {trainer.global_steps} env steps in "
        f"{time.monotonic() - started:.0f}s; checkpoints in {args.out_dir}"
    )
    return 0


# -- oracle -----------------------------------------------------------------------


def cmd_oracle(args) -> int:
    if args.enumerate:
        print(oracle_mod.enumerate_group(args.n))
        return 0
    if args.parity:
        pc = oracle_mod.parity_classes(args.n)
        if pc.bipartite:
            print(f"bipartite: even={pc.even_size} odd={pc.odd_size}")
        else:
            print(f"not bipartite; odd closed walk of length {len(pc.odd_cycle)}: "
                  f"{pc.odd_cycle}")
        return 0
    if args.odd_check:
        ok = oracle_mod.odd_identity_check(args.n)
        print("identity" if ok else "NOT identity")
        return 0 if ok else 4
    if args.export_distances:
        table = oracle_mod.cz_table(args.n, allow_large=args.allow_large)
        oracle_mod.export_distances(table, args.export_distances)
        print(f"wrote {table.size} distances to {args.export_distances}")
        return 0
    if args.cz_targets:
        batch = read_tableaus(args.cz_targets)
        for idx, t in enumerate(batch):
            cz, witness = oracle_mod.optimal_cz_count(t, allow_large=args.allow_large)
            print(f"t{idx:04d} cz={cz} witness_gates={len(witness)}")
        return 0
    raise ArgumentError("oracle needs one action flag")


# -- verify -----------------------------------------------------------------------


def cmd_verify(args) -> int:
    circuit = search.read_circuit(args.circuit)
    batch = read_tableaus(args.target)
    if not 0 <= args.index < len(batch):
        raise ArgumentError(f"target index {args.index} out of range")
    ok = search.verify_circuit(circuit, batch[args.index])
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cliffsynth",
                                description="Clifford synthesis by tableau reduction")
    p.add_argument("--ci", action="store_true",
                   help="require explicit seeds for randomized commands")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate target tableaus")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--difficulty", type=float, default=None,
                   help="expected random-walk length")
    g.add_argument("--uniform", action="store_true",
                   help="sample uniformly from the symplectic group")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    s = sub.add_parser("synth", help="synthesize circuits for target tableaus")
    s.add_argument("--weights", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--preset", choices=("greedy", "bench6", "sweep"), default="greedy")
    s.add_argument("--decode-config", dest="decode_config", default=None,
                   help="key=value decode settings file (overrides the preset)")
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--samples", type=int, default=None)
    s.add_argument("--temps", default=None,
                   help="schedule arms 'start:end:mode;...' (mode fixed|linear)")
    s.add_argument("--no-loop", action="store_true", dest="no_loop")
    s.add_argument("--no-inverse", action="store_true", dest="no_inverse")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="train policy weights")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--resume", default=None, help="continue from a weight file")
    t.add_argument("--width", type=int, default=64, help="hidden width for fresh weights")
    t.add_argument("--rounds", type=int, default=2, help="message rounds for fresh weights")
    t.set_defaults(fn=cmd_train)

    o = sub.add_parser("oracle", help="exact small-n ground truth")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--enumerate", action="store_true")
    o.add_argument("--parity", action="store_true")
    o.add_argument("--odd-check", action="store_true", dest="odd_check")
    o.add_argument("--cz", dest="cz_targets", default=None,
                   help="report optimal cz counts for a target file")
    o.add_argument("--export-distances", dest="export_distances", default=None)
    o.add_argument("--allow-large", action="store_true", dest="allow_large")
    o.set_defaults(fn=cmd_oracle)

    v = sub.add_parser("verify", help="check a circuit against a target tableau")
    v.add_argument("--circuit", required=True)
    v.add_argument("--target", required=True)
    v.add_argument("--index", type=int, default=0)
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ArgumentError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (InvariantError, ShapeError, StateError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
