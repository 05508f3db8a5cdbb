"""Command line: ``seqhmc run | bench | sample``."""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import report
from .acquisition import Experiment
from .config import CliConfig
from .hmc import run_chains
from .metrics import aggregate, summarize
from .oracles import NkLandscape, ProxyStructureOracle, load_lookup, parse_oracle_spec
from .seq import Alphabet, Sequence, TaskDefinition
from .surrogate import ModelConfig, SurrogateModel, load_checkpoint, save_checkpoint

log = logging.getLogger("seqhmc")

# flags with their own spelling; every other config key gets --<dotted.key>
_SHORTCUT_KEYS = {"out", "seeds", "jobs", "proposals", "oracle.source", "use_structure", "use_ucb"}


def build_task_and_oracle(cfg: CliConfig):
    kind, args = parse_oracle_spec(cfg.oracle.source)
    ts = cfg.task
    positions = tuple(ts.mutable_positions) or None
    template = ts.template or None
    if kind == "nk":
        L, S, k, seed = args
        if S > len(ts.alphabet):
            raise ValueError(f"NK alphabet size {S} exceeds the configured alphabet")
        alphabet = Alphabet(ts.alphabet[:S])
        wt = Sequence.from_string(ts.wild_type, alphabet) if ts.wild_type else None
        land = NkLandscape(L, S, k, seed, wt, cfg.oracle.structure_mode)
        if wt is not None and len(wt) != L:
            raise ValueError(f"wild type length {len(wt)} does not match NK L={L}")
        land.structure = ProxyStructureOracle(land.wild_type, S, cfg.oracle.structure_seed,
                                              cfg.oracle.structure_mode)
        task = TaskDefinition(alphabet, land.wild_type, template, positions)
        return task, land
    (path,) = args
    if not ts.wild_type:
        raise ValueError("a lookup oracle needs task.wild_type")
    alphabet = Alphabet(ts.alphabet)
    task = TaskDefinition(alphabet, Sequence.from_string(ts.wild_type, alphabet), template, positions)
    structure = ProxyStructureOracle(task.wild_type, alphabet.size, cfg.oracle.structure_seed,
                                     cfg.oracle.structure_mode)
    return task, load_lookup(path, task, cfg.oracle.unknown_policy, structure)


def config_echo(cfg: CliConfig) -> dict:
    """Settings that define a run (output location and worker count excluded)."""
    flat = config_mod.to_flat(cfg)
    for key in ("out", "jobs", "seeds"):
        flat.pop(key)
    return flat


def run_seed(cfg: CliConfig, seed: int, out_dir=None):
    """One optimisation run; returns (records, summary, experiment)."""
    cfg = copy.deepcopy(cfg)
    cfg.run.master_seed = seed
    task, oracle = build_task_and_oracle(cfg)
    log_path = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        log_path = Path(out_dir) / "rounds.jsonl"
    exp = Experiment(task, oracle, cfg.run, log_path)
    records = exp.run()
    summary = summarize(exp.pool, cfg.run.rounds, cfg.run.queries_per_round)
    if out_dir is not None:
        report.write_report(records, summary, out_dir, task.alphabet, config_echo(cfg),
                            seed, {"oracle_calls": exp.oracle_calls})
        if cfg.save_models and exp.ensemble is not None:
            for i, model in enumerate(exp.ensemble.members):
                save_checkpoint(model, Path(out_dir) / f"member_{i}.ckpt", seed)
    return records, summary, exp


def _summary_only(args):
    cfg, seed, out_dir = args
    return run_seed(cfg, seed, out_dir)[1]


def run_many(cfg: CliConfig, seeds, out_dirs=None, jobs: int = 1) -> list:
    out_dirs = out_dirs or [None] * len(seeds)
    work = [(cfg, s, d) for s, d in zip(seeds, out_dirs)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_summary_only, work))
    return [_summary_only(w) for w in work]


def cmd_run(cfg: CliConfig) -> int:
    out = Path(cfg.out)
    seeds = list(cfg.seeds)
    dirs = [out / f"seed_{s}" for s in seeds]
    summaries = run_many(cfg, seeds, dirs, cfg.jobs)
    agg = aggregate(summaries)
    report.write_aggregate(out, agg, config_echo(cfg), seeds)
    for s, summ in zip(seeds, summaries):
        print(f"seed {s}: max fit. {summ.cumulative_max_fitness:.4f}  "
              f"mean fit. {summ.mean_fitness:.4f}  fDiv {summ.fdiv:.4f}")
    print(f"mean over {len(seeds)} seed(s): max fit. {agg.cumulative_max_fitness:.4f} "
          f"± {agg.std['cumulative_max_fitness']:.4f}")
    return 0


def cmd_bench(cfg: CliConfig, methods=("hmc", "random")) -> int:
    results = bench(cfg, methods)
    report.write_bench(cfg.out, results)
    print(report.format_bench_table(results))
    return 0


def bench(cfg: CliConfig, methods=("hmc", "random")) -> dict:
    """Aggregated summaries keyed by (method, K) over the seed list."""
    results = {}
    for method in methods:
        for K in cfg.bench.k_grid:
            c = copy.deepcopy(cfg)
            c.run.proposals = method
            c.run.queries_per_round = int(K)
            results[(method, int(K))] = aggregate(run_many(c, list(c.seeds), None, c.jobs))
    return results


def cmd_sample(cfg: CliConfig, sequence: str, checkpoint=None, trace_path=None) -> int:
    if checkpoint:
        model = load_checkpoint(checkpoint)
        L, S = model.config.input_shape
        alphabet = Alphabet(cfg.task.alphabet[:S])
    else:
        alphabet = Alphabet(cfg.task.alphabet)
        L = len(sequence)
        mc = ModelConfig((L, alphabet.size), cfg.run.model.hidden_width, cfg.run.model.encoder_depth)
        model = SurrogateModel.initialize(mc, np.random.default_rng(cfg.seeds[0]))
    start = Sequence.from_string(sequence, alphabet)
    if len(start) != L:
        raise ValueError(f"sequence length {len(start)} does not match the model ({L})")
    trace = []
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seeds[0], spawn_key=(99,)))
    run_chains(start, model, cfg.run.hmc, [rng], trace)
    lines = []
    for rec in trace:
        rec = dict(rec)
        rec.pop("chain")
        rec["sequence"] = Sequence(tuple(rec["sequence"])).to_string(alphabet)
        lines.append(json.dumps(rec))
    text = "\n".join(lines) + "\n"
    if trace_path:
        Path(trace_path).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqhmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "bench", "sample"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="single seed")
        p.add_argument("--seeds", help="comma-separated seeds")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--oracle", help="lookup:PATH or nk:L,S,k,seed")
        p.add_argument("--proposals", choices=("hmc", "random"))
        p.add_argument("--no-structure", action="store_true", help="skip structure pre-training")
        p.add_argument("--no-ucb", action="store_true", help="single model, no uncertainty bonus")
        p.add_argument("--no-barriers", action="store_true", help="clamp instead of reflecting")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in config_mod.keys():
            if key not in _SHORTCUT_KEYS:
                p.add_argument(f"--{key}", dest=f"set:{key}", metavar="VALUE")
        if name == "sample":
            p.add_argument("--sequence", required=True)
            p.add_argument("--checkpoint")
            p.add_argument("--trace", help="also write the trace to this file")
    return parser


def config_from_args(args) -> CliConfig:
    cfg = config_mod.load(args.config) if args.config else CliConfig()
    values = {k[4:]: v for k, v in vars(args).items() if k.startswith("set:") and v is not None}
    if args.seed is not None:
        values["seeds"] = str(args.seed)
    if args.seeds:
        values["seeds"] = args.seeds
    for flag, key in (("out", "out"), ("jobs", "jobs"), ("oracle", "oracle.source"),
                      ("proposals", "proposals")):
        if getattr(args, flag) is not None:
            values[key] = str(getattr(args, flag))
    if args.no_structure:
        values["use_structure"] = "false"
    if args.no_ucb:
        values["use_ucb"] = "false"
    if args.no_barriers:
        values["hmc.barriers"] = "clamp"
    config_mod.apply(cfg, values)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        return cmd_sample(cfg, args.sequence, args.checkpoint, args.trace)
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"seqhmc: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
