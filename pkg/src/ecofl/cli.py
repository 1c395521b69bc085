"""Command-line entry point: ``ecofl run | suite | train-xapp | bench``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .config import ConfigError, ScenarioConfig
from .xapp import ScenarioRanges, corpus_to_csv, fit, generate_corpus

BENCH_LIMIT_S = 60.0


def _out_root() -> Path:
    return Path(os.environ.get("ECOFL_OUT_DIR", "ecofl-out"))


def _load(path: str | None) -> ScenarioConfig:
    return cfgmod.parse_config(path) if path else ScenarioConfig().validate()


def _manifest(cfg: ScenarioConfig, seed: int, mode: str, started: float, **extra) -> dict:
    return {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "seed": seed,
        "mode": mode,
        "wall_clock_s": time.perf_counter() - started,
        **extra,
    }


def _ranges(cfg: ScenarioConfig) -> ScenarioRanges:
    x = cfg.xapp
    return ScenarioRanges((x.n_clients_min, x.n_clients_max), (x.embb_fraction_min, x.embb_fraction_max),
                          (x.best_rat_prob_min, x.best_rat_prob_max), cfg.net.arena_m)


def cmd_run(args) -> int:
    from .engine import run
    from .output import emit_outputs

    cfg = _load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        cfg = cfg.replace(sim=overrides)
    started = time.perf_counter()
    result = run(cfg)
    out = Path(args.out) if args.out else _out_root() / "run"
    paths = emit_outputs(result, _manifest(cfg, cfg.sim.seed, cfg.sim.mode, started), out)
    s = result.summary()
    print(f"mode={cfg.sim.mode} seed={cfg.sim.seed} steps={len(result.metrics)} "
          f"mean_power_w={s['total_power_w']['mean']:.4f} mean_eta_ee={s['eta_ee']['mean']:.4f} "
          f"final_fl_acc={s['final_fl_test_acc']:.4f}")
    for p in paths.values():
        print(p)
    return 0


def cmd_suite(args) -> int:
    from .engine import run_suite
    from .output import emit_suite

    cfg = _load(args.config)
    started = time.perf_counter()
    first = cfg.sim.seed if args.first_seed is None else args.first_seed
    seeds = list(range(first, first + args.seeds))
    suite = run_suite(cfg, seeds)
    out = Path(args.out) if args.out else _out_root() / "suite"
    paths = emit_suite(suite, _manifest(cfg, first, "suite", started, seeds=seeds), out)
    print(f"{'mode':<18}{'voice':>9}{'eMBB':>9}{'total':>9}   (mean outage rate)")
    v, e, t = (suite.mean_by_mode(c) for c in ("outage_rate_voice", "outage_rate_embb", "outage_rate_total"))
    for mode in v:
        print(f"{mode:<18}{v[mode]:>9.4f}{e[mode]:>9.4f}{t[mode]:>9.4f}")
    print(f"{'seed':>4}{'ecofl W':>10}{'base W':>10}{'cut':>8}{'eta eco':>9}{'eta base':>9}")
    for r in suite.power_table():
        print(f"{r['seed']:>4}{r['ecofl_power_w']:>10.3f}{r['baseline_power_w']:>10.3f}"
              f"{r['power_reduction']:>8.3f}{r['ecofl_eta_ee']:>9.3f}{r['baseline_eta_ee']:>9.3f}")
    for p in paths.values():
        print(p)
    return 0


def cmd_train_xapp(args) -> int:
    cfg = _load(args.config)
    ctx = cfg.radio_context()
    holdout = args.holdout if args.holdout is not None else args.corpus_size // 5
    if not 0 <= holdout < args.corpus_size:
        raise ConfigError("holdout must be smaller than the corpus", "--holdout")
    started = time.perf_counter()
    clf, report = fit(args.corpus_size - holdout, holdout, args.seed, ctx, _ranges(cfg),
                      epochs=args.epochs or cfg.xapp.epochs, learning_rate=cfg.xapp.learning_rate,
                      batch_size=cfg.xapp.batch_size)
    out = Path(args.out) if args.out else _out_root() / "xapp_weights.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(clf.dumps(), encoding="utf-8")
    if args.corpus_csv:
        from .seeding import substream

        corpus, _ = generate_corpus(args.corpus_size, substream(args.seed, "scenario-gen"), ctx, _ranges(cfg))
        Path(args.corpus_csv).write_text(corpus_to_csv(corpus), encoding="utf-8")
    print(f"labels {report.histogram}")
    print(f"train accuracy {report.train_accuracy:.4f}  holdout accuracy {report.holdout_accuracy:.4f}  "
          f"({time.perf_counter() - started:.1f} s)")
    print(out)
    return 0


def cmd_bench(args) -> int:
    from .engine import run

    cfg = _load(args.config)
    started = time.perf_counter()
    result = run(cfg)
    elapsed = time.perf_counter() - started
    ok = elapsed < BENCH_LIMIT_S
    print(f"reference run: {cfg.sim.n_clients} clients x {len(result.metrics)} steps in {elapsed:.2f} s "
          f"(limit {BENCH_LIMIT_S:.0f} s) {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecofl", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write run.csv, summary.json, manifest.json")
    r.add_argument("--config", help="scenario TOML file (defaults when omitted)")
    r.add_argument("--out", help="output directory (default $ECOFL_OUT_DIR/run)")
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", help="ecofl | baseline_fixed_rat:NR:P_F | fixed_policy:P3 | oracle_policy | greedy_energy")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="outage and power comparison over several seeds")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds (default 10)")
    s.add_argument("--first-seed", type=int)
    s.set_defaults(func=cmd_suite)

    t = sub.add_parser("train-xapp", help="generate an oracle-labelled corpus and train the policy classifier")
    t.add_argument("--corpus-size", type=int, required=True)
    t.add_argument("--holdout", type=int, help="scenarios held out for scoring (default corpus-size / 5)")
    t.add_argument("--out", help="weights file to write")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int)
    t.add_argument("--config")
    t.add_argument("--corpus-csv", help="also write the labelled corpus as CSV")
    t.set_defaults(func=cmd_train_xapp)

    b = sub.add_parser("bench", help=f"time the reference run and require < {BENCH_LIMIT_S:.0f} s")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ecofl: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ecofl: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
