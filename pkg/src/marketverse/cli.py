"""Command-line entry point: ``marketverse <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, MarketverseError

EXIT_CODES = """exit codes:
  0  success
  1  unexpected error
  2  usage error
  3  invalid configuration
  4  invalid or missing data
  5  training diverged
  6  output directory locked by another run
  7  environment error
  8  parallel batch failure
errors are printed to stderr as one JSON object; set MARKETVERSE_LOG=DEBUG for verbose logs."""


def _window(values):
    if values is None:
        return None
    return tuple(values)


def _load_env_config(path):
    from .env import EnvConfig

    if path is None:
        return EnvConfig()
    try:
        return EnvConfig.from_dict(json.loads(Path(path).read_text()))
    except FileNotFoundError:
        raise ConfigError(f"env config not found: {path}") from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"bad env config {path}: {exc}") from None


def _write_report(report, out: Path, title: str) -> None:
    from .evaluation import render_table
    from .plotting import plot_report

    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.write_cumret_csv(out / "cumret.csv")
    plot_report(report, out / "cumret.png", title=title)
    table = render_table({report.label: (report.strategy,), report.baseline_label: (report.baseline,)})
    (out / "table.txt").write_text(table + "\n")
    print(table)


# ---------------------------------------------------------------- commands


def cmd_sample(args) -> int:
    from .sample import install_sample

    path = install_sample(args.directory)
    print(json.dumps({"config": str(path)}))
    return 0


def cmd_ingest(args) -> int:
    from .data import CleaningConfig, align_and_clean, load_many

    cfg = CleaningConfig(args.max_gap_fraction, args.fill_policy, args.calendar)
    bars = load_many(args.data)
    symbols = args.symbols or sorted({b.symbol for b in bars})
    panel = align_and_clean(bars, symbols, args.interval, cfg)
    panel.save(args.out)
    print(json.dumps({"out": str(args.out), "steps": panel.n_steps, "symbols": list(panel.symbols),
                      "cleaning": panel.meta.get("cleaning"), "checksum": panel.checksum()}))
    return 0


def cmd_features(args) -> int:
    from .data import MarketPanel
    from .features import DEFAULT_INDICATORS, IndicatorSpec, TurbulenceConfig, add_indicators, add_turbulence

    panel = MarketPanel.load(args.panel)
    specs = DEFAULT_INDICATORS
    if args.indicators:
        specs = tuple(IndicatorSpec.from_dict(d) for d in json.loads(Path(args.indicators).read_text()))
    panel = add_indicators(panel, specs)
    if args.turbulence_lookback > 0:
        panel = add_turbulence(panel, TurbulenceConfig(args.turbulence_lookback))
    panel.save(args.out)
    print(json.dumps({"out": str(args.out), "features": list(panel.feature_names), "checksum": panel.checksum()}))
    return 0


def _policy(args, n_assets: int):
    from .agents import baseline_from_dict, load_policy

    if args.checkpoint:
        return load_policy(args.checkpoint)[0]
    params = json.loads(args.params) if args.params else {}
    return baseline_from_dict({"name": args.policy, "n_assets": n_assets, **params})


def cmd_backtest(args) -> int:
    from .agents import evaluate_policy
    from .data import MarketPanel, split_panel
    from .env import make_env
    from .evaluation import build_report
    from .pipeline import PipelineConfig, build_panel, phase_report

    if args.config:
        cfg = PipelineConfig.from_file(args.config)
        window = _window(args.window) or tuple((cfg.windows or {}).get("test") or ())
        if not window:
            raise ConfigError("backtest needs --window or a 'test' window in the config")
        panel = split_panel(build_panel(cfg), [window])[0]
        policy = _policy(args, panel.n_symbols)
        traj = evaluate_policy(policy, make_env(cfg.env_kind, panel, cfg.env), args.seed)
        label = getattr(policy, "name", type(policy).__name__)
        report = phase_report(traj, panel, cfg, label)
    else:
        panel = MarketPanel.load(args.panel)
        if args.window:
            panel = split_panel(panel, [_window(args.window)])[0]
        policy = _policy(args, panel.n_symbols)
        env = make_env(args.env_kind, panel, _load_env_config(args.env_config))
        traj = evaluate_policy(policy, env, args.seed)
        base = traj.values[0] * (panel.close / panel.close[0]).mean(axis=1)
        label = getattr(policy, "name", type(policy).__name__)
        report = build_report(traj, base, panel.periods_per_year, label=label, baseline_label="equal_weight_index")
    _write_report(report, Path(args.out), f"backtest: {label}")
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import PipelineConfig, rerun_from_manifest, run

    if args.from_manifest:
        if not args.output_dir:
            raise ConfigError("--from-manifest needs --output-dir")
        result, same = rerun_from_manifest(args.from_manifest, args.output_dir)
        print(json.dumps({"output_dir": args.output_dir, "reproduced": same,
                          "result_digest": result.manifest["result_digest"]}))
        return 0 if same else 1
    if not args.config:
        raise ConfigError("pipeline needs --config or --from-manifest")
    cfg = PipelineConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = cfg.replace(**overrides)
    out = args.output_dir or str(Path(args.config).parent / cfg.output_dir)
    result = run(cfg, out)
    table = Path(out) / "table.txt"
    if table.exists():
        print(table.read_text(), end="")
    print(json.dumps({"output_dir": out, "selected": [w.selected_candidate.to_dict() for w in result.windows],
                      "result_digest": result.manifest["result_digest"]}))
    return 0


def cmd_papertrade(args) -> int:
    from .agents import load_policy
    from .data import split_panel
    from .pipeline import PHASE_PAPER, PaperTrader, PipelineConfig, build_panel, phase_report, phase_seed

    cfg = PipelineConfig.from_file(args.config)
    policy, meta = load_policy(args.checkpoint)
    panel = split_panel(build_panel(cfg), [_window(args.window)])[0]
    seed = phase_seed(cfg.seed, meta.get("window", 0), PHASE_PAPER, meta.get("selected_index", 0))
    traj = PaperTrader(policy, cfg, seed).run(panel)
    report = phase_report(traj, panel, cfg, getattr(policy, "name", "policy"))
    _write_report(report, Path(args.output_dir), "paper trade")
    return 0


def cmd_bench(args) -> int:
    from .data import MarketPanel
    from .parallel import BENCH_COLUMNS, throughput_benchmark, write_benchmark_csv

    if args.panel:
        panel = MarketPanel.load(args.panel)
    else:
        from .data import align_and_clean
        from .sample import synthetic_bars

        panel = align_and_clean(synthetic_bars(n_bars=args.steps + 2, gap_fraction=0.0), ("AAA", "BBB", "CCC"), 300)
    rows = throughput_benchmark(panel, args.envs, args.workers, args.steps, backend=args.backend)
    if args.out:
        write_benchmark_csv(rows, args.out)
    print(",".join(BENCH_COLUMNS))
    for r in rows:
        print(",".join(str(r[k]) for k in BENCH_COLUMNS))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="marketverse", description="Market environments and backtesting pipeline.",
                                epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="copy the bundled sample data and config into a directory")
    s.add_argument("directory")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("ingest", help="load OHLCV CSVs, align and clean them into a panel directory")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--symbols", nargs="+")
    s.add_argument("--interval", type=int, required=True, help="bar interval in seconds")
    s.add_argument("--max-gap-fraction", type=float, default=0.05)
    s.add_argument("--fill-policy", choices=("forward-fill", "drop-row"), default="forward-fill")
    s.add_argument("--calendar", choices=("continuous-24x7", "exchange-sessions"), default="continuous-24x7")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("features", help="add indicator and turbulence columns to a panel")
    s.add_argument("--panel", required=True)
    s.add_argument("--indicators", help="JSON file with a list of indicator specs")
    s.add_argument("--turbulence-lookback", type=int, default=252, help="0 disables turbulence")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("backtest", help="run one policy over a window of a panel or pipeline config")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--panel", help="panel directory")
    src.add_argument("--config", help="pipeline config; defaults to its test window")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--policy", help="baseline name")
    g.add_argument("--checkpoint", help="policy checkpoint JSON")
    s.add_argument("--params", help="JSON object of baseline parameters")
    s.add_argument("--window", nargs=2, metavar=("START", "END"))
    s.add_argument("--env-kind", choices=("stock", "allocation"), default="stock", help="with --panel only")
    s.add_argument("--env-config", help="JSON file of environment settings (with --panel only)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("pipeline", help="train, select, backtest and paper-trade from a config")
    s.add_argument("--config")
    s.add_argument("--from-manifest", help="re-run a previous run and check it reproduces")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("papertrade", help="replay a window bar by bar with a frozen checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--window", nargs=2, metavar=("START", "END"), required=True)
    s.add_argument("--output-dir", required=True)
    s.set_defaults(func=cmd_papertrade)

    s = sub.add_parser("bench", help="environment steps/second for several worker counts")
    s.add_argument("--panel")
    s.add_argument("--envs", type=int, default=8)
    s.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--backend", choices=("process", "thread"), default="process")
    s.add_argument("--out", help="also write the CSV here")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MARKETVERSE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MarketverseError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("unhandled error", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
