"""Training, validation, backtest and paper-trade phases over one or more windows.

Seeds for every phase derive from the global seed through
``SeedSequence([seed, window, phase, candidate])`` (see :func:`phase_seed`),
so each phase can be re-run on its own and reproduces bit for bit.
"""

from __future__ import annotations

import contextlib
import copy
import hashlib
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .agents import (
    BASELINES,
    LinearPolicy,
    ReinforceConfig,
    baseline_from_dict,
    evaluate_policy,
    save_policy,
    train_reinforce,
)
from .data import CleaningConfig, MarketPanel, align_and_clean, load_many, split_panel, to_epoch
from .env import EnvConfig, make_env
from .errors import ConfigError, DataError, LockHeld
from .evaluation import PerformanceReport, build_report, render_table
from .features import DEFAULT_INDICATORS, IndicatorSpec, TurbulenceConfig, add_indicators, add_turbulence
from .rollout import Trajectory, rollout

logger = logging.getLogger(__name__)

PHASE_TRAIN, PHASE_VALIDATE, PHASE_RETRAIN, PHASE_TEST, PHASE_PAPER = 1, 2, 3, 4, 5
WINDOW_ORDER = ("train", "validation", "test", "paper_trade")
# these emit portfolio-weight logits and only make sense in the allocation env
ALLOCATION_ONLY = frozenset({"equal_weight", "min_variance", "mean_variance"})


def phase_seed(global_seed: int, window: int, phase: int, candidate: int = 0) -> int:
    return int(np.random.SeedSequence([global_seed, window, phase, candidate]).generate_state(1)[0])


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class CandidateSpec:
    """One agent configuration competing in validation.

    ``agent`` is ``"reinforce"`` or a baseline name; ``params`` are the
    ReinforceConfig fields (minus seed/workers) or the baseline's
    constructor arguments other than ``n_assets``.
    """

    agent: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.agent != "reinforce" and self.agent not in BASELINES:
            raise ConfigError(f"unknown agent {self.agent!r}")
        if self.agent == "reinforce":
            extra = set(self.params) - set(ReinforceConfig.__dataclass_fields__) - {"episode_length", "init_scale"}
            if extra:
                raise ConfigError(f"unknown reinforce parameter(s) {sorted(extra)}")

    def to_dict(self) -> dict:
        return {"agent": self.agent, "params": dict(self.params)}


@dataclass(frozen=True)
class RollingSpec:
    train_bars: int
    validation_bars: int
    test_bars: int
    stride_bars: int
    paper_trade_bars: int = 0

    def __post_init__(self):
        if self.stride_bars <= 0:
            raise ConfigError("rolling stride must be > 0")
        if min(self.train_bars, self.validation_bars, self.test_bars) < 2 or self.paper_trade_bars < 0:
            raise ConfigError("rolling train/validation/test windows need >= 2 bars each")

    @property
    def span(self) -> int:
        return self.train_bars + self.validation_bars + self.test_bars + self.paper_trade_bars


@dataclass(frozen=True)
class PipelineConfig:
    data_paths: tuple[str, ...]
    symbols: tuple[str, ...]
    interval_seconds: int
    windows: dict | None = None
    rolling: RollingSpec | None = None
    schema: dict = field(default_factory=dict)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    indicators: tuple[IndicatorSpec, ...] = DEFAULT_INDICATORS
    turbulence: TurbulenceConfig | None = field(default_factory=TurbulenceConfig)
    env_kind: str = "stock"
    env: EnvConfig = field(default_factory=EnvConfig)
    candidates: tuple[CandidateSpec, ...] = (CandidateSpec("buy_and_hold"),)
    baseline: str = "equal_weight_index"
    output_dir: str = "runs/latest"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if (self.windows is None) == (self.rolling is None):
            raise ConfigError("config needs exactly one of 'windows' or 'rolling'")
        if self.windows is not None:
            validate_windows(self.windows)
        if not self.candidates:
            raise ConfigError("at least one candidate agent is required")
        if self.env_kind not in ("stock", "allocation"):
            raise ConfigError(f"unknown env_kind {self.env_kind!r}")
        wrong = [c.agent for c in self.candidates if c.agent in ALLOCATION_ONLY and self.env_kind != "allocation"]
        if wrong:
            raise ConfigError(f"agent(s) {wrong} need env_kind 'allocation'")
        if self.baseline != "equal_weight_index" and self.baseline not in self.symbols:
            raise ConfigError(f"baseline must be 'equal_weight_index' or a configured symbol, got {self.baseline!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | os.PathLike | None = None) -> "PipelineConfig":
        """Build from the JSON document; relative data paths resolve against ``base_dir``."""
        d = dict(d)
        try:
            data = d.pop("data")
            paths = data["paths"]
            if base_dir is not None:
                paths = [str((Path(base_dir) / p).resolve()) if not os.path.isabs(p) else p for p in paths]
            kw = {
                "data_paths": tuple(paths),
                "schema": dict(data.get("schema", {})),
                "symbols": tuple(d.pop("symbols")),
                "interval_seconds": int(d.pop("interval_seconds")),
            }
            if "windows" in d:
                kw["windows"] = d.pop("windows")
            if "rolling" in d:
                kw["rolling"] = RollingSpec(**d.pop("rolling"))
            if "cleaning" in d:
                kw["cleaning"] = CleaningConfig(**d.pop("cleaning"))
            if "indicators" in d:
                kw["indicators"] = tuple(IndicatorSpec.from_dict(x) for x in d.pop("indicators"))
            if "turbulence" in d:
                t = d.pop("turbulence")
                kw["turbulence"] = None if t is None else TurbulenceConfig(**t)
            if "env" in d:
                kw["env"] = EnvConfig.from_dict(d.pop("env"))
            if "candidates" in d:
                kw["candidates"] = tuple(CandidateSpec(c["agent"], dict(c.get("params", {}))) for c in d.pop("candidates"))
            for key in ("env_kind", "baseline", "output_dir", "seed", "workers"):
                if key in d:
                    kw[key] = d.pop(key)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed pipeline config: {exc}") from None
        if d:
            raise ConfigError(f"unknown config key(s): {sorted(d)}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = {
            "data": {"paths": list(self.data_paths), "schema": dict(self.schema)},
            "symbols": list(self.symbols),
            "interval_seconds": self.interval_seconds,
            "cleaning": {k: getattr(self.cleaning, k) for k in self.cleaning.__dataclass_fields__},
            "indicators": [s.to_dict() for s in self.indicators],
            "turbulence": None if self.turbulence is None else {
                "lookback": self.turbulence.lookback, "ridge_epsilon": self.turbulence.ridge_epsilon},
            "env_kind": self.env_kind,
            "env": self.env.to_dict(),
            "candidates": [c.to_dict() for c in self.candidates],
            "baseline": self.baseline,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "workers": self.workers,
        }
        if self.windows is not None:
            d["windows"] = {k: (None if v is None else list(v)) for k, v in self.windows.items()}
        if self.rolling is not None:
            d["rolling"] = dict(self.rolling.__dict__)
        return d

    def replace(self, **kw) -> "PipelineConfig":
        return PipelineConfig(**{f: getattr(self, f) for f in self.__dataclass_fields__} | kw)


def validate_windows(windows: dict) -> list[tuple[str, int, int]]:
    """Check train < validation < test < paper_trade with no overlap.

    Either ``test`` or ``paper_trade`` may be omitted or null, not both.
    Returns the resolved spans.
    """
    missing = [k for k in ("train", "validation") if not windows.get(k)]
    if missing:
        raise ConfigError(f"windows missing {missing}")
    if not windows.get("test") and not windows.get("paper_trade"):
        raise ConfigError("windows need a 'test' or a 'paper_trade' range")
    unknown = set(windows) - set(WINDOW_ORDER)
    if unknown:
        raise ConfigError(f"unknown window name(s) {sorted(unknown)}")
    spans = []
    for name in WINDOW_ORDER:
        rng = windows.get(name)
        if rng is None:
            continue
        try:
            a, b = to_epoch(rng[0]), to_epoch(rng[1], end_of_day=True)
        except (ValueError, TypeError, IndexError) as exc:
            raise ConfigError(f"window {name}: cannot parse range {rng}: {exc}") from None
        if b < a:
            raise ConfigError(f"window {name} ends before it starts: {rng}", {"window": name, "range": list(rng)})
        spans.append((name, a, b))
    for (n1, a1, b1), (n2, a2, b2) in zip(spans, spans[1:]):
        if a2 <= b1:
            raise ConfigError(
                f"windows overlap or are out of order: {n1} {list(windows[n1])} and {n2} {list(windows[n2])}",
                {"ranges": {n1: list(windows[n1]), n2: list(windows[n2])}},
            )
    return spans


# ---------------------------------------------------------------- phase 1


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def build_panel(cfg: PipelineConfig) -> MarketPanel:
    """Load, clean, and add indicator and turbulence columns."""
    bars = load_many(cfg.data_paths, cfg.schema)
    panel = align_and_clean(bars, cfg.symbols, cfg.interval_seconds, cfg.cleaning)
    if panel.meta.get("cleaning", {}).get("dropped"):
        raise DataError(f"symbols dropped during cleaning: {panel.meta['cleaning']['dropped']}")
    panel = add_indicators(panel, cfg.indicators)
    if cfg.turbulence is not None:
        panel = add_turbulence(panel, cfg.turbulence)
    return panel


def baseline_series(panel: MarketPanel, cfg: PipelineConfig, start_value: float) -> np.ndarray:
    """Passive benchmark over a window: equal-weight price index or one symbol."""
    close = panel.close
    if cfg.baseline == "equal_weight_index":
        rel = (close / close[0]).mean(axis=1)
    else:
        j = panel.symbols.index(cfg.baseline)
        rel = close[:, j] / close[0, j]
    return start_value * rel


# ---------------------------------------------------------------- agents


class WindowEnvFactory:
    """Picklable ``seed -> env`` factory for training.

    With ``episode_length`` set, each seed picks its own contiguous
    sub-window of the panel, so a batch sees different stretches of data.
    """

    def __init__(self, panel: MarketPanel, env_cfg: EnvConfig, kind: str, episode_length: int | None = None):
        self.panel = panel
        self.env_cfg = env_cfg
        self.kind = kind
        self.episode_length = episode_length

    def __call__(self, seed: int):
        T = self.panel.n_steps
        L = self.episode_length
        if L is None or L + 1 >= T - self.env_cfg.start_step:
            return make_env(self.kind, self.panel, self.env_cfg)
        start = int(np.random.default_rng(seed).integers(self.env_cfg.start_step, T - L))
        return make_env(self.kind, self.panel.slice_rows(start, start + L + 1),
                        EnvConfig(**{**self.env_cfg.__dict__, "start_step": 0}))


def make_agent(spec: CandidateSpec, panel: MarketPanel, cfg: PipelineConfig, seed: int):
    """Train (reinforce) or instantiate (baseline) one candidate on ``panel``.

    Returns ``(policy, learning_curve)``.
    """
    n = panel.n_symbols
    if spec.agent != "reinforce":
        return baseline_from_dict({"name": spec.agent, "n_assets": n, **spec.params}), []
    params = dict(spec.params)
    episode_length = params.pop("episode_length", None)
    init_scale = params.pop("init_scale", 0.0)
    rc = ReinforceConfig(**{"workers": cfg.workers, **params, "seed": seed})
    factory = WindowEnvFactory(panel, cfg.env, cfg.env_kind, episode_length)
    probe = make_env(cfg.env_kind, panel, cfg.env)
    policy = LinearPolicy(probe.observation_dim, n, rc.noise_start, init_scale, seed)
    result = train_reinforce(factory, policy, rc)
    return result.policy, result.learning_curve


def run_episode(policy, panel: MarketPanel, cfg: PipelineConfig, seed: int) -> Trajectory:
    return evaluate_policy(policy, make_env(cfg.env_kind, panel, cfg.env), seed)


class PaperTrader:
    """Streams bars one at a time through a fresh environment with a frozen policy.

    The trader only ever sees the current bar; the next bar's arrival
    settles the previous decision. It uses the same env step as backtests.
    """

    def __init__(self, policy, cfg: PipelineConfig, seed: int):
        if hasattr(policy, "deterministic"):
            policy = policy.deterministic()
        self.policy = copy.deepcopy(policy)
        if hasattr(self.policy, "reset"):
            self.policy.reset()
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.seed = seed

    def run(self, panel: MarketPanel) -> Trajectory:
        env = make_env(self.cfg.env_kind, panel, self.cfg.env)
        # rollout drives env.step bar by bar; a live feed would call the same loop per arrival
        return rollout(env, self.policy, self.seed)


# ---------------------------------------------------------------- result


@dataclass
class WindowResult:
    window: int
    validation: list[PerformanceReport]
    selected: int
    selected_candidate: CandidateSpec
    test: PerformanceReport | None
    paper_trade: PerformanceReport | None
    learning_curves: dict[str, list[float]]
    policy: object
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "validation": [r.to_dict() for r in self.validation],
            "selected": self.selected,
            "selected_candidate": self.selected_candidate.to_dict(),
            "test": None if self.test is None else self.test.to_dict(),
            "paper_trade": None if self.paper_trade is None else self.paper_trade.to_dict(),
            "learning_curves": self.learning_curves,
            "policy": self.policy.to_dict() if hasattr(self.policy, "to_dict") else repr(self.policy),
            "checkpoint": self.checkpoint,
        }


@dataclass
class PipelineResult:
    windows: list[WindowResult]
    manifest: dict
    stitched_values: np.ndarray | None = None
    stitched_timestamps: np.ndarray | None = None

    @property
    def validation(self):
        return self.windows[0].validation

    @property
    def test(self):
        return self.windows[0].test

    @property
    def paper_trade(self):
        return self.windows[0].paper_trade

    @property
    def selected(self):
        return self.windows[0].selected

    def payload(self) -> dict:
        """Everything except wall-clock and location fields; equal across reproductions."""
        d = {"windows": [w.to_dict() for w in self.windows]}
        for w in d["windows"]:
            w.pop("checkpoint", None)
        if self.stitched_values is not None:
            d["stitched_values"] = [float(v) for v in self.stitched_values]
            d["stitched_timestamps"] = [int(t) for t in self.stitched_timestamps]
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.payload(), sort_keys=True).encode()).hexdigest()


def _sharpe_key(rep: PerformanceReport):
    s = rep.sharpe_ratio
    return (-np.inf if s is None else s, rep.max_drawdown)


def select_candidate(reports: Sequence[PerformanceReport]) -> int:
    """Highest validation Sharpe; ties go to the shallower drawdown, then the lower index."""
    best = 0
    for i, rep in enumerate(reports[1:], start=1):
        if _sharpe_key(rep) > _sharpe_key(reports[best]):
            best = i
    return best


def phase_report(traj: Trajectory, panel: MarketPanel, cfg: PipelineConfig, label: str) -> PerformanceReport:
    lo = int(np.searchsorted(panel.timestamps, traj.timestamps[0]))
    window = panel.slice_rows(lo, lo + len(traj.timestamps))
    base = baseline_series(window, cfg, traj.values[0])
    return build_report(traj, base, panel.periods_per_year, baseline_timestamps=window.timestamps,
                        label=label, baseline_label=cfg.baseline)


def run_window(
    parts: dict[str, MarketPanel],
    cfg: PipelineConfig,
    window: int = 0,
    output_dir: Path | None = None,
) -> WindowResult:
    """Phases 2-6 on pre-split panels keyed by window name.

    ``parts["retrain"]`` must be the contiguous train+validation slice.
    """
    g = cfg.seed
    val_reports, curves = [], {}
    for i, spec in enumerate(cfg.candidates):
        policy, curve = make_agent(spec, parts["train"], cfg, phase_seed(g, window, PHASE_TRAIN, i))
        if curve:
            curves[f"candidate_{i}"] = curve
        traj = run_episode(policy, parts["validation"], cfg, phase_seed(g, window, PHASE_VALIDATE, i))
        val_reports.append(phase_report(traj, parts["validation"], cfg, f"{spec.agent}[{i}]"))
        logger.info("window %d candidate %d (%s) validation sharpe %s", window, i, spec.agent,
                    val_reports[-1].sharpe_ratio)

    sel = select_candidate(val_reports)
    spec = cfg.candidates[sel]
    policy, curve = make_agent(spec, parts["retrain"], cfg, phase_seed(g, window, PHASE_RETRAIN, sel))
    if curve:
        curves["retrain"] = curve
    test_report = None
    if parts.get("test") is not None:
        test_traj = run_episode(policy, parts["test"], cfg, phase_seed(g, window, PHASE_TEST, sel))
        test_report = phase_report(test_traj, parts["test"], cfg, spec.agent)

    paper_report = None
    if parts.get("paper_trade") is not None:
        trader = PaperTrader(policy, cfg, phase_seed(g, window, PHASE_PAPER, sel))
        paper_traj = trader.run(parts["paper_trade"])
        paper_report = phase_report(paper_traj, parts["paper_trade"], cfg, spec.agent)

    result = WindowResult(window, val_reports, sel, spec, test_report, paper_report, curves, policy)
    if output_dir is not None:
        _write_window(result, output_dir, cfg)
    return result


def _write_window(res: WindowResult, out: Path, cfg: PipelineConfig) -> None:
    from .plotting import plot_learning_curve, plot_report

    out.mkdir(parents=True, exist_ok=True)
    for i, rep in enumerate(res.validation):
        d = out / "validation" / f"candidate_{i}"
        d.mkdir(parents=True, exist_ok=True)
        rep.to_json(d / "report.json")
        rep.write_cumret_csv(d / "cumret.csv")
    for phase, rep in (("test", res.test), ("papertrade", res.paper_trade)):
        if rep is None:
            continue
        d = out / phase
        d.mkdir(parents=True, exist_ok=True)
        rep.to_json(d / "report.json")
        rep.write_cumret_csv(d / "cumret.csv")
        plot_report(rep, d / "cumret.png", title=f"{phase}: {rep.label} vs {rep.baseline_label}")
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    res.checkpoint = str(save_policy(res.policy, ckdir / "selected.json", {
        "candidate": res.selected_candidate.to_dict(), "selected_index": res.selected, "env_kind": cfg.env_kind, "env": cfg.env.to_dict(),
        "window": res.window}))
    if res.learning_curves:
        plot_learning_curve(res.learning_curves, out / "learning_curve.png")
    reps = [r for r in (res.test, res.paper_trade) if r is not None]
    columns = {reps[0].label: tuple(r.strategy for r in reps),
               reps[0].baseline_label: tuple(r.baseline for r in reps)}
    (out / "table.txt").write_text(render_table(columns) + "\n")


# ---------------------------------------------------------------- orchestration


@contextlib.contextmanager
def output_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockHeld(f"output directory {directory} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _split_by_windows(panel: MarketPanel, windows: dict) -> dict[str, MarketPanel]:
    names = [n for n in WINDOW_ORDER if windows.get(n) is not None]
    slices = split_panel(panel, [tuple(windows[n]) for n in names])
    parts = dict(zip(names, slices))
    parts["retrain"] = split_panel(panel, [(windows["train"][0], windows["validation"][1])])[0]
    return parts


def _manifest(cfg: PipelineConfig, panel: MarketPanel, out: Path | None, result_digest: str) -> dict:
    outputs = {}
    if out is not None:
        for p in sorted(out.rglob("*")):
            if p.is_file() and p.suffix in (".json", ".csv", ".txt") and p.name != "manifest.json":
                outputs[str(p.relative_to(out))] = file_sha256(p)
    return {
        "format": "marketverse-manifest",
        "version": 1,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.to_dict(),
        "data_files": [{"path": p, "sha256": file_sha256(p)} for p in cfg.data_paths],
        "panel_checksum": panel.checksum(),
        "seed_scheme": "SeedSequence([seed, window, phase, candidate]); phases train=1 validate=2 retrain=3 test=4 paper=5",
        "result_digest": result_digest,
        "outputs": outputs,
    }


def run_pipeline(cfg: PipelineConfig, output_dir: str | os.PathLike | None = None, write: bool = True) -> PipelineResult:
    """Run phases 1-6 for a fixed window layout.

    Writes reports, figures, checkpoints and ``manifest.json`` under the
    output directory unless ``write`` is false.
    """
    if cfg.windows is None:
        raise ConfigError("run_pipeline needs explicit windows; use run_rolling for rolling specs")
    validate_windows(cfg.windows)
    out = Path(output_dir or cfg.output_dir) if write else None
    with (output_lock(out) if out is not None else contextlib.nullcontext()):
        panel = build_panel(cfg)
        parts = _split_by_windows(panel, cfg.windows)
        win = run_window(parts, cfg, 0, out)
        result = PipelineResult([win], {})
        if out is not None:
            (out / "result.json").write_text(json.dumps(result.payload(), sort_keys=True))
            result.manifest = _manifest(cfg, panel, out, result.digest())
            (out / "manifest.json").write_text(json.dumps(result.manifest, indent=1))
    return result


def rolling_windows(panel: MarketPanel, spec: RollingSpec) -> list[dict[str, tuple[int, int]]]:
    """Row-based windows advanced by ``stride_bars``, as inclusive timestamp ranges."""
    T = panel.n_steps
    if spec.span > T:
        raise DataError(f"data span of {T} bars is shorter than one rolling window ({spec.span} bars)")
    ts = panel.timestamps
    out = []
    k = 0
    while k * spec.stride_bars + spec.span <= T:
        o = k * spec.stride_bars
        bounds = {}
        for name, length in (("train", spec.train_bars), ("validation", spec.validation_bars),
                             ("test", spec.test_bars), ("paper_trade", spec.paper_trade_bars)):
            if length:
                bounds[name] = (int(ts[o]), int(ts[o + length - 1]))
                o += length
        out.append(bounds)
        k += 1
    return out


def stitch(segments: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Chain value series so each segment continues from the previous final value."""
    ts_out, v_out = [], []
    level = None
    for ts, vals in segments:
        vals = np.asarray(vals, dtype=np.float64)
        if level is None:
            ts_out.append(np.asarray(ts))
            v_out.append(vals)
        else:
            scaled = vals * (level / vals[0])
            ts_out.append(np.asarray(ts)[1:])
            v_out.append(scaled[1:])
        level = v_out[-1][-1]
    return np.concatenate(ts_out), np.concatenate(v_out)


def run_rolling(cfg: PipelineConfig, output_dir: str | os.PathLike | None = None, write: bool = True) -> PipelineResult:
    """Repeat phases 2-6 over rolling windows and stitch the out-of-sample series."""
    if cfg.rolling is None:
        raise ConfigError("run_rolling needs a 'rolling' spec")
    out = Path(output_dir or cfg.output_dir) if write else None
    with (output_lock(out) if out is not None else contextlib.nullcontext()):
        panel = build_panel(cfg)
        results = []
        for k, bounds in enumerate(rolling_windows(panel, cfg.rolling)):
            parts = _split_by_windows(panel, bounds)
            sub = None if out is None else out / f"window_{k:03d}"
            results.append(run_window(parts, cfg, k, sub))
        ts, vals = stitch([(r.test.timestamps, r.test.values) for r in results])
        result = PipelineResult(results, {}, vals, ts)
        if out is not None:
            with open(out / "stitched_cumret.csv", "w") as fh:
                fh.write("timestamp,value\n")
                for t, v in zip(ts, vals):
                    fh.write(f"{int(t)},{float(v)!r}\n")
            (out / "result.json").write_text(json.dumps(result.payload(), sort_keys=True))
        result.manifest = _manifest(cfg, panel, out, result.digest())
        if out is not None:
            (out / "manifest.json").write_text(json.dumps(result.manifest, indent=1))
    return result


def run(cfg: PipelineConfig, output_dir=None, write: bool = True) -> PipelineResult:
    return run_rolling(cfg, output_dir, write) if cfg.rolling is not None else run_pipeline(cfg, output_dir, write)


def rerun_from_manifest(manifest_path, output_dir) -> tuple[PipelineResult, bool]:
    """Re-execute a run from its manifest and report whether it reproduced bit for bit.

    Data files must still match their recorded checksums.
    """
    manifest = json.loads(Path(manifest_path).read_text())
    for entry in manifest["data_files"]:
        if file_sha256(entry["path"]) != entry["sha256"]:
            raise DataError(f"data file changed since the run: {entry['path']}")
    cfg = PipelineConfig.from_dict(manifest["config"])
    result = run(cfg, output_dir)
    same = result.manifest["result_digest"] == manifest["result_digest"] and \
        result.manifest["outputs"] == manifest["outputs"]
    return result, same
