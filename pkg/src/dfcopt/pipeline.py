"""End-to-end orchestration: configuration, BRI + PPO design runs, artifacts, batch studies."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import DEFAULT_BOUNDS, Layout, ParamBounds, TemplateSpec
from .env import EnvConfig, FilterEnv, bri_initialize
from .gnn import GATConfig, GNNOracle, SurrogateTrainConfig
from .metrics import PassbandSpec, RewardBreakdown, RewardConfig, reward_init, response_metrics, with_total
from .plots import cdf_svg, layout_svg, s21_svg
from .ppo import PPOConfig, train_rldfcdo
from .surrogate import AnalyticOracle, FrequencyGrid, SParams, SurrogateConfig

log = logging.getLogger(__name__)

EXIT_SUCCESS, EXIT_ERROR, EXIT_INCOMPLETE = 0, 1, 2
MAX_BANDS = 2
TASK_CENTER_RANGE = (230.0, 370.0)
# (low, high) bandwidth in GHz and relative weight
BANDWIDTH_BUCKETS = (((10.0, 19.0), 500), ((20.0, 40.0), 200), ((41.0, 59.0), 300), ((60.0, 80.0), 500))
DUAL_BAND_SPECS = (((240.0, 250.0), (300.0, 310.0)),
                   ((240.0, 260.0), (300.0, 320.0)),
                   ((240.0, 270.0), (300.0, 330.0)),
                   ((240.0, 280.0), (300.0, 340.0)))


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Every tunable default in one tree; JSON files override any subset of it."""

    bounds: ParamBounds = DEFAULT_BOUNDS
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    gat: GATConfig = field(default_factory=GATConfig)
    surrogate_train: SurrogateTrainConfig = field(default_factory=SurrogateTrainConfig)
    template: TemplateSpec = field(default_factory=TemplateSpec)
    bri_k: int = 2000
    rounds: int = 10
    steps_per_round: int = 5000
    gnn_checkpoint: str | None = None
    workers: int = 1

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        return _build(cls, data, "config")


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, list) else v


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ValueError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        default = f.default if f.default is not dataclasses.MISSING else (
            f.default_factory() if f.default_factory is not dataclasses.MISSING else None)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _tuplify(value)
    return cls(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def make_oracle(cfg: RunConfig, kind: str | None = None):
    kind = kind or cfg.env.oracle
    if kind == "analytic":
        return AnalyticOracle(cfg.surrogate, cfg.grid)
    if kind == "gnn":
        if not cfg.gnn_checkpoint:
            raise ValueError("the gnn oracle needs gnn_checkpoint in the config")
        return GNNOracle.from_checkpoint(cfg.gnn_checkpoint, grid=cfg.grid, bounds=cfg.bounds,
                                         surrogate_cfg=cfg.surrogate)
    raise ValueError(f"unknown oracle {kind!r}")


# -- tasks -------------------------------------------------------------------

@dataclass(frozen=True)
class DesignTask:
    bands: tuple[tuple[float, float], ...]
    template: TemplateSpec = field(default_factory=TemplateSpec)
    oracle: str = "analytic"
    seed: int = 0
    rounds: int = 10
    steps_per_round: int = 5000
    bri_k: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple((float(lo), float(hi)) for lo, hi in self.bands))
        if not 1 <= len(self.bands) <= MAX_BANDS:
            raise ValueError(f"a task has 1 to {MAX_BANDS} passbands, got {len(self.bands)}")
        PassbandSpec(self.bands)
        if self.rounds < 0 or self.steps_per_round < 0 or self.bri_k < 1:
            raise ValueError("rounds and steps_per_round must be >= 0 and bri_k >= 1")

    def check_grid(self, grid: FrequencyGrid) -> None:
        for lo, hi in self.bands:
            if lo < grid.f_min or hi > grid.f_max:
                raise ValueError(f"band {(lo, hi)} outside the grid [{grid.f_min}, {grid.f_max}]")

    @property
    def spec(self) -> PassbandSpec:
        return PassbandSpec(self.bands)

    @classmethod
    def from_config(cls, bands, cfg: RunConfig, seed: int = 0, oracle: str | None = None, **overrides) -> DesignTask:
        base = dict(template=cfg.template, oracle=oracle or cfg.env.oracle, seed=seed, rounds=cfg.rounds,
                    steps_per_round=cfg.steps_per_round, bri_k=cfg.bri_k)
        base.update(overrides)
        return cls(bands, **base)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def bucket_counts(n_tasks: int, weights: Sequence[float] | None = None) -> list[int]:
    """Largest-remainder apportionment of ``n_tasks`` to the bandwidth buckets (ties go to the first)."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    w = np.asarray(weights if weights is not None else [b[1] for b in BANDWIDTH_BUCKETS], dtype=float)
    quota = n_tasks * w / w.sum()
    counts = np.floor(quota).astype(int)
    rem = quota - counts
    for k in sorted(range(len(w)), key=lambda i: (-rem[i], i))[: n_tasks - counts.sum()]:
        counts[k] += 1
    return counts.tolist()


def sample_single_band(rng: np.random.Generator, bandwidth_range: tuple[float, float],
                       centers: tuple[float, float] = TASK_CENTER_RANGE) -> tuple[float, float]:
    bw = float(rng.uniform(*bandwidth_range))
    c = float(rng.uniform(centers[0] + bw / 2, centers[1] - bw / 2))
    return (c - bw / 2, c + bw / 2)


def sample_tasks(n_tasks: int, seed: int, cfg: RunConfig = RunConfig(), **overrides) -> list[tuple[int, DesignTask]]:
    """Single-band tasks per the bandwidth buckets; returns ``(bucket index, task)`` pairs."""
    out = []
    i = 0
    for b, count in enumerate(bucket_counts(n_tasks)):
        for _ in range(count):
            band = sample_single_band(np.random.default_rng((seed, i)), BANDWIDTH_BUCKETS[b][0])
            out.append((b, DesignTask.from_config([band], cfg, seed=seed * 1000 + i, **overrides)))
            i += 1
    return out


# -- single design run --------------------------------------------------------

def evaluate_layout(layout: Layout, spec: PassbandSpec, cfg: RunConfig = RunConfig(), oracle=None):
    """Oracle response and full breakdown of one layout (the single source of final numbers)."""
    oracle = oracle if oracle is not None else make_oracle(cfg)
    s = oracle(layout)
    m = with_total(response_metrics(s, spec, cfg.reward.iou_aggregate), cfg.reward)
    return s, m


@dataclass
class RunLog:
    task: dict
    config: dict
    status: str = "running"
    exit_code: int = EXIT_ERROR
    bri: dict | None = None
    pre: dict | None = None
    post: dict | None = None
    rounds: list[dict] = field(default_factory=list)
    steps: int = 0
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def pre_iou(self) -> float | None:
        return None if self.pre is None else self.pre["iou_percent"]

    @property
    def post_iou(self) -> float | None:
        return None if self.post is None else self.post["iou_percent"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pre_iou"], d["post_iou"] = self.pre_iou, self.post_iou
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunLog:
        d = json.loads(text)
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


def default_run_dir(seed: int, root: str | Path = "runs") -> Path:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path(root) / f"{stamp}-{seed}"


def design_end_to_end(task: DesignTask, cfg: RunConfig = RunConfig(), out_dir: str | Path | None = None,
                      oracle=None) -> RunLog:
    """BRI, then chained PPO rounds; writes layouts, responses, plots and a RunLog into ``out_dir``.

    Errors are caught and recorded: the RunLog then has ``exit_code`` 1.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else default_run_dir(task.seed)
    out.mkdir(parents=True, exist_ok=True)
    run = RunLog(task=task.to_dict(), config=cfg.to_dict())
    try:
        task.check_grid(cfg.grid)
        oracle = oracle if oracle is not None else make_oracle(cfg, task.oracle)
        spec = task.spec
        bri = bri_initialize(task.template, spec, task.bri_k, task.seed, oracle, cfg.reward, cfg.bounds)
        t_bri = time.perf_counter()
        s_pre, pre = evaluate_layout(bri.layout, spec, cfg, oracle)
        run.bri = {"score": bri.score, "index": bri.index, "k": task.bri_k}
        run.pre = pre.to_dict()
        best = bri.layout
        if task.rounds > 0:
            planned = cfg.env.planned_total_steps or task.rounds * task.steps_per_round
            env_cfg = replace(cfg.env, planned_total_steps=planned)

            def factory():
                return FilterEnv(spec, oracle, env_cfg, cfg.reward, cfg.bounds, task.template, task.seed, task.bri_k)

            result = train_rldfcdo(factory, task.rounds, task.steps_per_round, cfg.ppo, initial=bri,
                                   seed=task.seed)
            best = result.best_layout
            run.rounds = [{"round": r, "best_score": s} for r, s in enumerate(result.round_best)]
            run.steps = result.steps
            (out / "curves.csv").write_text(result.curves_csv())
            run.files["curves"] = "curves.csv"
        t_train = time.perf_counter()
        s_post, post = evaluate_layout(best, spec, cfg, oracle)
        run.post = post.to_dict()
        _write_artifacts(out, run, bri.layout, s_pre, best, s_post, spec, cfg)
        ok = post.iou_percent >= cfg.env.success_iou and post.insertion_loss_db <= cfg.env.success_loss_db
        run.status = "success" if ok else "completed"
        run.exit_code = EXIT_SUCCESS if ok else EXIT_INCOMPLETE
        run.timings = {"bri_s": t_bri - t0, "train_s": t_train - t_bri, "total_s": time.perf_counter() - t0}
    except Exception as exc:  # recorded, not raised: the caller reads exit_code
        run.status = "error"
        run.exit_code = EXIT_ERROR
        run.error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"
        run.timings["total_s"] = time.perf_counter() - t0
        log.error("design run failed: %s", exc)
    run.files["runlog"] = "runlog.json"
    (out / "runlog.json").write_text(run.to_json())
    return run


def _write_artifacts(out: Path, run: RunLog, pre_layout: Layout, s_pre: SParams, layout: Layout,
                     s_post: SParams, spec: PassbandSpec, cfg: RunConfig) -> None:
    files = {
        "layout_initial": ("layout_initial.json", pre_layout.to_json()),
        "layout": ("layout.json", layout.to_json()),
        "s21_initial": ("s21_initial.csv", s_pre.to_csv()),
        "s21": ("s21.csv", s_post.to_csv()),
        "layout_initial_svg": ("layout_initial.svg", layout_svg(pre_layout, cfg.bounds, "initial layout")),
        "layout_svg": ("layout.svg", layout_svg(layout, cfg.bounds, "optimized layout")),
        "s21_svg": ("s21.svg", s21_svg([("initial", s_pre), ("optimized", s_post)], spec.bands,
                                        f"IOU {run.pre['iou_percent']:.2f}% / {run.post['iou_percent']:.2f}%")),
    }
    for key, (name, text) in files.items():
        (out / name).write_text(text)
        run.files[key] = name


# -- batch studies ------------------------------------------------------------

TASK_COLUMNS = ("task", "bucket", "lo_ghz", "hi_ghz", "bandwidth_ghz", "status", "exit_code", "bri_score",
                "pre_iou", "iou", "loss_db", "reward_init", "total", "seconds")
CDF_METRICS = ("iou", "loss_db", "reward_init")


def _run_batch_task(args):
    i, bucket, task, cfg, out = args
    run = design_end_to_end(task, cfg, out)
    lo, hi = task.bands[0]
    row = {"task": i, "bucket": bucket, "lo_ghz": lo, "hi_ghz": hi, "bandwidth_ghz": hi - lo,
           "status": run.status, "exit_code": run.exit_code, "bri_score": None, "pre_iou": None, "iou": None,
           "loss_db": None, "reward_init": None, "total": None, "seconds": run.timings.get("total_s")}
    if run.post is not None:
        m = RewardBreakdown.from_dict(run.post)
        row.update(bri_score=run.bri["score"], pre_iou=run.pre_iou, iou=m.iou_percent,
                   loss_db=m.insertion_loss_db, reward_init=reward_init(m, cfg.reward), total=run.post["total"])
    return row


def empirical_cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    v = np.sort(np.asarray(values, dtype=float))
    return [(float(x), (k + 1) / len(v)) for k, x in enumerate(v)]


@dataclass
class BatchSummary:
    rows: list[dict]
    cdf: dict[str, list[tuple[float, float]]]
    mean_iou: float
    mean_loss_db: float
    n_failed: int

    def tasks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TASK_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                        for k in TASK_COLUMNS})
        return buf.getvalue()

    def cdf_csv(self) -> str:
        lines = ["metric,value,cumulative"]
        for metric in CDF_METRICS:
            lines += [f"{metric},{v!r},{c!r}" for v, c in self.cdf[metric]]
        return "\n".join(lines) + "\n"

    def summary_dict(self) -> dict:
        return {"n_tasks": len(self.rows), "n_failed": self.n_failed, "mean_iou": self.mean_iou,
                "mean_loss_db": self.mean_loss_db}


def summarize(rows: list[dict]) -> BatchSummary:
    done = [r for r in rows if r["iou"] is not None]
    cdf = {m: empirical_cdf([r[m] for r in done]) if done else [] for m in CDF_METRICS}
    mean = (lambda k: float(np.mean([r[k] for r in done]))) if done else (lambda k: float("nan"))
    return BatchSummary(rows, cdf, mean("iou"), mean("loss_db"), len(rows) - len(done))


def batch_evaluate(n_tasks: int, seed: int = 0, cfg: RunConfig = RunConfig(), out_dir: str | Path | None = None,
                   workers: int | None = None, **task_overrides) -> BatchSummary:
    """Sample tasks over the bandwidth buckets, design each, and aggregate per-task metrics and CDFs."""
    out = Path(out_dir) if out_dir is not None else default_run_dir(seed)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, b, task, cfg, out / f"task-{i:04d}")
            for i, (b, task) in enumerate(sample_tasks(n_tasks, seed, cfg, **task_overrides))]
    workers = workers or cfg.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_batch_task, jobs))
    else:
        rows = [_run_batch_task(j) for j in jobs]
    summary = summarize(rows)
    (out / "tasks.csv").write_text(summary.tasks_csv())
    (out / "cdf.csv").write_text(summary.cdf_csv())
    (out / "summary.json").write_text(json.dumps(summary.summary_dict(), indent=2) + "\n")
    (out / "config.json").write_text(cfg.to_json())
    labels = {"iou": "passband IOU (%)", "loss_db": "insertion loss (dB)", "reward_init": "initialization score"}
    for metric in CDF_METRICS:
        if summary.cdf[metric]:
            (out / f"cdf_{metric}.svg").write_text(cdf_svg([v for v, _ in summary.cdf[metric]], labels[metric]))
    return summary


def read_tasks_csv(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (float(v) if k in ("iou", "loss_db", "reward_init") and v != "" else v) for k, v in r.items()})
    return rows
