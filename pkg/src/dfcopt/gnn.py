"""Graph-attention predictor of complex s21 from a resonator layout.

Pipeline: layout -> graph (nodes = resonators, edges = pairs closer than the
coupling threshold, plus self-loops) -> 4 GAT layers with 3 heads each ->
concatenated port-node embeddings ``G`` -> two dense heads giving the real and
imaginary parts of s21 on the frequency grid.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .circuit import DEFAULT_BOUNDS, Layout, ParamBounds, TemplateSpec, sample_random_layout, state_matrix
from .nn import Adam, Params, add_dense, dense, load_checkpoint, save_checkpoint
from .surrogate import (AnalyticOracle, FrequencyGrid, SParams, SurrogateConfig, coupling_edges,
                        edge_gaps)

log = logging.getLogger(__name__)

MASK_BIAS = -1e30


@dataclass(frozen=True)
class CircuitGraph:
    node_features: np.ndarray       # (N, 9) normalized
    adjacency: np.ndarray           # (N, N) bool, symmetric, self-loops on
    edges: tuple[tuple[int, int], ...]
    ports: tuple[int, int]

    @property
    def N(self) -> int:
        return self.node_features.shape[0]


def layout_to_graph(layout: Layout, bounds: ParamBounds = DEFAULT_BOUNDS,
                    surrogate_cfg: SurrogateConfig = SurrogateConfig()) -> CircuitGraph:
    """Nodes carry the normalized state rows; edges follow the analytic model's coupling rule."""
    n = layout.N
    edges = coupling_edges(edge_gaps(layout), surrogate_cfg.g_threshold)
    adj = np.eye(n, dtype=bool)
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    return CircuitGraph(state_matrix(layout, bounds), adj, edges, (0, n - 1))


@dataclass(frozen=True)
class GATConfig:
    in_dim: int = 9
    n_layers: int = 4
    n_heads: int = 3
    d_head: int = 32
    head_hidden: int = 128
    n_out: int = 256
    slope: float = 0.2


def init_gat_params(cfg: GATConfig = GATConfig(), rng_seed: int = 0) -> Params:
    rng = np.random.default_rng(rng_seed)
    p = Params()
    d_in = cfg.in_dim
    for layer in range(cfg.n_layers):
        for h in range(cfg.n_heads):
            add_dense(p, f"gat{layer}.h{h}", d_in, cfg.d_head, rng)
            del p[f"gat{layer}.h{h}.b"]
            p.add(f"gat{layer}.h{h}.a_src", rng.normal(0, 0.1, size=(cfg.d_head, 1)))
            p.add(f"gat{layer}.h{h}.a_dst", rng.normal(0, 0.1, size=(cfg.d_head, 1)))
        d_in = cfg.d_head
    for head in ("re", "im"):
        add_dense(p, f"{head}.0", 2 * cfg.d_head, cfg.head_hidden, rng)
        add_dense(p, f"{head}.1", cfg.head_hidden, cfg.n_out, rng)
    return p


def _as_batch(features, adjacency):
    x = np.asarray(features, dtype=float)
    a = np.asarray(adjacency, dtype=bool)
    if x.ndim == 2:
        x, a = x[None], a[None]
    return x, a


def gat_forward(features, adjacency, params: Params, cfg: GATConfig = GATConfig(),
                ports: tuple[int, int] | None = None, return_attention: bool = False):
    """Run the GAT stack on a batch of same-size graphs.

    ``features`` is (B, N, in_dim) or (N, in_dim); ``adjacency`` matching
    booleans with self-loops. Returns ``(node_embeddings, G)`` and, if asked,
    the per-layer list of per-head attention matrices (B, N, N).
    """
    x, a = _as_batch(features, adjacency)
    if x.shape[-1] != cfg.in_dim:
        raise ad.ShapeError(f"gat_forward: features have width {x.shape[-1]}, expected {cfg.in_dim}")
    if a.shape != x.shape[:2] + (x.shape[1],):
        raise ad.ShapeError(f"gat_forward: adjacency {a.shape} does not match features {x.shape}")
    n = x.shape[1]
    ports = ports if ports is not None else (0, n - 1)
    bias = Tensor(np.where(a, 0.0, MASK_BIAS))
    h = Tensor(x)
    attention = []
    for layer in range(cfg.n_layers):
        outs, att = [], []
        for k in range(cfg.n_heads):
            pre = f"gat{layer}.h{k}"
            hp = ad.matmul(h, params[f"{pre}.W"])
            s_src = ad.matmul(hp, params[f"{pre}.a_src"])
            s_dst = ad.swap_last(ad.matmul(hp, params[f"{pre}.a_dst"]))
            e = ad.leaky_relu(ad.add(s_src, s_dst), cfg.slope)
            alpha = ad.softmax(ad.add(e, bias), axis=-1)
            outs.append(ad.leaky_relu(ad.matmul(alpha, hp), cfg.slope))
            att.append(alpha.value)
        total = outs[0]
        for o in outs[1:]:
            total = ad.add(total, o)
        h = ad.scale(total, 1.0 / cfg.n_heads)
        attention.append(att)
    g = ad.concat([ad.take(h, ports[0], axis=1), ad.take(h, ports[1], axis=1)], axis=-1)
    if return_attention:
        return h, g, attention
    return h, g


def predict_heads(g: Tensor, params: Params) -> tuple[Tensor, Tensor]:
    out = []
    for head in ("re", "im"):
        hidden = ad.relu(dense(g, params, f"{head}.0"))
        out.append(dense(hidden, params, f"{head}.1"))
    return out[0], out[1]


def predict_batch(features, adjacency, params: Params, cfg: GATConfig = GATConfig()):
    _, g = gat_forward(features, adjacency, params, cfg)
    return predict_heads(g, params)


def predict_s21(layout: Layout, params: Params, cfg: GATConfig = GATConfig(),
                grid: FrequencyGrid = FrequencyGrid(), bounds: ParamBounds = DEFAULT_BOUNDS,
                surrogate_cfg: SurrogateConfig = SurrogateConfig()) -> SParams:
    graph = layout_to_graph(layout, bounds, surrogate_cfg)
    with ad.no_grad():
        re, im = predict_batch(graph.node_features, graph.adjacency, params, cfg)
    return SParams(grid, re.value[0] + 1j * im.value[0])


@dataclass
class GNNOracle:
    """Callable layout -> SParams backed by trained GAT parameters."""

    params: Params
    cfg: GATConfig = field(default_factory=GATConfig)
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    bounds: ParamBounds = DEFAULT_BOUNDS
    surrogate_cfg: SurrogateConfig = field(default_factory=SurrogateConfig)

    def __call__(self, layout: Layout) -> SParams:
        return predict_s21(layout, self.params, self.cfg, self.grid, self.bounds, self.surrogate_cfg)

    @classmethod
    def from_checkpoint(cls, path: str | Path, **kwargs) -> GNNOracle:
        values, meta = load_checkpoint(path)
        cfg = GATConfig(**meta["gat"]) if "gat" in meta else GATConfig()
        params = init_gat_params(cfg)
        params.load(values)
        return cls(params, cfg, **kwargs)


# -- data -------------------------------------------------------------------

@dataclass
class Dataset:
    layouts: list[Layout]
    responses: list[SParams]

    def __len__(self) -> int:
        return len(self.layouts)

    def arrays(self, bounds: ParamBounds = DEFAULT_BOUNDS, surrogate_cfg: SurrogateConfig = SurrogateConfig()):
        graphs = [layout_to_graph(L, bounds, surrogate_cfg) for L in self.layouts]
        sizes = {g.N for g in graphs}
        if len(sizes) != 1:
            raise ValueError(f"all layouts in a training set must share N, got {sorted(sizes)}")
        x = np.stack([g.node_features for g in graphs])
        a = np.stack([g.adjacency for g in graphs])
        y = np.stack([s.s21 for s in self.responses])
        return x, a, y.real.copy(), y.imag.copy()

    def to_jsonl(self) -> str:
        lines = [json.dumps({"layout": L.to_dict(), "grid": [s.grid.f_min, s.grid.f_max, s.grid.n_points],
                             "s21_re": s.s21.real.tolist(), "s21_im": s.s21.imag.tolist()})
                 for L, s in zip(self.layouts, self.responses)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> Dataset:
        layouts, responses = [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            layouts.append(Layout.from_dict(rec["layout"]))
            s21 = np.array(rec["s21_re"]) + 1j * np.array(rec["s21_im"])
            responses.append(SParams(FrequencyGrid(*rec["grid"]), s21))
        return cls(layouts, responses)


def generate_dataset(template: TemplateSpec, n_samples: int, rng_seed: int = 0,
                     oracle: AnalyticOracle | None = None,
                     bounds: ParamBounds = DEFAULT_BOUNDS) -> Dataset:
    """Random layouts labelled by the analytic model; sample ``k`` uses seed ``(rng_seed, k)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    oracle = oracle if oracle is not None else AnalyticOracle()
    layouts = [sample_random_layout(template, bounds, (rng_seed, k)) for k in range(n_samples)]
    return Dataset(layouts, [oracle(L) for L in layouts])


# -- training ---------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateTrainConfig:
    batch_size: int = 128
    epochs: int = 500
    lr: float = 1e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 200
    patience: int = 25
    val_fraction: float = 0.2
    kfold: int = 0

    def __post_init__(self):
        if not self.patience < self.epochs:
            raise ValueError("patience must be smaller than epochs")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr * self.lr_decay ** ((epoch - 1) // self.lr_decay_every)


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_l1: float = float("inf")
    baseline_val_l1: float = float("nan")
    stopped_early: bool = False
    seconds: float = 0.0
    fold_val_l1: list[float] = field(default_factory=list)


def l1_loss(pred_re: Tensor, pred_im: Tensor, y_re: np.ndarray, y_im: np.ndarray) -> Tensor:
    total = ad.add(ad.abs_sum(ad.sub(pred_re, y_re)), ad.abs_sum(ad.sub(pred_im, y_im)))
    return ad.scale(total, 1.0 / (2 * y_re.size))


def mean_l1(params: Params, cfg: GATConfig, x, a, y_re, y_im, batch: int = 512) -> float:
    total = 0.0
    with ad.no_grad():
        for s in range(0, len(x), batch):
            re, im = predict_batch(x[s:s + batch], a[s:s + batch], params, cfg)
            total += np.abs(re.value - y_re[s:s + batch]).sum() + np.abs(im.value - y_im[s:s + batch]).sum()
    return float(total / (2 * y_re.size))


def constant_baseline_l1(train_re, train_im, val_re, val_im) -> float:
    """Validation L1 of predicting the per-frequency training mean."""
    mu_re, mu_im = train_re.mean(axis=0), train_im.mean(axis=0)
    return float((np.abs(val_re - mu_re).sum() + np.abs(val_im - mu_im).sum()) / (2 * val_re.size))


def _fit(x, a, y_re, y_im, tr, va, cfg: SurrogateTrainConfig, gat: GATConfig, seed: int, report: TrainReport):
    rng = np.random.default_rng(seed)
    params = init_gat_params(gat, seed)
    opt = Adam(params, cfg.lr)
    best = params.snapshot()
    best_val, best_epoch, since = float("inf"), 0, 0
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = cfg.lr_at(epoch)
        order = rng.permutation(tr)
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            re, im = predict_batch(x[idx], a[idx], params, gat)
            loss = l1_loss(re, im, y_re[idx], y_im[idx])
            ad.backward(loss)
            opt.step()
            losses.append(float(loss.value) * len(idx))
        train_l1 = sum(losses) / len(tr)
        val_l1 = mean_l1(params, gat, x[va], a[va], y_re[va], y_im[va])
        report.history.append({"epoch": epoch, "train_l1": train_l1, "val_l1": val_l1, "lr": opt.lr})
        if val_l1 < best_val:
            best_val, best_epoch, since = val_l1, epoch, 0
            best = params.snapshot()
        else:
            since += 1
            if since >= cfg.patience:
                report.stopped_early = True
                break
    params.load(best)
    return params, best_val, best_epoch


def train_surrogate(dataset: Dataset, cfg: SurrogateTrainConfig = SurrogateTrainConfig(),
                    rng_seed: int = 0, gat: GATConfig = GATConfig(),
                    bounds: ParamBounds = DEFAULT_BOUNDS,
                    surrogate_cfg: SurrogateConfig = SurrogateConfig()) -> tuple[Params, TrainReport]:
    """Fit the GAT with L1 loss, step-decayed Adam and early stopping on a held-out split."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    t0 = time.perf_counter()
    x, a, y_re, y_im = dataset.arrays(bounds, surrogate_cfg)
    n = len(x)
    perm = np.random.default_rng(rng_seed).permutation(n)
    report = TrainReport()
    if cfg.kfold >= 2:
        folds = np.array_split(perm, cfg.kfold)
        best_params, best_val = None, float("inf")
        for k, va in enumerate(folds):
            tr = np.concatenate([f for i, f in enumerate(folds) if i != k])
            fold_report = TrainReport()
            params, val, ep = _fit(x, a, y_re, y_im, tr, va, cfg, gat, rng_seed + k, fold_report)
            report.fold_val_l1.append(val)
            if val < best_val:
                best_params, best_val = params, val
                report.history, report.best_epoch = fold_report.history, ep
                report.stopped_early = fold_report.stopped_early
                report.baseline_val_l1 = constant_baseline_l1(y_re[tr], y_im[tr], y_re[va], y_im[va])
        params = best_params
        report.best_val_l1 = best_val
    else:
        n_val = max(1, int(round(cfg.val_fraction * n))) if n > 1 else 0
        va, tr = perm[:n_val], perm[n_val:]
        if len(tr) == 0:
            tr = va
        report.baseline_val_l1 = constant_baseline_l1(y_re[tr], y_im[tr], y_re[va], y_im[va])
        params, report.best_val_l1, report.best_epoch = _fit(x, a, y_re, y_im, tr, va, cfg, gat, rng_seed, report)
    report.seconds = time.perf_counter() - t0
    log.info("surrogate trained: best val L1 %.5f at epoch %d (baseline %.5f)",
             report.best_val_l1, report.best_epoch, report.baseline_val_l1)
    return params, report


def save_gat(path: str | Path, params: Params, cfg: GATConfig = GATConfig(), report: TrainReport | None = None):
    meta = {"gat": asdict(cfg)}
    if report is not None:
        meta["best_val_l1"] = report.best_val_l1
        meta["baseline_val_l1"] = report.baseline_val_l1
    save_checkpoint(path, params, meta)
