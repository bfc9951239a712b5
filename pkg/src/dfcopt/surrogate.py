"""Analytic coupled-resonator model: layout -> complex s21 over a frequency grid.

Each resonator is a lossy series node with resonant frequency ``K_f / l``.
Neighbouring resonators couple with a strength that decays exponentially with
their edge-to-edge gap and is modulated by the relative orientation of their
openings. The two port resonators are loaded by external couplings set from
their gap widths. For every frequency the N x N system

    A_ii = d_u + e_i + j * lam_i(f),   lam_i(f) = (f/f_i - f_i/f) / FBW
    A_ij = j * k_ij / FBW

is inverted and ``s21 = 2 sqrt(e_0 e_{N-1}) [A^-1]_{N-1,0}``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .circuit import Layout

DB_FLOOR_AMPLITUDE = 1e-6
SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class FrequencyGrid:
    f_min: float = 200.0
    f_max: float = 400.0
    n_points: int = 256

    def __post_init__(self):
        if not (self.f_max > self.f_min and self.n_points >= 2):
            raise ValueError(f"invalid grid {self}")

    @property
    def freqs(self) -> np.ndarray:
        k = np.arange(self.n_points)
        return self.f_min + (self.f_max - self.f_min) * k / (self.n_points - 1)

    @property
    def step(self) -> float:
        return (self.f_max - self.f_min) / (self.n_points - 1)


def to_db(s21: np.ndarray) -> np.ndarray:
    mag = np.clip(np.abs(s21), DB_FLOOR_AMPLITUDE, 1.0)
    return 20.0 * np.log10(mag)


@dataclass(frozen=True, eq=False)
class SParams:
    grid: FrequencyGrid
    s21: np.ndarray
    flags: np.ndarray | None = None  # True where the solve was singular

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.freqs

    @property
    def s21_db(self) -> np.ndarray:
        return to_db(self.s21)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("freq_ghz,s21_re,s21_im,s21_db\n")
        for f, s, db in zip(self.freqs, self.s21, self.s21_db):
            buf.write(f"{f:.9g},{s.real:.9g},{s.imag:.9g},{db:.9g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: FrequencyGrid | None = None) -> SParams:
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        if grid is None:
            grid = FrequencyGrid(float(data[0, 0]), float(data[-1, 0]), len(data))
        return cls(grid, data[:, 1] + 1j * data[:, 2])


@dataclass(frozen=True)
class SurrogateConfig:
    K_f: float = 210.0
    k_max: float = 0.045
    lambda_c: float = 0.12
    g_threshold: float | None = None  # defaults to 3 * lambda_c
    orientation_depth: float = 0.25
    FBW: float = 0.06
    Q_u: float = 500.0
    q_ref: float | None = None  # defaults to 18 * FBW
    gap_w_ref: float = 0.1

    def __post_init__(self):
        if self.g_threshold is None:
            object.__setattr__(self, "g_threshold", 3.0 * self.lambda_c)
        if self.q_ref is None:
            object.__setattr__(self, "q_ref", 18.0 * self.FBW)
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"SurrogateConfig.{name} must be positive, got {value}")

    @property
    def delta_u(self) -> float:
        return 1.0 / (self.FBW * self.Q_u)


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    f0: np.ndarray          # (N,) resonant frequencies, GHz
    ext: np.ndarray         # (N,) external couplings, nonzero only at ports
    delta_u: float
    k: np.ndarray           # (N, N) symmetric coupling coefficients, 0 off-edge
    gaps: np.ndarray        # (N, N) edge-to-edge gaps
    edges: tuple[tuple[int, int], ...]

    @property
    def N(self) -> int:
        return len(self.f0)


def edge_gaps(layout: Layout) -> np.ndarray:
    """Pairwise ``max(0, center distance - (l_i + l_j)/2)``."""
    c = layout.centers()
    l = layout.sides()
    d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
    g = np.maximum(0.0, d - 0.5 * (l[:, None] + l[None, :]))
    np.fill_diagonal(g, 0.0)
    return g


def coupling_edges(gaps: np.ndarray, g_threshold: float) -> tuple[tuple[int, int], ...]:
    n = gaps.shape[0]
    return tuple((i, j) for i in range(n) for j in range(i + 1, n) if gaps[i, j] <= g_threshold)


def build_coupling_graph(layout: Layout, cfg: SurrogateConfig = SurrogateConfig()) -> CouplingGraph:
    n = layout.N
    l = layout.sides()
    u = np.array([r.u for r in layout.resonators])
    f0 = cfg.K_f / l
    gaps = edge_gaps(layout)
    edges = coupling_edges(gaps, cfg.g_threshold)
    k = np.zeros((n, n))
    for i, j in edges:
        kij = cfg.k_max * np.exp(-gaps[i, j] / cfg.lambda_c) * (
            1.0 + cfg.orientation_depth * np.cos(2.0 * np.pi * (u[i] - u[j])))
        k[i, j] = k[j, i] = kij
    ext = np.zeros(n)
    for p in (0, n - 1):
        ext[p] = (layout.resonators[p].gap_w / cfg.gap_w_ref) / cfg.q_ref
    return CouplingGraph(f0=f0, ext=ext, delta_u=cfg.delta_u, k=k, gaps=gaps, edges=edges)


def system_matrices(graph: CouplingGraph, freqs: np.ndarray, FBW: float) -> np.ndarray:
    """Stack of A(f), shape (n_freq, N, N), complex."""
    f = np.asarray(freqs, dtype=float)[:, None]
    lam = (f / graph.f0[None, :] - graph.f0[None, :] / f) / FBW
    A = np.broadcast_to(1j * graph.k / FBW, (len(f), graph.N, graph.N)).copy()
    idx = np.arange(graph.N)
    A[:, idx, idx] = graph.delta_u + graph.ext[None, :] + 1j * lam
    return A


def solve_transfer(graph: CouplingGraph, freqs: np.ndarray, FBW: float):
    """Return (s21, s12, singular_flags) on ``freqs``.

    Each A(f) is factored by LAPACK's partially pivoted LU; the full inverse is
    formed so the 1-norm condition number can be checked per frequency.
    """
    A = system_matrices(graph, freqs, FBW)
    n = graph.N
    eye = np.broadcast_to(np.eye(n, dtype=complex), A.shape)
    try:
        inv = np.linalg.solve(A, eye)
    except np.linalg.LinAlgError:
        inv = np.full(A.shape, np.nan, dtype=complex)
        for i in range(len(A)):
            try:
                inv[i] = np.linalg.solve(A[i], eye[i])
            except np.linalg.LinAlgError:
                pass  # exactly singular: stays NaN and is flagged below
    cond = np.abs(A).sum(axis=1).max(axis=1) * np.abs(inv).sum(axis=1).max(axis=1)
    singular = ~np.isfinite(cond) | (cond > SINGULAR_CONDITION)
    scale = 2.0 * np.sqrt(graph.ext[0] * graph.ext[-1])
    s21 = scale * inv[:, n - 1, 0]
    s12 = scale * inv[:, 0, n - 1]
    s21 = np.where(singular, 0.0, s21)
    s12 = np.where(singular, 0.0, s12)
    return s21, s12, singular


def solve_s21(graph: CouplingGraph, grid: FrequencyGrid = FrequencyGrid(),
              cfg: SurrogateConfig = SurrogateConfig()) -> SParams:
    s21, _, singular = solve_transfer(graph, grid.freqs, cfg.FBW)
    return SParams(grid, s21, singular)


@dataclass(frozen=True)
class AnalyticOracle:
    """Callable layout -> SParams using the coupled-resonator model."""

    cfg: SurrogateConfig = field(default_factory=SurrogateConfig)
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)

    def __call__(self, layout: Layout) -> SParams:
        return solve_s21(build_coupling_graph(layout, self.cfg), self.grid, self.cfg)


def simulate(layout: Layout, cfg: SurrogateConfig = SurrogateConfig(),
             grid: FrequencyGrid = FrequencyGrid()) -> SParams:
    return solve_s21(build_coupling_graph(layout, cfg), grid, cfg)
