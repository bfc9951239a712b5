"""Passband extraction, interval IOU and the design reward family."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .surrogate import SParams

Interval = tuple[float, float]

PASSBAND_THRESHOLD_DB = -6.0


def _check_bands(bands: Sequence[Interval]) -> tuple[Interval, ...]:
    out = tuple((float(lo), float(hi)) for lo, hi in bands)
    for lo, hi in out:
        if not lo < hi:
            raise ValueError(f"band ({lo}, {hi}) must have lo < hi")
    for (_, hi), (lo, _) in zip(out, out[1:]):
        if not hi < lo:
            raise ValueError(f"bands must be sorted and disjoint: {out}")
    return out


@dataclass(frozen=True)
class PassbandSpec:
    """Target passbands, GHz; the center of each band is its target frequency."""

    bands: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "bands", _check_bands(self.bands))
        if not self.bands:
            raise ValueError("a passband spec needs at least one band")

    @property
    def tc_per_band(self) -> tuple[float, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in self.bands)

    def nearest_tc(self, f: float) -> float:
        tcs = self.tc_per_band
        return min(tcs, key=lambda tc: (abs(tc - f), tc))


@dataclass(frozen=True)
class PassbandSet:
    bands: tuple[Interval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bands", _check_bands(self.bands))

    def __len__(self) -> int:
        return len(self.bands)


def extract_passbands(s: SParams, threshold_db: float = PASSBAND_THRESHOLD_DB) -> PassbandSet:
    """Maximal frequency intervals where ``s21_db > threshold_db``.

    Band edges are placed at the linearly interpolated threshold crossing
    between the two grid points that straddle it; a band touching the end of
    the grid is cut at the grid end.
    """
    f = s.freqs
    db = s.s21_db
    above = db > threshold_db
    if not above.any():
        return PassbandSet()
    padded = np.concatenate(([False], above, [False]))
    change = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, stops = change[0::2], change[1::2] - 1

    def crossing(i0: int, i1: int) -> float:
        d0, d1 = db[i0], db[i1]
        t = (threshold_db - d0) / (d1 - d0)
        return float(f[i0] + t * (f[i1] - f[i0]))

    bands = []
    for a, b in zip(starts, stops):
        lo = float(f[a]) if a == 0 else crossing(a - 1, a)
        hi = float(f[b]) if b == len(f) - 1 else crossing(b, b + 1)
        if hi > lo:
            bands.append((lo, hi))
    return PassbandSet(tuple(bands))


def _inter_union(a: Interval, b: Interval) -> tuple[float, float]:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter, union


def iou_single(a: Interval, b: Interval) -> float:
    """Intersection over union of two intervals, in percent."""
    inter, union = _inter_union(a, b)
    return 100.0 * inter / union if union > 0 else 0.0


def multiband_iou(X: Sequence[Interval] | PassbandSet, Y: Sequence[Interval] | PassbandSpec,
                  aggregate: str = "max") -> float:
    """Multi-band IOU fraction by dynamic programming over band pairs.

    ``aggregate="max"`` fills ``T[i, j] = max(iou(X_i, Y_j), T[i-1, j], T[i, j-1])``
    and returns ``T[L_X, L_Y]``, so the best single pair decides. ``"sum"`` is an
    alternative that scores a monotone one-to-one matching and divides by
    ``max(L_X, L_Y)``.
    """
    if isinstance(X, PassbandSet):
        X = X.bands
    if isinstance(Y, PassbandSpec):
        Y = Y.bands
    lx, ly = len(X), len(Y)
    table = np.zeros((lx + 1, ly + 1))
    for i in range(1, lx + 1):
        for j in range(1, ly + 1):
            inter, union = _inter_union(X[i - 1], Y[j - 1])
            if aggregate == "max":
                if union > 0:
                    table[i, j] = max(inter / union, table[i - 1, j], table[i, j - 1])
                else:
                    table[i, j] = max(table[i - 1, j], table[i, j - 1])
            elif aggregate == "sum":
                pair = inter / union if union > 0 else 0.0
                table[i, j] = max(table[i - 1, j - 1] + pair, table[i - 1, j], table[i, j - 1])
            else:
                raise ValueError(f"unknown aggregate {aggregate!r}")
    if aggregate == "sum" and lx and ly:
        return float(table[lx, ly] / max(lx, ly))
    return float(table[lx, ly])


# -- rewards ----------------------------------------------------------------

@dataclass(frozen=True)
class RewardBreakdown:
    iou_percent: float
    max_s21_db: float
    insertion_loss_db: float
    dc_ghz: float
    dev_ghz: float
    total: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> RewardBreakdown:
        return cls(**{k: data[k] for k in ("iou_percent", "max_s21_db", "insertion_loss_db",
                                            "dc_ghz", "dev_ghz")}, total=data.get("total"))


PHASE_BOUNDARIES = (0.3, 0.6)


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 1.0
    beta: float = 10.0
    schedule_enabled: bool = False
    phase_weights: tuple[tuple[float, float, float], ...] = (
        (0.25, 2.0, 0.5),   # early: insertion loss first
        (0.5, 1.0, 2.0),    # middle: pull the center frequency in
        (1.0, 1.0, 1.0),    # late: IOU
    )
    iou_aggregate: str = "max"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        object.__setattr__(self, "phase_weights", tuple(tuple(float(v) for v in w) for w in self.phase_weights))
        if len(self.phase_weights) != 3 or any(v < 0 for w in self.phase_weights for v in w):
            raise ValueError("phase_weights must be three non-negative triples")

    def weights(self, progress: float) -> tuple[float, float, float]:
        if not self.schedule_enabled:
            return (1.0, 1.0, 1.0)
        if progress < PHASE_BOUNDARIES[0]:
            return self.phase_weights[0]
        if progress < PHASE_BOUNDARIES[1]:
            return self.phase_weights[1]
        return self.phase_weights[2]


def response_metrics(s: SParams, spec: PassbandSpec, aggregate: str = "max",
                     threshold_db: float = PASSBAND_THRESHOLD_DB) -> RewardBreakdown:
    """IOU, peak transmission, its frequency and the center deviation of a response."""
    db = s.s21_db
    k = int(np.argmax(db))
    max_db = float(db[k])
    dc = float(s.freqs[k])
    iou = 100.0 * multiband_iou(extract_passbands(s, threshold_db), spec.bands, aggregate)
    return RewardBreakdown(
        iou_percent=iou,
        max_s21_db=max_db,
        insertion_loss_db=-max_db,
        dc_ghz=dc,
        dev_ghz=abs(dc - spec.nearest_tc(dc)),
    )


def reward_full(m: RewardBreakdown, cfg: RewardConfig = RewardConfig(), progress: float = 1.0) -> float:
    """IOU + alpha (6 + max s21) - beta |DC - TC|, with optional phase weights."""
    w_iou, w_loss, w_dev = cfg.weights(progress)
    return (w_iou * m.iou_percent
            + w_loss * cfg.alpha * (6.0 + m.max_s21_db)
            - w_dev * cfg.beta * m.dev_ghz)


def reward_init(m: RewardBreakdown, cfg: RewardConfig = RewardConfig()) -> float:
    """Initialization score: IOU + alpha (6 + max s21)."""
    return m.iou_percent + cfg.alpha * (6.0 + m.max_s21_db)


def with_total(m: RewardBreakdown, cfg: RewardConfig = RewardConfig(), progress: float = 1.0) -> RewardBreakdown:
    return replace(m, total=reward_full(m, cfg, progress))


@dataclass(frozen=True)
class StepRewardConfig:
    power: int = 2

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 0:
            raise ValueError(f"power must be a non-negative integer, got {self.power}")

    @property
    def invalid_penalty(self) -> float:
        return -(200.0 ** self.power)


def step_reward(r1: float, r2: float, cfg: StepRewardConfig = StepRewardConfig(), valid: bool = True) -> float:
    """Signed power of the reward change from ``r1`` (before) to ``r2`` (after).

    The sign is +1 only for a strict improvement, and the magnitude is
    ``|r2 - r1| ** power`` so improvements are rewarded for every power.
    An invalid move costs ``-(200 ** power)``.
    """
    if not valid:
        return cfg.invalid_penalty
    sign = 1.0 if r1 < r2 else -1.0
    if r1 == r2 and cfg.power >= 1:
        return 0.0
    return sign * math.pow(abs(r2 - r1), cfg.power)
