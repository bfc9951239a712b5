"""FilterEnv: sequential layout editing with discrete actions.

The agent nudges resonator parameters by fixed deltas. ``x``, ``y`` and ``u``
actions move a single resonator; ``l`` and ``w`` actions resize every
resonator at once. A move that leaves the parameter box or makes two
resonators collide is invalid: by default the episode ends with a large
negative reward, but with a small probability the move is accepted anyway
(and surcharged) so the agent also sees states just outside the feasible set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, TextIO

import numpy as np

from .circuit import (DEFAULT_BOUNDS, FREE_FIELDS, Layout, ParamBounds, TemplateSpec, derive_gap_fields,
                      sample_random_layout, state_matrix, validate_layout)
from .metrics import (PassbandSpec, RewardBreakdown, RewardConfig, StepRewardConfig, response_metrics,
                      reward_full, reward_init, step_reward)
from .surrogate import AnalyticOracle, SParams

log = logging.getLogger(__name__)

PER_RESONATOR = ("x", "y", "u")
GLOBAL = ("l", "w")

Oracle = Callable[[Layout], SParams]


@dataclass(frozen=True)
class Action:
    param: str | None          # None for the no-op
    sign: int = 0
    resonator: int | None = None   # None for global actions

    @property
    def is_noop(self) -> bool:
        return self.param is None

    def label(self) -> str:
        if self.is_noop:
            return "noop"
        s = "+" if self.sign > 0 else "-"
        return f"{self.param}{s}" if self.resonator is None else f"{self.param}[{self.resonator}]{s}"


@dataclass(frozen=True)
class ActionCatalog:
    selected: tuple[str, ...]
    N: int
    actions: tuple[Action, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> Action:
        return self.actions[i]


def decode_action_catalog(selected_params, N: int) -> ActionCatalog:
    """Enumerate the discrete actions for a parameter subset.

    Per-resonator +/- moves for x, y, u (resonator-major, + before -), then
    global l+, l-, w+, w-, then the no-op:
    ``2 N |{x,y,u} & sel| + 2 |{l,w} & sel| + 1`` actions.
    """
    sel = set(selected_params)
    unknown = sel - set(FREE_FIELDS)
    if unknown:
        raise ValueError(f"unknown parameters {sorted(unknown)}")
    if not sel:
        raise ValueError("at least one parameter must be selectable")
    ordered = tuple(p for p in FREE_FIELDS if p in sel)
    actions = []
    for i in range(N):
        for p in PER_RESONATOR:
            if p in sel:
                actions.append(Action(p, +1, i))
                actions.append(Action(p, -1, i))
    for p in GLOBAL:
        if p in sel:
            actions.append(Action(p, +1, None))
            actions.append(Action(p, -1, None))
    actions.append(Action(None))
    return ActionCatalog(ordered, N, tuple(actions))


@dataclass(frozen=True)
class EnvConfig:
    delta_x: float = 0.1
    delta_y: float = 0.1
    delta_l: float = 0.05
    delta_w: float = 0.05
    delta_u: float = 0.01
    max_steps_per_episode: int = 128
    success_iou: float = 99.0
    success_loss_db: float = 3.0
    eps_invalid: float = 0.05
    invalid_surcharge: float = -50.0
    step_power: int = 2
    selected_params: tuple[str, ...] = FREE_FIELDS
    oracle: str = "analytic"
    planned_total_steps: int | None = None
    reward_decay: float = 1.0

    def __post_init__(self):
        for name in ("delta_x", "delta_y", "delta_l", "delta_w", "delta_u"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.eps_invalid < 1.0:
            raise ValueError("eps_invalid must lie in [0, 1)")
        if self.oracle not in ("analytic", "gnn"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        object.__setattr__(self, "selected_params", tuple(self.selected_params))

    def delta(self, param: str) -> float:
        return getattr(self, f"delta_{param}")


def apply_action(layout: Layout, action: Action, cfg: EnvConfig = EnvConfig(),
                 bounds: ParamBounds = DEFAULT_BOUNDS) -> Layout:
    """Candidate layout after ``action``; not validity-checked."""
    if action.is_noop:
        return layout
    step = action.sign * cfg.delta(action.param)
    res = list(layout.resonators)
    targets = range(len(res)) if action.resonator is None else (action.resonator,)
    for i in targets:
        value = getattr(res[i], action.param) + step
        if action.param == "u":
            value %= 1.0
        res[i] = derive_gap_fields(replace(res[i], **{action.param: value}), bounds, check=False)
    return Layout(tuple(res), layout.template_id)


@dataclass
class Triple:
    layout: Layout
    s21: SParams
    breakdown: RewardBreakdown


@dataclass
class EnvState:
    initial: Triple | None = None
    current: Triple | None = None
    step: int = 0
    episode: int = -1
    done: bool = True
    best_layout: Layout | None = None
    best_score: float = float("-inf")
    best_breakdown: RewardBreakdown | None = None


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass(frozen=True)
class BRIResult:
    layout: Layout
    score: float
    breakdown: RewardBreakdown
    scores: np.ndarray
    index: int


def bri_initialize(template: TemplateSpec, spec: PassbandSpec, K: int = 2000, rng_seed: int = 0,
                   oracle: Oracle | None = None, reward_cfg: RewardConfig = RewardConfig(),
                   bounds: ParamBounds = DEFAULT_BOUNDS) -> BRIResult:
    """Best of ``K`` random layouts by the initialization score (ties go to the lowest index)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    oracle = oracle if oracle is not None else AnalyticOracle()
    best = None
    scores = np.empty(K)
    for k in range(K):
        layout = sample_random_layout(template, bounds, (rng_seed, k))
        m = response_metrics(oracle(layout), spec, reward_cfg.iou_aggregate)
        scores[k] = reward_init(m, reward_cfg)
        if best is None or scores[k] > scores[best[0]]:
            best = (k, layout, m)
    k, layout, m = best
    return BRIResult(layout, float(scores[k]), m, scores, k)


class FilterEnv:
    """Gym-style environment around one design target.

    ``reset(layout)`` starts episodes from ``layout`` (and remembers it as the
    initial state); ``reset()`` restarts from the remembered initial state,
    running BRI on first use if a template was supplied.
    """

    def __init__(self, spec: PassbandSpec, oracle: Oracle | None = None, cfg: EnvConfig = EnvConfig(),
                 reward_cfg: RewardConfig = RewardConfig(), bounds: ParamBounds = DEFAULT_BOUNDS,
                 template: TemplateSpec | None = None, seed: int = 0, bri_k: int = 2000,
                 trace: TextIO | None = None):
        self.spec = spec
        self.oracle = oracle if oracle is not None else AnalyticOracle()
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.step_cfg = StepRewardConfig(cfg.step_power)
        self.bounds = bounds
        self.template = template
        self.seed = seed
        self.bri_k = bri_k
        self.rng = np.random.default_rng(seed)
        self.trace = trace
        self.state = EnvState()
        self.catalog: ActionCatalog | None = None
        self.total_steps = 0
        if template is not None:
            self.catalog = decode_action_catalog(cfg.selected_params, template.N)

    # -- helpers
    @property
    def n_actions(self) -> int:
        return len(self.catalog)

    def progress(self) -> float:
        if not self.cfg.planned_total_steps:
            return 1.0
        return min(1.0, self.total_steps / self.cfg.planned_total_steps)

    def evaluate(self, layout: Layout) -> Triple:
        s = self.oracle(layout)
        m = response_metrics(s, self.spec, self.reward_cfg.iou_aggregate)
        return Triple(layout, s, replace(m, total=reward_full(m, self.reward_cfg, self.progress())))

    def reward_of(self, t: Triple) -> float:
        return reward_full(t.breakdown, self.reward_cfg, self.progress())

    def observation(self) -> np.ndarray:
        return state_matrix(self.state.current.layout, self.bounds).ravel()

    def _note_best(self, t: Triple) -> None:
        score = reward_init(t.breakdown, self.reward_cfg)
        if score > self.state.best_score:
            self.state.best_score = score
            self.state.best_layout = t.layout
            self.state.best_breakdown = t.breakdown

    # -- API
    def reset(self, layout: Layout | None = None) -> np.ndarray:
        st = self.state
        if layout is not None:
            report = validate_layout(layout, self.bounds)
            if not report.valid:
                raise ValueError(f"initial layout is invalid: {report}")
            st.initial = self.evaluate(layout)
        elif st.initial is None:
            if self.template is None:
                raise ValueError("reset() without a layout needs a template for BRI")
            bri = bri_initialize(self.template, self.spec, self.bri_k, self.seed, self.oracle,
                                 self.reward_cfg, self.bounds)
            st.initial = self.evaluate(bri.layout)
        n = st.initial.layout.N
        if self.catalog is None or self.catalog.N != n:
            self.catalog = decode_action_catalog(self.cfg.selected_params, n)
        st.current = st.initial
        st.step = 0
        st.episode += 1
        st.done = False
        self._note_best(st.initial)
        return self.observation()

    def step(self, action_index: int) -> StepOutcome:
        st = self.state
        if st.done:
            raise RuntimeError("episode is finished; call reset()")
        action = self.catalog[int(action_index)]
        candidate = apply_action(st.current.layout, action, self.cfg, self.bounds)
        valid = validate_layout(candidate, self.bounds).valid
        r1 = self.reward_of(st.current)
        st.step += 1
        self.total_steps += 1
        terminated = False
        if valid:
            nxt = self.evaluate(candidate)
            reward = step_reward(r1, self.reward_of(nxt), self.step_cfg)
            st.current = nxt
            self._note_best(nxt)
        elif self.rng.random() < self.cfg.eps_invalid:
            nxt = self.evaluate(candidate)
            reward = step_reward(r1, self.reward_of(nxt), self.step_cfg) + self.cfg.invalid_surcharge
            st.current = nxt
        else:
            reward = self.step_cfg.invalid_penalty
            terminated = True
        if self.cfg.reward_decay != 1.0:
            reward *= self.cfg.reward_decay ** max(st.episode, 0)
        bd = st.current.breakdown
        success = (valid and bd.iou_percent >= self.cfg.success_iou
                   and bd.insertion_loss_db <= self.cfg.success_loss_db)
        st.done = terminated or success or st.step >= self.cfg.max_steps_per_episode
        info = {"valid": valid, "success": success, "episode_step": st.step, "breakdown": bd,
                "action": action.label()}
        if self.trace is not None:
            self.trace.write(json.dumps({
                "episode": st.episode, "step": st.step, "action_index": int(action_index), "valid": valid,
                "step_reward": reward, "total_reward": bd.total, "iou": bd.iou_percent,
                "loss_db": bd.insertion_loss_db, "dc": bd.dc_ghz}) + "\n")
        return StepOutcome(self.observation(), float(reward), st.done, info)
