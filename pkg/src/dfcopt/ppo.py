"""PPO agent over :class:`~dfcopt.env.FilterEnv` and the multi-round design loop."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .circuit import Layout, TemplateSpec
from .env import BRIResult, FilterEnv, bri_initialize
from .metrics import RewardBreakdown, reward_init
from .nn import Adam, Params, add_dense, clip_grad_norm, dense

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    lr: float = 7e-4
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 2048
    update_epochs: int = 4
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: int = 256
    dropout: float = 0.1
    value_norm: bool = True
    seeds_per_experiment: int = 8

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        for name in ("lr", "gamma", "gae_lambda", "rollout_length", "update_epochs", "minibatch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class RunningMeanStd:
    """Streaming mean/variance (parallel-merge form)."""

    def __init__(self):
        self.mean, self.var, self.count = 0.0, 1.0, 1e-4

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return
        bm, bv, bc = x.mean(), x.var(), x.size
        delta = bm - self.mean
        tot = self.count + bc
        self.mean += delta * bc / tot
        self.var = (self.var * self.count + bv * bc + delta ** 2 * self.count * bc / tot) / tot
        self.count = tot

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var) + 1e-8)


def _trunk(x: Tensor, params: Params, prefix: str, dropout: float, train: bool, rng) -> Tensor:
    h = ad.relu(dense(x, params, f"{prefix}.0"))
    h = ad.dropout(h, dropout, train, rng)
    return ad.relu(dense(h, params, f"{prefix}.1"))


class ActorCritic:
    """Separate policy and value MLPs: obs -> 256 -> 256 -> head, dropout after the first layer."""

    def __init__(self, obs_dim: int, n_actions: int, cfg: PPOConfig = PPOConfig(), seed: int = 0):
        self.obs_dim, self.n_actions, self.cfg = obs_dim, n_actions, cfg
        rng = np.random.default_rng(seed)
        h = cfg.hidden
        self.policy = Params()
        add_dense(self.policy, "pi.0", obs_dim, h, rng)
        add_dense(self.policy, "pi.1", h, h, rng)
        add_dense(self.policy, "pi.out", h, n_actions, rng, gain=0.01)
        self.value = Params()
        add_dense(self.value, "v.0", obs_dim, h, rng)
        add_dense(self.value, "v.1", h, h, rng)
        add_dense(self.value, "v.out", h, 1, rng)
        self.pi_opt = Adam(self.policy, cfg.lr)
        self.v_opt = Adam(self.value, cfg.lr)
        self.ret_rms = RunningMeanStd()
        self.dropout_rng = np.random.default_rng(seed + 1)

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ad.ShapeError(f"observation has length {obs.shape[-1]}, expected {self.obs_dim}")
        return obs

    def logits(self, obs, train: bool = False) -> Tensor:
        x = Tensor(np.atleast_2d(self._check(obs)))
        return dense(_trunk(x, self.policy, "pi", self.cfg.dropout, train, self.dropout_rng), self.policy, "pi.out")

    def value_raw(self, obs, train: bool = False) -> Tensor:
        """Value head output (in normalized units when value_norm is on)."""
        x = Tensor(np.atleast_2d(self._check(obs)))
        return dense(_trunk(x, self.value, "v", self.cfg.dropout, train, self.dropout_rng), self.value, "v.out")

    def probs(self, obs) -> np.ndarray:
        with ad.no_grad():
            return ad.softmax(self.logits(obs), axis=-1).value

    def values(self, obs) -> np.ndarray:
        with ad.no_grad():
            v = self.value_raw(obs).value[:, 0]
        if self.cfg.value_norm:
            v = v * self.ret_rms.std + self.ret_rms.mean
        return v

    def act(self, obs, mode: str = "sample", rng: np.random.Generator | None = None):
        """Return ``(action, log_prob, value)`` for one observation; dropout is off."""
        p = self.probs(obs)[0]
        if mode == "greedy":
            a = int(np.argmax(p))
        elif mode == "sample":
            rng = rng if rng is not None else np.random.default_rng()
            a = int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), len(p) - 1))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return a, float(np.log(p[a])), float(self.values(obs)[0])


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    invalid: list = field(default_factory=list)
    last_value: float = 0.0
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    def add(self, obs, action, log_prob, reward, value, done, invalid=False):
        self.obs.append(np.asarray(obs, dtype=float))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        self.invalid.append(bool(invalid))


def compute_gae(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Generalized advantage estimates and returns; ``dones[t]`` ends the episode after step t."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    adv = np.zeros(T)
    gae = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        adv[t] = gae
    return adv + values, adv


def finish_buffer(buf: RolloutBuffer, cfg: PPOConfig) -> RolloutBuffer:
    buf.returns, buf.advantages = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_value,
                                              cfg.gamma, cfg.gae_lambda)
    return buf


def ppo_loss(ac: ActorCritic, obs: np.ndarray, actions: np.ndarray, old_logp: np.ndarray, adv: np.ndarray,
             targets: np.ndarray, cfg: PPOConfig | None = None, train: bool = True):
    """Clipped surrogate + value + entropy loss for one minibatch.

    Returns ``(loss, parts)``; ``parts`` holds the component tensors and the
    probability ratio. Dropout is applied to the value network only, so the
    ratio compares like with like.
    """
    cfg = cfg or ac.cfg
    n = len(obs)
    onehot = np.eye(ac.n_actions)[actions]
    logp_all = ad.log_softmax(ac.logits(obs, train=False), axis=-1)
    logp = ad.sum_(ad.mul(logp_all, onehot), axis=1)
    ratio = ad.exp(ad.sub(logp, old_logp))
    surr = ad.minimum(ad.mul(ratio, adv), ad.mul(ad.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip), adv))
    pg_loss = ad.scale(ad.mean(surr), -1.0)
    entropy = ad.scale(ad.mean(ad.sum_(ad.mul(ad.exp(logp_all), logp_all), axis=1)), -1.0)
    v = ad.reshape(ac.value_raw(obs, train=train), (n,))
    diff = ad.sub(v, targets)
    v_loss = ad.mean(ad.mul(diff, diff))
    loss = ad.add(ad.add(pg_loss, ad.scale(entropy, -cfg.entropy_coef)), ad.scale(v_loss, cfg.value_coef))
    return loss, {"policy_loss": pg_loss, "value_loss": v_loss, "entropy": entropy, "ratio": ratio}


def ppo_update(ac: ActorCritic, buf: RolloutBuffer, cfg: PPOConfig | None = None,
               rng: np.random.Generator | None = None) -> dict:
    """Clipped-surrogate PPO epochs over shuffled minibatches; returns diagnostics."""
    cfg = cfg or ac.cfg
    rng = rng if rng is not None else np.random.default_rng(0)
    obs = np.stack(buf.obs)
    actions = np.asarray(buf.actions)
    old_logp = np.asarray(buf.log_probs)
    adv = np.asarray(buf.advantages, dtype=float)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    returns = np.asarray(buf.returns, dtype=float)
    if cfg.value_norm:
        ac.ret_rms.update(returns)
        targets = (returns - ac.ret_rms.mean) / ac.ret_rms.std
    else:
        targets = returns
    n = len(obs)
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_fraction": [], "approx_kl": []}
    for _ in range(cfg.update_epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.minibatch):
            idx = order[s:s + cfg.minibatch]
            loss, parts = ppo_loss(ac, obs[idx], actions[idx], old_logp[idx], adv[idx], targets[idx], cfg)
            ad.backward(loss)
            clip_grad_norm(ac.policy, cfg.max_grad_norm)
            clip_grad_norm(ac.value, cfg.max_grad_norm)
            ac.pi_opt.step()
            ac.v_opt.step()
            r = parts["ratio"].value
            for k in ("policy_loss", "value_loss", "entropy"):
                stats[k].append(float(parts[k].value))
            stats["clip_fraction"].append(float(np.mean(np.abs(r - 1.0) > cfg.clip)))
            stats["approx_kl"].append(float(np.mean((r - 1.0) - np.log(r))))
    return {k: float(np.mean(v)) for k, v in stats.items()}


def collect_rollout(env: FilterEnv, ac: ActorCritic, n_steps: int, obs: np.ndarray,
                    rng: np.random.Generator) -> tuple[RolloutBuffer, np.ndarray, bool]:
    """Run ``n_steps`` sampled steps; episodes restart from the env's initial layout.

    Returns the buffer (values filled in one batched pass), the next
    observation, and whether the success predicate was met.
    """
    buf = RolloutBuffer()
    succeeded = False
    for _ in range(n_steps):
        p = ac.probs(obs)[0]
        a = int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), len(p) - 1))
        out = env.step(a)
        buf.add(obs, a, np.log(p[a]), out.reward, 0.0, out.done, not out.info["valid"])
        obs = out.observation
        if out.info["success"]:
            succeeded = True
        if out.done:
            obs = env.reset()
        if succeeded:
            break
    vals = ac.values(np.stack(buf.obs))
    buf.values = list(vals)
    buf.last_value = 0.0 if buf.dones[-1] else float(ac.values(obs)[0])
    return buf, obs, succeeded


@dataclass
class TrainResult:
    best_layout: Layout
    best_score: float
    best_breakdown: RewardBreakdown
    bri: BRIResult | None
    curves: list[dict]
    round_best: list[float]
    invalid_flags: np.ndarray
    steps: int
    success: bool
    seconds: float

    def curves_csv(self) -> str:
        cols = ["round", "step", "mean_step_reward", "best_score", "iou", "loss_db", "invalid_fraction"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in self.curves:
            w.writerow({k: row[k] for k in cols})
        return buf.getvalue()


def train_rldfcdo(env_factory: Callable[[], FilterEnv], rounds: int = 10, steps_per_round: int = 5000,
                  cfg: PPOConfig = PPOConfig(), template: TemplateSpec | None = None,
                  initial: Layout | BRIResult | None = None, bri_k: int = 2000, seed: int = 0,
                  greedy_eval: bool = True) -> TrainResult:
    """Round-chained PPO optimization starting from BRI.

    Round ``r`` restarts every episode from the best layout found before it.
    The agent keeps learning across rounds; the best layout is tracked by the
    initialization score over every valid layout visited.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    t0 = time.perf_counter()
    env = env_factory()
    bri = None
    if isinstance(initial, BRIResult):
        bri, start = initial, initial.layout
    elif isinstance(initial, Layout):
        start = initial
    else:
        template = template or env.template
        if template is None:
            raise ValueError("need a template or an initial layout")
        bri = bri_initialize(template, env.spec, bri_k, seed, env.oracle, env.reward_cfg, env.bounds)
        start = bri.layout
    obs = env.reset(start)
    ac = ActorCritic(len(obs), env.n_actions, cfg, seed)
    rng = np.random.default_rng(seed + 17)
    upd_rng = np.random.default_rng(seed + 29)
    curves, round_best, invalid = [], [], []
    steps = 0
    success = False
    for r in range(rounds):
        obs = env.reset(env.state.best_layout)
        left = steps_per_round
        while left > 0 and not success:
            buf, obs, success = collect_rollout(env, ac, min(cfg.rollout_length, left), obs, rng)
            left -= len(buf)
            steps += len(buf)
            invalid.extend(buf.invalid)
            finish_buffer(buf, cfg)
            stats = ppo_update(ac, buf, cfg, upd_rng) if len(buf) > 1 else {}
            bd = env.state.best_breakdown
            curves.append({"round": r, "step": steps, "mean_step_reward": float(np.mean(buf.rewards)),
                           "best_score": env.state.best_score, "iou": bd.iou_percent,
                           "loss_db": bd.insertion_loss_db, "invalid_fraction": float(np.mean(buf.invalid)),
                           **stats})
        if greedy_eval and steps_per_round > 0 and not success:
            obs = env.reset(env.state.best_layout)
            done = False
            while not done:
                a, _, _ = ac.act(obs, "greedy")
                out = env.step(a)
                obs, done = out.observation, out.done
                success = success or out.info["success"]
        round_best.append(env.state.best_score)
        log.info("round %d: best score %.3f after %d steps", r, env.state.best_score, steps)
        if success:
            break
    st = env.state
    return TrainResult(st.best_layout, st.best_score, st.best_breakdown, bri, curves, round_best,
                       np.asarray(invalid, dtype=bool), steps, success, time.perf_counter() - t0)
