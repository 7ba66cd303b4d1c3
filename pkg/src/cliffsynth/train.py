"""Clipped policy-gradient training over the two-dimensional (n, d) curriculum.

Rollouts are collected from a batch of independent environments whose
targets are random walks of expected length d from the identity.  Once the
most recent window of episode outcomes at the current level is all-success,
d advances by max(0.25, 0.1 d) inside the configured range; qubit counts
follow an explicit schedule with a checkpoint written at the end of each
phase.  Updates use the clipped surrogate objective with clipped value
loss, generalized advantage estimation, per-minibatch advantage
normalization, and an entropy bonus; cap-ended episodes are treated as
truncations and bootstrap the value of their final state.
"""

from __future__ import annotations

import math
import os
import time
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from .env import BatchEnv, EnvConfig, action_count
from .errors import ArgumentError, FormatError
from .policy import (
    PolicyWeights,
    backward_batch,
    forward_batch,
    forward_batch_cached,
    save_weights,
)
from .targets import random_walk_words


@dataclass
class TrainConfig:
    total_steps: int = 1_000_000
    num_envs: int = 2048
    rollout_length: int = 256
    learning_rate: float = 2.5e-4
    batch_size: int = 8192
    epochs_per_update: int = 5
    gamma: float = 0.99
    lam: float = 0.95
    policy_clip: float = 0.15
    value_clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    n_schedule: tuple[int, ...] = (6, 10)
    d_start: float = 1.0
    d_max: float = 1000.0
    d_step_min: float = 0.25
    d_step_frac: float = 0.1
    advance_threshold: float = 1.0
    success_window: int = 512
    phase_stop_d: float = 0.0  # end a phase once d reaches this (0 = never)
    phase_max_steps: int = 0  # per-phase env-step cap (0 = none)
    phase_max_seconds: float = 0.0  # per-phase wall-clock cap (0 = none)
    checkpoint_every: int = 50  # updates between periodic checkpoint writes
    value_warmup_updates: int = 0  # value-only updates at each phase start
    kl_stop: float = 0.0  # skip remaining epochs once mean KL exceeds this (0 = off)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ArgumentError("gamma must be in (0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ArgumentError("lambda must be in [0, 1]")
        if self.policy_clip <= 0 or self.value_clip <= 0:
            raise ArgumentError("clip coefficients must be positive")
        if not self.n_schedule:
            raise ArgumentError("n_schedule must not be empty")
        if self.d_start < 1.0 or self.d_max > 1000.0 or self.d_start > self.d_max:
            raise ArgumentError("difficulty range must sit inside [1, 1000]")


def desk_preset() -> TrainConfig:
    """Small-scale settings that converge in minutes on one CPU core."""
    return TrainConfig(
        total_steps=50_000_000,
        num_envs=128,
        rollout_length=64,
        batch_size=2048,
        epochs_per_update=4,
        n_schedule=(2, 3),
        success_window=128,
        value_clip=10.0,
        checkpoint_every=50,
        value_warmup_updates=3,
        kl_stop=0.3,
    )


def step_cap_for(d: float) -> int:
    """Training step cap tied to the current difficulty."""
    return min(512, 16 + 4 * math.ceil(d))


# -- config file (plain key=value lines) ---------------------------------------


def dump_train_config(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def parse_train_config(text: str) -> TrainConfig:
    known = {f.name: f for f in fields(TrainConfig)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise FormatError(f"line {lineno}: unknown config key {key!r}")
        try:
            if key == "n_schedule":
                kwargs[key] = tuple(int(x) for x in val.split(",") if x)
            elif known[key].type in ("int", int):
                kwargs[key] = int(val)
            else:
                kwargs[key] = float(val)
        except ValueError:
            raise FormatError(f"line {lineno}: bad value {val!r} for {key}") from None
    try:
        return TrainConfig(**kwargs)
    except ArgumentError as exc:
        raise FormatError(str(exc)) from None


# -- curriculum -----------------------------------------------------------------


@dataclass
class CurriculumState:
    n: int
    d: float
    window: deque = field(default_factory=lambda: deque(maxlen=512))

    def record(self, success: bool) -> None:
        self.window.append(bool(success))


def curriculum_advance(state: CurriculumState, cfg: TrainConfig) -> bool:
    """Advance d when the outcome window is full and entirely successful."""
    if len(state.window) < state.window.maxlen:
        return False
    if np.mean(state.window) < cfg.advance_threshold:
        return False
    state.d = min(cfg.d_max, state.d + max(cfg.d_step_min, cfg.d_step_frac * state.d))
    state.window.clear()
    return True


# -- generalized advantage estimation --------------------------------------------


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminal: np.ndarray,
    truncated: np.ndarray,
    bootstrap: np.ndarray,
    final_values: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns over a (T, E) rollout.

    terminal steps bootstrap 0; truncated steps bootstrap the value of the
    state they actually ended in (recorded before the reset); both cut the
    lambda-chain.  The last step of still-running episodes bootstraps
    final_values.
    """
    shapes = {rewards.shape, values.shape, terminal.shape, truncated.shape, bootstrap.shape}
    if len(shapes) != 1:
        raise ArgumentError("gae inputs must share one (T, E) shape")
    t_len, e_len = rewards.shape
    if final_values.shape != (e_len,):
        raise ArgumentError("final_values must have shape (E,)")
    adv = np.zeros_like(values)
    next_adv = np.zeros(e_len, dtype=values.dtype)
    for t in range(t_len - 1, -1, -1):
        next_val = values[t + 1] if t + 1 < t_len else final_values
        boundary = terminal[t] | truncated[t]
        nv = np.where(terminal[t], 0.0, np.where(truncated[t], bootstrap[t], next_val))
        delta = rewards[t] + gamma * nv - values[t]
        next_adv = delta + gamma * lam * np.where(boundary, 0.0, next_adv)
        adv[t] = next_adv
    return adv, adv + values


# -- rollout collection -----------------------------------------------------------


@dataclass
class RolloutBuffer:
    codes: np.ndarray  # (T, E, n, n) uint8
    actions: np.ndarray  # (T, E) int64
    logits: np.ndarray  # (T, E, A) logits at sample time
    logp: np.ndarray  # (T, E)
    values: np.ndarray  # (T, E)
    rewards: np.ndarray  # (T, E)
    terminal: np.ndarray  # (T, E) bool
    truncated: np.ndarray  # (T, E) bool
    bootstrap: np.ndarray  # (T, E) value of final state at truncations
    final_values: np.ndarray  # (E,)
    episode_returns: list[float]
    episode_successes: list[bool]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _reset_finished(
    benv: BatchEnv, curr: CurriculumState, rng: np.random.Generator,
    ep_return: np.ndarray, returns_out: list[float] | None = None,
    successes_out: list[bool] | None = None,
) -> None:
    """Draw fresh curriculum targets for every finished environment.

    Walk endpoints that already equal the identity count as zero-step
    successes and are immediately redrawn.
    """
    while benv.done.any():
        for i in np.nonzero(benv.done)[0]:
            benv.reset_env(int(i), random_walk_words(benv.n, curr.d, rng))
            ep_return[i] = 0.0
            if benv.done[i]:
                curr.record(True)
                if successes_out is not None:
                    successes_out.append(True)
                if returns_out is not None:
                    returns_out.append(0.0)


def collect_rollouts(
    w: PolicyWeights,
    benv: BatchEnv,
    curr: CurriculumState,
    cfg: TrainConfig,
    rng: np.random.Generator,
    ep_return: np.ndarray,
    rng_targets: np.random.Generator | None = None,
) -> RolloutBuffer:
    """num_envs x rollout_length on-policy transitions with fresh targets on reset."""
    rng_targets = rng_targets if rng_targets is not None else rng
    t_len, e_len, n = cfg.rollout_length, benv.size, benv.n
    num_actions = action_count(n)
    buf = RolloutBuffer(
        codes=np.zeros((t_len, e_len, n, n), dtype=np.uint8),
        actions=np.zeros((t_len, e_len), dtype=np.int64),
        logits=np.zeros((t_len, e_len, num_actions), dtype=np.float32),
        logp=np.zeros((t_len, e_len), dtype=np.float64),
        values=np.zeros((t_len, e_len), dtype=np.float64),
        rewards=np.zeros((t_len, e_len), dtype=np.float64),
        terminal=np.zeros((t_len, e_len), dtype=bool),
        truncated=np.zeros((t_len, e_len), dtype=bool),
        bootstrap=np.zeros((t_len, e_len), dtype=np.float64),
        final_values=np.zeros(e_len, dtype=np.float64),
        episode_returns=[],
        episode_successes=[],
    )
    pending: list[tuple[int, np.ndarray, np.ndarray]] = []  # (t, env idx, codes)
    _reset_finished(benv, curr, rng_targets, ep_return, buf.episode_returns, buf.episode_successes)
    rows = np.arange(e_len)
    for t in range(t_len):
        codes = benv.codes()
        logits, values = forward_batch(w, codes)
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite policy output during collection")
        gumbel = -np.log(-np.log(rng.random((e_len, num_actions))))
        acts = np.argmax(logits + gumbel, axis=1)
        logp = _log_softmax(logits.astype(np.float64))[rows, acts]
        rewards, term, trunc = benv.step(acts)
        ep_return += rewards
        buf.codes[t] = codes
        buf.actions[t] = acts
        buf.logits[t] = logits.astype(np.float32)
        buf.logp[t] = logp
        buf.values[t] = values
        buf.rewards[t] = rewards
        buf.terminal[t] = term
        buf.truncated[t] = trunc
        fin = term | trunc
        if fin.any():
            idx = np.nonzero(fin)[0]
            for i in idx:
                curr.record(bool(term[i]))
                buf.episode_successes.append(bool(term[i]))
                buf.episode_returns.append(float(ep_return[i]))
            tr = np.nonzero(trunc)[0]
            if tr.size:
                pending.append((t, tr.copy(), benv.codes(tr)))
            _reset_finished(benv, curr, rng_targets, ep_return,
                            buf.episode_returns, buf.episode_successes)
    _, buf.final_values = forward_batch(w, benv.codes())
    if pending:
        all_codes = np.concatenate([c for _, _, c in pending])
        _, vals = forward_batch(w, all_codes)
        off = 0
        for t, idx, c in pending:
            buf.bootstrap[t, idx] = vals[off : off + idx.size]
            off += idx.size
    return buf


# -- optimizer --------------------------------------------------------------------


class Adam:
    def __init__(self, w: PolicyWeights, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in w.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in w.params.items()}

    def step(self, w: PolicyWeights, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in w.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= (self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)).astype(
                p.dtype
            )


def _clip_grads_(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


# -- PPO update -------------------------------------------------------------------


def ppo_update(
    w: PolicyWeights,
    opt: Adam,
    buf: RolloutBuffer,
    adv: np.ndarray,
    ret: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    value_only: bool = False,
) -> dict[str, float]:
    """epochs_per_update shuffled passes of clipped-surrogate minibatch steps.

    With value_only, policy and entropy gradients are suppressed; used to
    re-anchor the value function when a new curriculum phase begins.
    """
    t_len, e_len = buf.rewards.shape
    total = t_len * e_len
    flat_codes = buf.codes.reshape(total, *buf.codes.shape[2:])
    flat_actions = buf.actions.reshape(total)
    flat_logp_old = buf.logp.reshape(total)
    flat_v_old = buf.values.reshape(total)
    flat_adv = adv.reshape(total)
    flat_ret = ret.reshape(total)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "approx_kl": 0.0, "clip_frac": 0.0, "grad_norm": 0.0}
    count = 0
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(total)
        epoch_kl: list[float] = []
        for start in range(0, total, cfg.batch_size):
            mb = order[start : start + cfg.batch_size]
            b = mb.size
            logits, values, caches = forward_batch_cached(w, flat_codes[mb])
            logits = logits.astype(np.float64)
            values = values.astype(np.float64)
            logp_all = _log_softmax(logits)
            probs = np.exp(logp_all)
            rows = np.arange(b)
            acts = flat_actions[mb]
            logp_new = logp_all[rows, acts]

            a_mb = flat_adv[mb]
            a_mb = (a_mb - a_mb.mean()) / (a_mb.std() + 1e-8)
            ratio = np.exp(logp_new - flat_logp_old[mb])
            clipped = np.clip(ratio, 1.0 - cfg.policy_clip, 1.0 + cfg.policy_clip)
            surr1 = ratio * a_mb
            surr2 = clipped * a_mb
            use1 = surr1 <= surr2
            pg_loss = -np.minimum(surr1, surr2).mean()

            v_old = flat_v_old[mb]
            r_mb = flat_ret[mb]
            v_clip = v_old + np.clip(values - v_old, -cfg.value_clip, cfg.value_clip)
            e1 = values - r_mb
            e2 = v_clip - r_mb
            use_e1 = e1**2 >= e2**2
            v_loss = 0.5 * np.maximum(e1**2, e2**2).mean()

            ent = -(probs * logp_all).sum(axis=1)
            entropy = ent.mean()

            # backward: d(total loss)/dlogits and /dvalue
            if value_only:
                dlogits = np.zeros_like(logits)
            else:
                dlogp = np.where(use1, -a_mb * ratio, 0.0) / b
                dlogits = dlogp[:, None] * (-probs)
                dlogits[rows, acts] += dlogp
                dent = -probs * (logp_all + ent[:, None])  # dH/dlogits
                dlogits += -cfg.entropy_coef * dent / b
            in_clip = np.abs(values - v_old) <= cfg.value_clip
            dvalue = cfg.value_coef * np.where(use_e1, e1, e2 * in_clip) / b

            grads = backward_batch(w, caches, dlogits.astype(w.dtype), dvalue.astype(w.dtype))
            if value_only:  # re-anchor the value head without touching the policy
                for name, g in grads.items():
                    if not name.startswith("value."):
                        g[...] = 0.0
            gn = _clip_grads_(grads, cfg.max_grad_norm)
            opt.step(w, grads)

            kl = float((ratio - 1.0).mean() - (logp_new - flat_logp_old[mb]).mean())
            epoch_kl.append(kl)
            stats["policy_loss"] += float(pg_loss)
            stats["value_loss"] += float(v_loss)
            stats["entropy"] += float(entropy)
            stats["approx_kl"] += kl
            stats["clip_frac"] += float((np.abs(ratio - 1.0) > cfg.policy_clip).mean())
            stats["grad_norm"] += gn
            count += 1
        if cfg.kl_stop > 0 and epoch_kl and float(np.mean(epoch_kl)) > cfg.kl_stop:
            break
    for k in stats:
        stats[k] /= max(count, 1)
    return stats


# -- trainer ----------------------------------------------------------------------

_METRIC_COLUMNS = "step,n,d,success_rate,mean_return,policy_loss,value_loss,entropy"


class Trainer:
    """Phase-by-phase curriculum training with checkpoints and a metrics log."""

    def __init__(
        self,
        weights: PolicyWeights,
        cfg: TrainConfig,
        seed: int,
        out_dir: str | None = None,
        log=None,
    ):
        self.w = weights
        self.cfg = cfg
        self.out_dir = out_dir
        self.log = log
        ss = np.random.SeedSequence(seed)
        kids = ss.spawn(3)
        self.rng_targets = np.random.Generator(np.random.Philox(kids[0]))
        self.rng_actions = np.random.Generator(np.random.Philox(kids[1]))
        self.rng_shuffle = np.random.Generator(np.random.Philox(kids[2]))
        self.opt = Adam(weights, cfg.learning_rate)
        self.global_steps = 0
        self.updates = 0
        self.metrics_rows: list[str] = []
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
                fh.write(_METRIC_COLUMNS + "\n")

    def _emit(self, row: str) -> None:
        self.metrics_rows.append(row)
        if self.out_dir:
            with open(os.path.join(self.out_dir, "metrics.csv"), "a", encoding="utf-8") as fh:
                fh.write(row + "\n")

    def _checkpoint(self, name: str) -> None:
        if self.out_dir:
            save_weights(self.w, os.path.join(self.out_dir, name))

    def run(self) -> CurriculumState:
        curr = None
        for n in self.cfg.n_schedule:
            curr = self.run_phase(n)
            self._checkpoint(f"checkpoint_n{n}.weights")
            if self.global_steps >= self.cfg.total_steps:
                break
        self._checkpoint("final.weights")
        return curr

    def run_phase(self, n: int) -> CurriculumState:
        cfg = self.cfg
        curr = CurriculumState(n, cfg.d_start, deque(maxlen=cfg.success_window))
        env_cfg = EnvConfig(step_cap=step_cap_for(curr.d))
        benv = BatchEnv(n, cfg.num_envs, env_cfg)
        ep_return = np.zeros(cfg.num_envs, dtype=np.float64)
        phase_steps = 0
        started = time.monotonic()
        recent_success: deque = deque(maxlen=2048)
        warmups_left = cfg.value_warmup_updates
        while True:
            if self.global_steps >= cfg.total_steps:
                break
            if cfg.phase_max_steps and phase_steps >= cfg.phase_max_steps:
                break
            if cfg.phase_max_seconds and time.monotonic() - started > cfg.phase_max_seconds:
                break
            buf = collect_rollouts(self.w, benv, curr, cfg, self.rng_actions,
                                   ep_return, self.rng_targets)
            adv, ret = gae(
                buf.rewards, buf.values, buf.terminal, buf.truncated,
                buf.bootstrap, buf.final_values, cfg.gamma, cfg.lam,
            )
            stats = ppo_update(self.w, self.opt, buf, adv, ret, cfg, self.rng_shuffle,
                               value_only=warmups_left > 0)
            warmups_left = max(0, warmups_left - 1)
            self.global_steps += cfg.num_envs * cfg.rollout_length
            phase_steps += cfg.num_envs * cfg.rollout_length
            self.updates += 1
            recent_success.extend(buf.episode_successes)
            if curriculum_advance(curr, cfg):
                benv.cfg.step_cap = step_cap_for(curr.d)
            sr = float(np.mean(recent_success)) if recent_success else 0.0
            mr = float(np.mean(buf.episode_returns)) if buf.episode_returns else 0.0
            self._emit(
                f"{self.global_steps},{n},{curr.d:.4g},{sr:.4f},{mr:.4f},"
                f"{stats['policy_loss']:.6g},{stats['value_loss']:.6g},{stats['entropy']:.6g}"
            )
            if self.log and self.updates % 5 == 0:
                self.log(
                    f"update {self.updates}: n={n} d={curr.d:.2f} "
                    f"success={sr:.3f} return={mr:.2f} ent={stats['entropy']:.3f}"
                )
            if self.updates % cfg.checkpoint_every == 0:
                self._checkpoint("latest.weights")
            if cfg.phase_stop_d and curr.d >= cfg.phase_stop_d:
                break
        return curr
