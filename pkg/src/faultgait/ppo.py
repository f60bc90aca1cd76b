"""Clipped-surrogate policy optimization with generalized advantage
estimation over N parallel environments.

The update works on a :class:`GaussianActorCritic` (any DenseNet actor
producing a 12-dim mean plus a state-independent log-std, and a scalar
critic) and computes all gradients analytically through nets.py.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import PpoConfig
from .nets import (Adam, DenseNet, gaussian_entropy, gaussian_log_prob,
                   gaussian_log_prob_grads, gaussian_sample, merge_params)


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Advantages and returns from (N, T) reward/value/done arrays.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    with V_T taken from bootstrap_value.  Returns are A + V.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    n, t = rewards.shape
    adv = np.zeros((n, t))
    last = np.zeros(n)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    for step in range(t - 1, -1, -1):
        delta = rewards[:, step] + gamma * next_value * not_done[:, step] - values[:, step]
        last = delta + gamma * lam * not_done[:, step] * last
        adv[:, step] = last
        next_value = values[:, step]
    return adv, adv + values


@dataclass
class RolloutBatch:
    """(N, T)-leading rollout storage shared by teacher and student
    training; windows/labels/class indices are student-phase extras."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap_value: np.ndarray
    windows: np.ndarray | None = None
    labels: np.ndarray | None = None
    class_indices: np.ndarray | None = None
    advantages: np.ndarray = field(default=None, repr=False)
    returns: np.ndarray = field(default=None, repr=False)

    @property
    def num_envs(self) -> int:
        return self.obs.shape[0]

    @property
    def horizon(self) -> int:
        return self.obs.shape[1]

    def finalize(self, gamma: float, lam: float):
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, self.bootstrap_value, gamma, lam)
        return self


class GaussianActorCritic:
    """MLP actor with diagonal-Gaussian head plus an MLP critic."""

    def __init__(self, obs_dim, action_dim, actor_dims, critic_dims,
                 activation="elu", init_log_std=-1.0, seed=0, dtype=np.float32):
        self.actor = DenseNet(obs_dim, actor_dims, action_dim, activation,
                              out_gain=0.01, dtype=dtype, seed=seed)
        self.critic = DenseNet(obs_dim, critic_dims, 1, activation,
                               out_gain=1.0, dtype=dtype, seed=seed + 1)
        self.log_std = np.full(action_dim, init_log_std, dtype=dtype)
        self.dtype = np.dtype(dtype)

    @property
    def params(self) -> dict:
        merged = merge_params(actor=self.actor.params, critic=self.critic.params)
        merged["log_std"] = self.log_std
        return merged

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, snapshot: dict):
        for k, v in snapshot.items():
            np.copyto(self.params[k], v)

    def act(self, obs, rng: np.random.Generator):
        """Sample actions; returns (action, log_prob, value, mean)."""
        obs = np.asarray(obs, dtype=self.dtype)
        mean = self.actor.forward(obs)
        action = gaussian_sample(mean, self.log_std, rng)
        logp = gaussian_log_prob(mean, self.log_std, action)
        value = self.critic.forward(obs)[:, 0]
        return action, logp, value, mean

    def act_deterministic(self, obs):
        return self.actor.forward(np.asarray(obs, dtype=self.dtype))

    def value(self, obs):
        return self.critic.forward(np.asarray(obs, dtype=self.dtype))[:, 0]


def ppo_update(ac: GaussianActorCritic, opt: Adam, batch: RolloutBatch,
               cfg: PpoConfig, rng: np.random.Generator,
               actor_obs: np.ndarray | None = None) -> dict:
    """One optimization phase over a finalized rollout batch.

    actor_obs overrides the observations fed to actor and critic (student
    phases concatenate labels onto the plain observation).  On a
    non-finite loss the update aborts and restores the entry parameters.
    """
    if batch.advantages is None:
        raise RuntimeError("batch not finalized: call batch.finalize() first")
    obs = batch.obs if actor_obs is None else actor_obs
    b = batch.num_envs * batch.horizon
    obs = obs.reshape(b, -1).astype(ac.dtype)
    actions = batch.actions.reshape(b, -1).astype(ac.dtype)
    logp_old = batch.log_probs.reshape(b).astype(np.float64)
    adv = batch.advantages.reshape(b).astype(np.float64)
    returns = batch.returns.reshape(b).astype(np.float64)
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    snapshot = ac.copy_params()
    mb_size = b // cfg.minibatches
    kl_sum = clip_sum = pi_loss_sum = v_loss_sum = 0.0
    n_mb = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(b)
        for k in range(cfg.minibatches):
            idx = perm[k * mb_size:(k + 1) * mb_size]
            mb = float(idx.size)
            mean = ac.actor.forward(obs[idx])
            logp = gaussian_log_prob(mean, ac.log_std, actions[idx]).astype(np.float64)
            ratio = np.exp(logp - logp_old[idx])
            adv_mb = adv[idx]
            surr1 = ratio * adv_mb
            surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv_mb
            policy_loss = -np.minimum(surr1, surr2).mean()
            value = ac.critic.forward(obs[idx])[:, 0].astype(np.float64)
            v_err = value - returns[idx]
            value_loss = cfg.value_coef * np.mean(v_err**2)
            entropy = gaussian_entropy(ac.log_std)
            loss = policy_loss + value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(loss):
                ac.set_params(snapshot)
                return {"aborted": True, "loss": float(loss), "approx_kl": float("nan"),
                        "clip_fraction": float("nan"), "policy_loss": float("nan"),
                        "value_loss": float("nan"), "entropy": entropy}

            # gradient only flows through the unclipped branch of the min
            use_unclipped = (surr1 <= surr2).astype(np.float64)
            dlogp = -(adv_mb * ratio * use_unclipped) / mb
            dmean, dlog_std = gaussian_log_prob_grads(
                mean.astype(np.float64), ac.log_std.astype(np.float64),
                actions[idx].astype(np.float64), dlogp)
            dlog_std -= cfg.entropy_coef  # d(-c_e * H)/d log_std
            actor_grads = ac.actor.backward(dmean.astype(ac.dtype))
            dvalue = (2.0 * cfg.value_coef / mb) * v_err
            critic_grads = ac.critic.backward(dvalue[:, None].astype(ac.dtype))
            grads = merge_params(actor=actor_grads, critic=critic_grads)
            grads["log_std"] = dlog_std.astype(ac.dtype)
            opt.step(grads)

            kl_sum += float(np.mean(logp_old[idx] - logp))
            clip_sum += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            pi_loss_sum += float(policy_loss)
            v_loss_sum += float(value_loss)
            n_mb += 1
    return {
        "aborted": False,
        "approx_kl": kl_sum / n_mb,
        "clip_fraction": clip_sum / n_mb,
        "policy_loss": pi_loss_sum / n_mb,
        "value_loss": v_loss_sum / n_mb,
        "entropy": gaussian_entropy(ac.log_std),
    }


class StatsWriter:
    """Append-only per-iteration stats CSV."""

    def __init__(self, path, fieldnames):
        self.path = path
        self.fieldnames = list(fieldnames)
        self._fh = open(path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.fieldnames)
        self._writer.writeheader()

    def write(self, row: dict):
        self._writer.writerow({k: _fmt_stat(row.get(k, "")) for k in self.fieldnames})
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt_stat(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v
