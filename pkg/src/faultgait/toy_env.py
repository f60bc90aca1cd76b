"""Torque-limited pendulum swing-up: the built-in toy environment used to
baseline the policy-optimization loop independent of the quadruped."""

from __future__ import annotations

import numpy as np

from .config import PpoConfig
from .nets import Adam
from .ppo import GaussianActorCritic, RolloutBatch, ppo_update


class PendulumEnv:
    """Vectorized pendulum; obs = (cos, sin, rate), action = torque in [-2, 2]."""

    GRAV = 10.0
    MASS = 1.0
    LENGTH = 1.0
    DT = 0.05
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0
    EPISODE_LEN = 200

    def __init__(self, num_envs: int, seed: int = 0):
        self.n = num_envs
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.theta = np.zeros(num_envs)
        self.theta_dot = np.zeros(num_envs)
        self.t = np.zeros(num_envs, dtype=np.int64)

    def _obs(self):
        return np.stack([np.cos(self.theta), np.sin(self.theta), self.theta_dot], axis=1)

    def reset_all(self):
        self.theta = self.rng.uniform(-np.pi, np.pi, self.n)
        self.theta_dot = self.rng.uniform(-1.0, 1.0, self.n)
        self.t[:] = 0
        return self._obs()

    def step(self, actions):
        u = np.clip(np.asarray(actions, dtype=np.float64)[:, 0], -self.MAX_TORQUE, self.MAX_TORQUE)
        angle = (self.theta + np.pi) % (2.0 * np.pi) - np.pi
        reward = -(angle**2 + 0.1 * self.theta_dot**2 + 0.001 * u**2)
        acc = (3.0 * self.GRAV / (2.0 * self.LENGTH) * np.sin(self.theta)
               + 3.0 / (self.MASS * self.LENGTH**2) * u)
        self.theta_dot = np.clip(self.theta_dot + acc * self.DT, -self.MAX_SPEED, self.MAX_SPEED)
        self.theta = self.theta + self.theta_dot * self.DT
        self.t += 1
        dones = self.t >= self.EPISODE_LEN
        for i in np.nonzero(dones)[0]:
            self.theta[i] = self.rng.uniform(-np.pi, np.pi)
            self.theta_dot[i] = self.rng.uniform(-1.0, 1.0)
            self.t[i] = 0
        return self._obs(), reward, dones


def train_pendulum(iterations: int = 200, num_envs: int = 32, seed: int = 0,
                   steps_per_iter: int = 96):
    """Train on the pendulum; returns per-iteration mean step rewards.

    gamma 0.9 fits the toy's 200-step episodes; longer discounting stalls
    the swing-up at this sample budget.
    """
    cfg = PpoConfig(steps_per_iter=steps_per_iter, num_envs=num_envs, gamma=0.9)
    env = PendulumEnv(num_envs, seed=seed)
    ac = GaussianActorCritic(3, 1, (64, 64), (64, 64), init_log_std=0.0, seed=seed)
    opt = Adam(ac.params, lr=1e-3, max_grad_norm=cfg.max_grad_norm)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    obs = env.reset_all()
    history = []
    for _ in range(iterations):
        t_obs = np.zeros((num_envs, cfg.steps_per_iter, 3), dtype=np.float32)
        t_act = np.zeros((num_envs, cfg.steps_per_iter, 1), dtype=np.float32)
        t_logp = np.zeros((num_envs, cfg.steps_per_iter))
        t_val = np.zeros((num_envs, cfg.steps_per_iter))
        t_rew = np.zeros((num_envs, cfg.steps_per_iter))
        t_done = np.zeros((num_envs, cfg.steps_per_iter))
        for t in range(cfg.steps_per_iter):
            action, logp, value, _ = ac.act(obs, rng)
            t_obs[:, t] = obs
            t_act[:, t] = action
            t_logp[:, t] = logp
            t_val[:, t] = value
            obs, reward, dones = env.step(action)
            t_rew[:, t] = reward
            t_done[:, t] = dones
        batch = RolloutBatch(t_obs, t_act, t_logp, t_val, t_rew, t_done,
                             bootstrap_value=ac.value(obs)).finalize(cfg.gamma, cfg.lam)
        ppo_update(ac, opt, batch, cfg, rng)
        history.append(float(t_rew.mean()))
    return history
