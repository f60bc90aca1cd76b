"""Vectorized locomotion environment: simulation plus fault logic,
velocity commands, domain randomization, pushes, and termination.

Fault modes
-----------
  fixed     one fault class for every environment; the concrete joint mask
            is resampled per episode from the class's per-leg scenarios
            (teacher training: the fault is static from episode start).
  scheduled the active class is resampled every ``fault_switch_steps``
            control steps (with per-environment phase offsets) and at
            episode resets (student training).
  manual    the fault mask only changes via :meth:`set_fault` (evaluation).

Rewards are computed by the callers from the returned
:class:`~faultgait.rewards.StepSnapshot`; the environment is agnostic to
teacher vs student training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .faults import FaultCase, enumerate_fault_cases
from .rewards import StepSnapshot
from .sim import QuadrupedSim, projected_gravity, quat_rotate_inverse


@dataclass
class FaultSchedule:
    """Periodic fault-class switching for student training."""

    period: int = 300
    normal_weight: float = 2.0

    def sample_class(self, rng: np.random.Generator) -> int:
        w = np.ones(11)
        w[0] = self.normal_weight
        return int(rng.choice(11, p=w / w.sum()))


class LocomotionEnv:
    def __init__(self, cfg: Config, num_envs: int, seed_sequence: np.random.SeedSequence,
                 fault_mode: str = "fixed", fixed_class: int = 0,
                 schedule: FaultSchedule | None = None, randomize: bool = True,
                 pushes: bool = True, auto_reset: bool = True,
                 forward_cmd_cap: float | None = None):
        if fault_mode not in ("fixed", "scheduled", "manual"):
            raise ValueError(f"unknown fault mode {fault_mode!r}")
        self.cfg = cfg
        self.n = int(num_envs)
        self.fault_mode = fault_mode
        self.fixed_class = int(fixed_class)
        self.schedule = schedule or FaultSchedule(period=cfg.rand.fault_switch_steps,
                                                  normal_weight=cfg.student.normal_case_weight)
        self.randomize = randomize and cfg.rand.enabled
        self.pushes = pushes
        self.auto_reset = auto_reset
        self.classes = enumerate_fault_cases()
        self.sim = QuadrupedSim(cfg.sim, self.n)
        self.rngs = [np.random.Generator(np.random.PCG64(s)) for s in seed_sequence.spawn(self.n)]
        self.push_every = max(1, int(round(cfg.rand.push_interval_s / cfg.sim.control_dt)))

        self.commands = np.zeros((self.n, 3))
        self.prev_action = np.zeros((self.n, 12))
        self.active_class = np.full(self.n, self.fixed_class, dtype=np.int64)
        self.leg_labels = np.zeros((self.n, 4))
        self.push_counter = np.zeros(self.n, dtype=np.int64)
        self.switch_countdown = np.zeros(self.n, dtype=np.int64)
        self.switch_offsets = np.array(
            [int(self.rngs[i].integers(self.schedule.period)) for i in range(self.n)], dtype=np.int64)
        self.episode_return = np.zeros(self.n)
        self.forward_cmd_cap = forward_cmd_cap

    # -- per-environment sampling ---------------------------------------------

    def _sample_command(self, i: int) -> np.ndarray:
        t = self.cfg.teacher
        rng = self.rngs[i]
        hi = t.cmd_forward_high if self.forward_cmd_cap is None else min(
            t.cmd_forward_high, self.forward_cmd_cap)
        return np.array([
            rng.uniform(t.cmd_forward_low, hi),
            rng.uniform(-t.cmd_lateral, t.cmd_lateral),
            rng.uniform(-t.cmd_yaw, t.cmd_yaw),
        ])

    def _sample_fault(self, i: int, class_index: int):
        case = self.classes[class_index].sample(self.rngs[i])
        self.active_class[i] = class_index
        self.leg_labels[i] = case.leg_label
        self.sim.fault_mask[i] = case.mask_array()

    def set_fault(self, i: int, case: FaultCase):
        """Manually install a concrete fault (manual mode / evaluation)."""
        self.active_class[i] = case.teacher_index
        self.leg_labels[i] = case.leg_label
        self.sim.fault_mask[i] = case.mask_array()

    def _reset_env(self, i: int):
        rng = self.rngs[i]
        c = self.cfg.sim
        joint_pos = self.sim.nominal_joint_pos + rng.uniform(-0.05, 0.05, 12)
        base_pos = np.array([0.0, 0.0, c.nominal_height + 0.02])
        quat = np.array([1.0, 0.0, 0.0, 0.0])
        self.sim.reset_envs(np.array([i]), base_pos, quat, joint_pos)
        if self.randomize:
            r = self.cfg.rand
            self.sim.friction[i] = rng.uniform(r.friction_low, r.friction_high)
            self.sim.added_mass[i] = rng.uniform(r.added_mass_low, r.added_mass_high)
            self.sim.motor_scale[i] = rng.uniform(r.motor_scale_low, r.motor_scale_high)
        else:
            self.sim.friction[i] = c.friction
            self.sim.added_mass[i] = 0.0
            self.sim.motor_scale[i] = 1.0
        self.commands[i] = self._sample_command(i)
        self.prev_action[i] = 0.0
        self.push_counter[i] = 0
        self.episode_return[i] = 0.0
        if self.fault_mode == "fixed":
            self._sample_fault(i, self.fixed_class)
        elif self.fault_mode == "scheduled":
            self._sample_fault(i, self.schedule.sample_class(rng))
            self.switch_countdown[i] = self.schedule.period - self.switch_offsets[i]
        # manual mode keeps whatever fault is installed

    def reset_all(self) -> np.ndarray:
        for i in range(self.n):
            self._reset_env(i)
        return self.observations()

    def observations(self) -> np.ndarray:
        return self.sim.observations(self.commands, self.prev_action)

    # -- stepping ---------------------------------------------------------------

    def pre_step(self) -> np.ndarray:
        """Schedule bookkeeping before the policy acts: fault switching
        (scheduled mode) and due pushes.  Returns the switched mask, so the
        active class is already current when reference actions are drawn.
        """
        switched = np.zeros(self.n, dtype=bool)
        if self.fault_mode == "scheduled":
            self.switch_countdown -= 1
            for i in np.nonzero(self.switch_countdown <= 0)[0]:
                self._sample_fault(int(i), self.schedule.sample_class(self.rngs[int(i)]))
                self.switch_countdown[i] = self.schedule.period
                switched[i] = True
        if self.pushes:
            self.push_counter += 1
            for i in np.nonzero(self.push_counter >= self.push_every)[0]:
                self.sim.apply_push(int(i), self.sample_push(self.rngs[int(i)]))
                self.push_counter[i] = 0
        self._switched = switched
        return switched

    def sample_push(self, rng: np.random.Generator) -> np.ndarray:
        """Horizontal velocity impulse: uniform heading, magnitude in
        [0, push_velocity]."""
        heading = rng.uniform(0.0, 2.0 * np.pi)
        mag = rng.uniform(0.0, self.cfg.rand.push_velocity)
        return mag * np.array([np.cos(heading), np.sin(heading)])

    def step(self, actions: np.ndarray):
        """Apply policy actions (position offsets from nominal, pre-scale).

        Returns (obs, snapshot, dones, info).  Done environments are
        auto-reset (unless auto_reset=False); the returned observations are
        post-reset ones there.  Callers run pre_step() once before acting.
        """
        actions = np.asarray(actions, dtype=np.float64)
        prev_action_snapshot = self.prev_action.copy()
        switched = getattr(self, "_switched", np.zeros(self.n, dtype=bool))
        self._switched = np.zeros(self.n, dtype=bool)

        targets = self.sim.nominal_joint_pos[None, :] + self.cfg.sim.action_scale * actions
        diverged = self.sim.step(targets)

        lin_vel_body = quat_rotate_inverse(self.sim.base_quat, self.sim.base_lin_vel)
        gravity_body = projected_gravity(self.sim.base_quat)
        foot_heights = self.sim.foot_heights()
        contacts = (foot_heights <= self.cfg.sim.contact_threshold).astype(np.int64)
        snapshot = StepSnapshot(
            lin_vel_body=lin_vel_body,
            ang_vel_body=self.sim.base_ang_vel.copy(),
            gravity_body=gravity_body,
            base_height=self.sim.base_pos[:, 2].copy(),
            joint_pos=self.sim.joint_pos.copy(),
            foot_heights=foot_heights,
            contacts=contacts,
            torque_sq=self.sim.last_torque_sq.copy(),
            commands=self.commands.copy(),
            action=actions.copy(),
            prev_action=prev_action_snapshot,
        )

        roll, pitch, _ = self.sim.base_rpy()
        c = self.cfg.sim
        fell = (self.sim.base_pos[:, 2] < c.min_base_height) | (
            np.abs(roll) > c.max_tilt) | (np.abs(pitch) > c.max_tilt)
        time_out = self.sim.step_count >= c.max_episode_steps
        dones = fell | time_out | diverged

        self.prev_action = actions.copy()
        if self.auto_reset:
            for i in np.nonzero(dones)[0]:
                self._reset_env(int(i))
        info = {
            "time_outs": time_out,
            "diverged": diverged,
            "fell": fell,
            "switched": switched,
            "active_class": self.active_class.copy(),
            "leg_labels": self.leg_labels.copy(),
        }
        return self.observations(), snapshot, dones, info
