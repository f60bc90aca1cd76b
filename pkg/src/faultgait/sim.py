"""Reduced-order quadruped simulator with PD joint control, penalty
contact, torque-loss fault injection, and velocity-impulse pushes.

Model
-----
A rigid 6-DoF base carries the robot's total mass and a box-composite
inertia.  The 12 revolute joints (per leg: hip abduction about x, thigh
and knee pitch about y) are second-order systems with a fixed effective
inertia; legs are kinematically attached but massless for base dynamics.
Ground contact acts at the four point feet via a spring-damper normal
force with a Coulomb-capped tangential force; each contact force loads
the base as a wrench at the foot point and back-drives the leg joints
through the foot-Jacobian transpose.  Unpowered (faulted) joints
therefore collapse under load, which is the behavior torque-loss faults
must produce.

Conventions, fixed project-wide:
  * quaternions are (w, x, y, z), unit norm, rotating body -> world;
  * base angular velocity is stored in the body frame;
  * projected gravity is the body-frame unit vector R^T (0, 0, -1), so an
    upright robot reads (0, 0, -1);
  * leg order LF, RF, LR, RR; joint order hip, thigh, knee (see faults.py);
  * ground is the z = 0 plane.

Integration is semi-implicit (velocities first) with trapezoidal position
drift, which integrates constant-gravity flight exactly and conserves
translational energy; the per-step quaternion increment uses the updated
body rates.  Everything is float64 and vectorized over N independent
environments (no cross-environment coupling; lockstep stepping is
equivalent to stepping instances concurrently).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig

GRAVITY_DIR = np.array([0.0, 0.0, -1.0])


class SimulationDiverged(RuntimeError):
    """Raised when integration produced a non-finite state."""


# ---------------------------------------------------------------------------
# quaternion helpers (batched, (N, 4) wxyz)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body-frame vectors into the world frame."""
    w = q[..., :1]
    u = q[..., 1:]
    c = np.cross(u, v)
    return v + 2.0 * (w * c + np.cross(u, c))


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate world-frame vectors into the body frame."""
    w = q[..., :1]
    u = q[..., 1:]
    c = np.cross(u, v)
    return v + 2.0 * (-w * c + np.cross(u, c))


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(rv, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < 1e-12
    scale = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, angle))
    q = np.concatenate([np.cos(half), rv * scale], axis=-1)
    return q


def quat_to_euler(q: np.ndarray):
    """Roll, pitch, yaw (x-y-z) from unit quaternions."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


def rotmat_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


# ---------------------------------------------------------------------------
# state containers


@dataclass
class SimState:
    """Single-environment snapshot of the reduced quadruped."""

    base_pos: np.ndarray
    base_quat: np.ndarray
    base_lin_vel: np.ndarray
    base_ang_vel: np.ndarray  # body frame
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    foot_contacts: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    step_count: int = 0

    def copy(self) -> "SimState":
        return SimState(
            self.base_pos.copy(), self.base_quat.copy(), self.base_lin_vel.copy(),
            self.base_ang_vel.copy(), self.joint_pos.copy(), self.joint_vel.copy(),
            self.foot_contacts.copy(), self.step_count,
        )


def projected_gravity(quat: np.ndarray) -> np.ndarray:
    """Body-frame gravity direction; (0, 0, -1) for an upright robot."""
    return quat_rotate_inverse(quat, np.broadcast_to(GRAVITY_DIR, quat.shape[:-1] + (3,)))


def build_observation(state: SimState, command: np.ndarray, prev_action: np.ndarray) -> np.ndarray:
    """45-dim observation: [base ang vel, projected gravity, joint pos,
    joint vel, velocity command, previous action], in exactly this order.

    Pure function of its inputs; no scaling or offsets are applied.
    """
    g = projected_gravity(state.base_quat[None])[0]
    return np.concatenate(
        [
            np.asarray(state.base_ang_vel, dtype=np.float64),
            g,
            np.asarray(state.joint_pos, dtype=np.float64),
            np.asarray(state.joint_vel, dtype=np.float64),
            np.asarray(command, dtype=np.float64),
            np.asarray(prev_action, dtype=np.float64),
        ]
    )


OBS_SLICES = {
    "base_ang_vel": slice(0, 3),
    "projected_gravity": slice(3, 6),
    "joint_pos": slice(6, 18),
    "joint_vel": slice(18, 30),
    "command": slice(30, 33),
    "prev_action": slice(33, 45),
}


class QuadrupedSim:
    """Vectorized simulator over N independent environments."""

    def __init__(self, cfg: SimConfig, num_envs: int = 1):
        cfg.validate()
        self.cfg = cfg
        self.n = int(num_envs)
        n = self.n
        # per-leg geometry tables
        sx = np.array([1.0, 1.0, -1.0, -1.0])
        sy = np.array([1.0, -1.0, 1.0, -1.0])
        self.hip_pos = np.stack([sx * cfg.hip_x, sy * cfg.hip_y, np.zeros(4)], axis=1)
        self.hip_side = sy * cfg.hip_offset
        self.joint_low = np.tile(
            [-cfg.hip_limit, cfg.thigh_limit_low, cfg.knee_limit_low], 4)
        self.joint_high = np.tile(
            [cfg.hip_limit, cfg.thigh_limit_high, cfg.knee_limit_high], 4)
        self.nominal_joint_pos = np.tile(
            [cfg.nominal_hip, cfg.nominal_thigh, cfg.nominal_knee], 4)
        # state
        self.base_pos = np.zeros((n, 3))
        self.base_quat = np.zeros((n, 4))
        self.base_quat[:, 0] = 1.0
        self.base_lin_vel = np.zeros((n, 3))
        self.base_ang_vel = np.zeros((n, 3))  # body frame
        self.joint_pos = np.tile(self.nominal_joint_pos, (n, 1))
        self.joint_vel = np.zeros((n, 12))
        self.step_count = np.zeros(n, dtype=np.int64)
        self.diverged = np.zeros(n, dtype=bool)
        # per-environment physical parameters (domain randomization hooks)
        self.friction = np.full(n, cfg.friction)
        self.motor_scale = np.ones(n)
        self.added_mass = np.zeros(n)
        self.fault_mask = np.zeros((n, 12), dtype=bool)
        # step logs
        self.last_torques = np.zeros((n, cfg.control_decimation, 12))
        self.last_torque_sq = np.zeros(n)

    # -- derived quantities -------------------------------------------------

    def total_mass(self) -> np.ndarray:
        return self.cfg.total_mass + self.added_mass

    def inertia_diag(self) -> np.ndarray:
        c = self.cfg
        m = self.total_mass()[:, None]
        lx, ly, lz = c.body_length, c.body_width, c.body_height
        base = np.array([(ly * ly + lz * lz), (lx * lx + lz * lz), (lx * lx + ly * ly)]) / 12.0
        return m * base[None, :]

    def foot_positions_base(self, joint_pos: np.ndarray | None = None):
        """Foot points and per-leg Jacobians, both in the base frame.

        Returns (pos (N,4,3), jac (N,4,3,3)) with jac[..., i, j] equal to
        the partial of foot coordinate i wrt leg joint j.
        """
        c = self.cfg
        q = (self.joint_pos if joint_pos is None else joint_pos).reshape(-1, 4, 3)
        q0, q1, q2 = q[..., 0], q[..., 1], q[..., 2]
        s0, c0 = np.sin(q0), np.cos(q0)
        lt, lc = c.thigh_length, c.calf_length
        s1, c1 = np.sin(q1), np.cos(q1)
        s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
        x_leg = lt * s1 + lc * s12
        z_leg = -(lt * c1 + lc * c12)
        d = self.hip_side[None, :]
        pos = np.empty(q.shape[:2] + (3,))
        pos[..., 0] = self.hip_pos[None, :, 0] + x_leg
        pos[..., 1] = self.hip_pos[None, :, 1] + d * c0 - z_leg * s0
        pos[..., 2] = d * s0 + z_leg * c0
        jac = np.zeros(q.shape[:2] + (3, 3))
        # hip abduction
        jac[..., 1, 0] = -d * s0 - z_leg * c0
        jac[..., 2, 0] = d * c0 - z_leg * s0
        # thigh pitch
        dx1 = lt * c1 + lc * c12
        dz1 = lt * s1 + lc * s12
        jac[..., 0, 1] = dx1
        jac[..., 1, 1] = -dz1 * s0
        jac[..., 2, 1] = dz1 * c0
        # knee pitch
        jac[..., 0, 2] = lc * c12
        jac[..., 1, 2] = -lc * s12 * s0
        jac[..., 2, 2] = lc * s12 * c0
        return pos, jac

    def foot_heights(self) -> np.ndarray:
        pos_b, _ = self.foot_positions_base()
        pos_w = self.base_pos[:, None, :] + quat_rotate(self.base_quat[:, None, :], pos_b)
        return pos_w[..., 2]

    def contact_flags(self) -> np.ndarray:
        """1 iff foot height <= contact threshold."""
        return (self.foot_heights() <= self.cfg.contact_threshold).astype(np.int64)

    def base_rpy(self):
        return quat_to_euler(self.base_quat)

    def mechanical_energy(self) -> np.ndarray:
        """Base kinetic + potential energy plus joint kinetic energy."""
        c = self.cfg
        m = self.total_mass()
        ke_lin = 0.5 * m * np.sum(self.base_lin_vel**2, axis=1)
        ke_rot = 0.5 * np.sum(self.inertia_diag() * self.base_ang_vel**2, axis=1)
        pe = m * c.gravity * self.base_pos[:, 2]
        ke_joint = 0.5 * c.joint_inertia * np.sum(self.joint_vel**2, axis=1)
        return ke_lin + ke_rot + pe + ke_joint

    # -- state access ---------------------------------------------------------

    def get_state(self, i: int = 0) -> SimState:
        return SimState(
            self.base_pos[i].copy(), self.base_quat[i].copy(),
            self.base_lin_vel[i].copy(), self.base_ang_vel[i].copy(),
            self.joint_pos[i].copy(), self.joint_vel[i].copy(),
            self.contact_flags()[i], int(self.step_count[i]),
        )

    def set_state(self, i: int, state: SimState):
        self.base_pos[i] = state.base_pos
        self.base_quat[i] = state.base_quat / np.linalg.norm(state.base_quat)
        self.base_lin_vel[i] = state.base_lin_vel
        self.base_ang_vel[i] = state.base_ang_vel
        self.joint_pos[i] = state.joint_pos
        self.joint_vel[i] = state.joint_vel
        self.step_count[i] = state.step_count
        self.diverged[i] = False

    def reset_envs(self, idx: np.ndarray, base_pos, base_quat, joint_pos,
                   joint_vel=None, lin_vel=None, ang_vel=None):
        self.base_pos[idx] = base_pos
        self.base_quat[idx] = base_quat
        self.joint_pos[idx] = joint_pos
        self.joint_vel[idx] = 0.0 if joint_vel is None else joint_vel
        self.base_lin_vel[idx] = 0.0 if lin_vel is None else lin_vel
        self.base_ang_vel[idx] = 0.0 if ang_vel is None else ang_vel
        self.step_count[idx] = 0
        self.diverged[idx] = False

    def observations(self, commands: np.ndarray, prev_actions: np.ndarray) -> np.ndarray:
        """(N, 45) batch of build_observation outputs."""
        return np.concatenate(
            [
                self.base_ang_vel,
                projected_gravity(self.base_quat),
                self.joint_pos,
                self.joint_vel,
                np.asarray(commands, dtype=np.float64),
                np.asarray(prev_actions, dtype=np.float64),
            ],
            axis=1,
        )

    def apply_push(self, idx, delta_v: np.ndarray):
        """Velocity-impulse push: adds a horizontal velocity to the base."""
        self.base_lin_vel[idx, :2] += delta_v

    # -- stepping -------------------------------------------------------------

    def step(self, joint_targets: np.ndarray) -> np.ndarray:
        """Advance one control step (control_decimation physics substeps).

        joint_targets are absolute joint-position setpoints (rad).  Applies
        the PD law with torque clamping and motor scaling, zeroes the
        torque of faulted joints, integrates, and returns the boolean
        divergence mask for this step (those environments need a reset).
        """
        c = self.cfg
        targets = np.asarray(joint_targets, dtype=np.float64)
        if not np.all(np.isfinite(targets)):
            raise ValueError("joint targets must be finite")
        dt = c.physics_dt
        mass = self.total_mass()
        inertia = self.inertia_diag()
        torque_sq = np.zeros(self.n)
        newly_diverged = np.zeros(self.n, dtype=bool)
        for sub in range(c.control_decimation):
            tau = c.kp * (targets - self.joint_pos) - c.kd * self.joint_vel
            np.clip(tau, -c.torque_limit, c.torque_limit, out=tau)
            tau *= self.motor_scale[:, None]
            tau[self.fault_mask] = 0.0
            self.last_torques[:, sub, :] = tau
            torque_sq += np.sum(tau * tau, axis=1)

            pos_b, jac = self.foot_positions_base()
            rel_w = quat_rotate(self.base_quat[:, None, :], pos_b)
            pos_w = self.base_pos[:, None, :] + rel_w
            omega_w = quat_rotate(self.base_quat, self.base_ang_vel)
            joint_foot_vel = np.einsum("nlij,nlj->nli", jac, self.joint_vel.reshape(-1, 4, 3))
            vel_w = (
                self.base_lin_vel[:, None, :]
                + np.cross(omega_w[:, None, :], rel_w)
                + quat_rotate(self.base_quat[:, None, :], joint_foot_vel)
            )

            pen = -pos_w[..., 2]
            active = pen > 0.0
            fn = np.where(
                active,
                np.maximum(c.contact_stiffness * pen - c.contact_damping * vel_w[..., 2], 0.0),
                0.0,
            )
            ft = -c.contact_tangent_damping * vel_w[..., :2]
            ft_norm = np.linalg.norm(ft, axis=-1)
            cap = self.friction[:, None] * fn
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(ft_norm > cap, cap / np.where(ft_norm > 0, ft_norm, 1.0), 1.0)
                ft = ft * (scale * active)[..., None]
            force_w = np.concatenate([ft, (fn * active)[..., None]], axis=-1)

            # base wrench
            f_total = force_w.sum(axis=1)
            f_total[:, 2] -= mass * c.gravity
            torque_w = np.cross(rel_w, force_w).sum(axis=1)
            torque_b = quat_rotate_inverse(self.base_quat, torque_w)

            # joint back-drive through the foot Jacobian
            force_b = quat_rotate_inverse(self.base_quat[:, None, :], force_w)
            tau_contact = np.einsum("nlij,nli->nlj", jac, force_b).reshape(-1, 12)

            # integrate joints (semi-implicit, hard limit stops)
            qdd = (tau + tau_contact) / c.joint_inertia
            new_vel = self.joint_vel + dt * qdd
            new_pos = self.joint_pos + dt * new_vel
            low, high = self.joint_low[None, :], self.joint_high[None, :]
            clamped = (new_pos < low) | (new_pos > high)
            np.clip(new_pos, low, high, out=new_pos)
            new_vel[clamped] = 0.0
            self.joint_pos = new_pos
            self.joint_vel = new_vel

            # integrate base: semi-implicit velocity, position drift with the
            # exact constant-gravity correction (+g*dt^2/2), which integrates
            # ballistic flight exactly while keeping spring modes symplectic
            acc = f_total / mass[:, None]
            new_lin = self.base_lin_vel + dt * acc
            self.base_pos = self.base_pos + dt * new_lin
            self.base_pos[:, 2] += 0.5 * dt * dt * c.gravity
            self.base_lin_vel = new_lin
            gyro = np.cross(self.base_ang_vel, inertia * self.base_ang_vel)
            ang_acc = (torque_b - gyro) / inertia
            new_ang = self.base_ang_vel + dt * ang_acc
            dq = quat_from_rotvec(new_ang * dt)
            self.base_quat = quat_mul(self.base_quat, dq)
            self.base_quat /= np.linalg.norm(self.base_quat, axis=1, keepdims=True)
            self.base_ang_vel = new_ang

            bad = ~(
                np.isfinite(self.base_pos).all(axis=1)
                & np.isfinite(self.base_quat).all(axis=1)
                & np.isfinite(self.base_lin_vel).all(axis=1)
                & np.isfinite(self.base_ang_vel).all(axis=1)
                & np.isfinite(self.joint_pos).all(axis=1)
                & np.isfinite(self.joint_vel).all(axis=1)
            )
            if bad.any():
                newly_diverged |= bad
                # freeze the broken environments in a safe state until reset
                for arr in (self.base_pos, self.base_lin_vel, self.base_ang_vel,
                            self.joint_pos, self.joint_vel):
                    arr[bad] = np.nan_to_num(arr[bad], nan=0.0, posinf=0.0, neginf=0.0)
                self.base_quat[bad] = np.array([1.0, 0.0, 0.0, 0.0])

        self.last_torque_sq = torque_sq / c.control_decimation
        self.step_count += 1
        self.diverged |= newly_diverged
        return newly_diverged

    def step_single(self, state: SimState, joint_targets, fault_mask=None,
                    motor_scale: float = 1.0) -> SimState:
        """Functional single-environment step for environment 0."""
        if self.n != 1:
            raise ValueError("step_single requires a 1-environment simulator")
        self.set_state(0, state)
        if fault_mask is not None:
            self.fault_mask[0] = np.asarray(fault_mask, dtype=bool)
        self.motor_scale[0] = motor_scale
        diverged = self.step(np.asarray(joint_targets, dtype=np.float64).reshape(1, 12))
        if diverged[0]:
            raise SimulationDiverged("non-finite state after integration")
        return self.get_state(0)
