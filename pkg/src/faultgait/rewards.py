"""Reward terms: per-fault-case teacher rewards, the shared regularization
set, and the similarity (style) rewards used for distillation.

Every reward is reported as a :class:`RewardBreakdown` holding the raw
per-term values and their weights separately; the total is always the dot
product of the two, so setting a weight to zero removes that term's
influence exactly and logging stays consistent with training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .config import StudentTrainConfig, TeacherTrainConfig
from .faults import NUM_LEGS


@dataclass
class RewardBreakdown:
    """Per-term reward values and weights; total = sum(w_i * t_i)."""

    terms: dict
    weights: dict

    def total(self):
        keys = list(self.terms)
        out = sum(self.weights[k] * self.terms[k] for k in keys)
        return out

    def weighted(self, key):
        return self.weights[key] * self.terms[key]

    def scalar_terms(self) -> dict:
        return {k: float(np.mean(v)) for k, v in self.terms.items()}


@dataclass
class RegWeights:
    """Weights of the shared regularization terms (teacher and student)."""

    lin_tracking: float = 1.5
    yaw_tracking: float = 0.75
    vertical_velocity: float = 1.0
    roll_pitch_rate: float = 0.05
    orientation: float = 1.0
    torque: float = 1e-4
    action_rate: float = 0.01
    joint_limit: float = 5.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TeacherRewardConfig:
    """Per-fault-class teacher reward weights."""

    class_index: int = 0
    faulty_contact: float = 0.0
    faulty_lift: float = 0.0
    base_height: float = 0.3
    healthy_contact: float = 0.0
    reg: RegWeights = field(default_factory=RegWeights)


@dataclass
class StepSnapshot:
    """Physical quantities a reward step needs, batched over environments."""

    lin_vel_body: np.ndarray  # (N, 3)
    ang_vel_body: np.ndarray  # (N, 3)
    gravity_body: np.ndarray  # (N, 3)
    base_height: np.ndarray  # (N,)
    joint_pos: np.ndarray  # (N, 12)
    foot_heights: np.ndarray  # (N, 4)
    contacts: np.ndarray  # (N, 4) in {0, 1}
    torque_sq: np.ndarray  # (N,) mean over substeps of sum tau^2
    commands: np.ndarray  # (N, 3)
    action: np.ndarray  # (N, 12)
    prev_action: np.ndarray  # (N, 12)


def regularization_terms(snap: StepSnapshot, teacher_cfg: TeacherTrainConfig,
                         joint_low: np.ndarray, joint_high: np.ndarray) -> dict:
    """Raw (unweighted) values of the shared regularization terms.

    Tracking terms are exp(-err^2 / sigma^2) in (0, 1]; the remaining
    terms are penalties (<= 0).
    """
    sigma2 = teacher_cfg.tracking_sigma**2
    lin_err = np.sum((snap.commands[:, :2] - snap.lin_vel_body[:, :2]) ** 2, axis=1)
    yaw_err = (snap.commands[:, 2] - snap.ang_vel_body[:, 2]) ** 2
    soft_low = joint_low + 0.05 * (joint_high - joint_low)
    soft_high = joint_high - 0.05 * (joint_high - joint_low)
    limit_excess = np.maximum(soft_low - snap.joint_pos, 0.0) + np.maximum(
        snap.joint_pos - soft_high, 0.0)
    return {
        "lin_tracking": np.exp(-lin_err / sigma2),
        "yaw_tracking": np.exp(-yaw_err / sigma2),
        "vertical_velocity": -snap.lin_vel_body[:, 2] ** 2,
        "roll_pitch_rate": -(snap.ang_vel_body[:, 0] ** 2 + snap.ang_vel_body[:, 1] ** 2),
        "orientation": -(snap.gravity_body[:, 0] ** 2 + snap.gravity_body[:, 1] ** 2),
        "torque": -snap.torque_sq,
        "action_rate": -np.sum((snap.action - snap.prev_action) ** 2, axis=1),
        "joint_limit": -np.sum(limit_excess, axis=1),
    }


def fault_terms(snap: StepSnapshot, leg_labels: np.ndarray,
                teacher_cfg: TeacherTrainConfig, nominal_height: float) -> dict:
    """Raw fault-specific term values.

    leg_labels: (N, 4) with 1 marking faulty legs.  The faulty-leg contact
    term is a penalty (<= 0); the lift term grows with faulty-foot
    clearance up to a cap; the base-height term peaks at the nominal
    stance height; the healthy-contact term is the healthy legs' mean
    contact flag.
    """
    faulty = np.asarray(leg_labels, dtype=np.float64)
    healthy = 1.0 - faulty
    n_faulty = faulty.sum(axis=1)
    n_healthy = NUM_LEGS - n_faulty
    contacts = np.asarray(snap.contacts, dtype=np.float64)

    faulty_contact = -np.sum(contacts * faulty, axis=1)
    clearance = np.clip(snap.foot_heights, 0.0, teacher_cfg.clearance_cap)
    faulty_lift = np.where(
        n_faulty > 0,
        np.sum(clearance * faulty, axis=1) / (teacher_cfg.clearance_cap * np.maximum(n_faulty, 1.0)),
        0.0,
    )
    height_err = (snap.base_height - nominal_height) ** 2
    base_height = np.exp(-height_err / teacher_cfg.height_sigma**2)
    healthy_contact = np.sum(contacts * healthy, axis=1) / np.maximum(n_healthy, 1.0)
    return {
        "faulty_contact": faulty_contact,
        "faulty_lift": faulty_lift,
        "base_height": base_height,
        "healthy_contact": healthy_contact,
    }


# fixed term order shared by the per-case weight matrix
FAULT_TERM_NAMES = ("faulty_contact", "faulty_lift", "base_height", "healthy_contact")
REG_TERM_NAMES = tuple(f.name for f in fields(RegWeights))
TERM_ORDER = FAULT_TERM_NAMES + REG_TERM_NAMES


def teacher_reward(snap: StepSnapshot, leg_labels: np.ndarray,
                   cfg: TeacherRewardConfig, teacher_cfg: TeacherTrainConfig,
                   joint_low: np.ndarray, joint_high: np.ndarray,
                   nominal_height: float) -> RewardBreakdown:
    """Per-case teacher reward: fault-specific terms plus regularization."""
    terms = fault_terms(snap, leg_labels, teacher_cfg, nominal_height)
    weights = {
        "faulty_contact": cfg.faulty_contact,
        "faulty_lift": cfg.faulty_lift,
        "base_height": cfg.base_height,
        "healthy_contact": cfg.healthy_contact,
    }
    terms.update(regularization_terms(snap, teacher_cfg, joint_low, joint_high))
    weights.update(cfg.reg.as_dict())
    return RewardBreakdown(terms, weights)


def stack_case_weights(cfgs: list) -> np.ndarray:
    """(11, len(TERM_ORDER)) weight matrix from the per-case configs."""
    rows = []
    for c in cfgs:
        w = {
            "faulty_contact": c.faulty_contact,
            "faulty_lift": c.faulty_lift,
            "base_height": c.base_height,
            "healthy_contact": c.healthy_contact,
        }
        w.update(c.reg.as_dict())
        rows.append([w[name] for name in TERM_ORDER])
    return np.array(rows)


def per_env_case_reward(snap: StepSnapshot, leg_labels, class_indices,
                        weight_matrix: np.ndarray, teacher_cfg: TeacherTrainConfig,
                        joint_low, joint_high, nominal_height: float) -> np.ndarray:
    """Teacher-style reward where each environment uses its active case's
    weights (the style-reward replacement in the no-style ablation)."""
    terms = fault_terms(snap, leg_labels, teacher_cfg, nominal_height)
    terms.update(regularization_terms(snap, teacher_cfg, joint_low, joint_high))
    t = np.stack([terms[name] for name in TERM_ORDER], axis=1)
    w = weight_matrix[np.asarray(class_indices, dtype=np.int64)]
    return np.sum(w * t, axis=1)


# ---------------------------------------------------------------------------
# style (action-similarity) rewards


def style_scale_reward(a: np.ndarray, a_star: np.ndarray):
    """exp(-||a - a*||_2): amplitude similarity, in (0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    a_star = np.asarray(a_star, dtype=np.float64)
    dist = np.linalg.norm(a - a_star, axis=-1)
    return np.exp(-dist)


def style_direction_reward(a: np.ndarray, a_star: np.ndarray, norm_eps: float = 1e-8):
    """exp(cos(a, a*)): direction similarity, in [1/e, e].

    If either action has norm below norm_eps the cosine is undefined; the
    reward falls back to the neutral value exp(0) = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    a_star = np.asarray(a_star, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(a_star, axis=-1)
    denom = na * nb
    ok = (na >= norm_eps) & (nb >= norm_eps)
    cos = np.where(ok, np.sum(a * a_star, axis=-1) / np.where(ok, denom, 1.0), 0.0)
    cos = np.clip(cos, -1.0, 1.0)
    return np.exp(cos)


def total_student_reward(a: np.ndarray, a_star: np.ndarray, reg_terms: dict,
                         reg_weights: RegWeights, cfg: StudentTrainConfig) -> RewardBreakdown:
    """c1 * scale + c2 * direction + c3 * (weighted regularization sum).

    The breakdown keeps each regularization term separate (term value
    scaled by its own regularization weight; breakdown weight c3), so the
    total stays linear in (c1, c2, c3) and per-term logs remain exact.
    """
    terms = {
        "style_scale": style_scale_reward(a, a_star),
        "style_direction": style_direction_reward(a, a_star),
    }
    weights = {
        "style_scale": cfg.style_scale_weight,
        "style_direction": cfg.style_direction_weight,
    }
    rw = reg_weights.as_dict()
    for name, value in reg_terms.items():
        terms[f"reg_{name}"] = rw[name] * value
        weights[f"reg_{name}"] = cfg.regularization_weight
    return RewardBreakdown(terms, weights)
