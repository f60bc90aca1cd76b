"""Per-fault-case teacher policies: reward configs, training, and the
labeled rollout dataset used to pretrain the fault encoder.

Teacher reward weights live in 11 committed config files under
``configs/teachers/`` (one per fault class, rationale in each header).

Dataset file format (little-endian):

    magic    4 bytes  b"FGDS"
    version  u32      1
    meta_len u32, meta JSON  {"count", "seq_len", "obs_dim", ...}
    labels       u8   (count, 4)
    episode_ids  u32  (count,)
    windows      f32  (count, seq_len, obs_dim), C order
"""

from __future__ import annotations

import json
import os
import struct
from importlib import resources

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (Config, STAGE_DATASET, STAGE_TEACHER, make_rng, seed_seq)
from .envs import LocomotionEnv
from .faults import NUM_FAULT_CLASSES, enumerate_fault_cases
from .nets import Adam, merge_params
from .ppo import GaussianActorCritic, RolloutBatch, StatsWriter, ppo_update
from .rewards import RegWeights, TeacherRewardConfig, teacher_reward

DATASET_MAGIC = b"FGDS"
DATASET_VERSION = 1

_CASE_FILES = (
    "case_00_normal.cfg", "case_01_LF.cfg", "case_02_RF.cfg", "case_03_LR.cfg",
    "case_04_RR.cfg", "case_05_LF_RF.cfg", "case_06_LF_LR.cfg", "case_07_LF_RR.cfg",
    "case_08_RF_LR.cfg", "case_09_RF_RR.cfg", "case_10_LR_RR.cfg",
)


class MissingTeacherError(RuntimeError):
    """A pipeline stage needed a teacher checkpoint that does not exist."""


def load_teacher_reward_config(class_index: int) -> TeacherRewardConfig:
    """Read the committed per-case weight file for one fault class."""
    name = _CASE_FILES[class_index]
    text = resources.files("faultgait").joinpath(f"configs/teachers/{name}").read_text()
    cfg = TeacherRewardConfig(class_index=class_index)
    section = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]").strip()
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if section == "teacher_reward":
            if key == "class_index":
                if int(value) != class_index:
                    raise ValueError(f"{name}: class_index {value} != {class_index}")
            else:
                setattr(cfg, key, float(value))
        elif section == "regularization":
            setattr(cfg.reg, key, float(value))
        else:
            raise ValueError(f"{name}: key {key!r} outside a known section")
    return cfg


def load_all_teacher_reward_configs() -> list:
    return [load_teacher_reward_config(i) for i in range(NUM_FAULT_CLASSES)]


class TeacherPolicy:
    """Trained per-case actor/critic; deterministic (mean) in reference mode."""

    def __init__(self, class_index: int, ac: GaussianActorCritic, meta: dict | None = None):
        self.class_index = int(class_index)
        self.ac = ac
        self.meta = meta or {}

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic mean action for the given observations."""
        squeeze = np.asarray(obs).ndim == 1
        out = self.ac.act_deterministic(np.atleast_2d(obs))
        return out[0] if squeeze else out

    def save(self, path):
        blocks = merge_params(actor=self.ac.actor.params, critic=self.ac.critic.params)
        blocks["log_std"] = self.ac.log_std
        meta = dict(self.meta)
        meta["class_index"] = self.class_index
        save_checkpoint(path, blocks, meta)

    @classmethod
    def load(cls, path, cfg: Config) -> "TeacherPolicy":
        blocks, meta = load_checkpoint(path)
        ac = make_teacher_ac(cfg, seed=0)
        ac.set_params(blocks)
        return cls(int(meta["class_index"]), ac, meta)


def make_teacher_ac(cfg: Config, seed: int) -> GaussianActorCritic:
    n = cfg.nets
    return GaussianActorCritic(n.obs_dim, n.action_dim, n.teacher_dims, n.critic_dims,
                               activation=n.activation, init_log_std=n.init_log_std,
                               seed=seed)


def _dual_leg_cap(cfg: Config, class_index: int):
    return cfg.teacher.dual_leg_forward_cap if class_index >= 5 else None


def train_teacher(cfg: Config, class_index: int, root_seed: int,
                  stats_path=None, iterations: int | None = None,
                  reward_cfg: TeacherRewardConfig | None = None):
    """PPO-train one teacher with its case-specific rewards.

    The fault class is fixed; the concrete joint mask is resampled per
    episode from the class's scenarios, with the fault present from the
    (static) episode start.  Returns (TeacherPolicy, stats rows).
    """
    if not 0 <= class_index < NUM_FAULT_CLASSES:
        raise ValueError(f"class index {class_index} outside 0..10")
    reward_cfg = reward_cfg or load_teacher_reward_config(class_index)
    if iterations is None:
        iterations = cfg.teacher.dual_iterations if class_index >= 5 else cfg.teacher.iterations
    p = cfg.ppo
    env = LocomotionEnv(cfg, p.num_envs, seed_seq(root_seed, STAGE_TEACHER, class_index, 0),
                        fault_mode="fixed", fixed_class=class_index,
                        forward_cmd_cap=_dual_leg_cap(cfg, class_index))
    ac = make_teacher_ac(cfg, seed=int(seed_seq(root_seed, STAGE_TEACHER, class_index, 1)
                                        .generate_state(1)[0]))
    opt = Adam(ac.params, lr=p.learning_rate, max_grad_norm=p.max_grad_norm)
    rng = make_rng(root_seed, STAGE_TEACHER, class_index, 2)
    sim = env.sim

    history = []
    term_names = None
    writer = None
    obs = env.reset_all()
    ep_return = np.zeros(p.num_envs)
    finished_returns: list = []
    try:
        for it in range(iterations):
            n, t = p.num_envs, p.steps_per_iter
            b_obs = np.zeros((n, t, cfg.nets.obs_dim), dtype=np.float32)
            b_act = np.zeros((n, t, cfg.nets.action_dim), dtype=np.float32)
            b_logp = np.zeros((n, t))
            b_val = np.zeros((n, t))
            b_rew = np.zeros((n, t))
            b_done = np.zeros((n, t))
            term_sums: dict = {}
            for step in range(t):
                env.pre_step()
                action, logp, value, _ = ac.act(obs, rng)
                b_obs[:, step] = obs
                b_act[:, step] = action
                b_logp[:, step] = logp
                b_val[:, step] = value
                obs, snap, dones, info = env.step(action)
                breakdown = teacher_reward(snap, info["leg_labels"], reward_cfg, cfg.teacher,
                                           sim.joint_low, sim.joint_high, cfg.sim.nominal_height)
                reward = breakdown.total()
                b_rew[:, step] = reward
                b_done[:, step] = dones
                ep_return += reward
                for i in np.nonzero(dones)[0]:
                    finished_returns.append(float(ep_return[i]))
                    ep_return[i] = 0.0
                for k, v in breakdown.terms.items():
                    term_sums[k] = term_sums.get(k, 0.0) + float(np.mean(v))
            batch = RolloutBatch(b_obs, b_act, b_logp, b_val, b_rew, b_done,
                                 bootstrap_value=ac.value(obs)).finalize(p.gamma, p.lam)
            stats = ppo_update(ac, opt, batch, p, rng)
            row = {
                "iteration": it,
                "mean_step_reward": float(b_rew.mean()),
                "mean_episode_return": float(np.mean(finished_returns[-50:])) if finished_returns else float("nan"),
                "approx_kl": stats["approx_kl"],
                "clip_fraction": stats["clip_fraction"],
            }
            for k, v in term_sums.items():
                row[f"term_{k}"] = v / t
            history.append(row)
            if stats_path and writer is None:
                term_names = [f"term_{k}" for k in term_sums]
                writer = StatsWriter(stats_path, ["iteration", "mean_step_reward",
                                                  "mean_episode_return", "approx_kl",
                                                  "clip_fraction"] + term_names)
            if writer:
                writer.write(row)
            if stats["aborted"]:
                # non-finite loss: parameters were restored to the last
                # good state inside ppo_update; stop here
                break
    finally:
        if writer:
            writer.close()
    meta = {"iterations": len(history), "seed": int(root_seed), "config_hash": cfg.hash()}
    return TeacherPolicy(class_index, ac, meta), history


def evaluate_teacher(cfg: Config, teacher: TeacherPolicy, steps: int = 500,
                     seed: int = 0) -> dict:
    """Deterministic rollout metrics: faulty-foot contact fraction, mean
    velocity-tracking term, survival."""
    env = LocomotionEnv(cfg, 8, seed_seq(seed, STAGE_TEACHER, teacher.class_index, 99),
                        fault_mode="fixed", fixed_class=teacher.class_index,
                        randomize=False, pushes=False,
                        forward_cmd_cap=_dual_leg_cap(cfg, teacher.class_index))
    reward_cfg = load_teacher_reward_config(teacher.class_index)
    obs = env.reset_all()
    faulty_contacts = []
    tracking = []
    falls = 0
    for _ in range(steps):
        env.pre_step()
        action = teacher.act(obs)
        obs, snap, dones, info = env.step(action)
        faulty = info["leg_labels"]
        if faulty.sum() > 0:
            frac = np.sum(snap.contacts * faulty, axis=1) / np.maximum(faulty.sum(axis=1), 1.0)
            faulty_contacts.append(float(frac.mean()))
        breakdown = teacher_reward(snap, faulty, reward_cfg, cfg.teacher,
                                   env.sim.joint_low, env.sim.joint_high,
                                   cfg.sim.nominal_height)
        tracking.append(float(np.mean(breakdown.terms["lin_tracking"])))
        falls += int(np.sum(info["fell"]))
    return {
        "faulty_contact_fraction": float(np.mean(faulty_contacts)) if faulty_contacts else 0.0,
        "mean_lin_tracking": float(np.mean(tracking)),
        "falls": falls,
    }


# ---------------------------------------------------------------------------
# labeled rollout dataset


def episode_windows(obs_seq: np.ndarray, seq_len: int) -> np.ndarray:
    """All stride-1 full windows of an (L, D) sequence: (L-S+1, S, D)."""
    l = obs_seq.shape[0]
    if l < seq_len:
        raise ValueError(f"episode length {l} shorter than window {seq_len}")
    view = np.lib.stride_tricks.sliding_window_view(obs_seq, seq_len, axis=0)
    return np.ascontiguousarray(np.moveaxis(view, -1, 1), dtype=np.float32)


def collect_labeled_rollouts(cfg: Config, teachers: list, root_seed: int,
                             episodes_per_class: int | None = None,
                             episode_len: int | None = None,
                             max_attempts: int = 12) -> dict:
    """Balanced (window, leg label) dataset from deterministic teacher
    rollouts across all 11 classes.

    Each recorded episode is exactly episode_len contiguous steps (early
    terminations are discarded and re-rolled), so windows never span a
    reset and each episode yields episode_len - seq_len + 1 windows.
    """
    e = episodes_per_class or cfg.student.episodes_per_class
    l = episode_len or cfg.student.episode_len
    s = cfg.nets.seq_len
    if len(teachers) != NUM_FAULT_CLASSES or any(t is None for t in teachers):
        raise MissingTeacherError("collect_labeled_rollouts requires all 11 trained teachers")
    windows, labels, episode_ids = [], [], []
    episode_id = 0
    for ci in range(NUM_FAULT_CLASSES):
        teacher = teachers[ci]
        env = LocomotionEnv(cfg, e, seed_seq(root_seed, STAGE_DATASET, ci),
                            fault_mode="fixed", fixed_class=ci,
                            forward_cmd_cap=_dual_leg_cap(cfg, ci))
        collected = 0
        for _ in range(max_attempts):
            obs = env.reset_all()
            seq = np.zeros((e, l, cfg.nets.obs_dim), dtype=np.float32)
            lab = env.leg_labels.copy()
            alive = np.ones(e, dtype=bool)
            for t in range(l):
                env.pre_step()
                seq[:, t] = obs
                obs, _, dones, _ = env.step(teacher.act(obs))
                alive &= ~dones
            for i in np.nonzero(alive)[0]:
                if collected >= e:
                    break
                windows.append(episode_windows(seq[i], s))
                labels.append(np.tile(lab[i], (l - s + 1, 1)))
                episode_ids.append(np.full(l - s + 1, episode_id, dtype=np.uint32))
                episode_id += 1
                collected += 1
            if collected >= e:
                break
        if collected < e:
            raise RuntimeError(
                f"class {ci}: only {collected}/{e} intact episodes after {max_attempts} attempts")
    return {
        "windows": np.concatenate(windows, axis=0),
        "labels": np.concatenate(labels, axis=0).astype(np.uint8),
        "episode_ids": np.concatenate(episode_ids, axis=0),
        "episodes_per_class": e,
        "episode_len": l,
    }


def save_dataset(path, dataset: dict):
    windows = np.ascontiguousarray(dataset["windows"], dtype="<f4")
    labels = np.ascontiguousarray(dataset["labels"], dtype=np.uint8)
    episode_ids = np.ascontiguousarray(dataset["episode_ids"], dtype="<u4")
    meta = {
        "count": int(windows.shape[0]),
        "seq_len": int(windows.shape[1]),
        "obs_dim": int(windows.shape[2]),
        "episodes_per_class": int(dataset["episodes_per_class"]),
        "episode_len": int(dataset["episode_len"]),
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", DATASET_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(labels.tobytes())
        fh.write(episode_ids.tobytes())
        fh.write(windows.tobytes())
    os.replace(tmp, path)


def load_dataset(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != DATASET_MAGIC:
            raise ValueError(f"{path}: not a rollout dataset file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        m, s, d = meta["count"], meta["seq_len"], meta["obs_dim"]
        labels = np.frombuffer(fh.read(m * 4), dtype=np.uint8).reshape(m, 4)
        episode_ids = np.frombuffer(fh.read(m * 4), dtype="<u4").copy()
        windows = np.frombuffer(fh.read(m * s * d * 4), dtype="<f4").reshape(m, s, d)
    return {
        "windows": np.array(windows, dtype=np.float32),
        "labels": np.array(labels),
        "episode_ids": episode_ids,
        "episodes_per_class": meta["episodes_per_class"],
        "episode_len": meta["episode_len"],
    }
