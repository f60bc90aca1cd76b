"""Student training: similarity (style) rewards against the active
teacher, supervised encoder pretraining plus online refinement, decoder
policy-gradient pretraining with ground-truth labels, and the joint
online phase with scheduled fault switching.

The encoder and decoder never share parameters: the decoder's policy
update treats the label input as part of the observation, and the
encoder's supervised update touches only encoder parameters.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (Config, STAGE_DECODER, STAGE_ENCODER, STAGE_JOINT,
                     make_rng, seed_seq)
from .envs import LocomotionEnv
from .faults import NUM_FAULT_CLASSES
from .nets import (Adam, DenseNet, RecurrentEncoder, bce_grad, bce_with_logits,
                   merge_params, split_params)
from .ppo import GaussianActorCritic, RolloutBatch, StatsWriter, ppo_update
from .rewards import (RegWeights, per_env_case_reward, regularization_terms,
                      stack_case_weights, total_student_reward)
from .teachers import MissingTeacherError, load_all_teacher_reward_configs


def reference_action(teachers: list, active_class: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Deterministic mean action of each environment's active teacher,
    evaluated on the same observation the student sees (minus the label)."""
    active_class = np.asarray(active_class, dtype=np.int64)
    out = np.zeros((obs.shape[0], 12), dtype=np.float32)
    for ci in np.unique(active_class):
        teacher = teachers[int(ci)]
        if teacher is None:
            raise MissingTeacherError(f"no teacher loaded for fault class {int(ci)}")
        mask = active_class == ci
        out[mask] = teacher.act(obs[mask])
    return out


class StudentPolicy:
    """Recurrent fault encoder + decoder/critic MLPs with per-environment
    observation ring buffers (cleared on episode reset)."""

    def __init__(self, cfg: Config, seed: int = 0):
        n = cfg.nets
        self.cfg = cfg
        self.encoder = RecurrentEncoder(n.obs_dim, n.encoder_dims, n.label_dim,
                                        cell=n.cell, seed=seed)
        self.decoder = DenseNet(n.decoder_in_dim, n.decoder_dims, n.action_dim,
                                n.activation, out_gain=0.01, seed=seed + 1)
        self.critic = DenseNet(n.decoder_in_dim, n.critic_dims, 1,
                               n.activation, out_gain=1.0, seed=seed + 2)
        self.log_std = np.full(n.action_dim, n.init_log_std, dtype=np.float32)
        self.windows = np.zeros((0, n.seq_len, n.obs_dim), dtype=np.float32)

    def begin(self, num_envs: int):
        self.windows = np.zeros((num_envs, self.cfg.nets.seq_len, self.cfg.nets.obs_dim),
                                dtype=np.float32)

    def observe(self, obs: np.ndarray):
        """Push the newest observations into the ring buffers."""
        self.windows[:, :-1] = self.windows[:, 1:]
        self.windows[:, -1] = obs

    def reset_windows(self, mask: np.ndarray):
        self.windows[mask] = 0.0

    def infer_labels(self) -> np.ndarray:
        return self.encoder.forward(self.windows)

    def act_deterministic(self, obs: np.ndarray):
        """(mean action, soft label) for the current windows."""
        label = self.infer_labels()
        dec_in = np.concatenate([np.asarray(obs, dtype=np.float32), label], axis=1)
        return self.decoder.forward(dec_in), label

    @property
    def params(self) -> dict:
        merged = merge_params(encoder=self.encoder.params, decoder=self.decoder.params,
                              critic=self.critic.params)
        merged["log_std"] = self.log_std
        return merged

    def save(self, path, meta: dict | None = None):
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path, cfg: Config) -> "StudentPolicy":
        blocks, meta = load_checkpoint(path)
        student = cls(cfg)
        groups = split_params(blocks)
        student.encoder.set_params(groups["encoder"])
        student.decoder.set_params(groups["decoder"])
        student.critic.set_params(groups["critic"])
        np.copyto(student.log_std, blocks["log_std"])
        student.meta = meta
        return student


class _DecoderActorCritic(GaussianActorCritic):
    """Actor-critic view over an existing decoder/critic/log_std triple."""

    def __init__(self, decoder: DenseNet, critic: DenseNet, log_std: np.ndarray):
        self.actor = decoder
        self.critic = critic
        self.log_std = log_std
        self.dtype = decoder.dtype


# ---------------------------------------------------------------------------
# encoder supervised pretraining


def pretrain_encoder(cfg: Config, dataset: dict, root_seed: int,
                     stats_path=None, epochs: int | None = None):
    """Supervised per-bit cross-entropy training of the fault encoder.

    The holdout split is by episode (windows of one episode overlap), the
    last ``encoder_holdout_episodes`` episodes of each class.  Returns
    (encoder, report) with held-out per-bit and exact-match accuracy.
    """
    labels = np.asarray(dataset["labels"], dtype=np.float32)
    if np.unique(labels, axis=0).shape[0] < 2:
        raise ValueError("degenerate dataset: fewer than 2 distinct labels")
    windows = np.asarray(dataset["windows"], dtype=np.float32)
    episode_ids = np.asarray(dataset["episode_ids"])
    e = int(dataset["episodes_per_class"])
    holdout_per_class = min(cfg.student.encoder_holdout_episodes, max(e - 1, 0))
    holdout_mask = (episode_ids % e) >= (e - holdout_per_class)
    train_idx = np.nonzero(~holdout_mask)[0]
    test_idx = np.nonzero(holdout_mask)[0]

    s = cfg.student
    epochs = s.encoder_epochs if epochs is None else epochs
    encoder = RecurrentEncoder(cfg.nets.obs_dim, cfg.nets.encoder_dims, cfg.nets.label_dim,
                               cell=cfg.nets.cell,
                               seed=int(seed_seq(root_seed, STAGE_ENCODER, 0).generate_state(1)[0]))
    opt = Adam(encoder.params, lr=s.encoder_lr, max_grad_norm=1.0)
    rng = make_rng(root_seed, STAGE_ENCODER, 1)

    writer = StatsWriter(stats_path, ["epoch", "train_loss", "holdout_bit_accuracy",
                                      "holdout_exact_match"]) if stats_path else None
    history = []
    try:
        for epoch in range(epochs):
            perm = rng.permutation(train_idx.size)
            losses = []
            for k in range(0, perm.size, s.encoder_batch):
                idx = train_idx[perm[k:k + s.encoder_batch]]
                logits = encoder.forward_logits(windows[idx])
                loss = bce_with_logits(logits, labels[idx])
                if not np.isfinite(loss):
                    raise FloatingPointError("non-finite encoder loss")
                grads = encoder.backward(bce_grad(logits, labels[idx]))
                opt.step(grads)
                losses.append(loss)
            bit_acc, exact = encoder_accuracy(encoder, windows[test_idx], labels[test_idx])
            row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                   "holdout_bit_accuracy": bit_acc, "holdout_exact_match": exact}
            history.append(row)
            if writer:
                writer.write(row)
    finally:
        if writer:
            writer.close()
    report = {
        "holdout_bit_accuracy": history[-1]["holdout_bit_accuracy"],
        "holdout_exact_match": history[-1]["holdout_exact_match"],
        "train_loss": history[-1]["train_loss"],
        "history": history,
        "holdout_windows": int(test_idx.size),
    }
    return encoder, report


def encoder_accuracy(encoder: RecurrentEncoder, windows: np.ndarray,
                     labels: np.ndarray, batch: int = 1024):
    """(per-bit accuracy, exact-match accuracy) with 0.5-thresholded bits."""
    if windows.shape[0] == 0:
        return float("nan"), float("nan")
    hits = 0
    exact = 0
    for k in range(0, windows.shape[0], batch):
        probs = encoder.forward(windows[k:k + batch])
        hard = probs > 0.5
        ref = labels[k:k + batch] > 0.5
        hits += int(np.sum(hard == ref))
        exact += int(np.sum(np.all(hard == ref, axis=1)))
    total = windows.shape[0]
    return hits / (total * labels.shape[1]), exact / total


# ---------------------------------------------------------------------------
# decoder pretraining and joint online training


def _style_reward_batch(cfg: Config, mean_action, a_star, snap, env, reward_mode,
                        case_weights, active_class, leg_labels, reg_weights):
    """Per-environment scalar rewards plus per-term means for logging."""
    if reward_mode == "teacher":
        reward = per_env_case_reward(snap, leg_labels, active_class, case_weights,
                                     cfg.teacher, env.sim.joint_low, env.sim.joint_high,
                                     cfg.sim.nominal_height)
        return reward, {}
    reg = regularization_terms(snap, cfg.teacher, env.sim.joint_low, env.sim.joint_high)
    breakdown = total_student_reward(mean_action, a_star, reg, reg_weights, cfg.student)
    return breakdown.total(), breakdown.scalar_terms()


def pretrain_decoder(cfg: Config, teachers: list, root_seed: int, stats_path=None,
                     iterations: int | None = None, reward_mode: str = "style",
                     use_labels: bool = True, stage_key: int = STAGE_DECODER):
    """Policy-gradient pretraining of the decoder with the ground-truth
    4-bit fault label concatenated to the observation (encoder bypassed).

    Faults switch on the configured schedule.  With use_labels=False the
    decoder sees the bare observation (the encoder-less ablation).
    Returns (decoder, critic, log_std, stats rows).
    """
    if len(teachers) != NUM_FAULT_CLASSES or any(t is None for t in teachers):
        raise MissingTeacherError("decoder pretraining requires all 11 teachers")
    p = cfg.ppo
    n_cfg = cfg.nets
    iterations = cfg.student.decoder_iterations if iterations is None else iterations
    in_dim = n_cfg.decoder_in_dim if use_labels else n_cfg.obs_dim
    seed0 = int(seed_seq(root_seed, stage_key, 1).generate_state(1)[0])
    decoder = DenseNet(in_dim, n_cfg.decoder_dims, n_cfg.action_dim, n_cfg.activation,
                       out_gain=0.01, seed=seed0)
    critic = DenseNet(in_dim, n_cfg.critic_dims, 1, n_cfg.activation, out_gain=1.0,
                      seed=seed0 + 1)
    ac = _DecoderActorCritic(decoder, critic,
                             np.full(n_cfg.action_dim, n_cfg.init_log_std, dtype=np.float32))
    opt = Adam(ac.params, lr=p.learning_rate, max_grad_norm=p.max_grad_norm)
    rng = make_rng(root_seed, stage_key, 2)
    env = LocomotionEnv(cfg, p.num_envs, seed_seq(root_seed, stage_key, 0),
                        fault_mode="scheduled")
    case_weights = stack_case_weights(load_all_teacher_reward_configs())
    reg_weights = RegWeights()

    obs = env.reset_all()
    history = []
    writer = None
    fields = ["iteration", "mean_step_reward", "style_scale", "style_direction",
              "approx_kl", "clip_fraction"]
    try:
        for it in range(iterations):
            n, t = p.num_envs, p.steps_per_iter
            b_obs = np.zeros((n, t, in_dim), dtype=np.float32)
            b_act = np.zeros((n, t, n_cfg.action_dim), dtype=np.float32)
            b_logp = np.zeros((n, t))
            b_val = np.zeros((n, t))
            b_rew = np.zeros((n, t))
            b_done = np.zeros((n, t))
            style_sums = {"style_scale": 0.0, "style_direction": 0.0}
            for step in range(t):
                env.pre_step()
                labels = env.leg_labels.astype(np.float32)  # ground truth, bits in {0,1}
                dec_in = np.concatenate([obs.astype(np.float32), labels], axis=1) if use_labels \
                    else obs.astype(np.float32)
                action, logp, value, mean = ac.act(dec_in, rng)
                a_star = reference_action(teachers, env.active_class, obs)
                b_obs[:, step] = dec_in
                b_act[:, step] = action
                b_logp[:, step] = logp
                b_val[:, step] = value
                next_obs, snap, dones, info = env.step(action)
                reward, terms = _style_reward_batch(cfg, mean, a_star, snap, env, reward_mode,
                                                    case_weights, env.active_class,
                                                    info["leg_labels"], reg_weights)
                b_rew[:, step] = reward
                b_done[:, step] = dones
                for k in style_sums:
                    style_sums[k] += terms.get(k, float("nan"))
                obs = next_obs
            final_labels = env.leg_labels.astype(np.float32)
            boot_in = np.concatenate([obs.astype(np.float32), final_labels], axis=1) \
                if use_labels else obs.astype(np.float32)
            batch = RolloutBatch(b_obs, b_act, b_logp, b_val, b_rew, b_done,
                                 bootstrap_value=ac.value(boot_in)).finalize(p.gamma, p.lam)
            stats = ppo_update(ac, opt, batch, p, rng)
            row = {"iteration": it, "mean_step_reward": float(b_rew.mean()),
                   "style_scale": style_sums["style_scale"] / t,
                   "style_direction": style_sums["style_direction"] / t,
                   "approx_kl": stats["approx_kl"], "clip_fraction": stats["clip_fraction"]}
            history.append(row)
            if stats_path and writer is None:
                writer = StatsWriter(stats_path, fields)
            if writer:
                writer.write(row)
            if stats["aborted"]:
                break
    finally:
        if writer:
            writer.close()
    return decoder, critic, ac.log_std, history


def joint_online_training(cfg: Config, student: StudentPolicy, teachers: list,
                          root_seed: int, stats_path=None, iterations: int | None = None,
                          reward_mode: str = "style", train_encoder: bool = True,
                          stage_key: int = STAGE_JOINT):
    """Online phase: rollouts use the encoder's soft label as decoder
    input; the decoder is optimized by the clipped-surrogate update while
    the encoder is refined supervised against the actual fault labels
    from the same rollouts.  The two parameter updates are disjoint.
    """
    if len(teachers) != NUM_FAULT_CLASSES or any(t is None for t in teachers):
        raise MissingTeacherError("joint training requires all 11 teachers")
    p = cfg.ppo
    n_cfg = cfg.nets
    iterations = cfg.student.joint_iterations if iterations is None else iterations
    ac = _DecoderActorCritic(student.decoder, student.critic, student.log_std)
    opt = Adam(ac.params, lr=p.learning_rate, max_grad_norm=p.max_grad_norm)
    enc_opt = Adam(student.encoder.params, lr=cfg.student.encoder_lr, max_grad_norm=1.0)
    rng = make_rng(root_seed, stage_key, 2)
    env = LocomotionEnv(cfg, p.num_envs, seed_seq(root_seed, stage_key, 0),
                        fault_mode="scheduled")
    case_weights = stack_case_weights(load_all_teacher_reward_configs())
    reg_weights = RegWeights()

    obs = env.reset_all()
    student.begin(p.num_envs)
    history = []
    writer = None
    fields = ["iteration", "mean_step_reward", "style_scale", "style_direction",
              "approx_kl", "clip_fraction", "encoder_accuracy",
              "encoder_accuracy_settled", "encoder_loss"]
    try:
        for it in range(iterations):
            n, t = p.num_envs, p.steps_per_iter
            b_obs = np.zeros((n, t, n_cfg.decoder_in_dim), dtype=np.float32)
            b_win = np.zeros((n, t, n_cfg.seq_len, n_cfg.obs_dim), dtype=np.float32)
            b_lab = np.zeros((n, t, n_cfg.label_dim), dtype=np.float32)
            b_act = np.zeros((n, t, n_cfg.action_dim), dtype=np.float32)
            b_logp = np.zeros((n, t))
            b_val = np.zeros((n, t))
            b_rew = np.zeros((n, t))
            b_done = np.zeros((n, t))
            style_sums = {"style_scale": 0.0, "style_direction": 0.0}
            exact_hits = 0
            settled_hits = 0
            settled_total = 0
            for step in range(t):
                env.pre_step()
                student.observe(obs)
                soft = student.infer_labels()  # bits in (0, 1)
                dec_in = np.concatenate([obs.astype(np.float32), soft], axis=1)
                action, logp, value, mean = ac.act(dec_in, rng)
                a_star = reference_action(teachers, env.active_class, obs)
                true_labels = env.leg_labels.astype(np.float32)
                b_obs[:, step] = dec_in
                b_win[:, step] = student.windows
                b_lab[:, step] = true_labels
                b_act[:, step] = action
                b_logp[:, step] = logp
                b_val[:, step] = value
                match = np.all((soft > 0.5) == (true_labels > 0.5), axis=1)
                exact_hits += int(match.sum())
                # "settled" excludes windows that straddle a fault switch or
                # an episode reset (the history cannot reflect those yet)
                since_switch = env.schedule.period - env.switch_countdown
                settled = (since_switch >= n_cfg.seq_len) & (env.sim.step_count >= n_cfg.seq_len)
                settled_hits += int(match[settled].sum())
                settled_total += int(settled.sum())
                next_obs, snap, dones, info = env.step(action)
                reward, terms = _style_reward_batch(cfg, mean, a_star, snap, env, reward_mode,
                                                    case_weights, env.active_class,
                                                    info["leg_labels"], reg_weights)
                b_rew[:, step] = reward
                b_done[:, step] = dones
                for k in style_sums:
                    style_sums[k] += terms.get(k, float("nan"))
                student.reset_windows(dones)
                obs = next_obs
            # bootstrap label lookahead without disturbing the ring buffer
            win_backup = student.windows.copy()
            student.observe(obs)
            soft = student.infer_labels()
            student.windows = win_backup
            boot_in = np.concatenate([obs.astype(np.float32), soft], axis=1)
            batch = RolloutBatch(b_obs, b_act, b_logp, b_val, b_rew, b_done,
                                 bootstrap_value=ac.value(boot_in), windows=b_win,
                                 labels=b_lab).finalize(p.gamma, p.lam)
            stats = ppo_update(ac, opt, batch, p, rng)  # decoder/critic only

            enc_loss = float("nan")
            if train_encoder:
                flat_win = b_win.reshape(n * t, n_cfg.seq_len, n_cfg.obs_dim)
                flat_lab = b_lab.reshape(n * t, n_cfg.label_dim)
                pick = rng.permutation(n * t)[:cfg.student.encoder_online_batch]
                losses = []
                mb = max(64, cfg.student.encoder_batch // 2)
                for k in range(0, pick.size, mb):
                    idx = pick[k:k + mb]
                    logits = student.encoder.forward_logits(flat_win[idx])
                    losses.append(bce_with_logits(logits, flat_lab[idx]))
                    enc_opt.step(student.encoder.backward(bce_grad(logits, flat_lab[idx])))
                enc_loss = float(np.mean(losses))

            row = {"iteration": it, "mean_step_reward": float(b_rew.mean()),
                   "style_scale": style_sums["style_scale"] / t,
                   "style_direction": style_sums["style_direction"] / t,
                   "approx_kl": stats["approx_kl"], "clip_fraction": stats["clip_fraction"],
                   "encoder_accuracy": exact_hits / (n * t),
                   "encoder_accuracy_settled": settled_hits / max(settled_total, 1),
                   "encoder_loss": enc_loss}
            history.append(row)
            if stats_path and writer is None:
                writer = StatsWriter(stats_path, fields)
            if writer:
                writer.write(row)
            if stats["aborted"]:
                break
    finally:
        if writer:
            writer.close()
    return student, history
