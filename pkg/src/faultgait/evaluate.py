"""Scripted evaluations: per-step trace of style rewards against the
normal and fault teachers through fault onset/removal, base-stability
summaries, and the three training ablations.

Trace CSV column order (one row per control step; documented contract,
gnuplot-friendly):

    step, class_active, label_lf, label_rf, label_lr, label_rr,
    cmd_vx, cmd_vy, cmd_yaw,
    base_height, vel_x, vel_y, vel_z, roll_rate, pitch_rate, yaw_rate,
    scale_normal, direction_normal, style_normal,
    scale_fault, direction_fault, style_fault,
    enc_lf, enc_rf, enc_lr, enc_rr,
    contact_lf, contact_rf, contact_lr, contact_rr, survived

Velocities are body-frame.  style_* is the weighted style sum
c1*scale + c2*direction against the respective teacher.  A fall truncates
the trace; the last row carries survived = 0 (the failure marker).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .config import Config, STAGE_EVAL, seed_seq
from .envs import LocomotionEnv
from .faults import enumerate_fault_cases
from .student import StudentPolicy, pretrain_decoder, joint_online_training, reference_action
from .rewards import style_direction_reward, style_scale_reward

TRACE_COLUMNS = (
    ["step", "class_active", "label_lf", "label_rf", "label_lr", "label_rr",
     "cmd_vx", "cmd_vy", "cmd_yaw",
     "base_height", "vel_x", "vel_y", "vel_z", "roll_rate", "pitch_rate", "yaw_rate",
     "scale_normal", "direction_normal", "style_normal",
     "scale_fault", "direction_fault", "style_fault",
     "enc_lf", "enc_rf", "enc_lr", "enc_rr",
     "contact_lf", "contact_rf", "contact_lr", "contact_rr", "survived"]
)

ABLATION_VARIANTS = ("no-style-rewards", "no-regularization-rewards", "no-encoder")


@dataclass
class EvalScenario:
    """Command profile plus a list of (step, fault class) events."""

    name: str = "default"
    command: tuple = (0.3, 0.0, 0.0)
    events: tuple = ((300, 3), (600, 0))
    episode_len: int = 900
    seed: int = 0

    def __post_init__(self):
        steps = [s for s, _ in self.events]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("event steps must be strictly increasing")

    @property
    def fault_class(self) -> int:
        """The scenario's (first) non-normal fault class."""
        for _, ci in self.events:
            if ci != 0:
                return ci
        return 0


def default_scenario(cfg: Config, class_index: int = 3, seed: int = 0) -> EvalScenario:
    """Fault injected at fault_step, removed at removal_step."""
    e = cfg.eval
    return EvalScenario(
        name=f"default_case{class_index:02d}",
        command=(e.cmd_forward, e.cmd_lateral, e.cmd_yaw),
        events=((e.fault_step, class_index), (e.removal_step, 0)),
        episode_len=e.episode_len,
        seed=seed,
    )


def scenario_from_file(path) -> EvalScenario:
    """Parse a scenario file: name/command/events/episode_len/seed keys;
    events as comma-separated step:class pairs."""
    kwargs: dict = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, value = (p.strip() for p in line.split("=", 1))
            if key == "name":
                kwargs["name"] = value
            elif key == "command":
                kwargs["command"] = tuple(float(x) for x in value.split(","))
            elif key == "events":
                pairs = [p.strip() for p in value.split(",") if p.strip()]
                kwargs["events"] = tuple(
                    (int(a), int(b)) for a, b in (p.split(":") for p in pairs))
            elif key in ("episode_len", "seed"):
                kwargs[key] = int(value)
            else:
                raise ValueError(f"unknown scenario key {key!r}")
    return EvalScenario(**kwargs)


def run_scenario(cfg: Config, student: StudentPolicy, teachers: list,
                 scenario: EvalScenario, csv_path=None) -> dict:
    """Deterministic single-robot rollout producing the trace columns.

    Returns {column: np.ndarray}.  Domain randomization and pushes are
    off; the trace is a pure function of (checkpoints, scenario, seed).
    """
    classes = enumerate_fault_cases()
    env = LocomotionEnv(cfg, 1, seed_seq(scenario.seed, STAGE_EVAL, scenario.fault_class),
                        fault_mode="manual", randomize=False, pushes=False, auto_reset=False)
    env.reset_all()
    env.commands[0] = np.asarray(scenario.command, dtype=np.float64)
    env.set_fault(0, classes[0].representative())
    student.begin(1)
    normal_teacher = teachers[0]
    fault_teacher = teachers[scenario.fault_class]
    c1 = cfg.student.style_scale_weight
    c2 = cfg.student.style_direction_weight
    events = dict(scenario.events)

    rows = {k: [] for k in TRACE_COLUMNS}
    obs = env.observations()
    survived = True
    for step in range(scenario.episode_len):
        if step in events:
            env.set_fault(0, classes[events[step]].representative())
        student.observe(obs)
        mean, label = student.act_deterministic(obs)
        a_norm = normal_teacher.act(obs.astype(np.float32))
        a_fault = fault_teacher.act(obs.astype(np.float32))
        sc_n = float(style_scale_reward(mean, a_norm)[0])
        di_n = float(style_direction_reward(mean, a_norm)[0])
        sc_f = float(style_scale_reward(mean, a_fault)[0])
        di_f = float(style_direction_reward(mean, a_fault)[0])
        obs, snap, dones, info = env.step(mean)
        done = bool(dones[0])
        if done:
            survived = False
        row = {
            "step": step,
            "class_active": int(env.active_class[0]),
            **{f"label_{leg}": int(env.leg_labels[0, i]) for i, leg in
               enumerate(("lf", "rf", "lr", "rr"))},
            "cmd_vx": scenario.command[0], "cmd_vy": scenario.command[1],
            "cmd_yaw": scenario.command[2],
            "base_height": float(snap.base_height[0]),
            "vel_x": float(snap.lin_vel_body[0, 0]),
            "vel_y": float(snap.lin_vel_body[0, 1]),
            "vel_z": float(snap.lin_vel_body[0, 2]),
            "roll_rate": float(snap.ang_vel_body[0, 0]),
            "pitch_rate": float(snap.ang_vel_body[0, 1]),
            "yaw_rate": float(snap.ang_vel_body[0, 2]),
            "scale_normal": sc_n, "direction_normal": di_n,
            "style_normal": c1 * sc_n + c2 * di_n,
            "scale_fault": sc_f, "direction_fault": di_f,
            "style_fault": c1 * sc_f + c2 * di_f,
            **{f"enc_{leg}": float(label[0, i]) for i, leg in
               enumerate(("lf", "rf", "lr", "rr"))},
            **{f"contact_{leg}": int(snap.contacts[0, i]) for i, leg in
               enumerate(("lf", "rf", "lr", "rr"))},
            "survived": int(not done),
        }
        for k in TRACE_COLUMNS:
            rows[k].append(row[k])
        if done:
            break
    trace = {k: np.asarray(v) for k, v in rows.items()}
    trace["_survived"] = survived
    if csv_path:
        write_trace(csv_path, trace)
    return trace


def write_trace(path, trace: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        n = len(trace["step"])
        for i in range(n):
            w.writerow([_fmt(trace[k][i]) for k in TRACE_COLUMNS])


def _fmt(v):
    if isinstance(v, (np.floating, float)):
        return f"{float(v):.9g}"
    return int(v)


def read_trace(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {k: [] for k in reader.fieldnames}
        for row in reader:
            for k, v in row.items():
                cols[k].append(float(v))
    trace = {k: np.asarray(v) for k, v in cols.items()}
    trace["_survived"] = bool(trace["survived"][-1] > 0.5)
    return trace


def rolling_mean(x: np.ndarray, window: int) -> np.ndarray:
    if len(x) < window:
        return np.array([x.mean()]) if len(x) else np.array([])
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


def stability_metrics(trace: dict, cfg: Config) -> dict:
    """Windowed velocity statistics plus the survival/stability verdict.

    Pure function of the trace contents (recomputable from the CSV).
    """
    w = cfg.eval.window
    rp = np.sqrt(np.asarray(trace["roll_rate"])**2 + np.asarray(trace["pitch_rate"])**2)
    speed = np.sqrt(np.asarray(trace["vel_x"])**2 + np.asarray(trace["vel_y"])**2
                    + np.asarray(trace["vel_z"])**2)
    rp_windowed = rolling_mean(rp, w)
    speed_windowed = rolling_mean(speed, w)
    survived = bool(np.asarray(trace["survived"])[-1] > 0.5)
    max_rp = float(rp_windowed.max()) if rp_windowed.size else float("inf")
    return {
        "survived": survived,
        "mean_rp_rate": float(rp.mean()),
        "max_windowed_rp_rate": max_rp,
        "mean_speed": float(speed.mean()),
        "max_windowed_speed": float(speed_windowed.max()) if speed_windowed.size else 0.0,
        "min_base_height": float(np.asarray(trace["base_height"]).min()),
        "stable": survived and max_rp < cfg.eval.max_rp_rate,
    }


def crossover_verdict(trace: dict, cfg: Config, scenario: EvalScenario) -> dict:
    """Windowed ordering test of style rewards around the fault interval.

    Within each region (before fault, during fault, after removal) the
    50-step non-overlapping window means of style_fault vs style_normal
    must show the expected ordering in a strict majority of windows.
    """
    w = cfg.eval.window
    fault_on = scenario.events[0][0]
    fault_off = scenario.events[1][0] if len(scenario.events) > 1 else scenario.episode_len
    sf = np.asarray(trace["style_fault"], dtype=np.float64)
    sn = np.asarray(trace["style_normal"], dtype=np.float64)
    n = len(sf)

    def region_majority(lo, hi, want_fault_above):
        lo, hi = max(lo, 0), min(hi, n)
        wins = 0
        total = 0
        start = lo
        while start + w <= hi:
            diff = sf[start:start + w].mean() - sn[start:start + w].mean()
            wins += int(diff > 0) if want_fault_above else int(diff < 0)
            total += 1
            start += w
        return wins, total

    # skip one window after each transition for settling
    before = region_majority(0, fault_on, want_fault_above=False)
    during = region_majority(fault_on + w, fault_off, want_fault_above=True)
    after = region_majority(fault_off + w, n, want_fault_above=False)
    ok = all(total > 0 and wins * 2 > total for wins, total in (before, during, after))
    return {
        "ok": bool(ok and trace["_survived"]),
        "before": before,
        "during": during,
        "after": after,
        "survived": trace["_survived"],
    }


# ---------------------------------------------------------------------------
# ablations


@dataclass
class AblationSpec:
    """One training variant and the overrides that produce it."""

    variant: str
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ABLATION_VARIANTS:
            raise ValueError(f"variant must be one of {ABLATION_VARIANTS}")


def _train_variant(cfg: Config, teachers, variant: str, seed: int, encoder=None):
    """Train one ablation variant (or 'full') at the ablation budget."""
    import copy

    cfg = copy.deepcopy(cfg)
    dec_iters = cfg.eval.ablation_decoder_iterations
    joint_iters = cfg.eval.ablation_joint_iterations
    reward_mode = "style"
    if variant == "no-style-rewards":
        # teacher-case rewards replace the style terms
        reward_mode = "teacher"
        cfg.student.style_scale_weight = 0.0
        cfg.student.style_direction_weight = 0.0
    elif variant == "no-regularization-rewards":
        cfg.student.regularization_weight = 0.0
    if variant == "no-encoder":
        decoder, critic, log_std, _ = pretrain_decoder(
            cfg, teachers, seed, iterations=dec_iters + joint_iters, use_labels=False)
        return {"cfg": cfg, "decoder": decoder, "critic": critic, "log_std": log_std,
                "encoder": None}
    decoder, critic, log_std, _ = pretrain_decoder(
        cfg, teachers, seed, iterations=dec_iters, reward_mode=reward_mode)
    student = StudentPolicy(cfg, seed=int(seed_seq(seed, 8).generate_state(1)[0]))
    if encoder is not None:
        student.encoder.set_params(encoder.params)
    student.decoder.set_params(decoder.params)
    student.critic.set_params(critic.params)
    np.copyto(student.log_std, log_std)
    student, _ = joint_online_training(cfg, student, teachers, seed,
                                       iterations=joint_iters, reward_mode=reward_mode)
    return {"cfg": cfg, "student": student, "encoder": student.encoder}


def _eval_policy(cfg: Config, policy, teachers, scenarios: list) -> dict:
    """Scenario-matrix metrics for a trained variant or the full method."""
    survived = []
    alignment = []
    for scen in scenarios:
        if isinstance(policy, StudentPolicy):
            trace = run_scenario(cfg, policy, teachers, scen)
        else:
            trace = _run_scenario_no_encoder(cfg, policy, teachers, scen)
        m = stability_metrics(trace, cfg)
        survived.append(m["survived"])
        on, off = scen.events[0][0], scen.events[1][0]
        sf = np.asarray(trace["style_fault"], dtype=np.float64)
        w = cfg.eval.window
        lo, hi = on + w, min(off, len(sf))
        alignment.append(float(sf[lo:hi].mean()) if hi > lo else 0.0)
    return {
        "survival_rate": float(np.mean(survived)),
        "style_alignment": float(np.mean(alignment)),
        "scenarios": len(scenarios),
    }


def _run_scenario_no_encoder(cfg: Config, nets: dict, teachers, scenario: EvalScenario) -> dict:
    """Scenario rollout for the encoder-less variant (decoder on raw obs)."""
    decoder = nets["decoder"]
    classes = enumerate_fault_cases()
    env = LocomotionEnv(cfg, 1, seed_seq(scenario.seed, STAGE_EVAL, scenario.fault_class),
                        fault_mode="manual", randomize=False, pushes=False, auto_reset=False)
    env.reset_all()
    env.commands[0] = np.asarray(scenario.command, dtype=np.float64)
    env.set_fault(0, classes[0].representative())
    events = dict(scenario.events)
    normal_teacher, fault_teacher = teachers[0], teachers[scenario.fault_class]
    c1, c2 = cfg.student.style_scale_weight, cfg.student.style_direction_weight
    rows = {k: [] for k in TRACE_COLUMNS}
    obs = env.observations()
    for step in range(scenario.episode_len):
        if step in events:
            env.set_fault(0, classes[events[step]].representative())
        mean = decoder.forward(obs.astype(np.float32))
        a_norm = normal_teacher.act(obs.astype(np.float32))
        a_fault = fault_teacher.act(obs.astype(np.float32))
        sc_n = float(style_scale_reward(mean, a_norm)[0])
        di_n = float(style_direction_reward(mean, a_norm)[0])
        sc_f = float(style_scale_reward(mean, a_fault)[0])
        di_f = float(style_direction_reward(mean, a_fault)[0])
        obs, snap, dones, info = env.step(mean)
        done = bool(dones[0])
        row = dict.fromkeys(TRACE_COLUMNS, 0)
        row.update({
            "step": step, "class_active": int(env.active_class[0]),
            "base_height": float(snap.base_height[0]),
            "vel_x": float(snap.lin_vel_body[0, 0]), "vel_y": float(snap.lin_vel_body[0, 1]),
            "vel_z": float(snap.lin_vel_body[0, 2]),
            "roll_rate": float(snap.ang_vel_body[0, 0]),
            "pitch_rate": float(snap.ang_vel_body[0, 1]),
            "yaw_rate": float(snap.ang_vel_body[0, 2]),
            "scale_normal": sc_n, "direction_normal": di_n, "style_normal": c1 * sc_n + c2 * di_n,
            "scale_fault": sc_f, "direction_fault": di_f, "style_fault": c1 * sc_f + c2 * di_f,
            "survived": int(not done),
        })
        for k in TRACE_COLUMNS:
            rows[k].append(row[k])
        if done:
            break
    trace = {k: np.asarray(v) for k, v in rows.items()}
    trace["_survived"] = bool(trace["survived"][-1] > 0.5)
    return trace


def ablation_scenarios(cfg: Config, seed: int = 0) -> list:
    """Fault scenario matrix: the four single-leg classes plus two duals."""
    return [default_scenario(cfg, ci, seed=seed) for ci in (1, 2, 3, 4, 6, 9)]


def full_method_metrics(cfg: Config, teachers: list, seed: int, encoder=None) -> dict:
    """Train the full method at the ablation budget (same seed as the
    variants) and evaluate it on the scenario matrix."""
    full = _train_variant(cfg, teachers, "full", seed, encoder=encoder)
    return _eval_policy(full["cfg"], full["student"], teachers, ablation_scenarios(cfg, seed))


def run_ablation(cfg: Config, variant: str, seed: int, teachers: list,
                 encoder=None, full_metrics: dict | None = None,
                 report_path=None) -> dict:
    """Train a variant at the ablation budget and compare it against the
    same-seed full method on the fault scenario matrix."""
    spec = AblationSpec(variant, seed)
    scenarios = ablation_scenarios(cfg, seed)
    if full_metrics is None:
        full_metrics = full_method_metrics(cfg, teachers, seed, encoder=encoder)
    try:
        trained = _train_variant(cfg, teachers, spec.variant, seed, encoder=encoder)
        policy = trained.get("student") or {"decoder": trained["decoder"]}
        variant_metrics = _eval_policy(trained["cfg"], policy, teachers, scenarios)
        diverged = False
    except FloatingPointError:
        variant_metrics = {"survival_rate": 0.0, "style_alignment": 0.0, "scenarios": 0}
        diverged = True
    report = {
        "variant": spec.variant,
        "seed": seed,
        "diverged": diverged,
        "full": full_metrics,
        "ablated": variant_metrics,
    }
    if report_path:
        write_ablation_report(report_path, [report])
    return report


def write_ablation_report(path, reports: list):
    lines = ["variant                      survival  style_alignment   (full method)"]
    for r in reports:
        lines.append(
            f"{r['variant']:<28} {r['ablated']['survival_rate']:>7.2f}  "
            f"{r['ablated']['style_alignment']:>14.3f}   "
            f"(full: {r['full']['survival_rate']:.2f} / {r['full']['style_alignment']:.3f})"
        )
    text = "\n".join(lines) + "\n"
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return text
