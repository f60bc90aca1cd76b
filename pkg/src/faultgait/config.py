"""Configuration: dataclass sections, desk/paper profiles, text round-trip.

Config files are plain ``key = value`` text with one ``[section]`` per
dataclass below.  Dumping is canonical (fixed section/key order, shortest
round-trip float repr), so ``dump(parse(dump(cfg))) == dump(cfg)`` holds
byte-for-byte and the SHA-256 of the dump is a stable config hash.

Seeding: every stage derives its RNG from the root seed and a fixed tuple
key via ``seed_seq(root, *key)``, so the root seed alone fixes every
sub-seed regardless of execution order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field, fields
from typing import get_type_hints

import numpy as np


@dataclass
class SimConfig:
    """Reduced quadruped model and integration constants."""

    physics_dt: float = 0.0025
    control_decimation: int = 8
    gravity: float = 9.81
    base_mass: float = 7.0
    hip_mass: float = 0.7
    thigh_mass: float = 1.0
    calf_mass: float = 0.3
    # body box used for the composite inertia (m)
    body_length: float = 0.36
    body_width: float = 0.20
    body_height: float = 0.12
    # leg geometry (m): hip pivots at (+-hip_x, +-hip_y), abduction link
    # offsets the thigh plane laterally by hip_offset
    hip_x: float = 0.18
    hip_y: float = 0.10
    hip_offset: float = 0.055
    thigh_length: float = 0.21
    calf_length: float = 0.21
    # joint limits (rad), per joint type
    hip_limit: float = 1.0
    thigh_limit_low: float = -1.5
    thigh_limit_high: float = 3.4
    knee_limit_low: float = -2.7
    knee_limit_high: float = -0.85
    torque_limit: float = 23.5
    kp: float = 60.0
    kd: float = 2.0
    joint_inertia: float = 0.08
    contact_stiffness: float = 2.0e4
    contact_damping: float = 150.0
    contact_tangent_damping: float = 150.0
    friction: float = 1.0
    contact_threshold: float = 0.0
    action_scale: float = 0.25
    # nominal stance (per-leg hip, thigh, knee) and the matching base height
    nominal_hip: float = 0.0
    nominal_thigh: float = 0.7
    nominal_knee: float = -1.4
    nominal_height: float = 0.32
    # episode termination
    min_base_height: float = 0.12
    max_tilt: float = 1.2
    max_episode_steps: int = 1000

    def validate(self):
        if self.physics_dt <= 0:
            raise ValueError("physics_dt must be > 0")
        if self.control_decimation < 1:
            raise ValueError("control_decimation must be >= 1")
        for name in ("base_mass", "hip_mass", "thigh_mass", "calf_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.kp < 0 or self.kd < 0:
            raise ValueError("PD gains must be >= 0")

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.control_decimation

    @property
    def total_mass(self) -> float:
        return self.base_mass + 4.0 * (self.hip_mass + self.thigh_mass + self.calf_mass)


@dataclass
class DomainRandomization:
    """Training-time perturbation ranges."""

    friction_low: float = 0.5
    friction_high: float = 1.25
    added_mass_low: float = -1.0
    added_mass_high: float = 1.0
    push_velocity: float = 1.0
    push_interval_s: float = 15.0
    motor_scale_low: float = 0.8
    motor_scale_high: float = 1.2
    fault_switch_steps: int = 300
    enabled: bool = True

    def validate(self):
        if self.friction_low > self.friction_high:
            raise ValueError("friction range inverted")
        if self.motor_scale_low > self.motor_scale_high:
            raise ValueError("motor scale range inverted")
        if self.fault_switch_steps < 1:
            raise ValueError("fault_switch_steps must be >= 1")


@dataclass
class NetworkConfig:
    """Network shapes and the sequence-window length."""

    obs_dim: int = 45
    action_dim: int = 12
    label_dim: int = 4
    seq_len: int = 10
    encoder_dims: tuple = (128, 128)
    decoder_dims: tuple = (128, 64, 64)
    critic_dims: tuple = (128, 64, 64)
    teacher_dims: tuple = (128, 64, 64)
    cell: str = "gru"  # "gru" | "simple"
    activation: str = "elu"
    init_log_std: float = -1.0

    @property
    def decoder_in_dim(self) -> int:
        return self.obs_dim + self.label_dim


@dataclass
class PpoConfig:
    """Clipped-surrogate policy optimization settings."""

    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    value_coef: float = 1.0
    entropy_coef: float = 0.005
    steps_per_iter: int = 24
    learning_rate: float = 3e-4
    max_grad_norm: float = 1.0
    num_envs: int = 256
    normalize_advantages: bool = True

    def validate(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be > 0")


@dataclass
class TeacherTrainConfig:
    """Per-fault-case teacher training settings."""

    iterations: int = 120
    # dual-leg cases are much harder to stabilize; they get a bigger budget
    dual_iterations: int = 300
    cmd_forward_low: float = 0.0
    cmd_forward_high: float = 0.6
    cmd_lateral: float = 0.3
    cmd_yaw: float = 0.5
    dual_leg_forward_cap: float = 0.3
    tracking_sigma: float = 0.25
    height_sigma: float = 0.05
    clearance_cap: float = 0.08


@dataclass
class StudentTrainConfig:
    """Distillation settings: style weights, schedules, phase budgets."""

    style_scale_weight: float = 100.0  # c1
    style_direction_weight: float = 5.0  # c2
    regularization_weight: float = 1.0  # c3
    normal_case_weight: float = 2.0  # sampler boost for the no-fault class
    episodes_per_class: int = 8
    episode_len: int = 48
    encoder_epochs: int = 18
    encoder_batch: int = 256
    encoder_lr: float = 1e-3
    encoder_holdout_episodes: int = 2
    encoder_online_batch: int = 512
    decoder_iterations: int = 140
    joint_iterations: int = 80


@dataclass
class EvalConfig:
    """Trace scenarios, crossover windows, and stability bounds."""

    fault_step: int = 300
    removal_step: int = 600
    episode_len: int = 900
    window: int = 50
    cmd_forward: float = 0.3
    cmd_lateral: float = 0.0
    cmd_yaw: float = 0.0
    num_seeds: int = 10
    # stability bound on |roll/pitch rate| (rad/s), calibrated from the
    # committed desk baseline run
    max_rp_rate: float = 4.0
    ablation_decoder_iterations: int = 80
    ablation_joint_iterations: int = 50


@dataclass
class Config:
    """Top-level configuration: one section per module."""

    profile: str = "desk"
    sim: SimConfig = field(default_factory=SimConfig)
    rand: DomainRandomization = field(default_factory=DomainRandomization)
    nets: NetworkConfig = field(default_factory=NetworkConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    teacher: TeacherTrainConfig = field(default_factory=TeacherTrainConfig)
    student: StudentTrainConfig = field(default_factory=StudentTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        self.sim.validate()
        self.rand.validate()
        self.ppo.validate()

    def hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode("utf-8")).hexdigest()


def desk_profile() -> Config:
    """Small widths and budgets sized for a CPU desk run."""
    return Config(profile="desk")


def paper_profile() -> Config:
    """Appendix-table values: full widths, N=3456, long budgets."""
    cfg = Config(profile="paper")
    cfg.nets.encoder_dims = (512, 512, 512)
    cfg.nets.decoder_dims = (512, 256, 128)
    cfg.nets.critic_dims = (512, 256, 128)
    cfg.nets.teacher_dims = (512, 256, 128)
    cfg.ppo.num_envs = 3456
    cfg.teacher.iterations = 5000
    cfg.teacher.dual_iterations = 5000
    cfg.student.decoder_iterations = 5000
    cfg.student.joint_iterations = 5000
    cfg.student.episodes_per_class = 64
    cfg.student.episode_len = 400
    return cfg


PROFILES = {"desk": desk_profile, "paper": paper_profile}


def load_profile(name: str) -> Config:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


# ---------------------------------------------------------------------------
# canonical text round-trip


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, str):
        return v
    raise TypeError(f"unsupported config value type {type(v)!r}")


def _parse_value(text: str, typ):
    text = text.strip()
    if typ is bool:
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is str:
        return text
    if typ is tuple:
        if not text:
            return ()
        parts = [p.strip() for p in text.split(",")]
        out = []
        for p in parts:
            try:
                out.append(int(p))
            except ValueError:
                out.append(float(p))
        return tuple(out)
    raise TypeError(f"unsupported config field type {typ!r}")


def dump_config(cfg: Config) -> str:
    """Canonical text form: sections and keys in declaration order."""
    lines = [f"profile = {cfg.profile}", ""]
    for sec in fields(Config):
        if sec.name == "profile":
            continue
        section = getattr(cfg, sec.name)
        lines.append(f"[{sec.name}]")
        for f in fields(section):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str) -> Config:
    """Parse the ``dump_config`` format back into a Config."""
    cfg = Config()
    section_types = {f.name: type(getattr(cfg, f.name)) for f in fields(Config) if f.name != "profile"}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in section_types:
                raise ValueError(f"line {lineno}: unknown section [{name}]")
            current = name
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if current is None:
            if key != "profile":
                raise ValueError(f"line {lineno}: key {key!r} outside any section")
            cfg.profile = value
            continue
        section = getattr(cfg, current)
        hints = get_type_hints(type(section))
        if key not in hints:
            raise ValueError(f"line {lineno}: unknown key {key!r} in [{current}]")
        setattr(section, key, _parse_value(value, hints[key]))
    cfg.validate()
    return cfg


def save_config(cfg: Config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# seeding

# fixed stage keys so the root seed alone determines every sub-stream
STAGE_TEACHER = 1
STAGE_DATASET = 2
STAGE_ENCODER = 3
STAGE_DECODER = 4
STAGE_JOINT = 5
STAGE_EVAL = 6
STAGE_ABLATION = 7


def seed_seq(root_seed: int, *key: int) -> np.random.SeedSequence:
    """Deterministic child sequence for (root, key...)."""
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(k) for k in key))


def make_rng(root_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_seq(root_seed, *key)))


def apply_overrides(cfg: Config, pairs: dict) -> Config:
    """Apply {'section.key': value-string} overrides in place; every
    override is logged so profile deviations leave a trace."""
    log = logging.getLogger("faultgait")
    for dotted, text in pairs.items():
        sec_name, _, key = dotted.partition(".")
        if not key:
            raise ValueError(f"override {dotted!r} must be section.key")
        section = getattr(cfg, sec_name)
        hints = get_type_hints(type(section))
        if key not in hints:
            raise ValueError(f"unknown override target {dotted!r}")
        old = getattr(section, key)
        setattr(section, key, _parse_value(str(text), hints[key]))
        log.info("config override %s: %r -> %r", dotted, old, getattr(section, key))
    cfg.validate()
    return cfg


def config_from_dict(cfg: Config, **sections) -> Config:
    """Copy cfg with dataclass-level replacements, for tests."""
    return dataclasses.replace(cfg, **sections)
