import os

import numpy as np
import pytest

from faultgait.config import desk_profile


@pytest.fixture(scope="session")
def baseline_run(tmp_path_factory):
    """A completed desk pipeline at root seed 0, shared by the slow tests
    (trained here unless FAULTGAIT_BASELINE_DIR points at one)."""
    from faultgait.manifest import RunManifest, STAGE_ORDER
    from faultgait.pipeline import run_pipeline

    cfg = desk_profile()
    override = os.environ.get("FAULTGAIT_BASELINE_DIR")
    if override:
        manifest = RunManifest.load(override, expected_hash=cfg.hash(), expected_seed=0)
        for stage in STAGE_ORDER:
            assert manifest.stage_done(stage), f"{override} is incomplete: {stage}"
        return override, cfg, manifest
    run_dir = tmp_path_factory.mktemp("baseline") / "run"
    manifest = run_pipeline(run_dir, cfg, root_seed=0, jobs=2)
    return str(run_dir), cfg, manifest


@pytest.fixture
def micro_cfg():
    """Tiny budgets for structural tests: nothing here is expected to learn."""
    cfg = desk_profile()
    cfg.nets.encoder_dims = (16,)
    cfg.nets.decoder_dims = (16,)
    cfg.nets.critic_dims = (16,)
    cfg.nets.teacher_dims = (16,)
    cfg.ppo.num_envs = 8
    cfg.ppo.steps_per_iter = 8
    cfg.teacher.iterations = 2
    cfg.teacher.dual_iterations = 2
    cfg.student.episodes_per_class = 2
    cfg.student.episode_len = 16
    cfg.student.encoder_epochs = 2
    cfg.student.encoder_holdout_episodes = 1
    cfg.student.encoder_online_batch = 32
    cfg.student.decoder_iterations = 2
    cfg.student.joint_iterations = 2
    cfg.eval.episode_len = 30
    cfg.eval.fault_step = 10
    cfg.eval.removal_step = 20
    cfg.eval.window = 5
    cfg.eval.ablation_decoder_iterations = 2
    cfg.eval.ablation_joint_iterations = 2
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
