import json
import os

import numpy as np
import pytest

from faultgait.config import dump_config, load_config
from faultgait.manifest import (ManifestMismatch, RunManifest, StageOrderError,
                                STAGE_ORDER)
from faultgait.pipeline import run_pipeline


def test_manifest_create_and_load(micro_cfg, tmp_path):
    run_dir = tmp_path / "run"
    m = RunManifest.create(run_dir, micro_cfg, root_seed=5)
    assert os.path.exists(m.path("manifest.json"))
    assert os.path.exists(m.path("config.cfg"))
    loaded = RunManifest.load(run_dir)
    assert loaded.config_hash == micro_cfg.hash()
    assert loaded.root_seed == 5
    assert not loaded.stage_done("teachers")


def test_stage_order_enforced(micro_cfg, tmp_path):
    m = RunManifest.create(tmp_path / "run", micro_cfg, root_seed=0)
    with pytest.raises(StageOrderError):
        m.require("dataset")
    with pytest.raises(StageOrderError):
        m.require("student")
    m.require("teachers")  # no prerequisites
    for ci in range(11):
        m.mark_teacher(ci, m.teacher_ckpt(ci))
    m.require("dataset")  # now fine
    with pytest.raises(StageOrderError):
        m.require("eval")
    with pytest.raises(ValueError):
        m.require("nonsense")


def test_hash_mismatch_refuses_resume(micro_cfg, tmp_path):
    run_dir = tmp_path / "run"
    RunManifest.create(run_dir, micro_cfg, root_seed=0)
    other = load_config(run_dir / "config.cfg")
    other.ppo.gamma = 0.9
    with pytest.raises(ManifestMismatch):
        RunManifest.create(run_dir, other, root_seed=0)
    with pytest.raises(ManifestMismatch):
        RunManifest.load(run_dir, expected_hash="deadbeef")
    with pytest.raises(ManifestMismatch):
        RunManifest.load(run_dir, expected_seed=12)


def test_manifest_atomic_write_and_no_tmp_left(micro_cfg, tmp_path):
    run_dir = tmp_path / "run"
    m = RunManifest.create(run_dir, micro_cfg, root_seed=0)
    m.mark("dataset", [m.path("datasets", "rollouts.fgds")])
    assert not os.path.exists(m.path("manifest.json.tmp"))
    data = json.loads((run_dir / "manifest.json").read_text())
    assert data["stages"]["dataset"]["done"]
    assert data["stages"]["dataset"]["paths"] == ["datasets/rollouts.fgds"]


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory):
    """One micro pipeline run shared by the pipeline tests."""
    from conftest import micro_cfg as _fixture  # noqa: F401 (documentation only)
    from faultgait.config import desk_profile

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
    run_dir = tmp_path_factory.mktemp("pipeline") / "run"
    manifest = run_pipeline(run_dir, cfg, root_seed=0)
    return run_dir, cfg, manifest


def test_pipeline_completes_all_stages(micro_run):
    run_dir, cfg, manifest = micro_run
    for stage in STAGE_ORDER:
        assert manifest.stage_done(stage), stage
    assert all(manifest.teachers_done)


def test_pipeline_artifacts_exist_no_orphans(micro_run):
    run_dir, cfg, manifest = micro_run
    for path in manifest.artifact_paths():
        assert os.path.exists(path), path
    # every output file in the run dir is reachable from the manifest
    tracked = {os.path.relpath(p, run_dir) for p in manifest.artifact_paths()}
    tracked |= {"manifest.json", "config.cfg"}
    for root, _, files in os.walk(run_dir):
        for f in files:
            rel = os.path.relpath(os.path.join(root, f), run_dir)
            assert rel in tracked, f"orphan output {rel}"


def test_pipeline_resume_skips_done_stages(micro_run):
    run_dir, cfg, manifest = micro_run
    mtimes = {p: os.path.getmtime(p) for p in manifest.artifact_paths()}
    manifest2 = run_pipeline(run_dir, cfg, root_seed=0)
    for p, t in mtimes.items():
        assert os.path.getmtime(p) == t, f"{p} was rebuilt on resume"


def test_pipeline_rejects_other_seed_on_resume(micro_run):
    run_dir, cfg, _ = micro_run
    with pytest.raises(ManifestMismatch):
        run_pipeline(run_dir, cfg, root_seed=1)


def test_manifest_is_deterministic_across_runs(micro_run, tmp_path):
    run_dir, cfg, _ = micro_run
    other_dir = tmp_path / "replay"
    run_pipeline(other_dir, cfg, root_seed=0)
    a = (run_dir / "manifest.json").read_text()
    b = (other_dir / "manifest.json").read_text()
    assert a == b
