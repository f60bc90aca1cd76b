"""Stage orchestration: teachers -> dataset -> encoder -> decoder ->
student -> eval, with manifest bookkeeping and resume support.

Teacher trainings are independent seeded jobs and can run in parallel
worker processes (jobs > 1) without changing results.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .checkpoint import save_checkpoint
from .config import Config, dump_config, parse_config
from .evaluate import (ablation_scenarios, crossover_verdict, default_scenario,
                       run_scenario, stability_metrics, write_ablation_report)
from .faults import NUM_FAULT_CLASSES
from .manifest import RunManifest
from .nets import merge_params
from .student import (StudentPolicy, joint_online_training, pretrain_decoder,
                      pretrain_encoder)
from .teachers import (TeacherPolicy, collect_labeled_rollouts, load_dataset,
                       save_dataset, train_teacher)

log = logging.getLogger("faultgait")


def _train_teacher_job(args):
    cfg_text, class_index, seed, ckpt_path, stats_path = args
    cfg = parse_config(cfg_text)
    teacher, _ = train_teacher(cfg, class_index, seed, stats_path=stats_path)
    teacher.save(ckpt_path)
    return class_index, ckpt_path


def stage_teachers(manifest: RunManifest, cfg: Config, jobs: int = 1):
    manifest.require("teachers")
    pending = [ci for ci in range(NUM_FAULT_CLASSES) if not manifest.teachers_done[ci]]
    if not pending:
        log.info("teachers: all 11 already trained, skipping")
        return
    cfg_text = dump_config(cfg)
    job_args = [
        (cfg_text, ci, manifest.root_seed, manifest.teacher_ckpt(ci),
         manifest.path("stats", f"teacher_{ci:02d}.csv"))
        for ci in pending
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for ci, path in pool.map(_train_teacher_job, job_args):
                manifest.mark_teacher(ci, path, manifest.path("stats", f"teacher_{ci:02d}.csv"))
                log.info("teacher %02d done -> %s", ci, path)
    else:
        for args in job_args:
            ci, path = _train_teacher_job(args)
            manifest.mark_teacher(ci, path, manifest.path("stats", f"teacher_{ci:02d}.csv"))
            log.info("teacher %02d done -> %s", ci, path)


def load_teachers(manifest: RunManifest, cfg: Config) -> list:
    return [TeacherPolicy.load(manifest.teacher_ckpt(ci), cfg)
            for ci in range(NUM_FAULT_CLASSES)]


def stage_dataset(manifest: RunManifest, cfg: Config):
    manifest.require("dataset")
    if manifest.stage_done("dataset"):
        log.info("dataset: already collected, skipping")
        return
    teachers = load_teachers(manifest, cfg)
    dataset = collect_labeled_rollouts(cfg, teachers, manifest.root_seed)
    path = manifest.path("datasets", "rollouts.fgds")
    save_dataset(path, dataset)
    manifest.mark("dataset", [path])
    log.info("dataset: %d windows -> %s", dataset["windows"].shape[0], path)


def stage_encoder(manifest: RunManifest, cfg: Config):
    manifest.require("encoder")
    if manifest.stage_done("encoder"):
        log.info("encoder: already pretrained, skipping")
        return
    dataset = load_dataset(manifest.path("datasets", "rollouts.fgds"))
    encoder, report = pretrain_encoder(cfg, dataset, manifest.root_seed,
                                       stats_path=manifest.path("stats", "encoder.csv"))
    path = manifest.path("checkpoints", "encoder.ckpt")
    save_checkpoint(path, merge_params(encoder=encoder.params), {
        "holdout_exact_match": report["holdout_exact_match"],
        "holdout_bit_accuracy": report["holdout_bit_accuracy"],
        "seed": manifest.root_seed,
        "config_hash": cfg.hash(),
    })
    manifest.mark("encoder", [path, manifest.path("stats", "encoder.csv")])
    log.info("encoder: holdout exact-match %.3f -> %s", report["holdout_exact_match"], path)


def stage_decoder(manifest: RunManifest, cfg: Config):
    manifest.require("decoder")
    if manifest.stage_done("decoder"):
        log.info("decoder: already pretrained, skipping")
        return
    teachers = load_teachers(manifest, cfg)
    decoder, critic, log_std, _ = pretrain_decoder(
        cfg, teachers, manifest.root_seed, stats_path=manifest.path("stats", "decoder.csv"))
    path = manifest.path("checkpoints", "decoder.ckpt")
    blocks = merge_params(decoder=decoder.params, critic=critic.params)
    blocks["log_std"] = log_std
    save_checkpoint(path, blocks, {"seed": manifest.root_seed, "config_hash": cfg.hash()})
    manifest.mark("decoder", [path, manifest.path("stats", "decoder.csv")])
    log.info("decoder: pretrained -> %s", path)


def stage_student(manifest: RunManifest, cfg: Config):
    manifest.require("student")
    if manifest.stage_done("student"):
        log.info("student: already trained, skipping")
        return
    from .checkpoint import load_checkpoint
    from .nets import split_params

    teachers = load_teachers(manifest, cfg)
    student = StudentPolicy(cfg)
    enc_blocks, _ = load_checkpoint(manifest.path("checkpoints", "encoder.ckpt"))
    student.encoder.set_params(split_params(enc_blocks)["encoder"])
    dec_blocks, _ = load_checkpoint(manifest.path("checkpoints", "decoder.ckpt"))
    groups = split_params(dec_blocks)
    student.decoder.set_params(groups["decoder"])
    student.critic.set_params(groups["critic"])
    np.copyto(student.log_std, dec_blocks["log_std"])
    student, _ = joint_online_training(cfg, student, teachers, manifest.root_seed,
                                       stats_path=manifest.path("stats", "student.csv"))
    path = manifest.path("checkpoints", "student.ckpt")
    student.save(path, {"seed": manifest.root_seed, "config_hash": cfg.hash()})
    manifest.mark("student", [path, manifest.path("stats", "student.csv")])
    log.info("student: joint phase done -> %s", path)


def stage_eval(manifest: RunManifest, cfg: Config):
    manifest.require("eval")
    if manifest.stage_done("eval"):
        log.info("eval: already done, skipping")
        return
    teachers = load_teachers(manifest, cfg)
    student = StudentPolicy.load(manifest.path("checkpoints", "student.ckpt"), cfg)
    paths = []
    lines = []
    for scen in ablation_scenarios(cfg, seed=manifest.root_seed):
        csv_path = manifest.path("traces", f"{scen.name}.csv")
        trace = run_scenario(cfg, student, teachers, scen, csv_path=csv_path)
        m = stability_metrics(trace, cfg)
        x = crossover_verdict(trace, cfg, scen)
        paths.append(csv_path)
        lines.append(f"{scen.name}: survived={m['survived']} stable={m['stable']} "
                     f"crossover={x['ok']} max_rp={m['max_windowed_rp_rate']:.3f}")
    report_path = manifest.path("reports", "eval.txt")
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    paths.append(report_path)
    manifest.mark("eval", paths)
    log.info("eval: %d scenarios -> %s", len(lines), report_path)


def run_pipeline(run_dir, cfg: Config, root_seed: int, jobs: int = 1) -> RunManifest:
    """Execute (or resume) every stage in order."""
    manifest = RunManifest.create(run_dir, cfg, root_seed)
    stage_teachers(manifest, cfg, jobs=jobs)
    stage_dataset(manifest, cfg)
    stage_encoder(manifest, cfg)
    stage_decoder(manifest, cfg)
    stage_student(manifest, cfg)
    stage_eval(manifest, cfg)
    return manifest
