"""Command-line entry point.

Verbs: pipeline, train-teacher, collect-rollouts, pretrain-encoder,
pretrain-decoder, train-student, eval, ablate.  Shared flags: --run-dir,
--profile, --seed, --case; --config points at a dumped config file that
overrides the profile.  Set FAULTGAIT_LOG=debug|info|warning for log
verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline as pl
from .config import Config, load_config, load_profile
from .evaluate import (ABLATION_VARIANTS, crossover_verdict, default_scenario,
                       run_ablation, run_scenario, scenario_from_file,
                       stability_metrics, write_ablation_report)
from .manifest import RunManifest
from .student import StudentPolicy


def _setup_logging():
    level = os.environ.get("FAULTGAIT_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _resolve_config(args) -> Config:
    if getattr(args, "config", None):
        return load_config(args.config)
    return load_profile(args.profile)


def _manifest(args, cfg: Config) -> RunManifest:
    return RunManifest.create(args.run_dir, cfg, args.seed)


def _add_common(p):
    p.add_argument("--run-dir", required=True, help="run directory (created if missing)")
    p.add_argument("--profile", default="desk", choices=("desk", "paper"))
    p.add_argument("--seed", type=int, default=0, help="root seed for every stage")
    p.add_argument("--config", default=None,
                   help="config file overriding the profile (see config.cfg format)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultgait",
        description="Fault-tolerant quadruped locomotion: teacher-student training pipeline",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("pipeline", help="run every stage in order (resumable)")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel teacher trainings")

    p = sub.add_parser("train-teacher", help="train one fault case's teacher")
    _add_common(p)
    p.add_argument("--case", type=int, required=True, metavar="0..10")

    p = sub.add_parser("collect-rollouts", help="labeled windows from trained teachers")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=None, help="episodes per class")

    for verb in ("pretrain-encoder", "pretrain-decoder", "train-student"):
        p = sub.add_parser(verb)
        _add_common(p)

    p = sub.add_parser("eval", help="run a trace scenario against the trained student")
    _add_common(p)
    p.add_argument("--scenario", default=None, help="scenario file (default: built-in)")
    p.add_argument("--case", type=int, default=3, help="fault class for the default scenario")

    p = sub.add_parser("ablate", help="train and evaluate one ablation variant")
    _add_common(p)
    p.add_argument("--variant", required=True, choices=ABLATION_VARIANTS)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    cfg = _resolve_config(args)

    if args.verb == "pipeline":
        manifest = pl.run_pipeline(args.run_dir, cfg, args.seed, jobs=args.jobs)
        print(f"pipeline complete: {manifest.run_id}")
        return 0

    manifest = _manifest(args, cfg)
    if args.verb == "train-teacher":
        from .teachers import train_teacher
        teacher, _ = train_teacher(cfg, args.case, manifest.root_seed,
                                   stats_path=manifest.path("stats", f"teacher_{args.case:02d}.csv"))
        path = manifest.teacher_ckpt(args.case)
        teacher.save(path)
        manifest.mark_teacher(args.case, path)
        print(f"teacher {args.case} -> {path}")
    elif args.verb == "collect-rollouts":
        if args.episodes is not None:
            cfg.student.episodes_per_class = args.episodes
        pl.stage_dataset(manifest, cfg)
        print(f"dataset -> {manifest.path('datasets', 'rollouts.fgds')}")
    elif args.verb == "pretrain-encoder":
        pl.stage_encoder(manifest, cfg)
        print(f"encoder -> {manifest.path('checkpoints', 'encoder.ckpt')}")
    elif args.verb == "pretrain-decoder":
        pl.stage_decoder(manifest, cfg)
        print(f"decoder -> {manifest.path('checkpoints', 'decoder.ckpt')}")
    elif args.verb == "train-student":
        pl.stage_student(manifest, cfg)
        print(f"student -> {manifest.path('checkpoints', 'student.ckpt')}")
    elif args.verb == "eval":
        manifest.require("eval")
        teachers = pl.load_teachers(manifest, cfg)
        student = StudentPolicy.load(manifest.path("checkpoints", "student.ckpt"), cfg)
        scen = scenario_from_file(args.scenario) if args.scenario else \
            default_scenario(cfg, args.case, seed=args.seed)
        csv_path = manifest.path("traces", f"{scen.name}.csv")
        trace = run_scenario(cfg, student, teachers, scen, csv_path=csv_path)
        m = stability_metrics(trace, cfg)
        x = crossover_verdict(trace, cfg, scen)
        print(f"trace -> {csv_path}")
        print(f"survived={m['survived']} stable={m['stable']} crossover={x['ok']}")
    elif args.verb == "ablate":
        manifest.require("eval")
        teachers = pl.load_teachers(manifest, cfg)
        from .checkpoint import load_checkpoint
        from .nets import RecurrentEncoder, split_params
        enc_blocks, _ = load_checkpoint(manifest.path("checkpoints", "encoder.ckpt"))
        encoder = RecurrentEncoder(cfg.nets.obs_dim, cfg.nets.encoder_dims,
                                   cfg.nets.label_dim, cell=cfg.nets.cell)
        encoder.set_params(split_params(enc_blocks)["encoder"])
        report = run_ablation(cfg, args.variant, manifest.root_seed, teachers, encoder=encoder)
        path = manifest.path("reports", f"ablation_{args.variant}.txt")
        text = write_ablation_report(path, [report])
        print(text)
        print(f"report -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
