"""Run-directory layout and the stage manifest.

Layout::

    run_dir/
      config.cfg            frozen configuration for the run
      manifest.json         stage flags, artifact paths, seeds (atomic writes)
      checkpoints/          teacher_00..10.ckpt, encoder.ckpt, decoder.ckpt,
                            student.ckpt
      datasets/             rollouts.fgds
      stats/                per-stage training CSVs
      traces/               evaluation trace CSVs
      reports/              plain-text eval/ablation reports

A stage may start only when its prerequisites are complete; the config
hash is verified before resuming.  Manifest contents are deterministic
(no timestamps, run-dir-relative paths), so identical seeded runs produce
byte-identical manifests.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .config import Config, dump_config, load_config
from .faults import NUM_FAULT_CLASSES

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.cfg"

# stage -> prerequisites
STAGE_PREREQS = {
    "teachers": (),
    "dataset": ("teachers",),
    "encoder": ("dataset",),
    "decoder": ("teachers",),
    "student": ("encoder", "decoder"),
    "eval": ("student",),
}
STAGE_ORDER = ("teachers", "dataset", "encoder", "decoder", "student", "eval")


class StageOrderError(RuntimeError):
    """A stage was started before its prerequisites completed."""


class ManifestMismatch(RuntimeError):
    """The run directory's config hash does not match the manifest."""


@dataclass
class RunManifest:
    run_dir: str
    run_id: str
    config_hash: str
    root_seed: int
    teachers_done: list = field(default_factory=lambda: [False] * NUM_FAULT_CLASSES)
    stages: dict = field(default_factory=dict)  # name -> {"done", "paths"}

    # -- creation / io -------------------------------------------------------

    @classmethod
    def create(cls, run_dir, cfg: Config, root_seed: int) -> "RunManifest":
        os.makedirs(run_dir, exist_ok=True)
        for sub in ("checkpoints", "datasets", "stats", "traces", "reports"):
            os.makedirs(os.path.join(run_dir, sub), exist_ok=True)
        cfg_path = os.path.join(run_dir, CONFIG_NAME)
        if os.path.exists(cfg_path):
            existing = load_config(cfg_path)
            if existing.hash() != cfg.hash():
                raise ManifestMismatch(
                    f"{run_dir} already holds a different configuration; refusing to reuse")
        else:
            with open(cfg_path, "w") as fh:
                fh.write(dump_config(cfg))
        manifest = cls(
            run_dir=str(run_dir),
            run_id=f"run-seed{int(root_seed)}-{cfg.hash()[:8]}",
            config_hash=cfg.hash(),
            root_seed=int(root_seed),
        )
        if os.path.exists(os.path.join(run_dir, MANIFEST_NAME)):
            return cls.load(run_dir, expected_hash=cfg.hash(), expected_seed=root_seed)
        manifest.save()
        return manifest

    @classmethod
    def load(cls, run_dir, expected_hash=None, expected_seed=None) -> "RunManifest":
        path = os.path.join(run_dir, MANIFEST_NAME)
        with open(path) as fh:
            data = json.load(fh)
        manifest = cls(
            run_dir=str(run_dir),
            run_id=data["run_id"],
            config_hash=data["config_hash"],
            root_seed=int(data["root_seed"]),
            teachers_done=list(data["teachers_done"]),
            stages=dict(data["stages"]),
        )
        if expected_hash is not None and expected_hash != manifest.config_hash:
            raise ManifestMismatch(
                f"{run_dir}: manifest hash {manifest.config_hash[:12]} != "
                f"requested config {expected_hash[:12]}; refusing to resume")
        if expected_seed is not None and int(expected_seed) != manifest.root_seed:
            raise ManifestMismatch(
                f"{run_dir}: manifest seed {manifest.root_seed} != requested {expected_seed}")
        cfg_path = os.path.join(run_dir, CONFIG_NAME)
        if os.path.exists(cfg_path) and load_config(cfg_path).hash() != manifest.config_hash:
            raise ManifestMismatch(f"{run_dir}: config.cfg no longer matches the manifest hash")
        return manifest

    def save(self):
        data = {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "root_seed": self.root_seed,
            "teachers_done": self.teachers_done,
            "stages": self.stages,
        }
        path = os.path.join(self.run_dir, MANIFEST_NAME)
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)

    # -- stage bookkeeping ------------------------------------------------------

    def path(self, *parts) -> str:
        return os.path.join(self.run_dir, *parts)

    def teacher_ckpt(self, class_index: int) -> str:
        return self.path("checkpoints", f"teacher_{class_index:02d}.ckpt")

    def stage_done(self, stage: str) -> bool:
        if stage == "teachers":
            return all(self.teachers_done)
        return self.stages.get(stage, {}).get("done", False)

    def require(self, stage: str):
        if stage not in STAGE_PREREQS:
            raise ValueError(f"unknown stage {stage!r}")
        for pre in STAGE_PREREQS[stage]:
            if not self.stage_done(pre):
                raise StageOrderError(
                    f"stage '{stage}' requires completed stage '{pre}' "
                    f"(run the pipeline in order or resume it)")

    def relpath(self, path: str) -> str:
        return os.path.relpath(path, self.run_dir)

    def mark_teacher(self, class_index: int, *paths: str):
        self.teachers_done[class_index] = True
        entry = self.stages.setdefault("teachers", {"done": False, "paths": []})
        for path in paths:
            rel = self.relpath(path)
            if rel not in entry["paths"]:
                entry["paths"].append(rel)
        entry["paths"].sort()
        entry["done"] = all(self.teachers_done)
        self.save()

    def mark(self, stage: str, paths: list):
        self.stages[stage] = {"done": True, "paths": sorted(self.relpath(p) for p in paths)}
        self.save()

    def artifact_paths(self) -> list:
        out = []
        for entry in self.stages.values():
            out.extend(os.path.join(self.run_dir, p) for p in entry.get("paths", []))
        return out
