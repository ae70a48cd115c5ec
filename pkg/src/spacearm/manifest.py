"""Run bookkeeping: output directories and the per-run manifest file.

Every command writes into its own directory under the output root
(``SPACEARM_OUTPUT_ROOT`` or ./runs). Existing run directories are never
reused: a second run with the same name gets a numbered sibling, so reruns
cannot overwrite earlier results.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ModelError

OUTPUT_ROOT_VAR = "SPACEARM_OUTPUT_ROOT"
MANIFEST_NAME = "manifest.json"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))


def create_run_dir(name: str, root=None) -> Path:
    """Make a fresh directory under the output root.

    ``name`` is the base; if taken, -2, -3, ... are tried in order."""
    root = Path(root) if root is not None else output_root()
    root.mkdir(parents=True, exist_ok=True)
    candidate = root / name
    bump = 1
    while candidate.exists():
        bump += 1
        candidate = root / f"{name}-{bump}"
    candidate.mkdir()
    return candidate


@dataclass
class RunManifest:
    """What produced a run directory: the command line, the resolved
    configuration, seeds, and the files written."""

    command: str
    argv: list
    config: dict
    seed: int
    robot_hash: str
    out_dir: str
    started: str
    finished: str = ""
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def save(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True,
                                   default=str) + "\n")
        return path


def start_manifest(command: str, argv, config: dict, seed: int,
                   robot_hash: str, out_dir) -> RunManifest:
    return RunManifest(
        command=command,
        argv=list(argv),
        config=dict(config),
        seed=int(seed),
        robot_hash=robot_hash,
        out_dir=str(out_dir),
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    )


def finish_manifest(man: RunManifest, directory, outputs) -> Path:
    man.finished = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    man.outputs = [str(p) for p in outputs]
    return man.save(directory)


def load_manifest(directory) -> RunManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ModelError(f"no {MANIFEST_NAME} in {directory}")
    data = json.loads(path.read_text())
    return RunManifest(**data)
