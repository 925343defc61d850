"""Run directories and artifact files.

Every pipeline invocation writes into its own ``run-NNN`` directory below the
output root, so earlier runs are never touched. A resumed run reuses an
existing directory and only rewrites the stages it re-runs.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .exceptions import ParseError, StageDependencyError

logger = logging.getLogger(__name__)

RUN_PATTERN = re.compile(r"^run-(\d{3,})$")

# Output file of each stage, in pipeline order.
ARTIFACTS: Dict[str, str] = {
    "gen-dataset": "population.csv",
    "build-db": "training_db.csv",
    "train-surrogate": "surrogate.json",
    "lrts": "lrts_pool.json",
    "ensemble": "ensemble.json",
    "ring-params": "ring.json",
    "transfer-matrix": "transfer_matrix.json",
    "schedule": "schedule.json",
    "score": "solution.json",
    "validate": "validation.json",
}
STAGES: List[str] = list(ARTIFACTS)

CONFIG_FILE = "config.json"
SCORE_FILE = "score.json"
LOG_DIR = "logs"


def producer_of(artifact: str) -> str:
    for stage, name in ARTIFACTS.items():
        if name == artifact:
            return stage
    raise KeyError(artifact)


class RunDirectory:
    """Artifact layout of a single run."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    @classmethod
    def create(cls, root: Union[str, Path]) -> "RunDirectory":
        """Allocate the next free ``run-NNN`` directory below ``root``."""
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        numbers = [
            int(m.group(1))
            for p in root.iterdir()
            if p.is_dir() and (m := RUN_PATTERN.match(p.name))
        ]
        n = max(numbers, default=0) + 1
        while True:
            path = root / f"run-{n:03d}"
            try:
                path.mkdir()
                break
            except FileExistsError:
                n += 1
        (path / LOG_DIR).mkdir()
        logger.info(f"Created run directory {path}")
        return cls(path)

    @classmethod
    def open(cls, path: Union[str, Path]) -> "RunDirectory":
        """An existing run directory, for resuming."""
        path = Path(path)
        if not path.is_dir():
            raise FileNotFoundError(f"Run directory not found: {path}")
        (path / LOG_DIR).mkdir(exist_ok=True)
        return cls(path)

    @property
    def config_path(self) -> Path:
        return self.path / CONFIG_FILE

    @property
    def score_path(self) -> Path:
        return self.path / SCORE_FILE

    @property
    def log_dir(self) -> Path:
        return self.path / LOG_DIR

    def log_path(self, stage: str) -> Path:
        return self.log_dir / f"{stage}.log"

    def artifact(self, stage: str) -> Path:
        """Output path of ``stage``."""
        return self.path / ARTIFACTS[stage]

    def has(self, stage: str) -> bool:
        return self.artifact(stage).is_file()

    def require(self, stage: str, needed_by: str) -> Path:
        """Path of ``stage``'s artifact, which ``needed_by`` consumes.

        Raises:
            StageDependencyError: The artifact has not been produced.
        """
        path = self.artifact(stage)
        if not path.is_file():
            raise StageDependencyError(needed_by, ARTIFACTS[stage], stage)
        return path

    def first_missing(self, stages: Optional[List[str]] = None) -> Optional[str]:
        for stage in stages or STAGES:
            if not self.has(stage):
                return stage
        return None

    def discard(self, stage: str) -> None:
        path = self.artifact(stage)
        if path.exists():
            path.unlink()
            logger.debug(f"Removed stale artifact {path.name}")

    def __repr__(self) -> str:
        return f"RunDirectory({str(self.path)!r})"


def write_json(path: Union[str, Path], data: Any) -> None:
    """Write ``data`` atomically: a partial file never replaces a good one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2))
    tmp.replace(path)


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", line=e.lineno, path=str(path))
