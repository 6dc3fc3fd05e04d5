"""
Run bookkeeping for vqsim experiments.

Each experiment writes into ``<root>/<experiment>/``. The manifest is written
with status ``in_progress`` before any data file and finalized afterwards with
a sha256 checksum per file, so an interrupted run is recognisable on disk.
"""

import datetime
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """Everything needed to reproduce and verify one run"""

    run_id: str
    experiment: str
    created_at: str
    status: str  # 'in_progress', 'completed', 'failed', 'interrupted'
    version: str
    config: Dict[str, Any]
    constants: Dict[str, float]
    files: Dict[str, str] = field(default_factory=dict)
    summary_file: Optional[str] = None


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class RunManager:
    """Creates run directories and keeps their manifests current"""

    def __init__(self, base_dir: Union[str, Path] = "runs") -> None:
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)

    def run_dir(self, experiment: str) -> Path:
        return self.base_dir / experiment

    def create_run(
        self,
        experiment: str,
        version: str,
        config_text: str,
        config_echo: Dict[str, Any],
        constants: Dict[str, float],
    ) -> RunManifest:
        """Create the run directory and write the in-progress manifest"""
        run_dir = self.run_dir(experiment)
        run_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            run_id=self._generate_run_id(),
            experiment=experiment,
            created_at=datetime.datetime.now().isoformat(),
            status="in_progress",
            version=version,
            config={"text": config_text, "values": config_echo},
            constants=dict(constants),
        )
        self._save_manifest(manifest)
        self.logger.info(f"Created run {manifest.run_id} in {run_dir}")
        return manifest

    def finalize(
        self,
        manifest: RunManifest,
        status: str,
        files: Sequence[Union[str, Path]] = (),
        summary_file: Optional[Union[str, Path]] = None,
    ) -> RunManifest:
        """Record checksums of the written files and the final status"""
        run_dir = self.run_dir(manifest.experiment)
        for path in files:
            path = Path(path)
            manifest.files[path.name] = sha256_file(path)
        if summary_file is not None:
            manifest.summary_file = Path(summary_file).name
            manifest.files[manifest.summary_file] = sha256_file(summary_file)
        manifest.status = status
        self._save_manifest(manifest)
        self.logger.info(f"Run {manifest.run_id} ({manifest.experiment}) {status}: {len(manifest.files)} files in {run_dir}")
        return manifest

    def update_status(self, manifest: RunManifest, status: str) -> None:
        manifest.status = status
        self._save_manifest(manifest)

    def load_manifest(self, experiment: str) -> RunManifest:
        manifest_file = self.run_dir(experiment) / MANIFEST_NAME
        if not manifest_file.exists():
            raise FileNotFoundError(f"No run found for experiment {experiment}")
        with open(manifest_file, encoding="utf-8") as f:
            return RunManifest(**json.load(f))

    def list_runs(self) -> List[RunManifest]:
        """All runs under the base directory, newest first"""
        runs = []
        for manifest_file in self.base_dir.glob(f"*/{MANIFEST_NAME}"):
            try:
                with open(manifest_file, encoding="utf-8") as f:
                    runs.append(RunManifest(**json.load(f)))
            except (OSError, ValueError, TypeError) as e:
                self.logger.warning(f"Could not load manifest {manifest_file}: {e}")
        return sorted(runs, key=lambda m: m.created_at, reverse=True)

    def verify(self, manifest: RunManifest) -> Dict[str, bool]:
        """Recompute checksums; True where the file on disk still matches"""
        run_dir = self.run_dir(manifest.experiment)
        return {
            name: (run_dir / name).exists() and sha256_file(run_dir / name) == digest
            for name, digest in manifest.files.items()
        }

    def _generate_run_id(self) -> str:
        return datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S-%f")

    def _save_manifest(self, manifest: RunManifest) -> None:
        manifest_file = self.run_dir(manifest.experiment) / MANIFEST_NAME
        with open(manifest_file, "w", encoding="utf-8") as f:
            json.dump(asdict(manifest), f, indent=2, default=str)
