"""
Run manifest: the frozen configuration every checkpoint and report points back to.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

from . import __version__
from .errors import ConfigError, DataError

MANIFEST_NAME = "manifest.json"


def file_checksum(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    seed: int
    config: Dict[str, object]
    style_vocabulary: List[str]
    dataset_checksums: Dict[str, str]
    software_version: str = __version__
    extra: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @property
    def hash(self) -> str:
        body = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]

    def save(self, run_dir) -> Path:
        path = Path(run_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        path = Path(run_dir) / MANIFEST_NAME
        if not path.exists():
            raise DataError(f"no {MANIFEST_NAME} in {run_dir}; run `train` first")
        return cls(**json.loads(path.read_text(encoding="utf-8")))

    def reference(self) -> Dict[str, str]:
        """Header fields embedded in checkpoints."""
        return {"manifest": self.hash, "seed": str(self.seed),
                "styles": "|".join(self.style_vocabulary)}

    def check_reference(self, header: Dict[str, str], what: str) -> None:
        if header.get("manifest") != self.hash:
            raise ConfigError(f"{what} was written under manifest {header.get('manifest')}, "
                              f"run manifest is {self.hash}")
