"""Export manifest: what was exported, from where, with which seeds."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .formats import crc32_of


@dataclass
class ExportManifest:
    source_model: str
    tokenizer: str
    seeds: dict = field(default_factory=dict)
    subset_seed: int | None = None
    subset_fraction: float | None = None
    notes: str = ""
    files: list = field(default_factory=list)

    def add_file(self, path) -> None:
        path = Path(path)
        self.files.append({"name": path.name, "crc32": crc32_of(path)})

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExportManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def verify_manifest(manifest_path) -> list[str]:
    """Recompute CRCs for every listed file; return mismatch descriptions."""
    manifest_path = Path(manifest_path)
    manifest = ExportManifest.load(manifest_path)
    problems = []
    for entry in manifest.files:
        target = manifest_path.parent / entry["name"]
        if not target.exists():
            problems.append(f"{entry['name']}: missing")
        elif crc32_of(target) != entry["crc32"]:
            problems.append(f"{entry['name']}: crc mismatch")
    return problems
