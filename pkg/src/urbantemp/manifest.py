"""Run manifests: what ran, with which settings, over which bytes."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


@dataclass
class RunManifest:
    """One record per CLI run; hashes pin inputs and outputs exactly."""

    subcommand: str
    config: dict = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)  # name -> sha256
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_files(paths: Iterable[str | Path]) -> dict[str, str]:
    """Map file name to content hash; order-independent by construction."""
    return {Path(p).name: sha256_file(p) for p in sorted(map(Path, paths))}


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> RunManifest:
    pairs: Mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**pairs)
