"""Run manifests: what ran, with which parameters, on which inputs, producing what."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def now_utc() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def hash_outputs(out_dir: Path, outputs: list[Path]) -> dict[str, str]:
    return {p.relative_to(out_dir).as_posix(): sha256_file(p) for p in sorted(outputs)}


def build_manifest(
    subcommand: str,
    params: dict,
    inputs: dict[str, str],
    out_dir: Path,
    outputs: list[Path],
    seeds: list[int],
    started_at: str,
) -> dict:
    return {
        "tool": "notetopics",
        "version": __version__,
        "subcommand": subcommand,
        "params": params,
        "inputs": {name: {"path": p, "sha256": sha256_file(p)} for name, p in sorted(inputs.items())},
        "outputs": hash_outputs(out_dir, outputs),
        "seeds": seeds,
        "started_at": started_at,
        "finished_at": now_utc(),
    }


def write_manifest(manifest: dict, out_dir: Path) -> Path:
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return json.loads(path.read_text(encoding="utf-8"))
