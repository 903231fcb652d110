"""Text checkpoint format.

A checkpoint is a JSON document::

    {
      "format_version": 1,
      "env_id": "cartpole",
      "arch": {"obs_dim": 4, "n_out": 2, "head": "categorical", ...},
      "n_params": 4610,
      "theta": ["0x1.0p-3", ...],
      "meta": {"achieved_J": 235.6, "seed": 0, "created_by": "...", "provenance": "..."}
    }

Parameters are written with ``float.hex`` so a save/load round trip is
bit-exact.  Loading distinguishes an unknown format version, a parameter
count that disagrees with the architecture, and a document that cannot be
parsed at all.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .envs import make
from .policy import PolicyArch, PolicyParams

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointParseError(CheckpointError):
    pass


class FormatVersionError(CheckpointError):
    pass


class LengthMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    env_id: str
    arch: PolicyArch
    theta: np.ndarray
    meta: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def params(self) -> PolicyParams:
        return PolicyParams(self.arch, self.theta)

    @classmethod
    def from_params(cls, env_id: str, params: PolicyParams, **meta) -> Checkpoint:
        meta.setdefault("created_by", f"counterpol {__version__}")
        meta.setdefault("provenance", provenance())
        return cls(env_id, params.arch, np.array(params.theta), meta)


def provenance() -> str:
    """Short git description of the working tree, or ``unknown`` outside a repo."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def dumps(c: Checkpoint) -> str:
    doc = {
        "format_version": c.format_version,
        "env_id": c.env_id,
        "arch": c.arch.to_dict(),
        "n_params": int(np.asarray(c.theta).size),
        "theta": [float(v).hex() for v in np.asarray(c.theta, dtype=np.float64).ravel()],
        "meta": c.meta,
    }
    return json.dumps(doc, indent=1) + "\n"


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointParseError(f"not a checkpoint document: {e}") from None
    if not isinstance(doc, dict):
        raise CheckpointParseError("checkpoint document must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"format_version {version!r} not supported (expected {FORMAT_VERSION})")
    try:
        env_id = str(doc["env_id"])
        make(env_id)
        arch = PolicyArch.from_dict(doc["arch"])
        theta = np.array([float.fromhex(s) for s in doc["theta"]], dtype=np.float64)
        declared = int(doc.get("n_params", theta.size))
        meta = dict(doc.get("meta", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointParseError(f"malformed checkpoint field: {e}") from None
    if declared != theta.size or theta.size != arch.n_params:
        raise LengthMismatchError(
            f"architecture needs {arch.n_params} parameters, file declares {declared} and holds {theta.size}"
        )
    return Checkpoint(env_id, arch, theta, meta, version)


def save_checkpoint(path: str | Path, c: Checkpoint) -> None:
    Path(path).write_text(dumps(c))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as e:
        raise CheckpointParseError(f"{path}: {e}") from None
    return loads(text)
