"""Content-addressed JSON cache for solver results.

Entries live in ``$AWGN_LAB_CACHE`` (default ``~/.cache/awgn_lab``) under
the SHA-256 of the canonical JSON of their key.  Writes are atomic, so an
interrupted run leaves either a complete entry or none.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from . import __version__

ENV_VAR = "AWGN_LAB_CACHE"


def default_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "awgn_lab"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


class ResultCache:
    """Keyed store of JSON-serializable results.

    Parameters
    ----------
    root : path-like, optional
        Cache directory; defaults to :func:`default_dir`.
    enabled : bool
        When false every lookup misses and nothing is written.
    """

    def __init__(self, root=None, enabled: bool = True):
        self.root = Path(root) if root is not None else default_dir()
        self.enabled = enabled

    def key(self, kind: str, params: dict) -> str:
        blob = canonical_json({"kind": kind, "params": params, "version": __version__})
        return hashlib.sha256(blob.encode()).hexdigest()

    def path(self, kind: str, params: dict) -> Path:
        return self.root / kind / f"{self.key(kind, params)}.json"

    def get(self, kind: str, params: dict):
        if not self.enabled:
            return None
        p = self.path(kind, params)
        try:
            return json.loads(p.read_text(encoding="utf-8"))["value"]
        except (FileNotFoundError, json.JSONDecodeError, KeyError):
            return None

    def put(self, kind: str, params: dict, value) -> None:
        if not self.enabled:
            return
        atomic_write_text(self.path(kind, params),
                          canonical_json({"kind": kind, "params": params, "value": value}))

    def memo(self, kind: str, params: dict, compute, encode, decode):
        """Return ``decode(cached)`` or compute, store ``encode(result)`` and return it."""
        hit = self.get(kind, params)
        if hit is not None:
            return decode(hit)
        result = compute()
        self.put(kind, params, encode(result))
        return result
