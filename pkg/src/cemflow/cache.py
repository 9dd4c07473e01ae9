"""Optional on-disk cache for eigenpairs and basis matrices.

Enabled by setting CEMFLOW_CACHE_DIR. Entries are npz archives keyed by a
SHA-256 of a canonical instance descriptor; stale or foreign files never match.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np


def cache_dir() -> Path | None:
    d = os.environ.get("CEMFLOW_CACHE_DIR")
    return Path(d) if d else None


def instance_key(**fields) -> str:
    """Stable hash of the instance descriptor; arrays hashed by their bytes."""
    h = hashlib.sha256()
    for name in sorted(fields):
        h.update(name.encode())
        v = fields[name]
        if isinstance(v, np.ndarray):
            h.update(v.tobytes())
        else:
            h.update(repr(v).encode())
    return h.hexdigest()[:24]


def cache_load(kind: str, key: str | None) -> dict | None:
    d = cache_dir()
    if d is None or key is None:
        return None
    path = d / f"{kind}-{key}.npz"
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            return {k: data[k] for k in data.files}
    except Exception:
        return None


def cache_store(kind: str, key: str | None, **arrays) -> None:
    d = cache_dir()
    if d is None or key is None:
        return
    d.mkdir(parents=True, exist_ok=True)
    tmp = d / f".{kind}-{key}.tmp.npz"
    np.savez(tmp, **arrays)
    tmp.replace(d / f"{kind}-{key}.npz")
