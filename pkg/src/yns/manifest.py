"""Canonical-JSON manifests and content hashing for reproducible outputs."""

from __future__ import annotations

import hashlib
import json

from . import __version__


def canonical_json(obj) -> str:
    """Deterministic JSON encoding: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def build_manifest(params: dict | None = None, grid: dict | None = None,
                   extra: dict | None = None) -> dict:
    m = {"code_version": __version__}
    if params is not None:
        m["params"] = params
    if grid is not None:
        m["grid"] = grid
    if extra:
        m.update(extra)
    return m
