"""Content-addressed audio blob store.

Layout: blobs/<first2-of-sha256>/<sha256>.orig|.pcm, where the stem is the
SHA-256 of the canonical PCM bytes (the sample_id). The .orig file keeps the
uploaded container untouched; .pcm is raw little-endian mono 16 kHz int16.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .audio import pcm_from_bytes
from .errors import DanglingBlobRef


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class BlobStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, sha: str) -> Path:
        return self.root / sha[:2]

    def orig_path(self, sha: str) -> Path:
        return self._dir(sha) / f"{sha}.orig"

    def pcm_path(self, sha: str) -> Path:
        return self._dir(sha) / f"{sha}.pcm"

    def has(self, sha: str) -> bool:
        return self.pcm_path(sha).exists()

    def put(self, canonical_sha: str, orig_bytes: bytes, pcm_bytes: bytes) -> None:
        """Idempotent write; an existing blob is never rewritten."""
        d = self._dir(canonical_sha)
        d.mkdir(parents=True, exist_ok=True)
        for path, data in ((self.orig_path(canonical_sha), orig_bytes),
                           (self.pcm_path(canonical_sha), pcm_bytes)):
            if path.exists():
                continue
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(data)
            with open(tmp, "rb") as fh:
                os.fsync(fh.fileno())
            os.replace(tmp, path)

    def load_pcm(self, sha: str) -> np.ndarray:
        path = self.pcm_path(sha)
        if not path.exists():
            raise DanglingBlobRef(sha)
        return pcm_from_bytes(path.read_bytes())

    def load_orig(self, sha: str) -> bytes:
        path = self.orig_path(sha)
        if not path.exists():
            raise DanglingBlobRef(sha)
        return path.read_bytes()

    def verify(self, canonical_sha: str) -> bool:
        path = self.pcm_path(canonical_sha)
        if not path.exists():
            return False
        return sha256_hex(path.read_bytes()) == canonical_sha
