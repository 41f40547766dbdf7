"""Zip container for tensor-network states: JSON manifest plus little-endian float64 arrays.

Entries are stored uncompressed with a fixed timestamp so identical content
gives identical bytes. Each array's SHA-256 is kept in the manifest and
verified on load.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


class ChecksumError(ValueError):
    pass


class FormatError(ValueError):
    pass


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
    return buf.getvalue()


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_state(path, manifest: dict, arrays: dict[str, np.ndarray]) -> None:
    blobs = {name: _npy_bytes(arr) for name, arr in arrays.items()}
    manifest = dict(manifest)
    manifest["arrays"] = {name: hashlib.sha256(b).hexdigest() for name, b in blobs.items()}
    text = json.dumps(manifest, indent=2, sort_keys=True).encode()
    with zipfile.ZipFile(Path(path), "w") as zf:
        _write_entry(zf, "manifest.json", text)
        for name, blob in blobs.items():
            _write_entry(zf, f"{name}.npy", blob)


def read_manifest(path) -> dict:
    try:
        with zipfile.ZipFile(Path(path)) as zf:
            return json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a state file ({exc})") from exc


def load_state(path, expect_format: str | None = None, version: int = 1) -> tuple[dict, dict]:
    """Return (manifest, arrays); verifies format, version and checksums."""
    manifest = read_manifest(path)
    if expect_format is not None and manifest.get("format") != expect_format:
        raise FormatError(f"{path}: expected format {expect_format}, found {manifest.get('format')}")
    if manifest.get("version") != version:
        raise FormatError(f"{path}: unsupported version {manifest.get('version')}")
    arrays = {}
    with zipfile.ZipFile(Path(path)) as zf:
        for name, digest in manifest.get("arrays", {}).items():
            try:
                blob = zf.read(f"{name}.npy")
            except KeyError as exc:
                raise FormatError(f"{path}: missing array {name}") from exc
            except zipfile.BadZipFile as exc:
                # stored entries carry a CRC that fails before our digest does
                raise ChecksumError(f"{path}: corrupt entry for array {name}") from exc
            if hashlib.sha256(blob).hexdigest() != digest:
                raise ChecksumError(f"{path}: checksum mismatch for array {name}")
            arrays[name] = np.load(io.BytesIO(blob), allow_pickle=False)
    return manifest, arrays
