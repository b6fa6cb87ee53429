"""Manifest + flat binary storage.

Every persisted array set is a JSON manifest (shapes, axis names, metadata,
sha256 checksum) next to a ``.bin`` file holding little-endian float32
values in row-major order, arrays laid out back to back.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError, ShapeMismatchError

FORMAT = "ecogspeech-bundle/1"
_DTYPE = np.dtype("<f4")


def _paths(path):
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    return path, path.with_suffix(".bin")


def write_bundle(path, arrays, meta=None, axes=None):
    """Write ``arrays`` (name -> ndarray) and return the manifest path."""
    manifest_path, bin_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE)
        if not np.all(np.isfinite(data)):
            raise FormatError(f"array {name!r} contains non-finite values")
        entries.append({
            "name": name,
            "shape": list(data.shape),
            "offset": offset,
            "axes": list((axes or {}).get(name, [])),
        })
        raw = data.tobytes(order="C")
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    bin_path.write_bytes(blob)
    manifest = {
        "format": FORMAT,
        "dtype": "float32-le",
        "binary": bin_path.name,
        "nbytes": len(blob),
        "checksum": "sha256:" + hashlib.sha256(blob).hexdigest(),
        "arrays": entries,
        "meta": meta or {},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def read_manifest(path):
    manifest_path, _ = _paths(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{manifest_path}: unsupported format {manifest.get('format')!r}")
    return manifest


def read_bundle(path):
    """Return ``(arrays, meta)``; verifies size and checksum."""
    manifest_path, _ = _paths(path)
    manifest = read_manifest(manifest_path)
    blob = (manifest_path.parent / manifest["binary"]).read_bytes()
    expected = sum(int(np.prod(e["shape"])) * _DTYPE.itemsize for e in manifest["arrays"])
    if len(blob) != expected or len(blob) != manifest["nbytes"]:
        raise ShapeMismatchError(
            f"{manifest['binary']}: {len(blob)} bytes on disk, manifest shapes need {expected}"
        )
    digest = "sha256:" + hashlib.sha256(blob).hexdigest()
    if digest != manifest["checksum"]:
        raise ChecksumError(f"{manifest['binary']}: checksum mismatch")
    arrays = {}
    for e in manifest["arrays"]:
        n = int(np.prod(e["shape"]))
        arr = np.frombuffer(blob, dtype=_DTYPE, count=n, offset=e["offset"])
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return arrays, manifest["meta"]


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
