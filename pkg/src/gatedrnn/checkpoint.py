"""GBN1 checkpoints.

Layout: the 4 magic bytes ``GBN1``, a little-endian uint32 metadata length, a
UTF-8 JSON metadata block (config text plus the parameter manifest: names and
shapes in order), then every array as row-major little-endian float64 in
manifest order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError, ShapeError

MAGIC = b"GBN1"
_LE_F8 = np.dtype("<f8")


def save_checkpoint(path, named_arrays, config_text: str = "") -> None:
    named_arrays = list(named_arrays)
    meta = {"config": config_text,
            "manifest": [{"name": n, "shape": list(a.shape)} for n, a in named_arrays]}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(blob)) + blob)
        for _, arr in named_arrays:
            fh.write(np.ascontiguousarray(arr, dtype=_LE_F8).tobytes())


def load_checkpoint(path) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    """``(metadata, [(name, array), ...])`` with arrays in native float64."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a GBN1 checkpoint (magic {raw[:4]!r})")
    if len(raw) < 8:
        raise DataError(f"{path}: truncated header")
    (n_meta,) = struct.unpack("<I", raw[4:8])
    try:
        meta = json.loads(raw[8:8 + n_meta].decode("utf-8"))
        manifest = [(m["name"], tuple(m["shape"])) for m in meta["manifest"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: corrupt metadata ({exc})") from None
    payload = raw[8 + n_meta:]
    total = sum(int(np.prod(s)) for _, s in manifest)
    if len(payload) != 8 * total:
        raise DataError(f"{path}: payload is {len(payload)} bytes, manifest needs {8 * total}")
    arrays, off = [], 0
    for name, shape in manifest:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype=_LE_F8, count=n, offset=8 * off).astype(np.float64).reshape(shape)
        arrays.append((name, arr))
        off += n
    return meta, arrays


def manifest_mismatch(expected, found) -> list[str]:
    """Human-readable differences between two ``[(name, shape)]`` manifests."""
    exp, got = dict(expected), dict(found)
    diffs = []
    for name, shape in expected:
        if name not in got:
            diffs.append(f"{name}: missing (expected {tuple(shape)})")
        elif tuple(got[name]) != tuple(shape):
            diffs.append(f"{name}: expected {tuple(shape)}, found {tuple(got[name])}")
    diffs += [f"{name}: unexpected (shape {tuple(shape)})" for name, shape in found if name not in exp]
    if not diffs and [n for n, _ in expected] != [n for n, _ in found]:
        diffs.append("parameter order differs")
    return diffs


def load_into(stack, path) -> dict:
    """Copy checkpoint arrays into ``stack`` in place; returns the metadata."""
    meta, arrays = load_checkpoint(path)
    expected = [(n, a.shape) for n, a in stack.named_parameters()]
    diffs = manifest_mismatch(expected, [(n, a.shape) for n, a in arrays])
    if diffs:
        raise ShapeError("checkpoint does not match the configured architecture:\n  " + "\n  ".join(diffs))
    params = stack.param_dict()
    for name, arr in arrays:
        params[name][...] = arr
    return meta
