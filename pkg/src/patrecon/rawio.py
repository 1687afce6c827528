"""Raw little-endian float64 arrays with a JSON sidecar (``<path>.json``)."""
import json
import os

import numpy as np

from .exceptions import FormatError

FORMAT_VERSION = 1


def sidecar_path(path):
    return os.fspath(path) + ".json"


def write_raw(path, array, kind, meta):
    array = np.ascontiguousarray(array, dtype="<f8")
    header = {"format": f"patrecon-{kind}", "version": FORMAT_VERSION,
              "dtype": "<f8", "order": "C", "shape": list(array.shape)}
    header.update(meta)
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(array.tobytes(order="C"))
    with open(sidecar_path(path), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_raw(path, kind, required=()):
    """Return ``(array, header)``; any inconsistency raises :class:`FormatError`."""
    path = os.fspath(path)
    try:
        with open(sidecar_path(path)) as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable sidecar for {path}: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != f"patrecon-{kind}":
        raise FormatError(f"{path}: sidecar is not a patrecon-{kind} header")
    if header.get("version") != FORMAT_VERSION or header.get("dtype") != "<f8":
        raise FormatError(f"{path}: unsupported version or dtype")
    missing = [key for key in ("shape",) + tuple(required) if key not in header]
    if missing:
        raise FormatError(f"{path}: sidecar lacks {missing}")
    try:
        shape = tuple(int(s) for s in header["shape"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad shape entry") from exc
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) != 8 * int(np.prod(shape)):
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * int(np.prod(shape))}")
    array = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return array, header
