"""Header + raw binary grid files.

A grid on disk is a pair sharing one basename: ``name.hdr`` (key: value text)
and ``name.raw`` (little-endian payload, row-major with the fastest-varying
axis last, channel-major for multi-channel data). Supported dtypes are u8,
u16, f32. Functions accept either the header path or the bare basename.
"""

from __future__ import annotations

import os

import numpy as np

from .grid import Grid

__all__ = ["GridIOError", "grid_write", "grid_read", "to_unit_float"]

_MAGIC = "curvitrace-grid 1"
_DTYPES = {"u8": "<u1", "u16": "<u2", "f32": "<f4"}
_DTYPE_NAMES = {np.dtype("uint8"): "u8", np.dtype("uint16"): "u16", np.dtype("float32"): "f32"}


class GridIOError(ValueError):
    pass


def _basename(path: str) -> str:
    for ext in (".hdr", ".raw"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


def _dtype_name(values: np.ndarray) -> str:
    name = _DTYPE_NAMES.get(values.dtype)
    if name is not None:
        return name
    if np.issubdtype(values.dtype, np.floating):
        return "f32"
    if np.issubdtype(values.dtype, np.integer) or values.dtype == bool:
        return "u8" if values.max(initial=0) < 256 else "u16"
    raise GridIOError(f"cannot store dtype {values.dtype}")


def grid_write(grid: Grid, path: str, dtype: str | None = None) -> None:
    """Write header + payload atomically; dtype defaults from the array."""
    base = _basename(path)
    name = dtype or _dtype_name(grid.values)
    if name not in _DTYPES:
        raise GridIOError(f"unsupported dtype {name!r}")
    payload = np.ascontiguousarray(grid.values.astype(_DTYPES[name]))
    header = "\n".join(
        [
            _MAGIC,
            "dims: " + " ".join(str(n) for n in grid.dims),
            "spacing: " + " ".join(repr(float(s)) for s in grid.spacing),
            f"channels: {grid.channels}",
            f"dtype: {name}",
            "endian: little",
            "order: row-major",
        ]
    )
    tmp = base + ".hdr.tmp"
    with open(tmp, "w") as f:
        f.write(header + "\n")
    os.replace(tmp, base + ".hdr")
    tmp = base + ".raw.tmp"
    with open(tmp, "wb") as f:
        f.write(payload.tobytes())
    os.replace(tmp, base + ".raw")


def _parse_header(path: str) -> dict[str, str]:
    with open(path) as f:
        lines = [line.strip() for line in f if line.strip()]
    if not lines or lines[0] != _MAGIC:
        raise GridIOError(f"{path}: not a curvitrace grid header")
    fields = {}
    for line in lines[1:]:
        if ":" not in line:
            raise GridIOError(f"{path}: malformed header line {line!r}")
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    return fields


def grid_read(path: str) -> Grid:
    """Load a grid pair; payload size must match the header exactly."""
    base = _basename(path)
    hdr_path, raw_path = base + ".hdr", base + ".raw"
    if not os.path.exists(hdr_path):
        raise GridIOError(f"missing header file {hdr_path}")
    if not os.path.exists(raw_path):
        raise GridIOError(f"missing payload file {raw_path}")
    fields = _parse_header(hdr_path)
    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        spacing = tuple(float(v) for v in fields["spacing"].split())
        channels = int(fields.get("channels", "1"))
        dtype_name = fields["dtype"]
    except KeyError as exc:
        raise GridIOError(f"{hdr_path}: missing header field {exc}") from None
    if dtype_name not in _DTYPES:
        raise GridIOError(f"{hdr_path}: unknown dtype {dtype_name!r}")
    dtype = np.dtype(_DTYPES[dtype_name])
    expected = int(np.prod(dims)) * channels * dtype.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise GridIOError(
            f"{raw_path}: payload is {actual} bytes, header implies {expected} "
            f"(dims {dims}, channels {channels}, dtype {dtype_name})"
        )
    data = np.fromfile(raw_path, dtype=dtype)
    shape = (channels,) + dims if channels > 1 else dims
    return Grid(values=data.reshape(shape), spacing=spacing, channels=channels)


def to_unit_float(grid: Grid) -> Grid:
    """Normalize integer grids (e.g. 16-bit stacks) to float in [0, 1] by max."""
    values = grid.values.astype(np.float64)
    peak = float(values.max()) if values.size else 0.0
    if peak > 0:
        values = values / peak
    return Grid(values=values, spacing=grid.spacing, channels=grid.channels)
