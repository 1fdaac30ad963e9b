"""Artifact formats: matrix JSON, grid-function CSV, and binary dumps.

CSV rows carry node coordinates followed by the value; the binary dump is
a 4-byte magic, a format version, the grid header, and row-major doubles,
all little-endian.  Float text formatting uses ``repr`` so identical runs
produce byte-identical artifacts.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .grids import BALL, TORUS, GridDomain, GridFunction

MAGIC = b"MHGF"
FORMAT_VERSION = 1
_KIND_CODE = {BALL: 0, TORUS: 1}
_KIND_NAME = {0: BALL, 1: TORUS}


def coordinate_headers(n: int) -> list:
    out = []
    for p in range(1, n + 1):
        out.extend([f"x{p}", f"y{p}"])
    return out


def gridfunction_to_csv(u: GridFunction, path) -> None:
    domain = u.domain
    headers = coordinate_headers(domain.n) + ["value"]
    coords = domain.coords
    flat = u.flat
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for k in range(domain.node_count):
            row = [repr(float(c)) for c in coords[k]] + [repr(float(flat[k]))]
            fh.write(",".join(row) + "\n")


def gridfunction_to_binary(u: GridFunction, path) -> None:
    domain = u.domain
    header = struct.pack(
        "<4sIIIdI",
        MAGIC,
        FORMAT_VERSION,
        domain.n,
        _KIND_CODE[domain.kind],
        float(domain.radius),
        domain.points_per_axis,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def gridfunction_from_binary(path) -> GridFunction:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sIIIdI")
    magic, version, n, kind_code, radius, ppa = struct.unpack(
        "<4sIIIdI", raw[:head_size]
    )
    if magic != MAGIC:
        raise ConfigError(f"bad magic {magic!r} in grid dump")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported dump version {version}")
    domain = GridDomain(n=n, kind=_KIND_NAME[kind_code], points_per_axis=ppa,
                        radius=radius)
    values = np.frombuffer(raw[head_size:], dtype="<f8")
    if values.size != domain.node_count:
        raise ConfigError("grid dump payload size does not match its header")
    return GridFunction._unchecked(domain, values.reshape(domain.shape))


def write_json(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv_rows(path, headers, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(float(v)) if isinstance(v, (int, float, np.floating))
                and not isinstance(v, bool) else str(v)
                for v in row
            ) + "\n")


def domain_from_config(cfg: dict) -> GridDomain:
    try:
        kind = cfg["kind"]
        n = int(cfg["n"])
        ppa = int(cfg["points_per_axis"])
    except KeyError as exc:
        raise ConfigError(f"grid config missing key {exc}") from exc
    radius = float(cfg.get("radius", 1.0))
    try:
        return GridDomain(n=n, kind=kind, points_per_axis=ppa, radius=radius)
    except DimensionMismatchError as exc:
        raise ConfigError(f"invalid grid config: {exc}") from exc
