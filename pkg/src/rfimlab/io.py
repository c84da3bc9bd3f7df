"""Flat archival formats for disorder fields, spin and bond configurations."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .disorder import DisorderField
from .fk import BondConfig
from .lattice import build_lattice

_DIST_CODES = {"gaussian": 0, "rademacher": 1, "custom": 2}
_DISORDER_HEAD = struct.Struct("<4sQBII")
_MAGIC = b"RFJ1"


# -- disorder ------------------------------------------------------------------


def disorder_to_bytes(field: DisorderField) -> bytes:
    lat = field.lattice
    head = _DISORDER_HEAD.pack(_MAGIC, int(field.seed), _DIST_CODES[field.distribution], lat.d, lat.n)
    return head + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def disorder_from_bytes(raw: bytes) -> DisorderField:
    magic, seed, code, d, n = _DISORDER_HEAD.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a disorder record")
    lat = build_lattice(d, n)
    values = np.frombuffer(raw, dtype="<f8", offset=_DISORDER_HEAD.size)
    if values.size != lat.num_sites:
        raise ValueError("disorder record length does not match its lattice")
    dist = {v: k for k, v in _DIST_CODES.items()}[code]
    return DisorderField(lat, values.copy(), dist, seed)


def disorder_csv_row(field: DisorderField) -> list:
    """seed, distribution, d, n, then the values in site order."""
    return [int(field.seed), field.distribution, field.lattice.d, field.lattice.n,
            *(repr(float(v)) for v in field.values)]


def disorder_from_csv_row(row) -> DisorderField:
    seed, dist, d, n = int(row[0]), row[1], int(row[2]), int(row[3])
    return DisorderField(build_lattice(d, n), np.array([float(v) for v in row[4:]]), dist, seed)


def write_disorders_csv(path, fields):
    with open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for f in fields:
            w.writerow(disorder_csv_row(f))


def read_disorders_csv(path) -> list:
    with open(path) as fh:
        return [disorder_from_csv_row(r) for r in csv.reader(fh) if r]


# -- spin configurations ---------------------------------------------------------


def write_spins(path, spins: np.ndarray):
    """Raw int8 +-1 rows in site order."""
    np.ascontiguousarray(spins, dtype=np.int8).tofile(path)


def read_spins(path, num_sites: int) -> np.ndarray:
    arr = np.fromfile(path, dtype=np.int8)
    if arr.size % num_sites:
        raise ValueError("spool size is not a multiple of the site count")
    return arr.reshape(-1, num_sites)


def write_spins_csv(path, spins: np.ndarray):
    np.savetxt(path, np.atleast_2d(spins), fmt="%d", delimiter=",")


def read_spins_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, dtype=np.int8, delimiter=","))


# -- bond configurations -----------------------------------------------------------


def bonds_to_bits(omega: BondConfig) -> bytes:
    """Edge-ordered bit vector, most significant bit first."""
    return np.packbits(np.asarray(omega.bonds, dtype=np.uint8)).tobytes()


def bonds_from_bits(raw: bytes, lattice, boundary_condition: str = "free") -> BondConfig:
    E = lattice.num_edges
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:E]
    return BondConfig(lattice, bits.astype(bool), boundary_condition)


CONNECTIVITY_HEADER = ["n", "p", "bc", "kind", "sites", "estimate", "stderr", "samples"]


def write_connectivity_rows(path, rows):
    """Connectivity summaries: one row per pair or quadruple."""
    new = not Path(path).exists()
    with open(path, "a") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CONNECTIVITY_HEADER)
        for r in rows:
            w.writerow([r.get(k, "") if k != "sites" else " ".join(map(str, r["sites"]))
                        for k in CONNECTIVITY_HEADER])
