"""Binary MPS container used for checkpoints and ground-state files.

All integers are little-endian unsigned 32-bit, all floats little-endian
IEEE doubles::

    magic        8 bytes   b"PTDVPMPS"
    version      u32       currently 1
    n_sites      u32       N
    meta_len     u32       length of the UTF-8 JSON metadata block
    meta         bytes     JSON object (may be "{}")
    phys_dims    N x u32
    bond_dims    (N-1) x u32
    weights      for each bond j: bond_dims[j] x f64    (Lambda_j)
    sites        for each site j: chi_l*d*chi_r x complex128, row-major
                 over (chi_l, d, chi_r), real part before imaginary part

The inverse weights are recomputed as 1/Lambda on load.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .mps import BondWeights, InvCanonicalMps

MAGIC = b"PTDVPMPS"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(psi: InvCanonicalMps, metadata: dict | None = None) -> bytes:
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    n = psi.n_sites
    parts = [MAGIC, struct.pack("<III", VERSION, n, len(meta)), meta,
             np.asarray(psi.phys_dims, dtype="<u4").tobytes(),
             np.asarray(psi.bond_dims, dtype="<u4").tobytes()]
    parts += [np.ascontiguousarray(b.lam, dtype="<f8").tobytes() for b in psi.bonds]
    parts += [np.ascontiguousarray(s, dtype="<c16").tobytes() for s in psi.sites]
    return b"".join(parts)


def loads(data: bytes) -> tuple[InvCanonicalMps, dict]:
    view = memoryview(data)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError("not an MPS container (bad magic)")
    try:
        version, n, meta_len = struct.unpack_from("<III", view, 8)
    except struct.error as exc:
        raise CheckpointError("truncated header") from exc
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    pos = 20

    def take(count, dtype):
        nonlocal pos
        size = count * np.dtype(dtype).itemsize
        if pos + size > len(view):
            raise CheckpointError("truncated container")
        out = np.frombuffer(view[pos:pos + size], dtype=dtype).copy()
        pos += size
        return out

    meta = json.loads(bytes(view[pos:pos + meta_len]).decode() or "{}")
    pos += meta_len
    phys = take(n, "<u4").astype(int)
    chis = take(n - 1, "<u4").astype(int)
    bonds = [BondWeights(take(c, "<f8")) for c in chis]
    dims = [1, *chis, 1]
    sites = [take(dims[j] * phys[j] * dims[j + 1], "<c16").reshape(dims[j], phys[j], dims[j + 1])
             for j in range(n)]
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes")
    return InvCanonicalMps(sites, bonds), meta


def save(path, psi: InvCanonicalMps, metadata: dict | None = None) -> Path:
    """Write atomically: a crash mid-write never leaves a half file behind."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(psi, metadata))
    os.replace(tmp, path)
    return path


def load(path) -> tuple[InvCanonicalMps, dict]:
    return loads(Path(path).read_bytes())
