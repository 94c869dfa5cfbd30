"""HALR1 matrix files and JSON structure dumps.

The binary layout is:

    6 bytes   magic ``HALR1\\0``
    2 uint32  matrix dimensions m, n
    node records, depth first

Each node record is a tag byte (0 dense, 1 low-rank, 2 split) followed by
its index box as four uint32 (1-based, inclusive), then the payload: dense
leaves store m*n row-major float64, low-rank leaves a uint32 rank k and
the two factors U (m*k) and V (n*k), split nodes their four children in
(11, 12, 21, 22) order.  All integers and floats are little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .cluster import DENSE, LOW_RANK, SPLIT, IndexBox
from .errors import FormatError
from .lowrank import FactoredLowRank
from .matrix import HalrMatrix, structure_dict

MAGIC = b"HALR1\x00"
_TAG = {DENSE: 0, LOW_RANK: 1, SPLIT: 2}
_KIND = {v: k for k, v in _TAG.items()}


def write_halr(path, a: HalrMatrix) -> None:
    """Write ``a`` to ``path`` in HALR1 format."""
    m, n = a.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", m, n))
        _write_node(fh, a)


def _write_node(fh, node: HalrMatrix) -> None:
    b = node.box
    fh.write(struct.pack("<BIIII", _TAG[node.kind], b.row_lo, b.row_hi, b.col_lo, b.col_hi))
    if node.kind == DENSE:
        fh.write(np.ascontiguousarray(node.dense, dtype="<f8").tobytes())
    elif node.kind == LOW_RANK:
        f = node.factors
        fh.write(struct.pack("<I", f.rank))
        fh.write(np.ascontiguousarray(f.U, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(f.V, dtype="<f8").tobytes())
    else:
        for c in node.children:
            _write_node(fh, c)


def read_halr(path) -> HalrMatrix:
    """Read a HALR1 file back into a matrix."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a HALR1 file")
    try:
        off = len(MAGIC)
        m, n = struct.unpack_from("<II", data, off)
        off += 8
        root, off = _read_node(data, off)
    except (struct.error, ValueError) as e:
        # short buffers surface as unpack/frombuffer complaints
        raise FormatError(f"{path}: truncated or corrupt: {e}") from e
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    if root.shape != (m, n):
        raise FormatError(f"{path}: header says {m}x{n}, tree covers {root.shape}")
    return root


def _read_node(data: bytes, off: int):
    tag, r_lo, r_hi, c_lo, c_hi = struct.unpack_from("<BIIII", data, off)
    off += 17
    if tag not in _KIND:
        raise FormatError(f"bad node tag {tag} at byte {off - 17}")
    box = IndexBox(r_lo, r_hi, c_lo, c_hi)
    m, n = box.shape
    kind = _KIND[tag]
    if kind == DENSE:
        count = m * n
        payload = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return HalrMatrix(box, DENSE, dense=payload.reshape(m, n).astype(np.float64)), off
    if kind == LOW_RANK:
        (k,) = struct.unpack_from("<I", data, off)
        off += 4
        u = np.frombuffer(data, dtype="<f8", count=m * k, offset=off)
        off += 8 * m * k
        v = np.frombuffer(data, dtype="<f8", count=n * k, offset=off)
        off += 8 * n * k
        factors = FactoredLowRank(
            u.reshape(m, k).astype(np.float64), v.reshape(n, k).astype(np.float64)
        )
        return HalrMatrix(box, LOW_RANK, factors=factors), off
    kids = []
    for _ in range(4):
        child, off = _read_node(data, off)
        kids.append(child)
    return HalrMatrix(box, SPLIT, children=tuple(kids)), off


def write_structure_json(path, a: HalrMatrix) -> None:
    """Dump the block structure (boxes, kinds, leaf ranks) as JSON."""
    with open(path, "w") as fh:
        json.dump(structure_dict(a), fh, indent=1)
        fh.write("\n")
