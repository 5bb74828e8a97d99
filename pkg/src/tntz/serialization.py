"""Binary container for chains and compressed matrices, plus raw dense files.

Container layout: 5 magic bytes ``TNTZ1``, a 4-byte little-endian length,
a UTF-8 JSON header declaring the object structure and a CRC32 of the
payload, then the payload itself: the raw float64 arrays (little-endian,
row-major) concatenated in node order, core before factor.  Loading is
bit-exact on every payload float.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .core import CP, TT, ModeNode, TnTensor
from .errors import ChecksumError, ContractViolationError, MagicError, SizeError
from .matrices import CPMatrix, TTMatrix

MAGIC = b"TNTZ1"

KIND_TENSOR = "tensor"
KIND_TT_MATRIX = "tt_matrix"
KIND_CP_MATRIX = "cp_matrix"


def _array_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _header_and_payload(obj) -> tuple:
    if isinstance(obj, TnTensor):
        nodes = []
        arrays = []
        for node in obj.nodes:
            entry = {
                "kind": node.kind,
                "core_shape": list(node.core.shape),
                "factor_shape": None if node.factor is None else list(node.factor.shape),
            }
            nodes.append(entry)
            arrays.append(node.core)
            if node.factor is not None:
                arrays.append(node.factor)
        header = {
            "kind": KIND_TENSOR,
            "num_modes": obj.ndim,
            "batch_size": obj.batch_size,
            "physical_shape": list(obj.shape),
            "rank_chain": list(obj.ranks),
            "nodes": nodes,
        }
    elif isinstance(obj, TTMatrix):
        header = {
            "kind": KIND_TT_MATRIX,
            "num_modes": len(obj.cores),
            "batch_size": None,
            "row_dims": list(obj.row_dims),
            "col_dims": list(obj.col_dims),
            "rank_chain": list(obj.ranks),
            "core_shapes": [list(c.shape) for c in obj.cores],
        }
        arrays = list(obj.cores)
    elif isinstance(obj, CPMatrix):
        header = {
            "kind": KIND_CP_MATRIX,
            "num_modes": len(obj.factors),
            "batch_size": None,
            "row_dims": list(obj.row_dims),
            "col_dims": list(obj.col_dims),
            "rank": obj.rank,
            "factor_shapes": [list(f.shape) for f in obj.factors],
        }
        arrays = list(obj.factors)
    else:
        raise ContractViolationError(f"cannot serialize a {type(obj).__name__}")
    payload = b"".join(_array_bytes(a) for a in arrays)
    header["checksum"] = zlib.crc32(payload) & 0xFFFFFFFF
    return header, payload


def save(obj: Union[TnTensor, TTMatrix, CPMatrix], path) -> None:
    """Write a chain or compressed matrix to a container file."""
    header, payload = _header_and_payload(obj)
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_header(path) -> dict:
    """Parse and validate the container header without loading the payload."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise MagicError(f"{path}: bad magic {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise SizeError(f"{path}: truncated header length")
        (blob_len,) = struct.unpack("<I", raw_len)
        blob = fh.read(blob_len)
        if len(blob) != blob_len:
            raise SizeError(f"{path}: truncated header")
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SizeError(f"{path}: malformed header: {exc}") from exc


def load(path) -> Union[TnTensor, TTMatrix, CPMatrix]:
    """Read a container file back into the object it was saved from."""
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.read(len(MAGIC))
        (blob_len,) = struct.unpack("<I", fh.read(4))
        fh.read(blob_len)
        payload = fh.read()
    expected = _declared_payload_floats(header)
    if len(payload) != 8 * expected:
        raise SizeError(
            f"{path}: payload holds {len(payload)} bytes, header declares "
            f"{8 * expected}"
        )
    if (zlib.crc32(payload) & 0xFFFFFFFF) != header.get("checksum"):
        raise ChecksumError(f"{path}: payload checksum mismatch")
    floats = np.frombuffer(payload, dtype="<f8")
    return _rebuild(header, floats)


def _declared_payload_floats(header: dict) -> int:
    kind = header.get("kind")
    if kind == KIND_TENSOR:
        total = 0
        for node in header["nodes"]:
            total += int(np.prod(node["core_shape"]))
            if node["factor_shape"] is not None:
                total += int(np.prod(node["factor_shape"]))
        return total
    if kind == KIND_TT_MATRIX:
        return sum(int(np.prod(s)) for s in header["core_shapes"])
    if kind == KIND_CP_MATRIX:
        return sum(int(np.prod(s)) for s in header["factor_shapes"])
    raise SizeError(f"unknown object kind {kind!r}")


def _take(floats: np.ndarray, offset: int, shape) -> tuple:
    size = int(np.prod(shape))
    block = floats[offset:offset + size].reshape(shape).astype(np.float64)
    return block, offset + size


def _rebuild(header: dict, floats: np.ndarray):
    kind = header["kind"]
    offset = 0
    if kind == KIND_TENSOR:
        batch = header.get("batch_size")
        nodes = []
        for entry in header["nodes"]:
            core, offset = _take(floats, offset, entry["core_shape"])
            factor = None
            if entry["factor_shape"] is not None:
                factor, offset = _take(floats, offset, entry["factor_shape"])
            nodes.append(ModeNode(entry["kind"], core, factor,
                                  batched=batch is not None))
        return TnTensor(nodes, batch)
    if kind == KIND_TT_MATRIX:
        cores = []
        for shape in header["core_shapes"]:
            core, offset = _take(floats, offset, shape)
            cores.append(core)
        return TTMatrix(cores, header["row_dims"], header["col_dims"])
    factors = []
    for shape in header["factor_shapes"]:
        factor, offset = _take(floats, offset, shape)
        factors.append(factor)
    return CPMatrix(factors, header["row_dims"], header["col_dims"])


def write_dense(x: np.ndarray, path) -> None:
    """Raw little-endian float64 dump, row-major; shape travels out of band."""
    np.ascontiguousarray(x, dtype="<f8").tofile(path)


def read_dense(path, shape) -> np.ndarray:
    """Read a raw dense file; the byte length must match the given shape."""
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ContractViolationError("dense shapes must be positive")
    expected = 8 * int(np.prod(shape))
    actual = Path(path).stat().st_size
    if actual != expected:
        raise SizeError(
            f"{path}: file holds {actual} bytes but shape {shape} needs {expected}"
        )
    return np.fromfile(path, dtype="<f8").reshape(shape).astype(np.float64)
