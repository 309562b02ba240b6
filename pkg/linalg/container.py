"""Binary checkpoint container for structured matrices.

Layout (little endian)::

    b"RCTR" | u16 version | u8 kind | u32 header length | JSON header | float64 payload

The JSON header describes the object tree and the shape of every array;
arrays follow back to back in the order the header lists them.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from linalg.banded import BandedMatrix
from linalg.hmatrix import HMatrix
from linalg.lowrank import LowRankFactor
from utils.errors import ContainerFormatError

MAGIC = b"RCTR"
VERSION = 1
_PREFIX = struct.Struct("<4sHBI")
_KINDS = {"dense": 0, "banded": 1, "lowrank": 2, "hierarchical": 3}
_KIND_NAMES = {code: name for name, code in _KINDS.items()}

Storable = Union[np.ndarray, BandedMatrix, LowRankFactor, HMatrix]


def _kind(obj: Storable) -> str:
    if isinstance(obj, HMatrix):
        return "hierarchical"
    if isinstance(obj, BandedMatrix):
        return "banded"
    if isinstance(obj, LowRankFactor):
        return "lowrank"
    if isinstance(obj, np.ndarray):
        return "dense"
    raise ContainerFormatError(f"cannot store objects of type {type(obj).__name__}")


class _Encoder:
    def __init__(self):
        self.arrays: List[np.ndarray] = []

    def array(self, M: np.ndarray) -> Dict[str, Any]:
        self.arrays.append(np.ascontiguousarray(M, dtype="<f8"))
        return {"array": len(self.arrays) - 1, "shape": list(M.shape)}

    def lowrank(self, L: LowRankFactor) -> Dict[str, Any]:
        return {"U": self.array(L.U), "D": self.array(L.D), "V": self.array(L.V),
                "symmetric": L.symmetric}

    def hmatrix(self, H: HMatrix) -> Dict[str, Any]:
        if H.is_leaf:
            return {"n": H.n, "leaf": self.array(H.dense)}
        return {
            "n": H.n,
            "children": [self.hmatrix(child) for child in H.children],
            "upper": self.lowrank(H.upper),
            "lower": self.lowrank(H.lower),
        }

    def encode(self, obj: Storable) -> Dict[str, Any]:
        kind = _kind(obj)
        if kind == "dense":
            return {"value": self.array(np.atleast_2d(obj))}
        if kind == "banded":
            return {"value": self.array(obj.data), "lower": obj.lower, "upper": obj.upper,
                    "symmetric": obj.symmetric}
        if kind == "lowrank":
            return {"value": self.lowrank(obj)}
        return {"value": self.hmatrix(obj), "n_min": obj.n_min}


class _Decoder:
    def __init__(self, arrays: List[np.ndarray]):
        self.arrays = arrays

    def array(self, ref: Dict[str, Any]) -> np.ndarray:
        try:
            return self.arrays[ref["array"]]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContainerFormatError(f"bad array reference {ref!r}") from exc

    def lowrank(self, node: Dict[str, Any]) -> LowRankFactor:
        return LowRankFactor(self.array(node["U"]), self.array(node["D"]),
                             self.array(node["V"]), node.get("symmetric", False))

    def hmatrix(self, node: Dict[str, Any], n_min: int) -> HMatrix:
        if "leaf" in node:
            return HMatrix.leaf(self.array(node["leaf"]), n_min)
        first, second = (self.hmatrix(child, n_min) for child in node["children"])
        return HMatrix.node(first, second, self.lowrank(node["upper"]),
                            self.lowrank(node["lower"]))


def dumps(obj: Storable) -> bytes:
    """Serialize a dense, banded, low-rank or hierarchical matrix."""
    kind = _kind(obj)
    encoder = _Encoder()
    header = encoder.encode(obj)
    header["arrays"] = [list(a.shape) for a in encoder.arrays]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(a.tobytes() for a in encoder.arrays)
    return _PREFIX.pack(MAGIC, VERSION, _KINDS[kind], len(blob)) + blob + payload


def loads(data: bytes) -> Storable:
    if len(data) < _PREFIX.size:
        raise ContainerFormatError("truncated container prefix")
    magic, version, kind_code, header_length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic bytes {magic!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    if kind_code not in _KIND_NAMES:
        raise ContainerFormatError(f"unknown kind code {kind_code}")
    offset = _PREFIX.size
    try:
        header = json.loads(data[offset: offset + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError("corrupt container header") from exc
    offset += header_length

    arrays = []
    for shape in header["arrays"]:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise ContainerFormatError("truncated container payload")
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset)
                      .reshape(shape).copy())
        offset = end
    if offset != len(data):
        raise ContainerFormatError("trailing bytes after payload")

    decoder = _Decoder(arrays)
    kind = _KIND_NAMES[kind_code]
    if kind == "dense":
        return decoder.array(header["value"])
    if kind == "banded":
        return BandedMatrix(decoder.array(header["value"]), header["lower"], header["upper"],
                            header["symmetric"])
    if kind == "lowrank":
        return decoder.lowrank(header["value"])
    return decoder.hmatrix(header["value"], header["n_min"])


def dump(obj: Storable, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(obj))


def load(path: Union[str, Path]) -> Storable:
    return loads(Path(path).read_bytes())
