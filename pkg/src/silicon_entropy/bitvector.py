"""Packed, length-tagged bit sequences.

Bits are stored LSB-first in a ``uint8`` payload: bit ``i`` lives in byte
``i // 8`` at position ``i % 8``.  Padding bits past ``length`` are always zero.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np

_HEADER = struct.Struct("<Q")


def _pack(bits: np.ndarray) -> np.ndarray:
    return np.packbits(bits.astype(bool, copy=False), bitorder="little")


class BitVector:
    __slots__ = ("_data", "_length")

    def __init__(self, data: np.ndarray | bytes | bytearray, length: int):
        if isinstance(data, np.ndarray):
            payload = data.astype(np.uint8, copy=True).reshape(-1)
        else:
            payload = np.frombuffer(bytes(data), dtype=np.uint8).copy()
        nbytes = (length + 7) // 8
        if length < 0 or payload.size < nbytes:
            raise ValueError(f"payload of {payload.size} bytes cannot hold {length} bits")
        payload = payload[:nbytes]
        tail = length % 8
        if tail:
            payload[-1] &= (1 << tail) - 1
        self._data = payload
        self._length = length

    # -- construction -----------------------------------------------------

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> "BitVector":
        arr = np.asarray(bits if isinstance(bits, np.ndarray) else list(bits))
        arr = arr.reshape(-1)
        if arr.size and arr.dtype != bool and not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must be 0 or 1")
        return cls(_pack(arr), int(arr.size))

    @classmethod
    def from_string(cls, text: str) -> "BitVector":
        s = "".join(text.split())
        if set(s) - {"0", "1"}:
            raise ValueError("bit strings may only contain '0' and '1'")
        return cls.from_bits(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"))

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(np.zeros((length + 7) // 8, dtype=np.uint8), length)

    @classmethod
    def concat(cls, parts: Sequence["BitVector"]) -> "BitVector":
        if not parts:
            return cls.zeros(0)
        if all(p._length % 8 == 0 for p in parts):
            return cls(np.concatenate([p._data for p in parts]), sum(len(p) for p in parts))
        return cls.from_bits(np.concatenate([p.to_array() for p in parts]))

    # -- accessors --------------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self._data

    def __len__(self) -> int:
        return self._length

    def to_array(self) -> np.ndarray:
        """Unpacked ``uint8`` array of 0/1 values."""
        return np.unpackbits(self._data, count=self._length, bitorder="little")

    def __getitem__(self, key):
        if isinstance(key, slice):
            return BitVector.from_bits(self.to_array()[key])
        i = int(key)
        if i < 0:
            i += self._length
        if not 0 <= i < self._length:
            raise IndexError("bit index out of range")
        return int((self._data[i >> 3] >> (i & 7)) & 1)

    def __iter__(self):
        return iter(self.to_array().tolist())

    def popcount(self) -> int:
        return int(np.bitwise_count(self._data).sum())

    def ones_fraction(self) -> float:
        return self.popcount() / self._length if self._length else 0.0

    def _check_same_length(self, other: "BitVector") -> None:
        if self._length != other._length:
            raise ValueError(f"length mismatch: {self._length} vs {other._length}")

    def __xor__(self, other: "BitVector") -> "BitVector":
        self._check_same_length(other)
        return BitVector(self._data ^ other._data, self._length)

    def __and__(self, other: "BitVector") -> "BitVector":
        self._check_same_length(other)
        return BitVector(self._data & other._data, self._length)

    def hamming(self, other: "BitVector") -> int:
        self._check_same_length(other)
        return int(np.bitwise_count(self._data ^ other._data).sum())

    def fractional_hd(self, other: "BitVector") -> float:
        if self._length == 0:
            raise ValueError("fractional Hamming distance of empty vectors is undefined")
        return self.hamming(other) / self._length

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self._length == other._length and np.array_equal(self._data, other._data)

    def __hash__(self) -> int:
        return hash((self._length, self._data.tobytes()))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.to_array())

    def __repr__(self) -> str:
        preview = str(self[:32]) if self._length > 32 else str(self)
        return f"BitVector(length={self._length}, bits={preview}{'...' if self._length > 32 else ''})"

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        """8-byte little-endian length header followed by the packed payload."""
        return _HEADER.pack(self._length) + self._data.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BitVector":
        if len(blob) < _HEADER.size:
            raise ValueError("truncated bitvector header")
        (length,) = _HEADER.unpack_from(blob)
        payload = blob[_HEADER.size:]
        if len(payload) != (length + 7) // 8:
            raise ValueError(f"header announces {length} bits but payload has {len(payload)} bytes")
        return cls(payload, length)

    def to_hex(self) -> str:
        return self._data.tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int) -> "BitVector":
        return cls(bytes.fromhex(text), length)


def to_pgm(bits: BitVector, row_width: int) -> bytes:
    """Render as a binary PGM (P5) image: 0 -> white (255), 1 -> black (0).

    The last row is padded with white pixels when ``row_width`` does not
    divide the length.
    """
    if row_width < 1:
        raise ValueError("row_width must be positive")
    n = len(bits)
    rows = max(1, -(-n // row_width))
    pixels = np.full(rows * row_width, 255, dtype=np.uint8)
    pixels[:n] = np.where(bits.to_array() == 1, 0, 255)
    header = f"P5\n{row_width} {rows}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def from_pgm(blob: bytes) -> tuple[np.ndarray, int, int]:
    """Parse a P5 image written by :func:`to_pgm`; returns (pixels, width, height)."""
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ValueError("not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    return pixels.reshape(height, width), width, height
