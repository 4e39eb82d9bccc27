"""Regenerate pi_1e6.bin: the first 10**6 bits of pi's binary expansion ("11.0010...")."""

from pathlib import Path

import mpmath

from silicon_entropy.bitvector import BitVector

N = 1_000_000


def pi_bits(n: int = N) -> str:
    mpmath.mp.prec = n + 64
    scaled = int(mpmath.floor(mpmath.pi * mpmath.mpf(2) ** (n - 2)))
    bits = bin(scaled)[2:]
    assert len(bits) == n
    return bits


if __name__ == "__main__":
    out = Path(__file__).with_name("pi_1e6.bin")
    out.write_bytes(BitVector.from_string(pi_bits()).to_bytes())
    print(f"wrote {out}")
