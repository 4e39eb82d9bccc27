"""Frequency-family, run, cumulative-sum and pattern tests on bit sequences.

Each test returns a :class:`PValueReport`.  Inputs may be a
:class:`~silicon_entropy.bitvector.BitVector`, a 0/1 numpy array, a sequence
of ints, or a ``'0'/'1'`` string.  ``check_length=False`` lifts the usual
minimum-length and parameter recommendations (worked examples use it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..bitvector import BitVector
from .special import erfc, igamc, normal_cdf

DEFAULT_ALPHA = 0.01


class InputLengthError(ValueError):
    def __init__(self, test: str, minimum: int, got: int):
        super().__init__(f"{test} needs at least {minimum} bits, got {got}")
        self.test = test
        self.minimum = minimum


@dataclass
class PValueReport:
    test_name: str
    p_value: float
    statistic: float
    params: dict = field(default_factory=dict)
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        # guard against rounding past the unit interval
        self.p_value = min(1.0, max(0.0, float(self.p_value)))

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "p_value": self.p_value,
            "statistic": self.statistic,
            "params": dict(self.params),
            "pass": self.passed,
        }


def as_bits(bits) -> np.ndarray:
    if isinstance(bits, BitVector):
        return bits.to_array()
    if isinstance(bits, str):
        return BitVector.from_string(bits).to_array()
    arr = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValueError("bits must be 0 or 1")
    return arr


def _require(test: str, n: int, minimum: int, check: bool) -> None:
    if check and n < minimum:
        raise InputLengthError(test, minimum, n)
    if n == 0:
        raise InputLengthError(test, 1, 0)


def monobit(bits, alpha: float = DEFAULT_ALPHA, check_length: bool = True) -> PValueReport:
    x = as_bits(bits)
    n = x.size
    _require("monobit", n, 100, check_length)
    s = 2 * int(np.count_nonzero(x)) - n
    s_obs = abs(s) / math.sqrt(n)
    return PValueReport("monobit", erfc(s_obs / math.sqrt(2)), s_obs, {"n": n, "S": s}, alpha)


def block_frequency(bits, block_size: int = 128, alpha: float = DEFAULT_ALPHA,
                    check_length: bool = True) -> PValueReport:
    x = as_bits(bits)
    n = x.size
    _require("block_frequency", n, 100, check_length)
    if block_size < 1 or block_size > n or (check_length and block_size < 20):
        raise ValueError(f"block size M={block_size} invalid for n={n} (need 20 <= M <= n)")
    nblocks = n // block_size
    ones = x[: nblocks * block_size].reshape(nblocks, block_size).sum(axis=1, dtype=np.int64)
    # 4M * sum((ones/M - 1/2)^2) == sum((2*ones - M)^2) / M, exact in integers
    chi2 = float(np.sum((2 * ones - block_size) ** 2)) / block_size
    p = igamc(nblocks / 2, chi2 / 2)
    return PValueReport("block_frequency", p, chi2, {"M": block_size, "N": nblocks}, alpha)


def runs(bits, alpha: float = DEFAULT_ALPHA, check_length: bool = True) -> PValueReport:
    x = as_bits(bits)
    n = x.size
    _require("runs", n, 100, check_length)
    pi = np.count_nonzero(x) / n
    v_obs = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    params = {"n": n, "pi": pi, "V": v_obs}
    # a constant input slips past the gate when n < 16 but has no defined statistic
    if abs(pi - 0.5) >= 2 / math.sqrt(n) or pi in (0.0, 1.0):
        return PValueReport("runs", 0.0, float(v_obs), params | {"prerequisite": "failed"}, alpha)
    stat = abs(v_obs - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi))
    return PValueReport("runs", erfc(stat), stat, params, alpha)


# (block size, class upper bounds, class probabilities)
_LONGEST_RUN_TABLES = (
    (8, (1, 2, 3), (0.21484375, 0.3671875, 0.23046875, 0.1875)),
    (128, (4, 5, 6, 7, 8), (0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847)),
    (10_000, (10, 11, 12, 13, 14, 15), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
)


def longest_run_table(n: int):
    if n < 6272:
        return _LONGEST_RUN_TABLES[0]
    if n < 750_000:
        return _LONGEST_RUN_TABLES[1]
    return _LONGEST_RUN_TABLES[2]


def block_longest_runs(x: np.ndarray, block_size: int) -> np.ndarray:
    """Longest run of ones inside each complete block."""
    nblocks = x.size // block_size
    padded = np.zeros((nblocks, block_size + 2), dtype=np.int8)
    padded[:, 1:-1] = x[: nblocks * block_size].reshape(nblocks, block_size)
    edges = np.diff(padded.reshape(-1))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    longest = np.zeros(nblocks, dtype=np.int64)
    np.maximum.at(longest, starts // (block_size + 2), ends - starts)
    return longest


def longest_run(bits, alpha: float = DEFAULT_ALPHA, check_length: bool = True) -> PValueReport:
    x = as_bits(bits)
    n = x.size
    _require("longest_run", n, 128, check_length)
    block_size, bounds, probs = longest_run_table(n)
    nblocks = n // block_size
    if nblocks < 1:
        raise InputLengthError("longest_run", block_size, n)
    longest = block_longest_runs(x, block_size)
    classes = np.searchsorted(np.asarray(bounds), longest, side="left")
    counts = np.bincount(classes, minlength=len(probs))
    expected = nblocks * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    p = igamc((len(probs) - 1) / 2, chi2 / 2)
    return PValueReport("longest_run", p, chi2, {"M": block_size, "N": nblocks, "counts": counts.tolist()}, alpha)


def cusum_p_value(z: int, n: int) -> float:
    if z == 0:
        return 1.0
    sqrt_n = math.sqrt(n)
    total = 1.0
    for k in range(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1):
        total -= normal_cdf((4 * k + 1) * z / sqrt_n) - normal_cdf((4 * k - 1) * z / sqrt_n)
    for k in range(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1):
        total += normal_cdf((4 * k + 3) * z / sqrt_n) - normal_cdf((4 * k + 1) * z / sqrt_n)
    return total


def cusum(bits, mode: str = "forward", alpha: float = DEFAULT_ALPHA, check_length: bool = True) -> PValueReport:
    if mode not in ("forward", "backward"):
        raise ValueError("mode must be 'forward' or 'backward'")
    x = as_bits(bits)
    n = x.size
    _require("cusum", n, 100, check_length)
    steps = 2 * x.astype(np.int64) - 1
    if mode == "backward":
        steps = steps[::-1]
    z = int(np.max(np.abs(np.cumsum(steps))))
    return PValueReport(f"cusum_{mode}", cusum_p_value(z, n), float(z), {"n": n, "mode": mode}, alpha)


def pattern_counts(x: np.ndarray, m: int) -> np.ndarray:
    """Overlapping (cyclic) counts of every m-bit pattern, indexed by value MSB-first."""
    n = x.size
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    ext = np.concatenate([x, x[: m - 1]]).astype(np.int64)
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j: j + n]
    return np.bincount(codes, minlength=1 << m)


def _psi_numerator(x: np.ndarray, m: int) -> int:
    """``n * (psi_sq(m) + n)``, an exact integer; ``n**2`` for m <= 0 so that psi_sq is 0 there."""
    if m <= 0:
        return x.size * x.size
    counts = pattern_counts(x, m)
    return (1 << m) * int(np.dot(counts, counts))


def psi_sq(x: np.ndarray, m: int) -> float:
    return _psi_numerator(x, m) / x.size - x.size


def serial(bits, m: int = 2, alpha: float = DEFAULT_ALPHA,
           check_length: bool = True) -> tuple[PValueReport, PValueReport]:
    x = as_bits(bits)
    n = x.size
    _require("serial", n, 100, check_length)
    if m < 1:
        raise ValueError("serial pattern length m must be >= 1")
    if check_length and m >= int(math.log2(n)) - 2:
        raise ValueError(f"serial m={m} too large for n={n} (need m < floor(log2 n) - 2)")
    t0, t1, t2 = (_psi_numerator(x, k) for k in (m, m - 1, m - 2))
    # the -n terms cancel, so both differences are exact integers over n
    d1 = (t0 - t1) / n
    d2 = (t0 - 2 * t1 + t2) / n
    params = {"m": m, "psi_m": t0 / n - n, "psi_m1": t1 / n - n, "psi_m2": t2 / n - n}
    return (
        PValueReport("serial_1", igamc(2 ** (m - 2), d1 / 2), d1, params, alpha),
        PValueReport("serial_2", igamc(2 ** (m - 3), d2 / 2), d2, params, alpha),
    )


def _phi(x: np.ndarray, m: int) -> float:
    counts = pattern_counts(x, m)
    c = counts[counts > 0] / x.size
    return float(np.sum(c * np.log(c)))


def approx_entropy(bits, m: int = 2, alpha: float = DEFAULT_ALPHA, check_length: bool = True) -> PValueReport:
    x = as_bits(bits)
    n = x.size
    _require("approximate_entropy", n, 100, check_length)
    if m < 1:
        raise ValueError("approximate entropy block length m must be >= 1")
    if check_length and m >= int(math.log2(n)) - 5:
        raise ValueError(f"approximate entropy m={m} too large for n={n} (need m < floor(log2 n) - 5)")
    apen = _phi(x, m) - _phi(x, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    p = igamc(2 ** (m - 1), chi2 / 2)
    return PValueReport("approximate_entropy", p, chi2, {"m": m, "ApEn": apen}, alpha)
