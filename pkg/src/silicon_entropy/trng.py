"""DRAM-based TRNGs: remanence extraction, startup-value extraction, debiasing.

Debiasing is only exact when the bits fed to a von Neumann pair share the
same distribution.  Both sources therefore offer a cell-major layout in which
consecutive output bits come from the same cell on successive rounds.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .bitvector import BitVector
from .dram import (
    NOMINAL,
    DramDevice,
    EnvCondition,
    power_off,
    power_off_delay,
    power_on,
    power_up_read,
    read_bits,
    write_all,
)
from .puf import read_seed

EXTRACTION_MODES = ("raw-read", "flip-mask", "xor-consecutive")
STARVATION_BUDGET = 64


class StarvationError(RuntimeError):
    def __init__(self, stage: str, blocks: int):
        super().__init__(f"stage {stage!r} produced no output for {blocks} consecutive source blocks")
        self.stage = stage
        self.blocks = blocks


@dataclass(frozen=True)
class RemanenceConfig:
    delay_ms: float = 1000.0
    env: EnvCondition = NOMINAL
    rounds: int = 4
    extraction_mode: str = "raw-read"
    write_value: int = 1

    def __post_init__(self):
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.extraction_mode not in EXTRACTION_MODES:
            raise ValueError(f"extraction_mode must be one of {EXTRACTION_MODES}")
        if self.extraction_mode == "xor-consecutive" and self.rounds < 2:
            raise ValueError("xor-consecutive needs at least 2 rounds")
        if self.write_value not in (0, 1):
            raise ValueError("write_value must be 0 or 1")


def _remanence_rounds(device: DramDevice, cfg: RemanenceConfig, rng_seed: int) -> np.ndarray:
    if not device.powered:
        power_on(device)
    out = np.empty((cfg.rounds, device.capacity), dtype=np.uint8)
    for r in range(cfg.rounds):
        write_all(device, cfg.write_value)
        power_off_delay(device, cfg.delay_ms, cfg.env)
        power_on(device)
        out[r] = read_bits(device, cfg.env, read_seed(rng_seed, r))
    return out


def remanence_extract(device: DramDevice, cfg: RemanenceConfig, rng_seed: int) -> BitVector:
    """Write, power off for ``delay_ms``, power on, read; ``cfg.rounds`` times.

    * ``raw-read``: the reads, round after round.
    * ``flip-mask``: 1 where a cell no longer holds the written value.
    * ``xor-consecutive``: XOR of round pairs (0,1), (2,3), ... emitted
      cell-major, so each cell's XORs are adjacent.
    """
    rounds = _remanence_rounds(device, cfg, rng_seed)
    if cfg.extraction_mode == "raw-read":
        return BitVector.from_bits(rounds.reshape(-1))
    if cfg.extraction_mode == "flip-mask":
        return BitVector.from_bits((rounds != cfg.write_value).reshape(-1))
    pairs = cfg.rounds // 2
    xored = rounds[0: 2 * pairs: 2] ^ rounds[1: 2 * pairs: 2]
    return BitVector.from_bits(xored.T.reshape(-1))


@dataclass
class KneeSweep:
    delays_ms: list[float]
    scores: list[float]
    knee_ms: float


def entropy_score(rounds: np.ndarray) -> float:
    """Mean per-cell binary entropy estimated from repeated reads."""
    p = rounds.mean(axis=0)
    p = p[(p > 0) & (p < 1)]
    if p.size == 0:
        return 0.0
    h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return float(h.sum() / rounds.shape[1])


def find_knee_delay(device: DramDevice, env: EnvCondition = NOMINAL, delays_ms: Sequence[float] | None = None,
                    probe_rounds: int = 4, fraction: float = 0.95, rng_seed: int = 0) -> KneeSweep:
    """Sweep power-off delays and return the shortest one reaching ``fraction`` of peak entropy.

    Per-cell entropy rises with delay as written charge leaks away and the
    read becomes bias-and-noise dominated, then flattens; the knee is where
    the curve flattens.
    """
    if delays_ms is None:
        delays_ms = np.geomspace(1.0, 1.0e5, 31).tolist()
    scores = []
    for d in delays_ms:
        cfg = RemanenceConfig(delay_ms=d, env=env, rounds=probe_rounds, extraction_mode="raw-read")
        scores.append(entropy_score(_remanence_rounds(device, cfg, rng_seed)))
    peak = max(scores)
    knee = next(d for d, s in zip(delays_ms, scores) if s >= fraction * peak)
    return KneeSweep(list(delays_ms), scores, float(knee))


def startup_extract(device: DramDevice, env: EnvCondition, rng_seed: int, trials: int,
                    interleave: bool = False) -> BitVector:
    """Concatenate ``trials`` full power-cycle startup reads.

    With ``interleave=True`` the output is cell-major: bit ``c * trials + t``
    is cell ``c`` on trial ``t``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    reads = np.empty((trials, device.capacity), dtype=np.uint8)
    for t in range(trials):
        if device.powered:
            power_off(device)
        reads[t] = power_up_read(device, env, read_seed(rng_seed, t)).to_array()
    return BitVector.from_bits(reads.T.reshape(-1) if interleave else reads.reshape(-1))


# -- debiasing -------------------------------------------------------------

def von_neumann(raw: BitVector) -> BitVector:
    """Non-overlapping pairs: 01 -> 0, 10 -> 1, 00/11 discarded."""
    x = raw.to_array()
    a, b = x[0: x.size - 1: 2], x[1::2]
    return BitVector.from_bits(a[a != b])


def xor_fold(raw: BitVector, k: int) -> BitVector:
    """XOR each run of ``k`` consecutive bits into one; trailing remainder dropped."""
    if k < 2:
        raise ValueError("xor_fold needs k >= 2")
    if k > len(raw):
        raise ValueError(f"xor_fold k={k} exceeds input length {len(raw)}")
    x = raw.to_array()
    m = x.size // k
    return BitVector.from_bits(np.bitwise_xor.reduce(x[: m * k].reshape(m, k), axis=1))


@dataclass(frozen=True)
class DebiasSpec:
    stages: tuple[tuple, ...] = ()

    def __post_init__(self):
        for stage in self.stages:
            if stage[0] == "von-neumann" and len(stage) == 1:
                continue
            if stage[0] == "xor-fold" and len(stage) == 2 and int(stage[1]) >= 2:
                continue
            raise ValueError(f"invalid debias stage {stage!r}")

    @classmethod
    def parse(cls, text: str) -> "DebiasSpec":
        """``"von-neumann,xor-fold:2"`` -> stages; empty string is the identity."""
        stages = []
        for token in filter(None, (t.strip() for t in text.split(","))):
            name, _, arg = token.partition(":")
            stages.append((name,) if not arg else (name, int(arg)))
        return cls(tuple(stages))

    def names(self) -> list[str]:
        return [s[0] if len(s) == 1 else f"{s[0]}:{s[1]}" for s in self.stages]

    def __str__(self) -> str:
        return ",".join(self.names())


def apply_stage(stage: tuple, bits: BitVector) -> BitVector:
    if stage[0] == "von-neumann":
        return von_neumann(bits)
    if len(bits) < stage[1]:
        return BitVector.zeros(0)
    return xor_fold(bits, stage[1])


class BitSource(Protocol):
    def block(self, index: int) -> BitVector: ...


@dataclass
class RemanenceSource:
    device: DramDevice
    cfg: RemanenceConfig
    rng_seed: int = 0

    def block(self, index: int) -> BitVector:
        return remanence_extract(self.device, self.cfg, read_seed(self.rng_seed, index))


@dataclass
class StartupSource:
    device: DramDevice
    env: EnvCondition = NOMINAL
    rng_seed: int = 0
    trials: int = 2
    interleave: bool = True

    def block(self, index: int) -> BitVector:
        return startup_extract(self.device, self.env, read_seed(self.rng_seed, index), self.trials, self.interleave)


@dataclass
class LogRow:
    stage: str
    in_bits: int
    out_bits: int
    ones_fraction: float


@dataclass
class PipelineResult:
    bits: BitVector
    log: list[LogRow] = field(default_factory=list)
    raw_bits: int = 0
    blocks: int = 0

    @property
    def yield_ratio(self) -> float:
        return len(self.bits) / self.raw_bits if self.raw_bits else 0.0

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "in_bits", "out_bits", "ones_fraction"])
        for r in self.log:
            w.writerow([r.stage, r.in_bits, r.out_bits, f"{r.ones_fraction:.6f}"])
        return buf.getvalue()


def run_pipeline(source: BitSource, debias: DebiasSpec, target_bits: int,
                 starvation_budget: int = STARVATION_BUDGET) -> PipelineResult:
    """Pull source blocks, debias each block stage by stage, stop at ``target_bits``."""
    if target_bits < 1:
        raise ValueError("target_bits must be >= 1")
    names = debias.names()
    result = PipelineResult(BitVector.zeros(0))
    chunks: list[BitVector] = []
    produced = 0
    idle = 0
    while produced < target_bits:
        raw = source.block(result.blocks)
        result.blocks += 1
        result.raw_bits += len(raw)
        result.log.append(LogRow("source", len(raw), len(raw), raw.ones_fraction()))
        bits = raw
        empty_stage = None
        for name, stage in zip(names, debias.stages):
            out = apply_stage(stage, bits)
            result.log.append(LogRow(name, len(bits), len(out), out.ones_fraction()))
            if len(out) == 0 and empty_stage is None:
                empty_stage = name
            bits = out
        if len(bits) == 0:
            idle += 1
            if idle >= starvation_budget:
                raise StarvationError(empty_stage or "source", idle)
            continue
        idle = 0
        chunks.append(bits)
        produced += len(bits)
    result.bits = BitVector.concat(chunks)[:target_bits] if produced > target_bits else BitVector.concat(chunks)
    return result


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
