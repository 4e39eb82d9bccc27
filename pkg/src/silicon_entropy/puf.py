"""Startup-value PUF: stable-cell enrollment, fingerprints and HD metrics."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bitvector import BitVector
from .calibration import Epoch, aging_schedule
from .dram import ArrayGeometry, DramDevice, EnvCondition, NOMINAL, age_device, power_off, power_up_read

DEFAULT_ID_LENGTH = 128
DEFAULT_THRESHOLD = 0.2
DEFAULT_ENROLL_READS = 144


class EnrollmentDeficitError(ValueError):
    def __init__(self, required: int, available: int):
        super().__init__(f"enrollment deficit: {required} stable cells required, {available} available")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class EnrollmentMask:
    cell_indices: np.ndarray
    source_geometry: ArrayGeometry
    readings_used: int
    conditions_used: tuple[EnvCondition, ...] = ()

    def __post_init__(self):
        idx = np.asarray(self.cell_indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("cell_indices must be one-dimensional")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.source_geometry.capacity):
            raise ValueError("cell_indices must be strictly increasing and inside the array")
        object.__setattr__(self, "cell_indices", idx)

    def __len__(self) -> int:
        return int(self.cell_indices.size)

    def digest(self) -> str:
        h = hashlib.sha256()
        g = self.source_geometry
        h.update(f"{g.rows}x{g.cols}x{g.word_width}:".encode())
        h.update(self.cell_indices.astype("<i8").tobytes())
        return h.hexdigest()

    def to_json(self) -> str:
        doc = {
            "cell_indices": self.cell_indices.tolist(),
            "source_geometry": asdict(self.source_geometry),
            "readings_used": self.readings_used,
            "conditions_used": [asdict(c) for c in self.conditions_used],
            "digest": self.digest(),
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EnrollmentMask":
        doc = json.loads(text)
        return cls(
            cell_indices=np.asarray(doc["cell_indices"], dtype=np.int64),
            source_geometry=ArrayGeometry(**doc["source_geometry"]),
            readings_used=doc["readings_used"],
            conditions_used=tuple(EnvCondition(**c) for c in doc.get("conditions_used", [])),
        )


@dataclass(frozen=True)
class Fingerprint:
    bits: BitVector
    device_label: str = ""
    mask_digest: str = ""

    def to_json(self) -> str:
        doc = {
            "bits": self.bits.to_hex(),
            "length": len(self.bits),
            "device_label": self.device_label,
            "mask_digest": self.mask_digest,
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Fingerprint":
        doc = json.loads(text)
        return cls(BitVector.from_hex(doc["bits"], doc["length"]), doc.get("device_label", ""),
                   doc.get("mask_digest", ""))


@dataclass(frozen=True)
class AuthDecision:
    fractional_hd: float
    threshold: float
    accepted: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True) + "\n"


def _check_lengths(vectors: Sequence[BitVector], minimum: int = 2) -> int:
    if len(vectors) < minimum:
        raise ValueError(f"need at least {minimum} readings, got {len(vectors)}")
    n = len(vectors[0])
    for v in vectors[1:]:
        if len(v) != n:
            raise ValueError(f"length mismatch among readings: {n} vs {len(v)}")
    return n


def _ones_counts(readings: Sequence[BitVector]) -> np.ndarray:
    counts = np.zeros(len(readings[0]), dtype=np.int64)
    for r in readings:
        counts += r.to_array()
    return counts


def enroll(readings: Sequence[BitVector], min_stability: int | None = None,
           geometry: ArrayGeometry | None = None,
           conditions: Iterable[EnvCondition] = ()) -> EnrollmentMask:
    """Select cells whose majority value appears in at least ``min_stability`` readings.

    The default is unanimity across every reading.  An empty selection is a
    valid result; callers decide whether it is acceptable.
    """
    n = _check_lengths(readings)
    k = len(readings)
    min_stability = k if min_stability is None else min_stability
    if not 1 <= min_stability <= k:
        raise ValueError(f"min_stability must lie in [1, {k}], got {min_stability}")
    geometry = geometry or ArrayGeometry(1, 1, n)
    if geometry.capacity != n:
        raise ValueError(f"readings have {n} bits but geometry holds {geometry.capacity}")
    if min_stability == k:
        all_ones = readings[0].data.copy()
        any_ones = readings[0].data.copy()
        for r in readings[1:]:
            all_ones &= r.data
            any_ones |= r.data
        stable = BitVector(all_ones | ~any_ones, n).to_array().astype(bool)
    else:
        ones = _ones_counts(readings)
        stable = np.maximum(ones, k - ones) >= min_stability
    return EnrollmentMask(np.flatnonzero(stable), geometry, k, tuple(conditions))


def read_seed(base_seed: int, index: int) -> int:
    return (int(base_seed) * 0x9E3779B97F4A7C15 + index + 1) & ((1 << 64) - 1)


def startup_reads(device: DramDevice, env: EnvCondition, reads: int, rng_seed: int) -> list[BitVector]:
    """``reads`` power cycles, each fully discharged before power-up."""
    out = []
    for i in range(reads):
        if device.powered:
            power_off(device)
        out.append(power_up_read(device, env, read_seed(rng_seed, i)))
    return out


def enroll_device(device: DramDevice, conditions: Sequence[EnvCondition] = (NOMINAL,),
                  reads: int = DEFAULT_ENROLL_READS, rng_seed: int = 0,
                  min_stability: int | None = None) -> EnrollmentMask:
    """Enroll cells stable across ``reads`` startups at every listed condition.

    ``min_stability`` counts over the pooled readings; the default is unanimity.
    """
    readings: list[BitVector] = []
    for j, env in enumerate(conditions):
        readings += startup_reads(device, env, reads, read_seed(rng_seed, 1_000_000 + j))
    return enroll(readings, min_stability, device.geometry, conditions)


def generate_id(device: DramDevice, mask: EnrollmentMask, env: EnvCondition = NOMINAL,
                id_length: int = DEFAULT_ID_LENGTH, rng_seed: int = 0,
                device_label: str | None = None) -> Fingerprint:
    if mask.source_geometry != device.geometry:
        raise ValueError("mask geometry does not match the device")
    if len(mask) < id_length:
        raise EnrollmentDeficitError(id_length, len(mask))
    if device.powered:
        power_off(device)
    raw = power_up_read(device, env, rng_seed).to_array()
    bits = BitVector.from_bits(raw[mask.cell_indices[:id_length]])
    label = device_label if device_label is not None else f"device-{device.device_seed}"
    return Fingerprint(bits, label, mask.digest())


def authenticate(candidate: Fingerprint, stored: Fingerprint, threshold: float = DEFAULT_THRESHOLD) -> AuthDecision:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if len(candidate.bits) != len(stored.bits):
        raise ValueError(f"fingerprint length mismatch: {len(candidate.bits)} vs {len(stored.bits)}")
    hd = candidate.bits.fractional_hd(stored.bits)
    return AuthDecision(hd, threshold, hd <= threshold)


def intra_hd(readings: Sequence[BitVector]) -> float:
    """Mean pairwise fractional Hamming distance between repeated readings."""
    n = _check_lengths(readings)
    k = len(readings)
    ones = _ones_counts(readings)
    # each cell contributes ones * zeros disagreeing pairs
    disagreements = int(np.sum(ones * (k - ones)))
    return disagreements / (k * (k - 1) // 2 * n)


def inter_hd(fingerprints: Sequence[Fingerprint | BitVector]) -> float:
    """Mean pairwise fractional Hamming distance across devices."""
    vectors = [f.bits if isinstance(f, Fingerprint) else f for f in fingerprints]
    return intra_hd(vectors)


def pairwise_hd(vectors: Sequence[BitVector]) -> list[float]:
    _check_lengths(vectors)
    return [a.fractional_hd(b) for a, b in itertools.combinations(vectors, 2)]


def unanimous_fraction(readings: Sequence[BitVector]) -> float:
    return len(enroll(readings)) / len(readings[0])


def stable_fraction(device: DramDevice, env: EnvCondition, reads: int, rng_seed: int) -> float:
    if reads < 2:
        raise ValueError("stability needs at least 2 reads")
    return unanimous_fraction(startup_reads(device, env, reads, rng_seed))


@dataclass
class StabilityRow:
    condition: str
    reads: int
    stable_fraction: float
    age_hours: float = 0.0


@dataclass
class StabilityReport:
    rows: list[StabilityRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "reads", "stable_fraction"])
        for r in self.rows:
            w.writerow([r.condition, r.reads, f"{r.stable_fraction:.6f}"])
        return buf.getvalue()


def stability_report(device: DramDevice, schedule: Sequence[tuple[EnvCondition | Epoch, int]],
                     rng_seed: int = 0, aging_seed: int = 0) -> StabilityReport:
    """Unanimous-cell fraction for each ``(condition, reads)`` entry.

    When an entry's ``age_hours`` exceeds the device's accumulated age, the
    device is aged by the difference before reading.
    """
    if not schedule:
        raise ValueError("schedule must not be empty")
    report = StabilityReport()
    for i, (cond, reads) in enumerate(schedule):
        if reads < 2:
            raise ValueError("each schedule entry needs at least 2 reads")
        label, env = (cond.label, cond.env) if isinstance(cond, Epoch) else (cond.label(), cond)
        if env.age_hours > device.age_hours:
            age_device(device, env.age_hours - device.age_hours, read_seed(aging_seed, i))
        frac = stable_fraction(device, env, reads, read_seed(rng_seed, i))
        report.rows.append(StabilityRow(label, reads, frac, device.age_hours))
    return report


def aging_campaign(device: DramDevice, reads: int = DEFAULT_ENROLL_READS, rng_seed: int = 0,
                   aging_seed: int = 0, schedule: Sequence[Epoch] | None = None) -> StabilityReport:
    """Replay the nine-epoch aging schedule on ``device``."""
    schedule = schedule if schedule is not None else aging_schedule()
    return stability_report(device, [(e, reads) for e in schedule], rng_seed, aging_seed)


def campaign_csv(report: StabilityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "stable_fraction"])
    for r in report.rows:
        w.writerow([r.condition, f"{r.stable_fraction:.6f}"])
    return buf.getvalue()
