"""Power-supply-noise TRNG with a self-calibrating comparator threshold.

The supply is sampled once per step as ``mean + drift * t + N(0, sigma)`` and
compared against ``v_ref``.  The feedback loop integrates the output bits on
a capacitor (``cap_charge``) and sets ``v_ref`` through a linear divider:
``v_ref = v_center + gain * (cap_charge - 0.5)``.  A surplus of ones raises
the threshold and a surplus of zeros lowers it, so the loop settles where
ones and zeros are equally likely, i.e. at the supply mean.

Linearized, the charge error obeys ``e[t+1] = (1 - a) e[t] + noise`` with
``a = charge_step * gain * phi(0) / sigma``; the loop is stable for
``0 < a < 2`` and the threshold variance at steady state is about
``gain * charge_step * sigma / (8 * phi(0))``, shrinking with the gain.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .bitvector import BitVector
from .dram import derive_rng

_STREAM_SUPPLY = 0x5AFE
DEFAULT_GAIN = 2.0
DEFAULT_CHARGE_STEP = 2.5e-6
DEFAULT_DT = 1.0e-6


@dataclass(frozen=True)
class SupplyProfile:
    name: str
    mean_v: float
    noise_sigma_v: float
    drift_v_per_s: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma_v >= 0:
            raise ValueError("noise_sigma_v must be >= 0")


# Illustrative values; the measured supplies were not characterized numerically.
BUILTIN_PROFILES = {
    "bench": SupplyProfile("bench", 5.000, 0.002),
    "usb": SupplyProfile("usb", 5.05, 0.008, drift_v_per_s=1.0e-3),
    "computer": SupplyProfile("computer", 5.02, 0.005),
    "dc": SupplyProfile("dc", 5.00, 0.003),
}


def get_profile(name: str) -> SupplyProfile:
    try:
        return BUILTIN_PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown supply profile {name!r}; built-ins: {sorted(BUILTIN_PROFILES)}") from None


def _time_key(t: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(t)))[0]


def sample_supply(profile: SupplyProfile, t: float, rng_seed: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    base = profile.mean_v + profile.drift_v_per_s * t
    if profile.noise_sigma_v == 0:
        return base
    rng = derive_rng(_STREAM_SUPPLY, profile.seed, rng_seed, _time_key(t))
    return base + profile.noise_sigma_v * float(rng.standard_normal())


def supply_series(profile: SupplyProfile, n: int, rng_seed: int, dt: float = DEFAULT_DT,
                  t0: float = 0.0) -> np.ndarray:
    """``n`` consecutive samples at ``t0 + k * dt`` from one noise stream."""
    t = t0 + dt * np.arange(n)
    v = profile.mean_v + profile.drift_v_per_s * t
    if profile.noise_sigma_v:
        v = v + profile.noise_sigma_v * derive_rng(_STREAM_SUPPLY, profile.seed, rng_seed).standard_normal(n)
    return v


def comparator_bit(v: float, v_ref: float) -> int:
    return 1 if v > v_ref else 0


@dataclass(frozen=True)
class DvftState:
    v_ref: float
    cap_charge: float = 0.5
    gain: float = DEFAULT_GAIN
    charge_step: float = DEFAULT_CHARGE_STEP
    v_center: float | None = None
    history_ones: int = 0
    step: int = 0

    def __post_init__(self):
        if self.v_center is None:
            object.__setattr__(self, "v_center", self.v_ref - self.gain * (self.cap_charge - 0.5))
        if not math.isfinite(self.v_ref):
            raise ValueError("v_ref must be finite")
        if not 0.0 <= self.cap_charge <= 1.0:
            raise ValueError("cap_charge must lie in [0, 1]")


def dvft_step(state: DvftState, bit: int) -> DvftState:
    charge = min(1.0, max(0.0, state.cap_charge + state.charge_step * (bit - 0.5)))
    return replace(
        state,
        cap_charge=charge,
        v_ref=state.v_center + state.gain * (charge - 0.5),
        history_ones=state.history_ones + bit,
        step=state.step + 1,
    )


@dataclass
class DvftTrace:
    voltage: np.ndarray
    v_ref: np.ndarray
    cap_charge: np.ndarray
    bits: np.ndarray

    def __len__(self) -> int:
        return self.bits.size

    def to_csv(self, every: int = 1) -> str:
        """``v_ref`` is the threshold the sample was compared against; ``cap_charge`` is after the update."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "voltage", "v_ref", "cap_charge", "bit"])
        for i in range(0, self.bits.size, every):
            w.writerow([i, repr(float(self.voltage[i])), repr(float(self.v_ref[i])),
                        repr(float(self.cap_charge[i])), int(self.bits[i])])
        return buf.getvalue()


def run_dvft(profile: SupplyProfile, init_v_ref: float, n_bits: int, rng_seed: int,
             gain: float = DEFAULT_GAIN, charge_step: float = DEFAULT_CHARGE_STEP,
             dt: float = DEFAULT_DT) -> tuple[BitVector, DvftTrace]:
    """Closed-loop run; ``gain=0`` gives the open-loop control with a fixed threshold."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    volts = supply_series(profile, n_bits, rng_seed, dt)
    v_ref_trace = np.empty(n_bits)
    charge_trace = np.empty(n_bits)
    bits = np.empty(n_bits, dtype=np.uint8)

    # same arithmetic as dvft_step, unrolled for speed
    state = DvftState(init_v_ref, gain=gain, charge_step=charge_step)
    v_center, c, v_ref = state.v_center, state.cap_charge, state.v_ref
    half = 0.5 * charge_step
    for i, v in enumerate(volts.tolist()):
        v_ref_trace[i] = v_ref
        if v > v_ref:
            bits[i] = 1
            c += half
            if c > 1.0:
                c = 1.0
        else:
            bits[i] = 0
            c -= half
            if c < 0.0:
                c = 0.0
        charge_trace[i] = c
        v_ref = v_center + gain * (c - 0.5)
    return BitVector.from_bits(bits), DvftTrace(volts, v_ref_trace, charge_trace, bits)
