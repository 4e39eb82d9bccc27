"""Behavioral DRAM array model.

Each cell carries a signed latent bias (process variation), a retention time
constant, and a normalized storage voltage in ``[0, 1]`` where ``0.5`` is the
VDD/2 bias point.  A cell reads as ``1`` when its voltage offset from the bias
point plus its latent bias plus Gaussian sense noise is positive.

All randomness is derived from ``numpy.random.SeedSequence`` keyed on the
device seed, a stream tag and the caller's seed, so every operation replays
bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bitvector import BitVector

NOMINAL_TEMPERATURE = 25.0
NOMINAL_VDD = 5.0
NOISE_TEMP_COEFF = 0.5
NOISE_VDD_COEFF = 0.5
LEAK_DOUBLING_C = 20.0
AGE_NOISE_TAU_HOURS = 730.0
# Latent-bias weight in post-decay reads; 1.0 makes a fully decayed read a startup read.
READ_COUPLING = 1.0

_SEED_MASK = (1 << 64) - 1
_STREAM_BIAS = 0x1B1A5
_STREAM_LEAK = 0x1EA4
_STREAM_READ = 0x4EAD
_STREAM_AGING = 0xA6E


class ProtocolError(RuntimeError):
    """Operation not allowed in the device's current power state."""


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & _SEED_MASK for k in keys]))


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 64
    cols: int = 64
    word_width: int = 16

    def __post_init__(self):
        for name in ("rows", "cols", "word_width"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"geometry.{name} must be a positive integer, got {value!r}")

    @property
    def capacity(self) -> int:
        return self.rows * self.cols * self.word_width

    @property
    def row_bits(self) -> int:
        return self.cols * self.word_width

    def coord(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.capacity:
            raise IndexError(f"cell index {index} outside [0, {self.capacity})")
        row, rest = divmod(index, self.row_bits)
        col, bit = divmod(rest, self.word_width)
        return row, col, bit

    def index(self, row: int, col: int, bit: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols and 0 <= bit < self.word_width):
            raise IndexError(f"coordinate {(row, col, bit)} outside the array")
        return (row * self.cols + col) * self.word_width + bit


# 1 Mbit array for full-scale runs.
MEGABIT = ArrayGeometry(rows=1024, cols=64, word_width=16)


@dataclass(frozen=True)
class ProcessParams:
    """Process-variation and aging parameters.

    ``sigma_noise0`` and ``age_noise_gain`` are calibrated (see
    :mod:`silicon_entropy.calibration`) so that 144 startup reads leave about
    90% of cells unanimous on a fresh device and about 84% after burn-in.
    """

    sigma_cap: float = 0.1
    sigma_noise0: float = 0.004737
    leak_log_tau_mean: float = math.log(0.1)
    leak_log_tau_sigma: float = 0.5
    pattern_strength: float = 0.0
    pattern_period: int = 16
    pattern_phase: str = "zeros-first"
    sigma_age: float = 2.0e-4
    age_noise_gain: float = 0.6685

    def __post_init__(self):
        for name in ("sigma_cap", "sigma_noise0", "leak_log_tau_sigma", "pattern_strength",
                     "sigma_age", "age_noise_gain"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"params.{name} must be finite and >= 0, got {value!r}")
        if not math.isfinite(self.leak_log_tau_mean):
            raise ValueError("params.leak_log_tau_mean must be finite")
        if self.pattern_period < 1:
            raise ValueError("params.pattern_period must be >= 1")
        _phase_sign(self.pattern_phase)


@dataclass(frozen=True)
class EnvCondition:
    temperature: float = NOMINAL_TEMPERATURE
    supply_voltage: float = NOMINAL_VDD
    age_hours: float = 0.0

    def __post_init__(self):
        if not self.supply_voltage > 0:
            raise ValueError("supply_voltage must be positive")
        if self.age_hours < 0:
            raise ValueError("age_hours must be >= 0")

    @property
    def bias_voltage(self) -> float:
        return self.supply_voltage / 2

    def noise_scale(self) -> float:
        dt = abs(self.temperature - NOMINAL_TEMPERATURE)
        dv = abs(self.supply_voltage - NOMINAL_VDD)
        return 1.0 + NOISE_TEMP_COEFF * dt / 25.0 + NOISE_VDD_COEFF * dv / NOMINAL_VDD

    def leak_scale(self) -> float:
        """Multiplier on retention time constants; halves every +20 C."""
        return 2.0 ** (-(self.temperature - NOMINAL_TEMPERATURE) / LEAK_DOUBLING_C)

    def label(self) -> str:
        return f"T={self.temperature:g}C,V={self.supply_voltage:g}V,age={self.age_hours:g}h"


NOMINAL = EnvCondition()


def aging_noise_factor(age_hours: float, gain: float) -> float:
    """Read-noise growth from aging; saturates at ``1 + gain``."""
    return 1.0 + gain * -math.expm1(-age_hours / AGE_NOISE_TAU_HOURS)


def _phase_sign(phase: str) -> int:
    if phase == "zeros-first":
        return 1
    if phase == "ones-first":
        return -1
    raise ValueError(f"pattern phase must be 'zeros-first' or 'ones-first', got {phase!r}")


def pattern_term(capacity: int, period: int, strength: float, phase: str = "zeros-first") -> np.ndarray:
    """``strength * s(i)`` with ``s(i) = +1`` when ``i // period`` is odd (zeros-first)."""
    if period < 1:
        raise ValueError("pattern period must be >= 1")
    sign = _phase_sign(phase)
    odd = (np.arange(capacity) // period) & 1
    return strength * sign * (2.0 * odd - 1.0)


@dataclass(eq=False)
class DramDevice:
    device_seed: int
    geometry: ArrayGeometry
    params: ProcessParams
    latent_bias: np.ndarray
    leak_tau: np.ndarray
    cell_state: np.ndarray
    aging_drift: np.ndarray
    powered: bool = False
    age_hours: float = 0.0
    history: list = field(default_factory=list)

    @property
    def capacity(self) -> int:
        return self.geometry.capacity

    def effective_bias(self) -> np.ndarray:
        return self.latent_bias + self.aging_drift

    def sense_sigma(self, env: EnvCondition) -> float:
        return (self.params.sigma_noise0 * env.noise_scale()
                * aging_noise_factor(self.age_hours, self.params.age_noise_gain))

    def _noise(self, env: EnvCondition, rng_seed: int) -> np.ndarray | float:
        sigma = self.sense_sigma(env)
        if sigma == 0.0:
            return 0.0
        rng = derive_rng(_STREAM_READ, self.device_seed, rng_seed)
        return sigma * rng.standard_normal(self.capacity)

    # -- serialization ----------------------------------------------------

    def descriptor(self) -> dict:
        return {
            "seed": self.device_seed,
            "geometry": asdict(self.geometry),
            "params": asdict(self.params),
            "age_hours": self.age_hours,
            "history": [dict(event) for event in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_descriptor(cls, desc: dict) -> "DramDevice":
        device = new_device(desc["seed"], ArrayGeometry(**desc["geometry"]), ProcessParams(**desc["params"]))
        for event in desc.get("history", []):
            if event["op"] == "age":
                age_device(device, event["hours"], event["aging_seed"])
            elif event["op"] == "pattern":
                inject_pattern_bias(device, event["period"], event["strength"], event["phase"])
            else:
                raise ValueError(f"unknown history event {event['op']!r}")
        if not math.isclose(device.age_hours, desc.get("age_hours", 0.0), rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("descriptor age_hours disagrees with its aging history")
        return device

    @classmethod
    def from_json(cls, text: str) -> "DramDevice":
        return cls.from_descriptor(json.loads(text))


def new_device(seed: int, geometry: ArrayGeometry | None = None, params: ProcessParams | None = None) -> DramDevice:
    geometry = geometry or ArrayGeometry()
    params = params or ProcessParams()
    n = geometry.capacity
    bias = params.sigma_cap * derive_rng(_STREAM_BIAS, seed).standard_normal(n)
    if params.pattern_strength:
        bias += pattern_term(n, params.pattern_period, params.pattern_strength, params.pattern_phase)
    log_tau = derive_rng(_STREAM_LEAK, seed).normal(params.leak_log_tau_mean, params.leak_log_tau_sigma, n)
    return DramDevice(
        device_seed=int(seed),
        geometry=geometry,
        params=params,
        latent_bias=bias,
        leak_tau=np.exp(log_tau),
        cell_state=np.full(n, 0.5),
        aging_drift=np.zeros(n),
    )


def startup_bits(device: DramDevice, env: EnvCondition, rng_seed: int) -> np.ndarray:
    """Boolean startup values without touching device state."""
    return device.effective_bias() + device._noise(env, rng_seed) > 0


def power_up_read(device: DramDevice, env: EnvCondition, rng_seed: int) -> BitVector:
    """Power the device on and read its startup values.

    Startup reads model a cold start: the result depends on latent bias,
    aging drift and sense noise only.
    """
    if device.powered:
        raise ProtocolError("startup values exist only at power-up; device is already powered")
    bits = startup_bits(device, env, rng_seed)
    device.cell_state = bits.astype(np.float64)
    device.powered = True
    return BitVector.from_bits(bits)


def power_on(device: DramDevice) -> None:
    """Re-apply power without resetting cell voltages (remanence path)."""
    if device.powered:
        raise ProtocolError("device is already powered")
    device.powered = True


def power_off(device: DramDevice) -> None:
    """Cut power and let every cell discharge fully to the bias point."""
    device.cell_state = np.full(device.capacity, 0.5)
    device.powered = False


def write_all(device: DramDevice, value: int) -> None:
    if not device.powered:
        raise ProtocolError("cannot write to an unpowered device")
    if value not in (0, 1):
        raise ValueError("value must be 0 or 1")
    device.cell_state = np.full(device.capacity, float(value))


def power_off_delay(device: DramDevice, delay_ms: float, env: EnvCondition = NOMINAL) -> None:
    """Turn the device off for ``delay_ms``; cells decay exponentially toward 0.5."""
    if delay_ms < 0:
        raise ValueError("delay must be >= 0")
    if not device.powered:
        raise ProtocolError("device is already off")
    tau = device.leak_tau * env.leak_scale()
    device.cell_state = 0.5 + (device.cell_state - 0.5) * np.exp(-(delay_ms / 1000.0) / tau)
    device.powered = False


def read_bits(device: DramDevice, env: EnvCondition, rng_seed: int) -> np.ndarray:
    if not device.powered:
        raise ProtocolError("cannot read an unpowered device")
    margin = (device.cell_state - 0.5) + READ_COUPLING * device.effective_bias()
    return margin + device._noise(env, rng_seed) > 0


def read(device: DramDevice, env: EnvCondition, rng_seed: int) -> BitVector:
    """Sense every cell; cell voltages are left unchanged (refresh implied)."""
    return BitVector.from_bits(read_bits(device, env, rng_seed))


def age_device(device: DramDevice, hours: float, aging_seed: int) -> None:
    """Advance the per-cell bias random walk by ``hours`` of equivalent aging."""
    if hours < 0:
        raise ValueError("aging hours must be >= 0")
    if hours > 0 and device.params.sigma_age > 0:
        step = device.params.sigma_age * math.sqrt(hours)
        rng = derive_rng(_STREAM_AGING, device.device_seed, aging_seed, len(device.history))
        device.aging_drift = device.aging_drift + step * rng.standard_normal(device.capacity)
    device.age_hours += hours
    device.history.append({"op": "age", "hours": hours, "aging_seed": int(aging_seed)})


def inject_pattern_bias(device: DramDevice, period: int, strength: float, phase: str = "zeros-first") -> None:
    """Add an architectural stripe pattern of width ``period`` to the latent bias."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if strength:
        device.latent_bias = device.latent_bias + pattern_term(device.capacity, period, strength, phase)
    device.history.append({"op": "pattern", "period": int(period), "strength": float(strength), "phase": phase})
