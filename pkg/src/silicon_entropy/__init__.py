"""Behavioral DRAM model with PUF, TRNG and randomness-testing tooling."""

from .bitvector import BitVector, from_pgm, to_pgm
from .dram import (
    MEGABIT,
    NOMINAL,
    ArrayGeometry,
    DramDevice,
    EnvCondition,
    ProcessParams,
    ProtocolError,
    age_device,
    inject_pattern_bias,
    new_device,
    power_off,
    power_off_delay,
    power_on,
    power_up_read,
    read,
    write_all,
)

__version__ = "0.1.0"

__all__ = [
    "MEGABIT", "NOMINAL", "ArrayGeometry", "BitVector", "DramDevice", "EnvCondition", "ProcessParams",
    "ProtocolError", "age_device", "from_pgm", "inject_pattern_bias", "new_device", "power_off",
    "power_off_delay", "power_on", "power_up_read", "read", "to_pgm", "write_all",
]
