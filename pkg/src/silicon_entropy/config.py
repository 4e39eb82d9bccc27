"""Line-oriented experiment configuration: ``section.key = value``.

Blank lines and ``#`` comments are ignored.  Every key must appear in
:data:`KEYS`; a config with no lines at all is valid and fully defaulted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .dram import ArrayGeometry, EnvCondition, ProcessParams

KINDS = ("puf-enroll", "puf-auth", "trng-remanence", "trng-startup", "trng-dvft", "nist", "aging-campaign")

_P = ProcessParams()


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    parse.__name__ = "choice"
    return parse


def _delay(text: str):
    return "auto" if text == "auto" else float(text)


# key -> (parser, default, help)
KEYS: dict[str, tuple] = {
    "device.seed": (int, 1, "device seed (process variation)"),
    "device.rows": (int, 64, "array rows"),
    "device.cols": (int, 64, "array columns (words per row)"),
    "device.word_width": (int, 16, "bits per word"),
    "device.sigma_cap": (float, _P.sigma_cap, "std-dev of per-cell latent bias"),
    "device.sigma_noise0": (float, _P.sigma_noise0, "sense noise std-dev at nominal conditions"),
    "device.leak_log_tau_mean": (float, _P.leak_log_tau_mean, "mean of ln(retention seconds)"),
    "device.leak_log_tau_sigma": (float, _P.leak_log_tau_sigma, "std-dev of ln(retention seconds)"),
    "device.pattern_strength": (float, 0.0, "architectural stripe bias amplitude"),
    "device.pattern_period": (int, 16, "stripe width in bits"),
    "device.pattern_phase": (_choice("zeros-first", "ones-first"), "zeros-first", "stripe phase"),
    "device.sigma_age": (float, _P.sigma_age, "aging random-walk std-dev per sqrt(hour)"),
    "device.age_noise_gain": (float, _P.age_noise_gain, "saturated relative read-noise growth from aging"),
    "env.temperature": (float, 25.0, "temperature in C"),
    "env.supply_voltage": (float, 5.0, "supply voltage in V"),
    "env.age_hours": (float, 0.0, "equivalent aging hours"),
    "experiment.kind": (_choice(*KINDS), "puf-enroll", "experiment kind"),
    "experiment.rng_seed": (int, 0, "seed for read noise and sampling"),
    "puf.reads": (int, 144, "startup reads used for enrollment"),
    "puf.min_stability": (int, 0, "reads that must agree (0 = all)"),
    "puf.id_length": (int, 128, "fingerprint length in bits"),
    "puf.threshold": (float, 0.2, "authentication fractional-HD threshold"),
    "puf.devices": (int, 1, "number of devices, seeds device.seed .. device.seed + devices - 1"),
    "trng.target_bits": (int, 1_000_000, "output bits"),
    "trng.delay_ms": (_delay, "auto", "remanence power-off delay in ms, or auto for the knee"),
    "trng.rounds": (int, 4, "write/delay/read rounds per remanence block"),
    "trng.extraction_mode": (_choice("raw-read", "flip-mask", "xor-consecutive"), "xor-consecutive",
                             "remanence extraction mode"),
    "trng.write_value": (int, 1, "value written before each remanence delay"),
    "trng.trials": (int, 2, "startup power cycles per block"),
    "trng.debias": (str, "von-neumann", "comma-separated stages: von-neumann, xor-fold:K"),
    "dvft.profile": (_choice("bench", "usb", "computer", "dc"), "bench", "built-in supply profile"),
    "dvft.init_offset": (float, 0.1, "initial threshold offset as a fraction of the supply mean"),
    "dvft.gain": (float, 2.0, "volts of threshold per unit capacitor charge"),
    "dvft.charge_step": (float, 2.5e-6, "capacitor charge moved per output bit"),
    "dvft.dt": (float, 1.0e-6, "seconds between samples"),
    "dvft.trace_every": (int, 1000, "write every Nth step to the trace CSV"),
    "nist.alpha": (float, 0.01, "significance level"),
    "nist.block_size": (int, 128, "block frequency block size M"),
    "nist.serial_m": (int, 2, "serial test pattern length"),
    "nist.apen_m": (int, 2, "approximate entropy block length"),
    "aging.reads": (int, 144, "startup reads per epoch"),
    "aging.burn_in_hours": (float, 2190.0, "equivalent aging before the first aged epoch"),
    "bitmap.row_width": (int, 8192, "bits per bitmap row"),
    "output.dir": (str, "out", "output directory"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: spec[1] for k, spec in KEYS.items()})
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw: str, where: str = "") -> None:
        if key not in KEYS:
            raise ConfigError(f"{where}unknown key {key!r}")
        parser = KEYS[key][0]
        try:
            value = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}bad value for {key}: {raw!r} ({exc})") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{where}{key} must be finite")
        self.values[key] = value

    def geometry(self) -> ArrayGeometry:
        try:
            return ArrayGeometry(self["device.rows"], self["device.cols"], self["device.word_width"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def params(self) -> ProcessParams:
        try:
            return ProcessParams(
                sigma_cap=self["device.sigma_cap"],
                sigma_noise0=self["device.sigma_noise0"],
                leak_log_tau_mean=self["device.leak_log_tau_mean"],
                leak_log_tau_sigma=self["device.leak_log_tau_sigma"],
                pattern_strength=self["device.pattern_strength"],
                pattern_period=self["device.pattern_period"],
                pattern_phase=self["device.pattern_phase"],
                sigma_age=self["device.sigma_age"],
                age_noise_gain=self["device.age_noise_gain"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def env(self) -> EnvCondition:
        try:
            return EnvCondition(self["env.temperature"], self["env.supply_voltage"], self["env.age_hours"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def output_dir(self) -> Path:
        return Path(self["output.dir"])


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cfg = ExperimentConfig(source=source)
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        where = f"{source}:{lineno}: "
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{where}expected 'section.key = value'")
        cfg.set(key.strip(), value.strip(), where)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def render_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in KEYS)
