"""Calibration of the startup-noise and aging parameters.

The expected fraction of cells that read unanimously over ``K`` startup reads
has a closed form given the bias distribution; it is integrated numerically
here and inverted by bracketing root search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import log_ndtr

from .dram import AGE_NOISE_TAU_HOURS, EnvCondition, ProcessParams, aging_noise_factor

# Measured stable-bit percentages of three DRAMs, 144 reads per epoch.
REFERENCE_STABILITY = {
    "pre-aging": (0.889, 0.916, 0.897),
    "2014-09": (0.871, 0.901, 0.802),
    "2015-02": (0.864, 0.851, 0.831),
    "2015-03": (0.902, 0.832, 0.780),
    "2015-04": (0.858, 0.824, 0.766),
    "2015-07": (0.873, 0.817, 0.813),
    "2015-08": (0.867, 0.812, 0.801),
    "2016-01": (0.862, 0.827, 0.824),
    "2016-02": (0.875, 0.846, 0.819),
}
# Months after the first measurement at which each aged epoch was read.
AGED_EPOCH_MONTHS = {
    "2014-09": 0, "2015-02": 5, "2015-03": 6, "2015-04": 7,
    "2015-07": 10, "2015-08": 11, "2016-01": 16, "2016-02": 17,
}
HOURS_PER_MONTH = 730.0
BURN_IN_HOURS = 3 * AGE_NOISE_TAU_HOURS
CAMPAIGN_READS = 144

PRE_AGING_TARGET = float(np.mean(REFERENCE_STABILITY["pre-aging"]))
AGED_TARGET = float(np.mean([v for k, vals in REFERENCE_STABILITY.items() if k != "pre-aging" for v in vals]))


@dataclass(frozen=True)
class Epoch:
    label: str
    env: EnvCondition


def aging_schedule(burn_in_hours: float = BURN_IN_HOURS, env: EnvCondition | None = None) -> list[Epoch]:
    """Nine epochs: one pre-aging plus eight aged reads, ages cumulative in ``env.age_hours``."""
    base = env or EnvCondition()
    epochs = [Epoch("pre-aging", replace(base, age_hours=0.0))]
    for label, months in AGED_EPOCH_MONTHS.items():
        epochs.append(Epoch(label, replace(base, age_hours=burn_in_hours + months * HOURS_PER_MONTH)))
    return epochs


def expected_stable_fraction(noise_sigma: float, bias_sigma: float, reads: int = CAMPAIGN_READS,
                             pattern_strength: float = 0.0) -> float:
    """Probability that a cell reads the same value ``reads`` times in a row.

    Cell bias is ``N(+-pattern_strength, bias_sigma)``; each read adds
    independent ``N(0, noise_sigma)`` noise and thresholds at zero.
    """
    if reads < 1:
        raise ValueError("reads must be >= 1")
    if noise_sigma == 0 or reads == 1:
        return 1.0
    m = abs(pattern_strength)

    def p_stable(b: float) -> float:
        z = b / noise_sigma
        return math.exp(reads * log_ndtr(z)) + math.exp(reads * log_ndtr(-z))

    if bias_sigma == 0:
        return p_stable(m)
    u0 = -m / bias_sigma
    w = noise_sigma / bias_sigma
    lo, hi = min(-12.0, u0 - 40 * w), max(12.0, u0 + 40 * w)
    points = sorted({max(lo, min(hi, u0 + k * w)) for k in (-10, -3, -1, 0, 1, 3, 10)})
    integrand = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi) * p_stable(m + bias_sigma * u)
    value, _ = quad(integrand, lo, hi, points=points, limit=400, epsabs=1e-12, epsrel=1e-10)
    return min(1.0, max(0.0, value))


def calibrate_sigma_noise(target: float = PRE_AGING_TARGET, sigma_cap: float = 0.1,
                          reads: int = CAMPAIGN_READS) -> float:
    """sigma_noise0 giving the target expected stable fraction on a fresh device."""
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    ratio = brentq(lambda r: expected_stable_fraction(r, 1.0, reads) - target, 1e-6, 10.0, xtol=1e-12)
    return ratio * sigma_cap


def epoch_expected_stability(params: ProcessParams, age_hours: float, reads: int = CAMPAIGN_READS,
                             env: EnvCondition | None = None) -> float:
    env = env or EnvCondition()
    noise = params.sigma_noise0 * env.noise_scale() * aging_noise_factor(age_hours, params.age_noise_gain)
    bias = math.hypot(params.sigma_cap, params.sigma_age * math.sqrt(age_hours))
    return expected_stable_fraction(noise, bias, reads, params.pattern_strength)


def calibrate_age_gain(params: ProcessParams, target: float = AGED_TARGET,
                       schedule: list[Epoch] | None = None, reads: int = CAMPAIGN_READS) -> float:
    """age_noise_gain making the mean aged-epoch expected stability hit ``target``."""
    schedule = schedule or aging_schedule()
    ages = [e.env.age_hours for e in schedule if e.env.age_hours > 0]

    def mean_aged(gain: float) -> float:
        p = replace(params, age_noise_gain=gain)
        return float(np.mean([epoch_expected_stability(p, a, reads) for a in ages])) - target

    if mean_aged(0.0) <= 0:
        return 0.0
    return brentq(mean_aged, 0.0, 50.0, xtol=1e-9)


def calibrate(params: ProcessParams | None = None, pre_target: float = PRE_AGING_TARGET,
              aged_target: float = AGED_TARGET, reads: int = CAMPAIGN_READS) -> ProcessParams:
    """Return ``params`` with sigma_noise0 and age_noise_gain fitted to the targets."""
    params = params or ProcessParams()
    sigma = calibrate_sigma_noise(pre_target, params.sigma_cap, reads)
    params = replace(params, sigma_noise0=sigma)
    return replace(params, age_noise_gain=calibrate_age_gain(params, aged_target, reads=reads))
