from .special import erfc, igam, igamc, normal_cdf
from .suite import SuiteConfig, SuiteReport, TEST_NAMES, load_bits, parse_bits, run_suite
from .tests import (
    DEFAULT_ALPHA,
    InputLengthError,
    PValueReport,
    approx_entropy,
    block_frequency,
    cusum,
    longest_run,
    monobit,
    runs,
    serial,
)

__all__ = [
    "DEFAULT_ALPHA", "InputLengthError", "PValueReport", "SuiteConfig", "SuiteReport", "TEST_NAMES",
    "approx_entropy", "block_frequency", "cusum", "erfc", "igam", "igamc", "load_bits", "longest_run",
    "monobit", "normal_cdf", "parse_bits", "run_suite", "runs", "serial",
]
