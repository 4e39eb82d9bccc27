"""Battery runner, report formats and bitstream file loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..bitvector import BitVector
from . import tests as T

TEST_NAMES = ("monobit", "block_frequency", "runs", "longest_run", "cusum", "serial", "approximate_entropy")


@dataclass(frozen=True)
class SuiteConfig:
    alpha: float = T.DEFAULT_ALPHA
    block_size: int = 128
    serial_m: int = 2
    apen_m: int = 2
    tests: tuple[str, ...] = TEST_NAMES

    def __post_init__(self):
        unknown = set(self.tests) - set(TEST_NAMES)
        if unknown:
            raise ValueError(f"unknown tests: {sorted(unknown)}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("block_size", "serial_m", "apen_m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SuiteReport:
    reports: list[T.PValueReport]
    input_length: int
    alpha: float
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return not self.errors and all(r.passed for r in self.reports)

    def failed(self) -> list[str]:
        return [r.test_name for r in self.reports if not r.passed] + sorted(self.errors)

    def p_values(self) -> dict[str, float]:
        return {r.test_name: r.p_value for r in self.reports}

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "alpha": self.alpha,
            "all_pass": self.all_pass,
            "reports": [r.to_dict() for r in self.reports],
            "errors": dict(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"{'name':<22}{'statistic':>16}{'p_value':>12}  verdict"]
        for r in self.reports:
            lines.append(f"{r.test_name:<22}{r.statistic:>16.6f}{r.p_value:>12.6f}  {'PASS' if r.passed else 'FAIL'}")
        for name, msg in sorted(self.errors.items()):
            lines.append(f"{name:<22}{'-':>16}{'-':>12}  ERROR {msg}")
        lines.append(f"# n={self.input_length} alpha={self.alpha:g} all_pass={self.all_pass}")
        return "\n".join(lines) + "\n"


def run_suite(bits, config: SuiteConfig | None = None) -> SuiteReport:
    """Run every enabled test; a test that raises is recorded and the rest continue."""
    config = config or SuiteConfig()
    x = T.as_bits(bits)
    a = config.alpha
    runners = {
        "monobit": lambda: [T.monobit(x, a)],
        "block_frequency": lambda: [T.block_frequency(x, config.block_size, a)],
        "runs": lambda: [T.runs(x, a)],
        "longest_run": lambda: [T.longest_run(x, a)],
        "cusum": lambda: [T.cusum(x, "forward", a), T.cusum(x, "backward", a)],
        "serial": lambda: list(T.serial(x, config.serial_m, a)),
        "approximate_entropy": lambda: [T.approx_entropy(x, config.apen_m, a)],
    }
    report = SuiteReport([], int(x.size), a)
    for name in config.tests:
        try:
            report.reports.extend(runners[name]())
        except ValueError as exc:
            report.errors[name] = str(exc)
    return report


def parse_bits(blob: bytes) -> BitVector:
    """Decode ASCII '0'/'1' text (whitespace ignored) or header-prefixed packed bytes."""
    stripped = bytes(blob).translate(None, b" \t\r\n")
    if stripped and not stripped.translate(None, b"01"):
        return BitVector.from_string(stripped.decode("ascii"))
    return BitVector.from_bytes(blob)


def load_bits(path: str | Path) -> BitVector:
    return parse_bits(Path(path).read_bytes())
