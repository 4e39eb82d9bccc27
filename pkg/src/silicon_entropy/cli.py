"""``silicon-entropy`` command line.

Exit codes: 0 success or accept, 1 domain rejection (auth or suite failure,
enrollment deficit, starvation), 2 usage or config error, 3 I/O error.

Seed precedence for ``device.seed``: ``--seed`` > ``$SILICON_ENTROPY_SEED`` > config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bitvector import to_pgm
from .calibration import aging_schedule, calibrate, epoch_expected_stability
from .config import ConfigError, ExperimentConfig, load_config, render_config
from .dram import age_device, new_device, power_up_read
from .power_noise import get_profile, run_dvft
from .puf import (
    EnrollmentDeficitError,
    EnrollmentMask,
    Fingerprint,
    aging_campaign,
    authenticate,
    campaign_csv,
    enroll_device,
    generate_id,
    inter_hd,
    read_seed,
    stable_fraction,
)
from .randtest import SuiteConfig, load_bits, run_suite
from .trng import DebiasSpec, RemanenceConfig, RemanenceSource, StarvationError, StartupSource, find_knee_delay, run_pipeline

SEED_ENV = "SILICON_ENTROPY_SEED"
EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
CALIBRATION_BAND = (0.86, 0.93)

# read-seed offsets so each command draws from its own stream
_ENROLL_ID, _CANDIDATE_ID, _KNEE, _AGING, _BITMAP, _VERIFY = 2_000_000, 3_000_000, 4_000_000, 5_000_000, 6_000_000, 7_000_000


@dataclass(frozen=True)
class Flag:
    names: tuple[str, ...]
    help: str
    kwargs: dict


def _flag(*names: str, help: str, **kwargs) -> Flag:
    return Flag(names, help, kwargs)


# Single source for the parser and its help text.
GLOBAL_FLAGS = [
    _flag("--config", help="experiment config file (section.key = value lines)", metavar="PATH"),
    _flag("--seed", help=f"device seed; overrides ${SEED_ENV} and the config", type=int, metavar="N"),
    _flag("--deterministic", help="omit timestamps so outputs are byte-reproducible", action="store_true"),
    _flag("--jobs", help="worker processes across independent devices", type=int, default=1, metavar="N"),
    _flag("--out", help="output directory (overrides output.dir)", metavar="DIR"),
]

COMMANDS = {
    "simulate": ("write a device descriptor and optionally its startup bitmap", [
        _flag("--bitmap", help="also write startup.pgm (white = 0, black = 1)", action="store_true"),
        _flag("--row-width", help="bitmap bits per row; a partial last row is padded white",
              type=int, metavar="N"),
    ]),
    "enroll": ("enroll stable cells and write mask.json and fingerprint.json", [
        _flag("--mask", help="reuse an existing mask and only read a fresh fingerprint", metavar="PATH"),
        _flag("--devices", help="number of consecutive device seeds to enroll", type=int, metavar="N"),
    ]),
    "auth": ("compare a candidate fingerprint with a stored one", [
        _flag("candidate", help="candidate fingerprint JSON"),
        _flag("stored", help="stored fingerprint JSON"),
        _flag("--threshold", help="accept when fractional HD <= threshold", type=float, metavar="T"),
    ]),
    "trng": ("generate a debiased bitstream and its run log", [
        _flag("--source", help="entropy source (default from experiment.kind, else remanence)",
              choices=("remanence", "startup", "dvft")),
        _flag("--bits", help="output length (overrides trng.target_bits)", type=int, metavar="N"),
        _flag("--debias", help="debias stages, e.g. von-neumann,xor-fold:2", metavar="SPEC"),
    ]),
    "nist": ("run the randomness test battery on a bitstream file", [
        _flag("bitstream", help="packed or ASCII bitstream file"),
        _flag("--alpha", help="significance level", type=float),
        _flag("--block-size", help="block frequency block size", type=int, metavar="M"),
        _flag("--serial-m", help="serial test pattern length", type=int, metavar="M"),
        _flag("--apen-m", help="approximate entropy block length", type=int, metavar="M"),
    ]),
    "aging": ("replay the nine-epoch aging campaign and write aging.csv", [
        _flag("--reads", help="startup reads per epoch (overrides aging.reads)", type=int, metavar="N"),
    ]),
    "calibrate": ("fit sigma_noise0 and age_noise_gain and verify by simulation", [
        _flag("--reads", help="startup reads for the verification run", type=int, metavar="N"),
    ]),
}


def _add(parser: argparse.ArgumentParser, flag: Flag) -> None:
    parser.add_argument(*flag.names, help=flag.help, **flag.kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for flag in GLOBAL_FLAGS:
        _add(common, flag)
    parser = argparse.ArgumentParser(prog="silicon-entropy", description="DRAM PUF and TRNG experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (summary, flags) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=summary, description=summary)
        for flag in flags:
            _add(p, flag)
    return parser


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class Context:
    args: argparse.Namespace
    cfg: ExperimentConfig
    seed: int
    out: Path

    def device(self, seed: int | None = None):
        dev = new_device(self.seed if seed is None else seed, self.cfg.geometry(), self.cfg.params())
        env = self.cfg.env()
        if env.age_hours > 0:
            age_device(dev, env.age_hours, read_seed(self.rng_seed, _AGING))
        return dev

    @property
    def rng_seed(self) -> int:
        return self.cfg["experiment.rng_seed"]

    def stamp(self, doc: dict) -> dict:
        if not self.args.deterministic:
            doc["generated_at"] = datetime.now(timezone.utc).isoformat()
        return doc

    def write(self, name: str, data: str | bytes, subdir: str | None = None) -> Path:
        folder = self.out / subdir if subdir else self.out
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / name
        path.write_bytes(data.encode("utf-8") if isinstance(data, str) else data)
        return path

    def write_json(self, name: str, doc: dict, subdir: str | None = None) -> Path:
        return self.write(name, json.dumps(doc, indent=2, sort_keys=True) + "\n", subdir)


def resolve_seed(flag: int | None, cfg: ExperimentConfig, environ=os.environ) -> int:
    if flag is not None:
        return flag
    raw = environ.get(SEED_ENV)
    if raw is not None and raw.strip():
        try:
            return int(raw)
        except ValueError:
            raise CliError(f"${SEED_ENV} must be an integer, got {raw!r}", EXIT_USAGE) from None
    return cfg["device.seed"]


# -- subcommands -------------------------------------------------------------

def _pick(flag, configured):
    return configured if flag is None else flag


def cmd_simulate(ctx: Context) -> int:
    dev = ctx.device()
    ctx.write("device.json", dev.to_json())
    if ctx.args.bitmap:
        width = _pick(ctx.args.row_width, ctx.cfg["bitmap.row_width"])
        if width < 1:
            raise CliError("row width must be >= 1", EXIT_USAGE)
        bits = power_up_read(dev, ctx.cfg.env(), read_seed(ctx.rng_seed, _BITMAP))
        ctx.write("startup.pgm", to_pgm(bits, width))
    return EXIT_OK


def _enroll_one(cfg: ExperimentConfig, seed: int, rng_seed: int, mask_text: str | None) -> tuple[str | None, str]:
    dev = new_device(seed, cfg.geometry(), cfg.params())
    env = cfg.env()
    if env.age_hours > 0:
        age_device(dev, env.age_hours, read_seed(rng_seed, _AGING))
    if mask_text is None:
        mask = enroll_device(dev, (env,), cfg["puf.reads"], rng_seed, cfg["puf.min_stability"] or None)
        id_seed = read_seed(rng_seed, _ENROLL_ID)
    else:
        mask = EnrollmentMask.from_json(mask_text)
        id_seed = read_seed(rng_seed, _CANDIDATE_ID)
    fp = generate_id(dev, mask, env, cfg["puf.id_length"], id_seed)
    return (mask.to_json() if mask_text is None else None), fp.to_json()


def cmd_enroll(ctx: Context) -> int:
    n = _pick(ctx.args.devices, ctx.cfg["puf.devices"])
    if n < 1:
        raise CliError("devices must be >= 1", EXIT_USAGE)
    mask_text = Path(ctx.args.mask).read_text(encoding="utf-8") if ctx.args.mask else None
    seeds = [ctx.seed + i for i in range(n)]
    jobs = max(1, ctx.args.jobs)
    call = [(ctx.cfg, s, ctx.rng_seed, mask_text) for s in seeds]
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_enroll_one, *zip(*call)))
    else:
        results = [_enroll_one(*c) for c in call]

    fingerprints = []
    for seed, (mask_json, fp_json) in zip(seeds, results):
        subdir = None if n == 1 else f"device-{seed}"
        if mask_json is not None:
            ctx.write("mask.json", mask_json, subdir)
        ctx.write("fingerprint.json", fp_json, subdir)
        fingerprints.append(Fingerprint.from_json(fp_json))
    summary = {"devices": seeds, "id_length": ctx.cfg["puf.id_length"], "reads": ctx.cfg["puf.reads"]}
    if n > 1:
        summary["inter_hd"] = inter_hd(fingerprints)
    ctx.write_json("enroll_summary.json", ctx.stamp(summary))
    return EXIT_OK


def cmd_auth(ctx: Context) -> int:
    try:
        cand = Fingerprint.from_json(Path(ctx.args.candidate).read_text(encoding="utf-8"))
        stored = Fingerprint.from_json(Path(ctx.args.stored).read_text(encoding="utf-8"))
    except (KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"malformed fingerprint file: {exc}", EXIT_USAGE) from None
    threshold = _pick(ctx.args.threshold, ctx.cfg["puf.threshold"])
    decision = authenticate(cand, stored, threshold)
    doc = asdict(decision)
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    if ctx.args.out:
        ctx.write_json("auth.json", ctx.stamp(doc))
    return EXIT_OK if decision.accepted else EXIT_REJECT


def _trng_source_name(ctx: Context) -> str:
    if ctx.args.source:
        return ctx.args.source
    kind = ctx.cfg["experiment.kind"]
    return kind.removeprefix("trng-") if kind.startswith("trng-") else "remanence"


def cmd_trng(ctx: Context) -> int:
    cfg = ctx.cfg
    source = _trng_source_name(ctx)
    target = _pick(ctx.args.bits, cfg["trng.target_bits"])
    if target < 1:
        raise CliError("bits must be >= 1", EXIT_USAGE)
    summary: dict = {"source": source, "target_bits": target, "rng_seed": ctx.rng_seed}

    if source == "dvft":
        profile = get_profile(cfg["dvft.profile"])
        init = profile.mean_v * (1.0 + cfg["dvft.init_offset"])
        bits, trace = run_dvft(profile, init, target, ctx.rng_seed, cfg["dvft.gain"],
                               cfg["dvft.charge_step"], cfg["dvft.dt"])
        ctx.write("bits.bin", bits.to_bytes())
        ctx.write("dvft_trace.csv", trace.to_csv(max(1, cfg["dvft.trace_every"])))
        tail = bits[-min(10_000, len(bits)):]
        summary.update(profile=profile.name, init_v_ref=init, final_v_ref=float(trace.v_ref[-1]),
                       ones_fraction=bits.ones_fraction(), tail_ones_fraction=tail.ones_fraction())
        ctx.write_json("trng_summary.json", ctx.stamp(summary))
        return EXIT_OK

    debias = DebiasSpec.parse(ctx.args.debias if ctx.args.debias is not None else cfg["trng.debias"])
    dev = ctx.device()
    env = cfg.env()
    if source == "remanence":
        delay = cfg["trng.delay_ms"]
        if delay == "auto":
            sweep = find_knee_delay(dev, env, rng_seed=read_seed(ctx.rng_seed, _KNEE))
            delay = sweep.knee_ms
            summary["knee_sweep"] = {"delays_ms": sweep.delays_ms, "scores": sweep.scores}
        rcfg = RemanenceConfig(delay, env, cfg["trng.rounds"], cfg["trng.extraction_mode"], cfg["trng.write_value"])
        src = RemanenceSource(dev, rcfg, ctx.rng_seed)
        summary["delay_ms"] = delay
    else:
        src = StartupSource(dev, env, ctx.rng_seed, cfg["trng.trials"])
    result = run_pipeline(src, debias, target)
    ctx.write("bits.bin", result.bits.to_bytes())
    ctx.write("runlog.csv", result.log_csv())
    summary.update(debias=str(debias), blocks=result.blocks, raw_bits=result.raw_bits,
                   yield_ratio=result.yield_ratio, ones_fraction=result.bits.ones_fraction())
    ctx.write_json("trng_summary.json", ctx.stamp(summary))
    return EXIT_OK


def cmd_nist(ctx: Context) -> int:
    a, cfg = ctx.args, ctx.cfg
    bits = load_bits(a.bitstream)
    suite_cfg = SuiteConfig(
        alpha=_pick(a.alpha, cfg["nist.alpha"]),
        block_size=_pick(a.block_size, cfg["nist.block_size"]),
        serial_m=_pick(a.serial_m, cfg["nist.serial_m"]),
        apen_m=_pick(a.apen_m, cfg["nist.apen_m"]),
    )
    report = run_suite(bits, suite_cfg)
    doc = report.to_dict()
    ctx.write_json("suite.json", ctx.stamp(doc))
    ctx.write("suite.txt", report.to_text())
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.all_pass else EXIT_REJECT


def cmd_aging(ctx: Context) -> int:
    cfg = ctx.cfg
    reads = _pick(ctx.args.reads, cfg["aging.reads"])
    dev = new_device(ctx.seed, cfg.geometry(), cfg.params())
    schedule = aging_schedule(cfg["aging.burn_in_hours"], cfg.env())
    report = aging_campaign(dev, reads, ctx.rng_seed, read_seed(ctx.rng_seed, _AGING), schedule)
    ctx.write("aging.csv", campaign_csv(report))
    ctx.write("stability.csv", report.to_csv())
    return EXIT_OK


def cmd_calibrate(ctx: Context) -> int:
    cfg = ctx.cfg
    reads = _pick(ctx.args.reads, cfg["puf.reads"])
    params = calibrate(cfg.params(), reads=reads)
    dev = new_device(ctx.seed, cfg.geometry(), params)
    measured = stable_fraction(dev, cfg.env(), reads, read_seed(ctx.rng_seed, _VERIFY))
    in_band = CALIBRATION_BAND[0] <= measured <= CALIBRATION_BAND[1]
    aged = [epoch_expected_stability(params, e.env.age_hours, reads)
            for e in aging_schedule(cfg["aging.burn_in_hours"]) if e.env.age_hours > 0]
    doc = {
        "sigma_noise0": params.sigma_noise0,
        "age_noise_gain": params.age_noise_gain,
        "expected_pre_aging": epoch_expected_stability(params, 0.0, reads),
        "expected_aged_mean": sum(aged) / len(aged),
        "simulated_pre_aging": measured,
        "band": list(CALIBRATION_BAND),
        "in_band": in_band,
        "reads": reads,
    }
    ctx.write_json("calibration.json", ctx.stamp(doc))
    fitted = ExperimentConfig(dict(cfg.values))
    fitted.values["device.sigma_noise0"] = params.sigma_noise0
    fitted.values["device.age_noise_gain"] = params.age_noise_gain
    ctx.write("calibrated.cfg", render_config(fitted))
    return EXIT_OK if in_band else EXIT_REJECT


HANDLERS = {
    "simulate": cmd_simulate,
    "enroll": cmd_enroll,
    "auth": cmd_auth,
    "trng": cmd_trng,
    "nist": cmd_nist,
    "aging": cmd_aging,
    "calibrate": cmd_calibrate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.values["output.dir"] = args.out
        ctx = Context(args, cfg, resolve_seed(args.seed, cfg), cfg.output_dir())
        return HANDLERS[args.command](ctx)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (EnrollmentDeficitError, StarvationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())
