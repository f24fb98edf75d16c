"""Command-line entry point: ``remsample {simulate,compute,fit,experiment,diagnose}``.

Every subcommand writes into ``--out`` (a directory), starting with
``manifest.txt``. Each output file opens with a ``# manifest_sha256=...``
comment line; the manifest echoes the full configuration and the sha256 of
every input file, but not the output directory or the worker count, so a
manifest plus its inputs reproduces the outputs byte for byte.

Options may also come from a ``--config`` file of ``key = value`` lines
(keys are flag names without the dashes); flags on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from remsample import __version__
from remsample.estimator import EstimationError, FitResult, fit
from remsample.events import EventFormatError, NodeUniverse, parse_events, write_events
from remsample.experiments import (KINDS, DesignSpec, covariance_diagnostic, density_diagnostic,
                                   run_design, write_covariance)
from remsample.generator import SimConfig, simulate
from remsample.network import THIRTY_DAYS, DecayConfig
from remsample.replay import ObservationTable, replay
from remsample.sampling import SampleConfig

log = logging.getLogger("remsample")

USAGE_EXIT = 2
FAILURE_EXIT = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Ordered ``key=value`` echo of a run; its sha256 tags every output file."""

    def __init__(self, command: str):
        self.items: list[tuple[str, str]] = [("tool", "remsample"), ("version", __version__),
                                             ("command", command)]

    def add(self, key: str, value) -> None:
        if isinstance(value, float):
            value = format(value, ".17g")
        self.items.append((key, str(value)))

    def add_input(self, key: str, path: str | Path) -> None:
        self.add(f"{key}.name", Path(path).name)
        self.add(f"{key}.sha256", _sha256_file(path))

    def text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()

    @property
    def header(self) -> str:
        return f"manifest_sha256={self.digest}"

    def write(self, out_dir: Path) -> None:
        with open(out_dir / "manifest.txt", "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {self.header}\n")
            fh.write(self.text())


# -- argument handling ---------------------------------------------------------

def _probability(text: str) -> float:
    p = float(text)
    if not 0 < p <= 1:
        raise argparse.ArgumentTypeError(f"p must lie in (0, 1], got {text}")
    return p


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _epsilon(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1), got {text}")
    return v


def _theta(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(" ", ",").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"theta must be a comma separated list of numbers, got {text}")


def _common(p: argparse.ArgumentParser, decay: bool = True) -> None:
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")
    if decay:
        p.add_argument("--halflife", type=_positive_float, default=float(THIRTY_DAYS),
                       help="halflife in seconds (default 30 days)")
        p.add_argument("--epsilon", type=_epsilon, default=0.01, help="pruning threshold (default 0.01)")


def _event_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--events", required=True, help="event file: source,target,time per line")
    p.add_argument("--sort", action="store_true", help="sort events by time instead of rejecting disorder")
    p.add_argument("--header", action="store_true", help="event file has a header line")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--closed", action="store_true",
                   help="put every node of the file in the risk set from the start")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="remsample", description="Sampled relational event model toolkit.")
    parser.add_argument("--version", action="version", version=f"remsample {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate an event stream from a known model")
    _common(p)
    p.add_argument("--n-users", type=_positive_int, default=30)
    p.add_argument("--n-articles", type=_positive_int, default=30)
    p.add_argument("--n-events", type=_positive_int, default=1000)
    p.add_argument("--theta", type=_theta, default=SimConfig.theta)
    p.add_argument("--time-step", type=_positive_int, default=None,
                   help="seconds between events (default halflife / 50)")
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("compute", help="replay events into a sampled observation table")
    _common(p)
    _event_input(p)
    p.add_argument("--p", type=_probability, default=1e-4)
    p.add_argument("--m", type=_positive_int, default=5)
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("fit", help="fit the model to an observation table")
    _common(p, decay=False)
    p.add_argument("--table", required=True, help="observation table written by 'compute'")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--report", action="store_true", help="print a formatted table instead of the CSV")

    p = sub.add_parser("experiment", help="run a sampling-variability design")
    _common(p)
    _event_input(p)
    p.add_argument("--design", choices=KINDS, default="fixed")
    p.add_argument("--p", type=_probability, default=1e-4)
    p.add_argument("--m", type=_positive_int, default=5)
    p.add_argument("--replicates", type=_positive_int, default=None)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)

    p = sub.add_parser("diagnose", help="density and covariance tables of an observation table")
    _common(p, decay=False)
    p.add_argument("--table", required=True)
    p.add_argument("--threshold", type=float, default=1e-3)
    return parser


def read_config(path: str | Path) -> list[str]:
    """Turn a ``key = value`` file into command-line tokens."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = key.strip().replace("_", "-"), value.strip()
            if key == "config":
                raise UsageError(f"{path}:{lineno}: config files cannot be nested")
            if value.lower() in ("true", "yes", "on"):
                tokens.append(f"--{key}")
            elif value.lower() in ("false", "no", "off"):
                continue
            else:
                tokens += [f"--{key}", value]
    return tokens


def parse_args(argv: list[str]) -> argparse.Namespace:
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and argv and argv[0] in COMMANDS:
        if not Path(known.config).is_file():
            raise UsageError(f"config file not found: {known.config}")
        # config tokens go first so that explicit flags override them
        argv = argv[:1] + read_config(known.config) + argv[1:]
    return build_parser().parse_args(argv)


# -- subcommands ---------------------------------------------------------------

def _decay(args) -> DecayConfig:
    return DecayConfig(args.halflife, args.epsilon)


def _load_events(args, manifest: Manifest):
    if not Path(args.events).is_file():
        raise UsageError(f"event file not found: {args.events}")
    manifest.add_input("events", args.events)
    for key in ("sort", "header", "delimiter", "closed"):
        manifest.add(key, getattr(args, key))
    events, universe = parse_events(args.events, delimiter=args.delimiter, header=args.header, sort=args.sort)
    population = NodeUniverse.closed(universe.users, universe.articles) if args.closed else None
    return events, population


def _add_decay(manifest: Manifest, decay: DecayConfig) -> None:
    manifest.add("halflife", float(decay.halflife))
    manifest.add("epsilon", float(decay.prune_epsilon))


def cmd_simulate(args, out: Path) -> list[Path]:
    cfg = SimConfig(args.n_users, args.n_articles, args.theta, args.n_events, args.time_step,
                    _decay(args), args.seed)
    manifest = Manifest("simulate")
    for k, v in cfg.echo().items():
        manifest.add(k, v)
    sim = simulate(cfg)
    manifest.write(out)
    path = out / "events.csv"
    write_events(sim.events, path, comments=[manifest.header])
    return [out / "manifest.txt", path]


def cmd_compute(args, out: Path) -> list[Path]:
    manifest = Manifest("compute")
    events, population = _load_events(args, manifest)
    decay = _decay(args)
    _add_decay(manifest, decay)
    cfg = SampleConfig(args.p, args.m, args.seed)
    for k, v in cfg.echo().items():
        manifest.add(k, v)
    table = replay(events, cfg, decay, population)
    manifest.write(out)
    path = out / "observations.csv"
    table.write(path, comments=[manifest.header])
    return [out / "manifest.txt", path]


def _load_table(args, manifest: Manifest) -> ObservationTable:
    if not Path(args.table).is_file():
        raise UsageError(f"table file not found: {args.table}")
    manifest.add_input("table", args.table)
    return ObservationTable.read(args.table)


def cmd_fit(args, out: Path) -> list[Path]:
    manifest = Manifest("fit")
    table = _load_table(args, manifest)
    manifest.add("ridge", float(args.ridge))
    result = fit(table, ridge=args.ridge)
    manifest.write(out)
    path = out / "fit.csv"
    result.write(path, comments=[manifest.header])
    if args.report:
        print(result.report())
    else:
        result.write(sys.stdout)
    return [out / "manifest.txt", path]


def cmd_experiment(args, out: Path) -> list[Path]:
    manifest = Manifest("experiment")
    events, population = _load_events(args, manifest)
    decay = _decay(args)
    _add_decay(manifest, decay)
    spec = DesignSpec(args.design, args.p, args.m, args.replicates, args.seed)
    for k, v in spec.echo().items():
        manifest.add(k, v)
    result = run_design(events, spec, decay, population, workers=args.workers)
    manifest.write(out)
    result.write(out, comments=[manifest.header])
    n_failed = sum(not r.ok for r in result.replicates)
    if n_failed:
        log.warning("%d of %d replicates failed; see replicates.csv", n_failed, len(result.replicates))
    return [out / n for n in ("manifest.txt", "summary.csv", "replicates.csv", "boxplot.csv")]


def cmd_diagnose(args, out: Path) -> list[Path]:
    manifest = Manifest("diagnose")
    table = _load_table(args, manifest)
    manifest.add("threshold", float(args.threshold))
    density = density_diagnostic(table, args.threshold)
    cov = covariance_diagnostic(table)
    manifest.write(out)
    paths = [out / "manifest.txt", out / "density.csv", out / "covariance.csv"]
    with open(paths[1], "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {manifest.header}\n")
        density.write(fh)
    with open(paths[2], "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {manifest.header}\n")
        write_covariance(cov, fh)
    return paths


COMMANDS = {"simulate": cmd_simulate, "compute": cmd_compute, "fit": cmd_fit,
            "experiment": cmd_experiment, "diagnose": cmd_diagnose}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), USAGE_EXIT)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail("usage", str(exc), USAGE_EXIT)
    except EventFormatError as exc:
        return _fail("input", str(exc), FAILURE_EXIT)
    except EstimationError as exc:
        return _fail(type(exc).__name__, str(exc), FAILURE_EXIT)
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), FAILURE_EXIT)
    return 0


if __name__ == "__main__":
    sys.exit(main())
