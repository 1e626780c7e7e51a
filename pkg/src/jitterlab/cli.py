"""jitterlab command line: ``flow``, ``jitter`` and ``sweep`` experiments.

Every option may also come from a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes).  Explicit flags win over the
file, and the file wins over the subcommand defaults.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import report
from .descent import DescentParams
from .experiment import (
    FLOW_DEFAULTS,
    JITTER_DEFAULTS,
    SWEEP_TAUS,
    EnsembleConfig,
    SweepConfig,
    run_ensemble,
    run_sweep,
)
from .exprfield import ExprDomainError, ExprField, ExprSyntaxError
from .landscape import BuiltinField, DegenerateRegionError, NonSeparableFieldError, Region, grid_for

log = logging.getLogger("jitterlab")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")


# name -> (type, help); all default to None so precedence can be resolved afterwards
_SHARED = {
    "function": (str, "landscape expression in x and y (default: the builtin two-well field)"),
    "xmin": (float, "study region lower x (default -1)"),
    "xmax": (float, "study region upper x (default 1)"),
    "ymin": (float, "study region lower y (default -1.25)"),
    "ymax": (float, "study region upper y (default 1.25)"),
    "trials": (int, "number of trials"),
    "steps": (int, "descent steps per trial"),
    "seed": (int, "base random seed (default 0)"),
    "out": (str, "output directory (default: current directory)"),
    "workers": (int, "worker processes; results do not depend on it (default 1)"),
}
_FLOW = {
    "tau": (float, "step size (default 0.001)"),
    "grad-tol": (float, "stop once the gradient norm falls to this (default 1e-6)"),
    "max-steps": (int, "step cap (default 20000; overrides --steps)"),
}
_JITTER = {
    "tau": (float, "step size (default 0.01)"),
    "eps": (float, "noise standard deviation per coordinate (default 0.05)"),
}
_SWEEP = {
    "tau-list": (_float_list, "comma-separated step sizes (default 0.001,0.01,0.02,0.04,0.06)"),
    "eps-min": (float, "smallest noise level (default 0)"),
    "eps-max": (float, "largest noise level (default 0.3)"),
    "eps-count": (int, "number of noise levels (default 31)"),
}
_COMMANDS = {"flow": _FLOW, "jitter": _JITTER, "sweep": _SWEEP}

_BASE_DEFAULTS = dict(function=None, xmin=-1.0, xmax=1.0, ymin=-1.25, ymax=1.25, seed=0, out=".", workers=1)
_DEFAULTS = {
    "flow": dict(_BASE_DEFAULTS, trials=10_000, tau=FLOW_DEFAULTS["tau"], grad_tol=FLOW_DEFAULTS["grad_tol"],
                 max_steps=None, steps=None),
    "jitter": dict(_BASE_DEFAULTS, trials=10_000, steps=JITTER_DEFAULTS["max_steps"],
                   tau=JITTER_DEFAULTS["tau"], eps=0.05),
    "sweep": dict(_BASE_DEFAULTS, trials=500, steps=500, tau_list=list(SWEEP_TAUS),
                  eps_min=0.0, eps_max=0.3, eps_count=31),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jitterlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "flow": "noiseless small-step descent approximating gradient flow",
        "jitter": "descent with Gaussian jitter at one (tau, eps)",
        "sweep": "grid of ensembles over step sizes and noise levels",
    }
    parser.commands = {}
    for name, extra in _COMMANDS.items():
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        parser.commands[name] = p
        p.add_argument("--config", help="key = value file; explicit flags override it")
        for key, (typ, hlp) in {**_SHARED, **extra}.items():
            p.add_argument(f"--{key}", type=typ, default=None, help=hlp)
    return parser


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lstrip("-")] = value
    return values


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Merge defaults < config file < explicit flags into one settings dict."""
    options = {**_SHARED, **_COMMANDS[args.command]}
    settings = dict(_DEFAULTS[args.command])
    if args.config:
        try:
            raw = read_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(f"config: {exc}")
        for key, value in raw.items():
            name = key.replace("_", "-")
            if name not in options:
                parser.error(f"config: unknown key {key!r} for '{args.command}'")
            typ = options[name][0]
            try:
                settings[name.replace("-", "_")] = typ(value)
            except (ValueError, argparse.ArgumentTypeError):
                parser.error(f"config: bad value for {key}: {value!r}")
    for name in options:
        attr = name.replace("-", "_")
        v = getattr(args, attr)
        if v is not None:
            settings[attr] = v
    return settings


def _validate(cmd: str, s: dict, parser) -> None:
    def need(cond, msg):
        if not cond:
            parser.error(msg)

    need(s["xmin"] < s["xmax"] and s["ymin"] < s["ymax"], "region must satisfy xmin < xmax and ymin < ymax")
    need(s["trials"] >= 1, "--trials must be at least 1")
    need(s["workers"] >= 1, "--workers must be at least 1")
    need(s.get("steps") is None or s["steps"] >= 1, "--steps must be at least 1")
    if cmd == "flow":
        need(s["tau"] > 0, "--tau must be positive")
        need(s["grad_tol"] >= 0, "--grad-tol must be nonnegative")
        need(s["max_steps"] >= 1, "--max-steps must be at least 1")
    elif cmd == "jitter":
        need(s["tau"] > 0, "--tau must be positive")
        need(s["eps"] >= 0, "--eps must be nonnegative (it is a standard deviation)")
    else:
        need(len(s["tau_list"]) > 0 and all(t > 0 for t in s["tau_list"]), "--tau-list needs positive step sizes")
        need(s["eps_min"] >= 0, "--eps-min must be nonnegative")
        need(s["eps_max"] >= s["eps_min"], "--eps-max must not be below --eps-min")
        need(s["eps_count"] >= 1, "--eps-count must be at least 1")


def _field(source: str | None):
    return BuiltinField() if not source else ExprField(source)


def run(cmd: str, s: dict) -> list[str]:
    """Execute a resolved command; returns the summary lines it printed."""
    field = _field(s["function"])
    region = Region(s["xmin"], s["xmax"], s["ymin"], s["ymax"])
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    grid = grid_for(field, region)

    if cmd == "sweep":
        config = SweepConfig(
            tau_list=tuple(s["tau_list"]),
            eps_grid=(s["eps_min"], s["eps_max"], s["eps_count"]),
            trials_per_point=s["trials"],
            steps_per_trial=s["steps"],
            base_seed=s["seed"],
            region=region,
            field=field,
        )
        log.info("sweep: %d step sizes x %d noise levels", len(config.tau_list), s["eps_count"])
        rows = run_sweep(config, workers=s["workers"], grid=grid)
        report.write_summary_csv(rows, out / "summary.csv")
        report.write_text(out / "sweep.svg", report.render_sweep_svg(rows))
        return [r.summary_line() for r in rows]

    if cmd == "flow":
        params = DescentParams(tau=s["tau"], eps=0.0, max_steps=s["max_steps"], grad_tol=s["grad_tol"])
    else:
        params = DescentParams(tau=s["tau"], eps=s["eps"], max_steps=s["steps"])
    config = EnsembleConfig(params, s["trials"], s["seed"], region, field)
    log.info("%s: %d trials, tau=%g eps=%g", cmd, config.trials, params.tau, params.eps)
    outcomes, stats = run_ensemble(config, workers=s["workers"], grid=grid)
    report.write_trials_csv(outcomes, out / "trials.csv")
    report.write_summary_csv(stats, out / "summary.csv")
    report.write_histogram_csv(grid, stats.counts, out / "histogram.csv")
    title = f"{cmd}: tau={params.tau:g} eps={params.eps:g} trials={config.trials}"
    report.write_text(out / "histogram.svg", report.render_histogram_svg(grid, stats.counts, title))
    return [stats.summary_line()]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    sub = parser.commands[args.command]
    settings = resolve(args, sub)
    if args.command == "flow" and settings["max_steps"] is None:
        settings["max_steps"] = settings["steps"] or FLOW_DEFAULTS["max_steps"]
    _validate(args.command, settings, sub)
    try:
        lines = run(args.command, settings)
    except ExprSyntaxError as exc:
        print(f"jitterlab: invalid --function: {exc.pretty()}", file=sys.stderr)
        return 1
    except (ExprDomainError, NonSeparableFieldError, DegenerateRegionError, OSError, ValueError) as exc:
        print(f"jitterlab: {exc}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
