"""Command-line entry point: ``qfcring <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness as H
from .config import load_config
from .errors import QFCError
from .photonstats import read_histogram

SWEEPS = {
    "fig4b": lambda cfg, a: H.run_fig4b(cfg),
    "fig4c": lambda cfg, a: H.run_fig4c(cfg, a.jobs),
    "fig4ef": lambda cfg, a: H.run_fig4ef(cfg),
    "fig5a": lambda cfg, a: H.run_fig5a(cfg, a.jobs),
    "fig5b": lambda cfg, a: H.run_fig5b(cfg, a.jobs),
    "fig5c": lambda cfg, a: H.run_fig5c(cfg),
    "figS2": lambda cfg, a: H.run_figS2(cfg, a.jobs),
    "budget": lambda cfg, a: H.run_budget(cfg, tuple(a.fractions) if a.fractions else None),
    "g2fit": lambda cfg, a: H.run_g2fit(cfg, a.seed, read_histogram(a.input) if a.input else None),
    "noise": lambda cfg, a: H.run_noise(cfg),
    "solve": lambda cfg, a: H.run_solve(cfg),
}

HELP = {
    "fig4b": "transmission dip with pumps off and on",
    "fig4c": "averaged efficiency against Lorentzian input linewidth",
    "fig4ef": "input, idler and remnant spectra for a Voigt input",
    "fig5a": "narrow-band efficiency across signal wavelengths",
    "fig5b": "narrow-band efficiency against pump mode separation",
    "fig5c": "thermal tuning of the resonance wavelength",
    "figS2": "averaged efficiency against converter loaded linewidth",
    "budget": "efficiency budget and extraction ceiling",
    "g2fit": "fit a coincidence histogram",
    "noise": "converter noise flux and signal-to-noise ratio",
    "solve": "one-shot steady state at the operating point",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="paper-device", help="config file or preset name (default: paper-device)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default: csv)")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep workers (default: 1)")

    parser = argparse.ArgumentParser(prog="qfcring", description="Microring frequency-converter model and figure sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SWEEPS:
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        if name == "budget":
            p.add_argument("--fractions", nargs=3, type=float, metavar=("BLUE", "RED", "HIGHER"),
                           help="measured idler fractions overriding the config")
        if name == "g2fit":
            p.add_argument("--input", help="histogram CSV with header tau_s,counts (default: synthetic from [g2])")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        result = SWEEPS[args.command](cfg, args)
        paths = H.emit(result, args.out, args.format, H.provenance(cfg, args.seed, args.command))
    except (QFCError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(H.jsonable(result.summary), indent=2, sort_keys=True))
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
