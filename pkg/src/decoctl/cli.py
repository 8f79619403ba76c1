"""``decoctl`` command line.

Exit codes: 0 success, 2 invalid config or arguments, 3 numerical refusal.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, NumericalRefusal
from .figures import RECIPES, figure
from .output import manifest, now, write_csv, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFUSED = 3

log = logging.getLogger("decoctl")


def _parser():
    p = argparse.ArgumentParser(prog="decoctl", description="Controlled decoherence engine.")
    p.add_argument("--version", action="version", version=f"decoctl {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "run the config's mode"),
        ("oracle", "compare the engine against the exact or Monte-Carlo oracle"),
        ("optimize", "optimise pulse phases with the config's optimize block"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="JSON or TOML scenario file")
        s.add_argument("--out", help="output directory (overrides output.dir)")
    f = sub.add_parser("figure", help="write the dataset behind a figure")
    f.add_argument("name", help=", ".join(RECIPES))
    f.add_argument("--out", default=".", help="output directory")
    return p


def run_figure(name, out_dir):
    started = now()
    params, tables = figure(name)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    mname = f"{name}.json"
    files = []
    for suffix, tab in tables.items():
        fname = f"{name}_{suffix}.csv" if suffix else f"{name}.csv"
        write_csv(root / fname, tab, params, mname)
        files.append({"file": fname, "columns": tab.names, "rows": len(tab)})
    man = manifest(params, 0, started, {"dt": "min(tau, t_c)/20 aligned to tau", "memory_time": "8 t_c (decay), full (dephasing)"},
                   files, extra={"command": "figure", "figure": name})
    return write_json(root / mname, man)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "figure":
            if args.name not in RECIPES:
                print(f"decoctl: unknown figure {args.name!r}; choose from {', '.join(RECIPES)}", file=sys.stderr)
                return EXIT_CONFIG
            path = run_figure(args.name, args.out)
        else:
            from .runner import execute

            cfg = load_config(args.config)
            path = execute(cfg, args.command, args.out)
    except ConfigError as exc:
        print(f"decoctl: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalRefusal as exc:
        print(f"decoctl: numerical refusal: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
