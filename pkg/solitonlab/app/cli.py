# Soliton Lab - Command Line Interface
# argparse surface, exit codes and console output

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from rich.console import Console

from solitonlab.shared.config import ConfigLoader
from solitonlab.shared.errors import EXIT_CONFIG_ERROR, EXIT_OK, ConfigError, SolitonLabError
from solitonlab.shared.logging import console as error_console
from solitonlab.shared.logging import setup_logging

from .commands import Pipeline
from .report import print_verdicts

COMMANDS = ('ground-state', 'spectrum', 'fgr', 'simulate', 'track', 'report')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='solitonlab',
                                     description='Ground-state stability laboratory for the radial NLS')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    defaults = sub.add_parser('defaults', help='Print the complete effective config')
    defaults.add_argument('--config', type=Path, help='INI config (default: bundled reference)')
    defaults.add_argument('--bundled', help='Name of a bundled config instead of --config')
    defaults.add_argument('--override', action='append', default=[], metavar='SECTION.KEY=VALUE')

    for name in COMMANDS:
        command = sub.add_parser(name, help=f'Run the {name} pipeline')
        command.add_argument('--config', type=Path, help='INI config (default: bundled reference)')
        command.add_argument('--out', type=Path, help='Output directory (default: <output.directory>/<config hash>)')
        command.add_argument('--jobs', type=int, default=1, help='Worker processes for omega scans')
        command.add_argument('--override', action='append', default=[], metavar='SECTION.KEY=VALUE',
                             help='Patch a config value; repeatable')
        if name == 'track':
            command.add_argument('--bias-check', action='store_true',
                                 help='Repeat at half amplitude and report the fit bias')
    return parser


def _load(args: argparse.Namespace):
    loader = ConfigLoader()
    path = args.config
    if getattr(args, 'bundled', None):
        if args.bundled not in loader.list_bundled():
            raise ConfigError(f"unknown bundled config {args.bundled!r}; have {', '.join(loader.list_bundled())}")
        path = loader.default_config_path(args.bundled)
    return loader, loader.load(path, args.override)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG_ERROR if e.code else EXIT_OK
    setup_logging(args.verbose)
    out = Console()
    try:
        loader, config = _load(args)
        if args.command == 'defaults':
            out.print(loader.render(config), markup=False, highlight=False, end='')
            return EXIT_OK
        pipeline = Pipeline(config, args.out, args.jobs)
        handler = {
            'ground-state': pipeline.ground_state,
            'spectrum': pipeline.spectrum,
            'fgr': pipeline.fgr,
            'simulate': pipeline.simulate,
            'track': lambda: pipeline.track(bias_check=args.bias_check),
            'report': pipeline.report,
        }[args.command]
        result = handler()
    except SolitonLabError as e:
        error_console.print(f"[bold red]{type(e).__name__}[/]: {e}")
        return e.exit_code
    if result.verdicts:
        print_verdicts(result.verdicts, title=f"{result.name} ({pipeline.provenance.config_hash})", console=out)
    return result.exit_code


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
