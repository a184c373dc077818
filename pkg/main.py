#!/usr/bin/env python3
"""
Aggregation-diffusion free-energy toolkit
Batch entry point
"""

import argparse
import sys
from typing import Dict, List, Tuple

from src.utils.logger import setup_logging
from src.utils.error_handler import EXIT_VALIDATION, error_handler
from src.utils.monitoring import performance_monitor
from src.cli.config_parser import COMMANDS, parse_config
from src.cli.runner import run
from config.settings import Config


APP_FLAGS = ('--config', '--threads', '--log-level', '--help')


def split_arguments(argv: List[str]) -> Tuple[List[str], List[str]]:
    """Separate the application flags from `--key value` config overrides.

    Overrides are pulled out before argparse sees the command line, so a
    separate override value is never taken for the positional command.
    """
    app_args, override_args = [], []
    position = 0
    while position < len(argv):
        argument = argv[position]
        name = argument.split('=', 1)[0]
        takes_value = '=' not in argument and position + 1 < len(argv)
        if argument.startswith('--') and name not in APP_FLAGS:
            target = override_args
        else:
            target = app_args
            takes_value = takes_value and name in APP_FLAGS and name != '--help'
        target.append(argument)
        if takes_value:
            target.append(argv[position + 1])
            position += 1
        position += 1
    return app_args, override_args


def parse_overrides(arguments: List[str]) -> Dict[str, str]:
    """`--kernel.beta=-0.5` style flags as config overrides"""
    overrides = {}
    pending = None
    for argument in arguments:
        if pending is not None:
            overrides[pending] = argument
            pending = None
        elif argument.startswith('--') and '=' in argument:
            key, value = argument[2:].split('=', 1)
            overrides[key] = value
        elif argument.startswith('--'):
            pending = argument[2:]
        else:
            raise ValueError(f"unexpected argument {argument!r}")
    if pending is not None:
        raise ValueError(f"flag --{pending} needs a value")
    return overrides


class FreeEnergyApp:
    def __init__(self, log_level: str = Config.LOG_LEVEL):
        self.logger = setup_logging(log_level, Config.LOG_DIR)

    def execute(self, config_text: str, overrides: Dict[str, str]) -> int:
        """Parse, validate and run one command"""
        try:
            config = parse_config(config_text, overrides)
        except Exception as e:
            error_handler.handle_processing_error("parse_config", e)
            print(error_handler.format_error_line(e), file=sys.stderr)
            return error_handler.exit_code_for(e)

        status = run(config)

        for key, record in error_handler.get_error_summary().items():
            self.logger.warning(f"{key}: {record['count']} error(s), last: {record['error_message']}")

        summary = performance_monitor.get_performance_summary()
        self.logger.info(f"Finished {config.command} with status {status} "
                         f"in {summary['uptime_formatted']} (rss {summary['memory_rss_mb']:.0f} MB)")
        return status


def main(argv: List[str] = None) -> int:
    """Main entry point"""
    parser = argparse.ArgumentParser(description='Aggregation-diffusion free-energy toolkit')
    parser.add_argument('command', nargs='?', choices=COMMANDS,
                        help='Command to run (overrides `command` in the config file)')
    parser.add_argument('--config', help='Path to a flat `key = value` config file')
    parser.add_argument('--threads', type=int, default=Config.THREADS,
                        help='Worker thread cap (default: machine parallelism)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default=Config.LOG_LEVEL, help='Logging level')

    app_args, override_args = split_arguments(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(app_args)
    Config.THREADS = max(1, args.threads)

    try:
        overrides = parse_overrides(override_args)
    except ValueError as e:
        print(f"config_error,{e}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command:
        overrides['command'] = args.command

    config_text = ''
    if args.config:
        try:
            with open(args.config, encoding='utf-8') as handle:
                config_text = handle.read()
        except OSError as e:
            print(f"config_error,cannot read {args.config}: {e}".replace('\n', ' '), file=sys.stderr)
            return EXIT_VALIDATION

    app_instance = FreeEnergyApp(args.log_level)
    return app_instance.execute(config_text, overrides)


if __name__ == '__main__':
    sys.exit(main())
