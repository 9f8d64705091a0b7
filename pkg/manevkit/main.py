#!/usr/bin/env python3
import argparse
import logging
import sys

from manevkit import settings
from manevkit.commands import COMMANDS, run_command
from manevkit.config import load_config
from manevkit.exc import ConfigError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(settings.EXIT_CONFIG, "%s: error: %s\n" % (self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="manev-kit",
        description="Ground states, self-similar blow-up and particle dynamics for the "
                    "Vlasov-Manev system.")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--out", help="output directory (overrides [output] directory)")
    parser.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides [dynamics] seed)")
    parser.add_argument("--debug", action="store_true", help="log at DEBUG level")
    return parser


def main(argv=sys.argv[1:]):
    # configure logging
    logging_config = {"level": logging.INFO,
                      "format": "%(levelname)-8s %(asctime)15s [%(filename)s@%(lineno)-3s] %(message)s"}
    # check for debug parameter
    if "--debug" in argv:
        settings.DEBUG = True
        logging_config["level"] = logging.DEBUG
    logging.basicConfig(**logging_config)

    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_seed(args.seed)
        if args.out:
            config = config.with_output(args.out)
        config = config.with_command(args.command)
    except ConfigError as err:
        logging.error("invalid config: %s", err)
        return settings.EXIT_CONFIG

    code = run_command(args.command, config)
    logging.info("%s finished with exit code %d", args.command, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
