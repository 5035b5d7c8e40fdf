import sys
import types
import typing
import logging
import pathlib
import argparse
import importlib
import contextlib

import rbpredict
import rbpredict.commands

LOG_FORMAT = '%(levelname)s:%(name)s:%(message)s'


def get_log(name, level=logging.INFO) -> logging.Logger:
    """A logger writing to stderr; calling it again for the same name adds no second handler."""
    log = logging.getLogger(name)
    if not any(getattr(h, '_rbpredict', False) for h in log.handlers):
        handler = logging.StreamHandler(stream=sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._rbpredict = True
        log.addHandler(handler)
    for handler in log.handlers:
        handler.setLevel(level)
    log.setLevel(level)
    log.propagate = False
    return log


@contextlib.contextmanager
def log_level(logger: logging.Logger, level=logging.DEBUG):  # pragma: no cover
    """Run a block of code with `logger` and its handlers at `level`."""
    previous = logger.level, [h.level for h in logger.handlers]
    logger.setLevel(level)
    for h in logger.handlers:
        h.setLevel(level)
    try:
        yield logger
    finally:
        logger.setLevel(previous[0])
        for h, lvl in zip(logger.handlers, previous[1]):
            h.setLevel(lvl)


class Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def command_name(stem: str) -> str:
    return stem.replace('_', '-')


def iter_commands() -> typing.Iterator[typing.Tuple[str, types.ModuleType]]:
    """(name, module) of the subcommands in `rbpredict.commands`, sorted by name."""
    for p in sorted(
            pathlib.Path(rbpredict.commands.__file__).parent.glob('*.py'),
            key=lambda pp: pp.stem):
        if p.stem != '__init__':
            yield command_name(p.stem), importlib.import_module(
                '.{}'.format(p.stem), rbpredict.commands.__name__)


def main(args=None, catch_all=False, parsed_args=None, log=None):
    """
    :return: Exit code: 0 on success, 2 for invalid input, data or configuration, 1 for other \
    failures (if `catch_all`).
    """
    from rbpredict.cli_util import ParserError
    from rbpredict.errors import ValidationError

    parser = argparse.ArgumentParser(
        prog=rbpredict.__name__,
        description="{} {} predicts activity durations and costs of projects from their "
                    "precedence networks and resource assignments.".format(
                        rbpredict.__name__, rbpredict.__version__),
        epilog='See https://github.com/dlce-eva/rbpredict for details.',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('--log', default=None, help=argparse.SUPPRESS)
    parser.add_argument(
        '--log-level',
        default=logging.INFO,
        help='log level [ERROR {}|WARNING {}|INFO {}|DEBUG {}]'.format(
            logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG),
        type=lambda x: getattr(logging, x))
    subparsers = parser.add_subparsers(
        title="available commands",
        dest="_command",
        description='Run "{} COMMAND -h" to get help for a specific command.'.format(
            rbpredict.__name__),
        metavar="COMMAND")
    for name, mod in iter_commands():
        help = mod.__doc__
        subparser = subparsers.add_parser(
            name,
            help=help.strip().splitlines()[0],
            description=help,
            formatter_class=Formatter)
        mod.register(subparser)
        subparser.set_defaults(main=mod.run)

    args = parsed_args or parser.parse_args(args=args)

    if not hasattr(args, "main"):
        parser.print_help()
        return 1

    with contextlib.ExitStack() as stack:
        if log:
            args.log = log
        else:  # pragma: no cover
            args.log = stack.enter_context(
                log_level(get_log(rbpredict.__name__), level=args.log_level))
        try:
            return args.main(args) or 0
        except KeyboardInterrupt:  # pragma: no cover
            return 0
        except (ParserError, ValidationError) as e:
            print('{}: {}'.format(type(e).__name__, e), file=sys.stderr)
            return 2
        except Exception as e:
            if catch_all:
                print(e, file=sys.stderr)
                return 1
            raise


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main() or 0)
