import argparse
import logging
import sys

from . import COMMAND_CLASS_MAPPINGS, COMMAND_DISPLAY_NAME_MAPPINGS, __version__
from .errors import ArgumentError, CoraError
from .helper.schema import add_arguments, validate_inputs

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_FAILURE = 3

GLOBAL_FLAGS = ("seed", "out_dir", "threads", "verbose", "quiet", "command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cora", description="Coalition-level credit assignment for cooperative MARL")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out-dir", dest="out_dir", default=None, help="run directory")
    parser.add_argument("--threads", type=int, default=None, help="torch intra-op threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, cls in COMMAND_CLASS_MAPPINGS.items():
        cmd = sub.add_parser(name, help=COMMAND_DISPLAY_NAME_MAPPINGS.get(name, name))
        add_arguments(cmd, cls.INPUT_TYPES())
    return parser


def _hidden_values(input_types: dict, args: argparse.Namespace) -> dict:
    source = {"SEED": args.seed, "OUT_DIR": args.out_dir, "THREADS": args.threads}
    return {key: source[marker] for key, marker in input_types.get("hidden", {}).items() if marker in source}


def run_command(name: str, args: argparse.Namespace) -> str:
    cls = COMMAND_CLASS_MAPPINGS[name]
    input_types = cls.INPUT_TYPES()
    values = {k: v for k, v in vars(args).items() if k not in GLOBAL_FLAGS}
    kwargs = validate_inputs(input_types, values)
    kwargs.update(_hidden_values(input_types, args))
    (out,) = getattr(cls(), cls.FUNCTION)(**kwargs)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)

    try:
        out = run_command(args.command, args)
    except ArgumentError as e:
        logging.error(str(e))
        return EXIT_ARGUMENT
    except CoraError as e:
        logging.error(str(e))
        return EXIT_FAILURE
    except Exception as e:
        logging.exception(f"[{args.command}] unexpected failure: {e}")
        return EXIT_FAILURE
    sys.stdout.write(out)
    return EXIT_OK
