import argparse
from typing import Optional, Tuple

from pathogan.commands import add_config_arguments, config_from_args
from pathogan.errors import ConfigError
from pathogan.services.netspec import describe, parse_netspec, symbol_map

ROLES = ("encoder", "decoder", "zb", "discriminator")


def register(subparsers) -> None:
    parser = subparsers.add_parser("netspec", help="inspect architecture strings")
    actions = parser.add_subparsers(dest="action", required=True)
    describe_parser = actions.add_parser("describe", help="print the parsed layers and the shape trace")
    describe_parser.add_argument("text", help=f"architecture string, or one of {', '.join(ROLES)} for the configured one")
    describe_parser.add_argument("--input", type=str, default=None, help="input shape C,H,W (or F for a vector)")
    describe_parser.add_argument(
        "--symbol", action="append", default=[], metavar="NAME=VALUE", help="override a symbol (repeatable)"
    )
    add_config_arguments(describe_parser)
    describe_parser.set_defaults(handler=cmd_netspec_describe)


def parse_shape(text: Optional[str]) -> Optional[Tuple[int, ...]]:
    if text is None:
        return None
    try:
        shape = tuple(int(part) for part in text.split(","))
    except ValueError as e:
        raise ConfigError(f"--input '{text}' is not a comma separated list of integers") from e
    if len(shape) not in (1, 3):
        raise ConfigError(f"--input '{text}' must be C,H,W or F")
    return shape


def cmd_netspec_describe(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    text = getattr(config.arch, args.text) if args.text in ROLES else args.text
    spec = parse_netspec(text, symbol_map(args.symbol, config.symbols()))
    print(spec.pretty())
    print(describe(spec, parse_shape(args.input)))
    return 0
