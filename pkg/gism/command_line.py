import logging
import sys
from argparse import ArgumentParser, ArgumentTypeError

from .config import generate_config_template, load_config, validate_config
from .entities import WeightConvention
from .exceptions import GismError
from .scene_io import write_outputs
from .simulation import Simulation


__all__ = ["main", "run"]


logger = logging.getLogger(__name__)

_LOG_HANDLER_NAME = "gism-cli"


def _reflection(value):
    try:
        element_id, coords = value.split(":", 1)
        point = [float(x) for x in coords.split(",")]
        element_id = int(element_id)
    except ValueError:
        raise ArgumentTypeError(f"expected ID:x,y[,z], got {value!r}") from None
    if len(point) not in (2, 3):
        raise ArgumentTypeError(f"expected 2 or 3 coordinates, got {len(point)}")
    return element_id, point


def _parse_args():
    parent_parser = ArgumentParser()
    parent_parser.add_argument("-v", "--verbose", action="store_true", help="enable debug log messages")

    run_parser = ArgumentParser(parents=[parent_parser], add_help=False)
    run_parser.add_argument("--scene", help="path to JSON scene file")
    run_parser.add_argument("--out", help="output directory")
    run_parser.add_argument(
        "--config", action="append", default=[], help="path to gism config file (may be repeated)", metavar="PATH"
    )
    run_parser.add_argument("--max-order", type=int, help="maximum reflection order")
    run_parser.add_argument("--lattice-M", type=int, dest="lattice_M", help="lattice density for curved patches")
    run_parser.add_argument("--fs", type=float, help="output sample rate in Hz")
    run_parser.add_argument("--duration", type=float, help="output duration in seconds")
    run_parser.add_argument(
        "--excitation", help='"impulse" (default) or a WAV file to convolve with the response', metavar="SOURCE"
    )
    run_parser.add_argument(
        "--weight-convention",
        choices=[str(c) for c in WeightConvention],
        help="quadrature weight of curved-patch samples",
    )
    run_parser.add_argument("--threads", type=int, help="worker threads for path enumeration")

    parser = ArgumentParser(
        description="Image-source room impulse responses for planar and curved boundaries",
        parents=[parent_parser],
        add_help=False,
    )

    subparsers = parser.add_subparsers(dest="command", help="selected command")
    subparsers.required = True

    subparsers.add_parser(
        "simulate", description="Run the full simulation and write all outputs", parents=[run_parser], add_help=False
    )
    subparsers.add_parser(
        "sources", description="Enumerate reflection paths and write paths.jsonl", parents=[run_parser], add_help=False
    )

    check_parser = subparsers.add_parser(
        "check-path",
        description="Classify a reflection path from the scene's source to its receiver",
        parents=[run_parser],
        add_help=False,
    )
    check_parser.add_argument(
        "--reflection",
        type=_reflection,
        action="append",
        default=[],
        help="reflection point on a boundary element, in order (may be repeated)",
        metavar="ID:x,y[,z]",
    )

    subparsers.add_parser(
        "generate-config", description="Print config file template to stdout", parents=[parent_parser], add_help=False
    )

    return parser.parse_args()


def main():
    args = _parse_args()

    _configure_logging(args.verbose)

    if args.command == "generate-config":
        return _handle_generate_config(args)

    try:
        config = _build_config(args)
    except GismError as e:
        _print_error(f"{e.category} error: {e}")
        return e.exit_code

    if args.command == "simulate":
        return run(config)
    elif args.command == "sources":
        return run(config, render=False)
    elif args.command == "check-path":
        return _handle_check_path(args, config)


def _configure_logging(verbose):
    gism_logger = logging.getLogger("gism")
    # At most one CLI handler, bound to the current sys.stderr.
    for stale in [h for h in gism_logger.handlers if h.get_name() == _LOG_HANDLER_NAME]:
        gism_logger.removeHandler(stale)

    handler = logging.StreamHandler()
    handler.set_name(_LOG_HANDLER_NAME)
    level = logging.DEBUG if verbose else logging.INFO
    handler.setLevel(level)
    gism_logger.setLevel(level)

    formatter = logging.Formatter("%(asctime)s - %(levelname)-7s - %(name)s - %(message)s")
    handler.setFormatter(formatter)

    gism_logger.addHandler(handler)


def _build_config(args):
    config = load_config(args.config)

    if args.scene:
        config.scene_path = args.scene
    if args.out:
        config.out_dir = args.out

    engine, render = config.engine, config.render
    for owner, name, value in (
        (engine, "max_order", args.max_order),
        (engine, "lattice_M", args.lattice_M),
        (engine, "weight_convention", args.weight_convention),
        (engine, "threads", args.threads),
        (render, "fs", args.fs),
        (render, "duration", args.duration),
        (render, "excitation", args.excitation),
    ):
        if value is not None:
            setattr(owner, name, value)

    return validate_config(config)


def run(config, render=True):
    """
    Runs the pipeline described by ``config`` and writes its outputs.  Returns the exit status.
    """
    try:
        simulation = Simulation.from_config(config)
        result = simulation.run(render=render)
        write_outputs(
            result.taps if render else None,
            result.signal,
            result.path_records(),
            config.out_dir,
            simulation.scene.output.formats,
        )
    except GismError as e:
        _print_error(f"{e.category} error: {e}")
        return e.exit_code
    except Exception:
        logger.exception("Fatal error")
        return 1

    print(result.summary())
    return 0


def _handle_check_path(args, config):
    try:
        report = Simulation.from_config(config).classify(args.reflection)
    except GismError as e:
        _print_error(f"{e.category} error: {e}")
        return e.exit_code
    except Exception:
        logger.exception("Fatal error")
        return 1

    print(report)
    return 0


def _handle_generate_config(args):
    sys.stdout.write(generate_config_template())

    return 0


def _print_error(*args, **kwargs):
    print(*args, **kwargs, file=sys.stderr)
