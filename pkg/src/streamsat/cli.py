"""Command line interface for streamsat.

Exit codes: 0 found or completed, 1 exhausted (no key anywhere) or failed
verification, 2 budget, deadline or interrupt, 10 usage error, 11 invalid
input, 12 I/O error.
"""
from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Iterator, List, Optional, Sequence

import click

from .cnf import Cnf
from .config import get_settings
from .decomposition import DecompositionSet, PredictionParams, Strategy, default_decomposition
from .dimacs import dump_dimacs, read_dimacs, write_dimacs
from .encoder import bind_keystream, encode
from .generators import BUILTIN_GENERATORS, Generator, format_key_hex, parse_bits, resolve_generator
from .logging_conf import configure_logging
from .runner import AttackConfig, AttackMode, AttackStatus, export_manifest, read_manifest
from .service import (
    attack_run,
    encode_run,
    format_grid,
    keystream_run,
    observed_keystream,
    optimize_run,
    parse_int_list,
    predict_run,
    prediction_grid,
    solve_run,
    verify_run,
)
from .solver import SolverConfig, Status

EXIT_FOUND = 0
EXIT_EXHAUSTED = 1
EXIT_BUDGET = 2
EXIT_USAGE = 10
EXIT_INPUT = 11
EXIT_IO = 12

DEFAULT_LENGTH = 144

logger = logging.getLogger("streamsat.cli")


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


class IOFailure(click.ClickException):
    exit_code = EXIT_IO


@contextmanager
def _translate_errors() -> Iterator[None]:
    try:
        yield
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except (ValueError, RuntimeError) as exc:
        raise InputError(str(exc)) from exc


def generator_options(func: Callable[..., Any]) -> Callable[..., Any]:
    func = click.option(
        "--spec",
        "spec_path",
        default=None,
        help="JSON generator spec file (overrides --gen)",
    )(func)
    func = click.option(
        "--gen",
        type=click.Choice(sorted(BUILTIN_GENERATORS)),
        default="a51",
        show_default=True,
        help="Built-in generator",
    )(func)
    return func


def keystream_options(func: Callable[..., Any]) -> Callable[..., Any]:
    func = click.option("--seed", default=None, type=int, help="Seed for sampling and random planted keys")(func)
    func = click.option("--key-hex", default=None, help="Plant this key and simulate its keystream")(func)
    func = click.option("--keystream", default=None, help="Observed keystream (0/1 string or 0x hex)")(func)
    func = click.option("--len", "length", default=DEFAULT_LENGTH, type=int, show_default=True)(func)
    return func


def _generator(gen: str, spec_path: Optional[str]) -> Generator:
    return resolve_generator(gen, spec_path, get_settings().spec_dir)


def _emit(lines: Sequence[str], out: Optional[str]) -> None:
    if out and out != "-":
        with _translate_errors():
            Path(out).write_text("".join(f"{line}\n" for line in lines))
        logger.info("Wrote report to %s", out)
        return
    for line in lines:
        click.echo(line)


def _scalar(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if value is None:
        return "-"
    return str(value)


def _report(data: dict) -> List[str]:
    lines = []
    for key, value in data.items():
        if isinstance(value, list):
            text = ",".join(_scalar(v) for v in value)
        else:
            text = _scalar(value)
        lines.append(f"{key}={text}")
    return lines


def _prediction_params(q: Optional[int], r: Optional[int], g_budget: Optional[float], seed: Optional[int]) -> PredictionParams:
    settings = get_settings()
    return PredictionParams(
        q=q if q is not None else settings.sample_size,
        r=r if r is not None else settings.exact_threshold,
        g_budget=g_budget,
        seed=seed if seed is not None else settings.seed,
    )


def _problem(
    gen: str,
    spec_path: Optional[str],
    cnf_path: Optional[str],
    keystream: Optional[str],
    key_hex: Optional[str],
    length: int,
    decomp: Optional[str],
    seed: Optional[int],
) -> tuple[Cnf, DecompositionSet]:
    if cnf_path:
        cnf = read_dimacs(cnf_path)
        decomposition = DecompositionSet.parse(decomp) if decomp else DecompositionSet(cnf.input_vars)
        return cnf, decomposition
    generator = _generator(gen, spec_path)
    bits, planted = observed_keystream(generator, length, keystream=keystream, key_hex=key_hex, seed=seed)
    if planted is not None:
        logger.info("Planted key %s", format_key_hex(generator, planted))
    cnf = bind_keystream(encode(generator, length), bits)
    decomposition = DecompositionSet.parse(decomp) if decomp else default_decomposition(generator)
    return cnf, decomposition


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging")
def cli(verbose: bool) -> None:
    """Invert keystream generators with SAT decompositions."""
    if sys.version_info < (3, 10):
        version = ".".join(map(str, sys.version_info[:3]))
        raise click.ClickException(f"Python 3.10+ is required to run streamsat (found {version}).")
    configure_logging(verbose)


@cli.command("keystream")
@generator_options
@click.option("--key-hex", required=True, help="Key as MSB-first hex, one group per register")
@click.option("--len", "length", default=DEFAULT_LENGTH, type=int, show_default=True)
@click.option("--hex", "as_hex", is_flag=True, help="Print byte-oriented output as hex")
def cmd_keystream(gen: str, spec_path: Optional[str], key_hex: str, length: int, as_hex: bool) -> None:
    """Print the keystream of a key."""
    with _translate_errors():
        generator = _generator(gen, spec_path)
        data = keystream_run(generator, key_hex, length)
    click.echo(data["hex"] if as_hex and "hex" in data else data["keystream"])


@cli.command("encode")
@generator_options
@keystream_options
@click.option("--out", default="-", show_default=True, help="DIMACS output path")
def cmd_encode(
    gen: str,
    spec_path: Optional[str],
    length: int,
    keystream: Optional[str],
    key_hex: Optional[str],
    seed: Optional[int],
    out: str,
) -> None:
    """Write the CNF of a generator, optionally bound to a keystream."""
    with _translate_errors():
        generator = _generator(gen, spec_path)
        bits = None
        if keystream is not None or key_hex is not None:
            bits, _ = observed_keystream(generator, length, keystream=keystream, key_hex=key_hex)
        enc, cnf = encode_run(generator, length, bits)
        if out == "-":
            click.echo(write_dimacs(cnf).decode("utf-8"), nl=False)
        else:
            dump_dimacs(cnf, out)
    logger.info("Encoded %d vars, %d clauses (%d aux)", cnf.num_vars, cnf.num_clauses, enc.aux_count)


def prediction_options(func: Callable[..., Any]) -> Callable[..., Any]:
    for option in reversed(
        [
            click.option("--cnf", "cnf_path", default=None, help="Annotated DIMACS file instead of a generator"),
            click.option("--decomp", default=None, help="Decomposition range list, e.g. 1-9,20-30,42-52"),
            click.option("--q", "q", default=None, type=int, help="Sample size"),
            click.option("--r", "r", default=None, type=int, help="Exact enumeration threshold"),
            click.option("--g-budget", default=None, type=float, help="Cumulative solver time bound (s)"),
            click.option("--workers", default=None, type=int, help="Worker count (default: STREAMSAT_WORKERS)"),
            click.option("--out", default=None, help="Write the report to this file"),
        ]
    ):
        func = option(func)
    return func


@cli.command("predict")
@generator_options
@keystream_options
@prediction_options
@click.option("--lengths", default=None, help="Keystream lengths for a grid report, e.g. 128,144,160")
@click.option("--powers", default=None, help="Decomposition powers for a grid report, e.g. 29-33")
def cmd_predict(
    gen: str,
    spec_path: Optional[str],
    length: int,
    keystream: Optional[str],
    key_hex: Optional[str],
    seed: Optional[int],
    cnf_path: Optional[str],
    decomp: Optional[str],
    q: Optional[int],
    r: Optional[int],
    g_budget: Optional[float],
    workers: Optional[int],
    out: Optional[str],
    lengths: Optional[str],
    powers: Optional[str],
) -> None:
    """Predict the total solving time of a decomposition family."""
    solver_config = SolverConfig()
    with _translate_errors():
        params = _prediction_params(q, r, g_budget, seed)
        workers = workers or get_settings().workers
        if lengths or powers:
            generator = _generator(gen, spec_path)
            length_list = parse_int_list(lengths) if lengths else [length]
            base = DecompositionSet.parse(decomp) if decomp else default_decomposition(generator)
            power_list = parse_int_list(powers) if powers else [base.power]
            bits, _ = observed_keystream(
                generator, max(length_list), keystream=keystream, key_hex=key_hex, seed=params.seed
            )
            grid = prediction_grid(
                generator, bits, base, power_list, length_list, params, solver_config, workers=workers
            )
            _emit(format_grid(grid), out)
            defined = all(row["T"] is not None for row in grid["rows"])
        else:
            cnf, decomposition = _problem(
                gen, spec_path, cnf_path, keystream, key_hex, length, decomp, params.seed
            )
            row = predict_run(cnf, decomposition, params, solver_config, workers=workers)
            _emit(_report(row), out)
            defined = row["T"] is not None
    raise SystemExit(EXIT_FOUND if defined else EXIT_BUDGET)


@cli.command("optimize")
@generator_options
@keystream_options
@prediction_options
@click.option(
    "--strategy",
    type=click.Choice([s.value for s in Strategy]),
    default=Strategy.REMOVE_LAST.value,
    show_default=True,
)
@click.option("--patience", default=3, type=int, show_default=True)
@click.option("--trace-csv", default=None, help="Write the minimisation trace as CSV")
def cmd_optimize(
    gen: str,
    spec_path: Optional[str],
    length: int,
    keystream: Optional[str],
    key_hex: Optional[str],
    seed: Optional[int],
    cnf_path: Optional[str],
    decomp: Optional[str],
    q: Optional[int],
    r: Optional[int],
    g_budget: Optional[float],
    workers: Optional[int],
    out: Optional[str],
    strategy: str,
    patience: int,
    trace_csv: Optional[str],
) -> None:
    """Shrink a decomposition set while the prediction improves."""
    with _translate_errors():
        params = _prediction_params(q, r, g_budget, seed)
        workers = workers or get_settings().workers
        cnf, decomposition = _problem(
            gen, spec_path, cnf_path, keystream, key_hex, length, decomp, params.seed
        )
        data, trace = optimize_run(
            cnf, decomposition, strategy, params, SolverConfig(), patience=patience, workers=workers
        )
        if trace_csv:
            trace.save(trace_csv)
            logger.info("Wrote trace to %s", trace_csv)
    _emit(_report(data), out)


def attack_options(func: Callable[..., Any]) -> Callable[..., Any]:
    for option in reversed(
        [
            click.option("--decomp", default=None, help="Decomposition range list"),
            click.option("--k", "k", default=None, type=int, help="Batch prefix length"),
            click.option("--workers", default=None, type=int, help="Worker count"),
            click.option("--deadline", default=None, type=float, help="Overall time limit (s)"),
            click.option("--manifest", default=None, help="Run only the batches of this manifest"),
            click.option("--timings-csv", default=None, help="Write per-batch timings as CSV"),
            click.option("--out", default=None, help="Write the report to this file"),
        ]
    ):
        func = option(func)
    return func


def _attack(
    mode: AttackMode,
    gen: str,
    spec_path: Optional[str],
    length: int,
    keystream: Optional[str],
    key_hex: Optional[str],
    seed: Optional[int],
    decomp: Optional[str],
    k: Optional[int],
    workers: Optional[int],
    deadline: Optional[float],
    manifest: Optional[str],
    timings_csv: Optional[str],
    out: Optional[str],
) -> None:
    settings = get_settings()
    with _translate_errors():
        generator = _generator(gen, spec_path)
        bits, planted = observed_keystream(
            generator, length, keystream=keystream, key_hex=key_hex, seed=seed if seed is not None else settings.seed
        )
        if planted is not None:
            logger.info("Planted key %s", format_key_hex(generator, planted))
        batches = None
        if manifest:
            given = DecompositionSet.parse(decomp) if decomp else None
            decomposition, batches = read_manifest(manifest, given)
        else:
            decomposition = DecompositionSet.parse(decomp) if decomp else default_decomposition(generator)
        config = AttackConfig(
            workers=workers or settings.workers,
            k=k,
            mode=mode,
            deadline=deadline,
            backend=settings.backend,
        )
        data, result = attack_run(generator, bits, decomposition, config, batches=batches)
        if timings_csv:
            with open(timings_csv, "w", newline="") as fh:
                result.write_timings_csv(fh)
    _emit(_report(data), out)
    if result.status is AttackStatus.FOUND:
        raise SystemExit(EXIT_FOUND)
    if result.status is AttackStatus.EXHAUSTED:
        raise SystemExit(EXIT_EXHAUSTED)
    raise SystemExit(EXIT_BUDGET)


@cli.command("attack")
@generator_options
@keystream_options
@attack_options
@click.option(
    "--mode",
    type=click.Choice([m.value for m in AttackMode]),
    default=AttackMode.FIRST.value,
    show_default=True,
)
def cmd_attack(mode: str, **kwargs: Any) -> None:
    """Recover the key by solving the decomposition family in parallel."""
    _attack(AttackMode(mode), **kwargs)


@cli.command("collisions")
@generator_options
@keystream_options
@attack_options
def cmd_collisions(**kwargs: Any) -> None:
    """Find every key that produces the keystream."""
    _attack(AttackMode.ALL, **kwargs)


@cli.command("manifest")
@generator_options
@click.option("--len", "length", default=DEFAULT_LENGTH, type=int, show_default=True)
@click.option("--decomp", default=None, help="Decomposition range list")
@click.option("--k", "k", required=True, type=int, help="Batch prefix length")
@click.option("--out", required=True, help="Manifest path")
def cmd_manifest(
    gen: str, spec_path: Optional[str], length: int, decomp: Optional[str], k: int, out: str
) -> None:
    """Export the batch list for out-of-process schedulers."""
    with _translate_errors():
        generator = _generator(gen, spec_path)
        decomposition = DecompositionSet.parse(decomp) if decomp else default_decomposition(generator)
        enc = encode(generator, length)
        decomposition.validate(enc.cnf)
        count = export_manifest(decomposition, k, enc, out)
    click.echo(f"batches={count}")


@cli.command("solve")
@click.option("--cnf", "cnf_path", required=True, help="Annotated DIMACS file")
@click.option("--decomp", default=None, help="Decomposition range list fixed by --cell")
@click.option("--cell", default=None, help="Bits of the decomposition variables, e.g. 0110")
@click.option("--max-time", default=None, type=float, help="Solver time limit (s)")
@click.option("--max-conflicts", default=None, type=int, help="Solver conflict limit")
@click.option("--out", default=None, help="Write the report to this file")
def cmd_solve(
    cnf_path: str,
    decomp: Optional[str],
    cell: Optional[str],
    max_time: Optional[float],
    max_conflicts: Optional[int],
    out: Optional[str],
) -> None:
    """Solve a formula or a single cell and print the solver counters."""
    if (decomp is None) != (cell is None):
        raise click.UsageError("--decomp and --cell go together")
    with _translate_errors():
        cnf = read_dimacs(cnf_path)
        decomposition = DecompositionSet.parse(decomp) if decomp else DecompositionSet()
        bits = parse_bits(cell) if cell else ()
        config = SolverConfig(max_time=max_time, max_conflicts=max_conflicts)
        data, result = solve_run(cnf, decomposition, bits, config)
    _emit(_report(data) + result.stats.as_text().splitlines(), out)
    if result.status is Status.SAT:
        raise SystemExit(EXIT_FOUND)
    if result.status is Status.UNSAT:
        raise SystemExit(EXIT_EXHAUSTED)
    raise SystemExit(EXIT_BUDGET)


@cli.command("verify")
@generator_options
@click.option("--key-hex", required=True)
@click.option("--keystream", required=True)
def cmd_verify(gen: str, spec_path: Optional[str], key_hex: str, keystream: str) -> None:
    """Check that a key reproduces a keystream."""
    with _translate_errors():
        generator = _generator(gen, spec_path)
        data = verify_run(generator, key_hex, keystream)
    _emit(_report(data), None)
    raise SystemExit(EXIT_FOUND if data["verified"] else EXIT_EXHAUSTED)


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point mapping failures to the documented exit codes."""
    try:
        cli.main(args=argv, prog_name="streamsat", standalone_mode=False)
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_BUDGET
    except OSError as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_IO
    return EXIT_FOUND


if __name__ == "__main__":
    sys.exit(main())
