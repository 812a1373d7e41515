"""Command line front end.

Exit codes: 0 success, 2 pattern or input parse failure, 3 pipeline
precondition failure (window, determinism, completeness), 4 configuration
cap exceeded, 5 not enough training data."""

from __future__ import annotations

import contextlib
import csv
import itertools
import json
import random
import sys
from collections import deque
from typing import IO, Callable, Iterator, Optional

import click

from . import compiler, forecast, serialize
from .algebra import Event, UnknownPredicate
from .automaton import (
    ConfigurationCapExceeded,
    DeterministicRunner,
    NoTransition,
    NotDeterministic,
    Sra,
    StreamEngine,
    UnverifiableDeterminism,
    to_dot,
)
from .compiler import (
    NotUnrolled,
    NotWindowed,
    RegisterCollision,
    WindowedInput,
)
from .forecast import InsufficientData, NotComplete, Pst, SymbolMap, symbolize
from .pattern import (
    Expr,
    PatternSyntaxError,
    UnknownRegister,
    Window,
    parse,
    to_streaming,
    unparse_pattern,
)


class MalformedInput(ValueError):
    """An input line that does not decode to a well-formed event."""


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


@contextlib.contextmanager
def _mapped_errors():
    try:
        yield
    except ConfigurationCapExceeded as exc:
        _fail(4, str(exc))
    except InsufficientData as exc:
        _fail(5, str(exc))
    except PatternSyntaxError as exc:
        _fail(2, str(exc))
    except (UnknownPredicate, UnknownRegister) as exc:
        _fail(2, str(exc.args[0] if exc.args else exc))
    except MalformedInput as exc:
        _fail(2, str(exc))
    except (
        WindowedInput,
        NotWindowed,
        NotUnrolled,
        NotDeterministic,
        NotComplete,
        RegisterCollision,
        UnverifiableDeterminism,
        NoTransition,
    ) as exc:
        _fail(3, str(exc))
    except ValueError as exc:
        _fail(3, str(exc))


# --- event ingestion ---------------------------------------------------


def _coerce_csv_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _event_from_json_line(line: str, lineno: int) -> Event:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"line {lineno}: invalid JSON ({exc.msg})")
    if not isinstance(record, dict) or not record:
        raise MalformedInput(f"line {lineno}: expected a non-empty JSON object")
    for name, value in record.items():
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise MalformedInput(
                f"line {lineno}: attribute {name!r} must be a string or number"
            )
    return Event.from_mapping(record)


def read_events(
    fp: IO[str],
    fmt: str = "jsonl",
    strict: bool = False,
    on_error: Optional[Callable[[str], None]] = None,
) -> Iterator[Event]:
    """Decode an event stream; every line becomes an event or a diagnostic.

    Malformed lines raise MalformedInput when strict, otherwise they are
    reported through on_error and skipped."""

    def report(exc: MalformedInput) -> None:
        if strict:
            raise exc
        if on_error is not None:
            on_error(str(exc))

    if fmt == "jsonl":
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                yield _event_from_json_line(line, lineno)
            except MalformedInput as exc:
                report(exc)
    elif fmt == "csv":
        reader = csv.reader(fp)
        header: Optional[list[str]] = None
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if header is None:
                header = [name.strip() for name in row]
                if len(set(header)) != len(header) or any(not h for h in header):
                    raise MalformedInput(f"line {lineno}: bad CSV header")
                continue
            if len(row) != len(header):
                report(
                    MalformedInput(
                        f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                    )
                )
                continue
            yield Event.of(**{h: _coerce_csv_value(v) for h, v in zip(header, row)})
    else:
        raise ValueError(f"unknown input format {fmt!r}")


def _open_input(path: str) -> IO[str]:
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8")


def _stderr_diagnostic(message: str) -> None:
    click.echo(message, err=True)


# --- pattern and stage helpers ------------------------------------------


def _load_pattern(path: str, window: Optional[int]):
    with open(path, "r", encoding="utf-8") as fp:
        text = fp.read()
    library, expr = parse(text)
    if window is not None:
        body = expr.body if isinstance(expr, Window) else expr
        expr = Window(body, window)
    return library, expr


def _build_stage(expr: Expr, stage: str) -> Sra:
    windowed = isinstance(expr, Window)
    if stage == "sra":
        if windowed:
            a = compiler.compile_expr(expr.body)
            return compiler.eliminate_epsilon(a)
        return compiler.eliminate_epsilon(compiler.compile_expr(expr))
    if stage == "nsra-unrolled":
        if not windowed:
            raise NotWindowed("unrolling needs a window (use 'within N' or --window)")
        return compiler.compile_windowed(expr)
    if stage == "dsra":
        return compiler.determinize(expr)
    if stage == "complement":
        return compiler.complete_and_complement(expr)
    raise ValueError(f"unknown stage {stage!r}")


def _emit_automaton(a: Sra, out: Optional[str], dot: Optional[str], stats: bool) -> None:
    doc = serialize.automaton_to_doc(a)
    if out:
        serialize.dump(doc, out)
    else:
        serialize.dump(doc, sys.stdout)
    if dot:
        with open(dot, "w", encoding="utf-8") as fp:
            fp.write(to_dot(a))
    if stats:
        parts = ", ".join(f"{k}={v}" for k, v in a.stats().items())
        click.echo(parts, err=True)


def _emit_record(record: dict) -> None:
    click.echo(json.dumps(record))


# --- commands -----------------------------------------------------------


@click.group()
@click.version_option(package_name="cerf")
def main() -> None:
    """Symbolic register automata for event recognition and forecasting."""


@main.command(name="compile")
@click.argument("pattern", type=click.Path(exists=True, dir_okay=False))
@click.option("--stage", type=click.Choice(["sra", "nsra-unrolled", "dsra", "complement"]),
              default="sra", show_default=True, help="How far to take the pipeline.")
@click.option("--window", type=click.IntRange(min=1), default=None,
              help="Window width; overrides any 'within' in the pattern.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Write the automaton document here instead of stdout.")
@click.option("--dot", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Also write a Graphviz rendering.")
@click.option("--stats", is_flag=True, help="Print state and transition counts to stderr.")
def compile_cmd(pattern, stage, window, out, dot, stats):
    """Compile a pattern file into an automaton document."""
    with _mapped_errors():
        _, expr = _load_pattern(pattern, window)
        a = _build_stage(expr, stage)
        _emit_automaton(a, out, dot, stats)


@main.command()
@click.argument("pattern", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", default="-", show_default=True,
              help="Event stream file, '-' for stdin.")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl",
              show_default=True)
@click.option("--window", type=click.IntRange(min=1), default=None,
              help="Window width; overrides any 'within' in the pattern.")
@click.option("--cap", type=click.IntRange(min=1), default=100_000, show_default=True,
              help="Maximum simultaneous configurations.")
@click.option("--report-empty-match", is_flag=True,
              help="Also report a match at index 0 when the pattern accepts the empty stream.")
@click.option("--strict", is_flag=True, help="Abort on the first malformed input line.")
def recognize(pattern, input_path, fmt, window, cap, report_empty_match, strict):
    """Run a pattern over an event stream, reporting match indexes as JSONL."""
    with _mapped_errors():
        _, expr = _load_pattern(pattern, window)
        if isinstance(expr, Window):
            a = compiler.streaming_automaton(compiler.compile_windowed(expr))
        else:
            a = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(expr)))
        engine = StreamEngine(a, cap=cap)
        if report_empty_match and engine.matched_at_start:
            _emit_record({"index": 0})
        with contextlib.closing(_open_input(input_path)) as fp:
            for event in read_events(fp, fmt, strict, _stderr_diagnostic):
                if engine.step(event):
                    _emit_record({"index": engine.consumed})


def _load_or_build(pattern, automaton_path, window, build):
    if (pattern is None) == (automaton_path is None):
        raise click.UsageError("give either PATTERN or --automaton")
    if automaton_path is not None:
        a, _library = serialize.automaton_from_doc(serialize.load(automaton_path))
        return build(a)
    _, expr = _load_pattern(pattern, window)
    return build(expr)


@main.command()
@click.argument("pattern", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--automaton", "automaton_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Determinize a saved unrolled automaton instead.")
@click.option("--window", type=click.IntRange(min=1), default=None)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
@click.option("--dot", type=click.Path(dir_okay=False, writable=True), default=None)
@click.option("--stats", is_flag=True)
def determinize(pattern, automaton_path, window, out, dot, stats):
    """Determinize a windowed pattern (or saved unrolled automaton)."""
    with _mapped_errors():
        a = _load_or_build(pattern, automaton_path, window, compiler.determinize)
        _emit_automaton(a, out, dot, stats)


@main.command()
@click.argument("pattern", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--automaton", "automaton_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Complement a saved deterministic automaton instead.")
@click.option("--window", type=click.IntRange(min=1), default=None)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
@click.option("--dot", type=click.Path(dir_okay=False, writable=True), default=None)
@click.option("--stats", is_flag=True)
def complement(pattern, automaton_path, window, out, dot, stats):
    """Complete and complement a windowed pattern (or saved deterministic automaton)."""
    with _mapped_errors():
        a = _load_or_build(pattern, automaton_path, window, compiler.complete_and_complement)
        _emit_automaton(a, out, dot, stats)


@main.command(name="to-srem")
@click.argument("pattern", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--automaton", "automaton_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Translate a saved automaton instead.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def to_srem(pattern, automaton_path, out):
    """Translate an automaton back into an equivalent pattern."""
    with _mapped_errors():
        if (pattern is None) == (automaton_path is None):
            raise click.UsageError("give either PATTERN or --automaton")
        if automaton_path is not None:
            a, library = serialize.automaton_from_doc(serialize.load(automaton_path))
        else:
            library, expr = _load_pattern(pattern, None)
            body = expr.body if isinstance(expr, Window) else expr
            a = compiler.compile_expr(body)
        expr_back = compiler.sra_to_srem(a)
        text = unparse_pattern(library, expr_back) + "\n"
        if out:
            with open(out, "w", encoding="utf-8") as fp:
                fp.write(text)
        else:
            click.echo(text, nl=False)


@main.command()
@click.argument("pattern", type=click.Path(exists=True, dir_okay=False))
@click.option("--train", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Training event stream.")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl",
              show_default=True)
@click.option("--window", type=click.IntRange(min=1), default=None)
@click.option("--max-order", type=click.IntRange(min=0), default=5, show_default=True)
@click.option("--p-min", type=float, default=0.001, show_default=True)
@click.option("--ratio", type=float, default=1.05, show_default=True)
@click.option("--gamma", type=float, default=0.01, show_default=True)
@click.option("--alpha", type=float, default=0.0, show_default=True)
@click.option("--strict", is_flag=True, help="Abort on the first malformed input line.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True),
              help="Where to write the learned model document.")
def learn(pattern, train, fmt, window, max_order, p_min, ratio, gamma, alpha, strict, out):
    """Learn a forecasting model for a windowed pattern from a training stream."""
    with _mapped_errors():
        _, expr = _load_pattern(pattern, window)
        d = compiler.complete(compiler.determinize(expr))
        symbol_map = SymbolMap.for_automaton(d)
        with contextlib.closing(_open_input(train)) as fp:
            events = list(read_events(fp, fmt, strict, _stderr_diagnostic))
        symbols = symbolize(d, events, symbol_map)
        pst = Pst.learn(
            symbols,
            max_order=max_order,
            p_min=p_min,
            ratio=ratio,
            gamma=gamma,
            alpha=alpha,
            alphabet=symbol_map.symbols,
        )
        serialize.dump(serialize.model_to_doc(d, symbol_map, pst), out)
        click.echo(
            f"trained on {len(symbols)} symbols, tree has {len(pst.nodes)} contexts",
            err=True,
        )


@main.command(name="forecast")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", default="-", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl",
              show_default=True)
@click.option("--horizon", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--classify-window", type=click.IntRange(min=1), default=1, show_default=True,
              help="How many future steps count as an imminent match.")
@click.option("--threshold", type=click.FloatRange(0.0, 1.0), default=0.5, show_default=True)
@click.option("--emit-dist", is_flag=True, help="Include the waiting time distribution.")
@click.option("--strict", is_flag=True, help="Abort on the first malformed input line.")
def forecast_cmd(model, input_path, fmt, horizon, classify_window, threshold, emit_dist, strict):
    """Emit per-event match forecasts for an event stream."""
    with _mapped_errors():
        d, symbol_map, pst, _library = serialize.model_from_doc(serialize.load(model))
        runner = DeterministicRunner(d)
        history: deque = deque(maxlen=pst.max_order)
        index = 0
        with contextlib.closing(_open_input(input_path)) as fp:
            for event in read_events(fp, fmt, strict, _stderr_diagnostic):
                taken = runner.step(event)
                index += 1
                history.append(symbol_map.symbol_for(taken.condition))
                wd = forecast.waiting_time(
                    d, symbol_map, pst, runner.state, tuple(history), horizon=horizon
                )
                record = {
                    "index": index,
                    "regression": forecast.forecast_regression(wd),
                    "classification": forecast.forecast_classification(
                        wd, classify_window, threshold
                    ),
                }
                if emit_dist:
                    record["dist"] = list(wd.masses)
                    record["residual"] = wd.residual
                _emit_record(record)


def _event_payload(event: Event) -> dict:
    return event.as_dict()


@main.command()
@click.argument("pattern", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", default=None,
              help="Event stream to test for membership as one complete string.")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl",
              show_default=True)
@click.option("--enumerate", "enumerate_", is_flag=True,
              help="Enumerate strings over a finite universe instead.")
@click.option("--universe", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Events making up the enumeration universe.")
@click.option("--max-len", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--sample", type=click.IntRange(min=1), default=None,
              help="Randomly sample this many strings instead of all of them.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for --sample.")
@click.option("--strict", is_flag=True, help="Abort on the first malformed input line.")
def oracle(pattern, input_path, fmt, enumerate_, universe, max_len, sample, seed, strict):
    """Decide membership directly from the pattern, without automata.

    Slow but simple; meant as ground truth for checking the pipeline."""
    with _mapped_errors():
        from .pattern import accepts

        _, expr = _load_pattern(pattern, None)
        if enumerate_:
            if universe is None:
                raise click.UsageError("--enumerate needs --universe")
            with contextlib.closing(_open_input(universe)) as fp:
                events = list(read_events(fp, fmt, strict, _stderr_diagnostic))
            strings = [
                list(s)
                for n in range(max_len + 1)
                for s in itertools.product(events, repeat=n)
            ]
            if sample is not None and sample < len(strings):
                strings = random.Random(seed).sample(strings, sample)
            for s in strings:
                _emit_record(
                    {"events": [_event_payload(ev) for ev in s], "accepts": accepts(expr, s)}
                )
        else:
            if input_path is None:
                raise click.UsageError("give --input or --enumerate")
            with contextlib.closing(_open_input(input_path)) as fp:
                events = list(read_events(fp, fmt, strict, _stderr_diagnostic))
            _emit_record({"accepts": accepts(expr, events)})


if __name__ == "__main__":
    main()
