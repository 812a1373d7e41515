"""Versioned JSON documents for automata, symbol maps, prediction suffix
trees, and the combined learned model, enabling compile-once/run-many.

Conditions are stored in pattern syntax and predicates as their declaration
lines, so a document is self-contained: loading re-declares the predicates
and re-parses each condition against them."""

from __future__ import annotations

import json
from typing import IO, Union

from .algebra import Atom, Condition, Not, And, Or, PredicateLibrary, Register
from .automaton import Sra, Transition
from .forecast import Pst, SymbolMap
from .pattern import parse_condition, parse_predicates, unparse_condition

FORMAT_SRA = "sra"
FORMAT_PST = "pst"
FORMAT_MODEL = "cerf-model"
VERSION = 1


def _used_predicates(condition: Condition, into: set) -> None:
    if isinstance(condition, Atom):
        into.add(condition.predicate)
    elif isinstance(condition, Not):
        _used_predicates(condition.operand, into)
    elif isinstance(condition, (And, Or)):
        _used_predicates(condition.left, into)
        _used_predicates(condition.right, into)


def _predicate_sources(conditions) -> list[str]:
    preds = set()
    for cond in conditions:
        if cond is not None:
            _used_predicates(cond, preds)
    sources = []
    for pred in sorted(preds, key=lambda p: p.name):
        if not pred.source:
            raise ValueError(
                f"predicate {pred.name} has no declaration source and cannot be serialized"
            )
        sources.append(pred.source)
    return sources


def automaton_to_doc(a: Sra) -> dict:
    return {
        "format": FORMAT_SRA,
        "version": VERSION,
        "predicates": _predicate_sources(t.condition for t in a.transitions),
        "registers": sorted(r.name for r in a.registers),
        "states": sorted(a.states),
        "start": a.start,
        "finals": sorted(a.finals),
        "window": a.window,
        "deterministic": a.deterministic,
        "transitions": [
            {
                "source": t.source,
                "target": t.target,
                "condition": None if t.condition is None else unparse_condition(t.condition),
                "writes": sorted(r.name for r in t.writes),
            }
            for t in a.transitions
        ],
    }


def _check_header(doc: dict, expected: str) -> None:
    if not isinstance(doc, dict) or doc.get("format") != expected:
        raise ValueError(f"not a {expected} document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported {expected} document version {doc.get('version')!r}")


def automaton_from_doc(doc: dict) -> tuple[Sra, PredicateLibrary]:
    _check_header(doc, FORMAT_SRA)
    library = parse_predicates("\n".join(doc["predicates"]))
    register_names = list(doc["registers"])
    transitions = tuple(
        Transition(
            t["source"],
            t["target"],
            None
            if t["condition"] is None
            else parse_condition(t["condition"], library, register_names),
            frozenset(Register(name) for name in t["writes"]),
        )
        for t in doc["transitions"]
    )
    a = Sra(
        states=frozenset(doc["states"]),
        start=doc["start"],
        finals=frozenset(doc["finals"]),
        registers=frozenset(Register(name) for name in register_names),
        transitions=transitions,
        window=doc["window"],
        deterministic=doc["deterministic"],
    )
    return a, library


def symbol_map_to_entries(symbol_map: SymbolMap) -> list[dict]:
    return [
        {"condition": unparse_condition(cond), "symbol": sym}
        for cond, sym in symbol_map.items()
    ]


def symbol_map_from_entries(
    entries: list[dict], library: PredicateLibrary, register_names: list[str]
) -> SymbolMap:
    return SymbolMap(
        (parse_condition(e["condition"], library, register_names), e["symbol"])
        for e in entries
    )


def pst_to_doc(pst: Pst) -> dict:
    return {
        "format": FORMAT_PST,
        "version": VERSION,
        "max_order": pst.max_order,
        "alphabet": list(pst.alphabet),
        "nodes": [
            {"context": list(ctx), "distribution": dict(sorted(dist.items()))}
            for ctx, dist in sorted(pst.nodes.items())
        ],
    }


def pst_from_doc(doc: dict) -> Pst:
    _check_header(doc, FORMAT_PST)
    nodes = {tuple(n["context"]): n["distribution"] for n in doc["nodes"]}
    return Pst(doc["max_order"], doc["alphabet"], nodes)


def model_to_doc(automaton: Sra, symbol_map: SymbolMap, pst: Pst) -> dict:
    return {
        "format": FORMAT_MODEL,
        "version": VERSION,
        "automaton": automaton_to_doc(automaton),
        "symbol_map": symbol_map_to_entries(symbol_map),
        "pst": pst_to_doc(pst),
    }


def model_from_doc(doc: dict) -> tuple[Sra, SymbolMap, Pst, PredicateLibrary]:
    _check_header(doc, FORMAT_MODEL)
    automaton, library = automaton_from_doc(doc["automaton"])
    symbol_map = symbol_map_from_entries(
        doc["symbol_map"], library, doc["automaton"]["registers"]
    )
    pst = pst_from_doc(doc["pst"])
    return automaton, symbol_map, pst, library


def dump(doc: dict, target: Union[str, IO[str]]) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as fp:
            fp.write(text)
    else:
        target.write(text)


def load(source: Union[str, IO[str]]) -> dict:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fp:
            return json.load(fp)
    return json.load(source)
