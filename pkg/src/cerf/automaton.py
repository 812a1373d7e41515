"""Symbolic register automata: data model, nondeterministic simulation,
the streaming recognition engine, the instrumented deterministic runner,
and DOT export."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .algebra import (
    EMPTY_VALUATION,
    And,
    Condition,
    EvalCounters,
    EvalScope,
    Event,
    Not,
    Or,
    Register,
    TrueCondition,
    Valuation,
    registers_of,
)
from .pattern import unparse_condition


class ConfigurationCapExceeded(RuntimeError):
    """The live configuration set outgrew its cap (pathological
    nondeterminism)."""


class NotDeterministic(ValueError):
    """The operation needs a deterministic automaton."""


class UnverifiableDeterminism(ValueError):
    """Determinism could not be decided syntactically and no test universe
    was supplied for exhaustive checking."""


class NoTransition(RuntimeError):
    """A deterministic run hit a state where no condition fires (the
    automaton is incomplete)."""


@dataclass(frozen=True)
class Transition:
    """One SRA transition. condition None encodes an ε-move, which consumes
    nothing and therefore writes nothing."""

    source: str
    target: str
    condition: Optional[Condition]
    writes: frozenset[Register] = frozenset()

    def __post_init__(self) -> None:
        if self.condition is None and self.writes:
            raise ValueError("an ε-transition cannot write registers")

    @property
    def is_epsilon(self) -> bool:
        return self.condition is None


@dataclass(frozen=True)
class Sra:
    """A symbolic register automaton.

    Immutable; the outgoing-transition index and the acyclicity flag are
    computed once at construction. `deterministic` is a constructor-asserted
    flag (set by constructions that guarantee it); `is_deterministic` checks
    the property.
    """

    states: frozenset[str]
    start: str
    finals: frozenset[str]
    registers: frozenset[Register]
    transitions: tuple[Transition, ...]
    window: Optional[int] = None
    deterministic: bool = False

    def __post_init__(self) -> None:
        if self.start not in self.states:
            raise ValueError("start state is not a state")
        if not self.finals <= self.states:
            raise ValueError("final states must be states")
        out: dict[str, list[Transition]] = {q: [] for q in self.states}
        for t in self.transitions:
            if t.source not in self.states or t.target not in self.states:
                raise ValueError(f"transition endpoints must be states: {t}")
            if t.condition is not None:
                unknown = registers_of(t.condition) - self.registers
                if unknown:
                    raise ValueError(f"condition reads unknown registers: {unknown}")
            if not t.writes <= self.registers:
                raise ValueError(f"transition writes unknown registers: {t.writes}")
            out[t.source].append(t)
        object.__setattr__(self, "_out", {q: tuple(ts) for q, ts in out.items()})

    def out(self, state: str) -> tuple[Transition, ...]:
        return self._out[state]  # type: ignore[attr-defined]

    @property
    def has_epsilon(self) -> bool:
        return any(t.is_epsilon for t in self.transitions)

    @property
    def is_single_write(self) -> bool:
        return all(len(t.writes) <= 1 for t in self.transitions)

    def is_acyclic(self) -> bool:
        """Kahn-style check over the transition graph."""
        indegree = {q: 0 for q in self.states}
        for t in self.transitions:
            indegree[t.target] += 1
        queue = [q for q, d in indegree.items() if d == 0]
        seen = 0
        while queue:
            q = queue.pop()
            seen += 1
            for t in self.out(q):
                indegree[t.target] -= 1
                if indegree[t.target] == 0:
                    queue.append(t.target)
        return seen == len(self.states)

    def stats(self) -> dict:
        return {
            "states": len(self.states),
            "transitions": len(self.transitions),
            "registers": len(self.registers),
            "finals": len(self.finals),
            "window": self.window,
            "deterministic": self.deterministic,
        }


@dataclass(frozen=True)
class Configuration:
    """A point in a run: 1-based index of the next element to consume, the
    current state, and the register contents."""

    index: int
    state: str
    valuation: Valuation

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("configuration index is 1-based")


def successors(a: Sra, c: Configuration, event: Optional[Event] = None) -> list[Configuration]:
    """All one-transition successors of a configuration.

    ε-moves keep the index and valuation; with `event` supplied, satisfied
    non-writing moves advance the index, and satisfied writing moves advance
    the index and store the event into the written registers.
    """
    result = []
    scope = EvalScope(c.valuation, strict=False) if event is not None else None
    for t in a.out(c.state):
        if t.is_epsilon:
            result.append(Configuration(c.index, t.target, c.valuation))
        elif event is not None and scope.evaluate(t.condition, event):
            v = c.valuation.set_many(t.writes, event) if t.writes else c.valuation
            result.append(Configuration(c.index + 1, t.target, v))
    return result


def _epsilon_closure(a: Sra, configs: set[tuple[str, Valuation]]) -> set[tuple[str, Valuation]]:
    closure = set(configs)
    stack = list(configs)
    while stack:
        state, v = stack.pop()
        for t in a.out(state):
            if t.is_epsilon:
                item = (t.target, v)
                if item not in closure:
                    closure.add(item)
                    stack.append(item)
    return closure


def run_accepts(a: Sra, events: Sequence[Event], cap: int = 100_000) -> bool:
    """Whether some run over exactly `events` ends in a final state.

    Breadth-wise configuration-set search with ε-closure interleaving and
    (state, valuation) deduplication."""
    current = _epsilon_closure(a, {(a.start, EMPTY_VALUATION)})
    if len(current) > cap:
        raise ConfigurationCapExceeded(
            f"{len(current)} live configurations exceed the cap of {cap}"
        )
    for event in events:
        advanced: set[tuple[str, Valuation]] = set()
        for state, v in current:
            scope = EvalScope(v, strict=False)
            for t in a.out(state):
                if not t.is_epsilon and scope.evaluate(t.condition, event):
                    v2 = v.set_many(t.writes, event) if t.writes else v
                    advanced.add((t.target, v2))
        current = _epsilon_closure(a, advanced)
        if len(current) > cap:
            raise ConfigurationCapExceeded(
                f"{len(current)} live configurations exceed the cap of {cap}"
            )
        if not current:
            return False
    return any(state in a.finals for state, _ in current)


def _literals(cond: Condition) -> Optional[list[tuple[Condition, bool]]]:
    """Flatten a conjunction into (base, sign) literals, or None when the
    shape is not a plain sign-conjunction."""
    if isinstance(cond, And):
        left = _literals(cond.left)
        right = _literals(cond.right)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(cond, Not):
        return [(cond.operand, False)]
    if isinstance(cond, (TrueCondition, Or)):
        return None if isinstance(cond, Or) else []
    return [(cond, True)]


def _syntactically_exclusive(c1: Condition, c2: Condition) -> Optional[bool]:
    l1 = _literals(c1)
    l2 = _literals(c2)
    if l1 is None or l2 is None:
        return None
    signs1 = dict(l1)
    for base, sign in l2:
        if base in signs1 and signs1[base] != sign:
            return True
    return None


def is_deterministic(
    a: Sra,
    universe: Optional[Iterable[Event]] = None,
    valuations: Optional[Iterable[Valuation]] = None,
) -> bool:
    """Whether at most one transition can fire at any state for any
    (event, valuation).

    Per state, each pair of outgoing conditions is first checked
    syntactically (two sign-conjunctions sharing a base condition with
    opposite signs cannot fire together). Pairs the syntactic check cannot
    decide are evaluated exhaustively over the supplied universe and
    valuations; without a universe such pairs raise UnverifiableDeterminism.
    """
    if a.has_epsilon:
        return False
    undecided: list[tuple[Condition, Condition]] = []
    for state in a.states:
        conds = [t.condition for t in a.out(state)]
        for i in range(len(conds)):
            for j in range(i + 1, len(conds)):
                verdict = _syntactically_exclusive(conds[i], conds[j])
                if verdict is None:
                    undecided.append((conds[i], conds[j]))
    if not undecided:
        return True
    if universe is None:
        raise UnverifiableDeterminism(
            "outgoing conditions are not one minterm family; supply a test universe"
        )
    events = list(universe)
    if valuations is None:
        if a.registers:
            raise UnverifiableDeterminism(
                "registers present; supply sample valuations for exhaustive checking"
            )
        vals = [EMPTY_VALUATION]
    else:
        vals = list(valuations)
    for c1, c2 in undecided:
        for event in events:
            for v in vals:
                scope = EvalScope(v, strict=False)
                if scope.evaluate(c1, event) and scope.evaluate(c2, event):
                    return False
    return True


class StreamEngine:
    """Nondeterministic recognition over an unbounded stream.

    The automaton must be ε-free and should be a streaming automaton (a ⊤*
    prefix built in), so restarting at every index is the automaton's own
    job; the engine never re-seeds. Configurations are deduplicated by
    (state, valuation)."""

    def __init__(self, automaton: Sra, cap: int = 100_000) -> None:
        if automaton.has_epsilon:
            raise ValueError("the streaming engine needs an epsilon-free automaton")
        self.automaton = automaton
        self.cap = cap
        self.consumed = 0
        self._configs: set[tuple[str, Valuation]] = {(automaton.start, EMPTY_VALUATION)}

    @property
    def matched_at_start(self) -> bool:
        """Whether the empty suffix already matches (before any event)."""
        return self.automaton.start in self.automaton.finals

    @property
    def live_configurations(self) -> frozenset[tuple[str, Valuation]]:
        return frozenset(self._configs)

    def step(self, event: Event) -> bool:
        """Consume one event; report whether a match completes at this index."""
        a = self.automaton
        advanced: set[tuple[str, Valuation]] = set()
        for state, v in self._configs:
            scope = EvalScope(v, strict=False)
            for t in a.out(state):
                if scope.evaluate(t.condition, event):
                    v2 = v.set_many(t.writes, event) if t.writes else v
                    advanced.add((t.target, v2))
        if len(advanced) > self.cap:
            raise ConfigurationCapExceeded(
                f"{len(advanced)} live configurations exceed the cap of {self.cap}"
            )
        self._configs = advanced
        self.consumed += 1
        return any(state in a.finals for state, _ in advanced)


class DeterministicRunner:
    """Single-configuration run over a deterministic automaton, optionally
    instrumented with evaluation counters.

    One step tries the current state's outgoing conditions in order and takes
    the first (only) one that fires, so it costs at most `outgoing
    conditions` condition evaluations; the per-event EvalScope caches
    register lookups, so at most `registers` register reads."""

    def __init__(self, automaton: Sra, counters: Optional[EvalCounters] = None) -> None:
        if not automaton.deterministic:
            raise NotDeterministic("runner needs an automaton built as deterministic")
        if automaton.has_epsilon:
            raise NotDeterministic("runner needs an epsilon-free automaton")
        self.automaton = automaton
        self.counters = counters
        self.state = automaton.start
        self.valuation = EMPTY_VALUATION
        self.consumed = 0

    @property
    def accepted(self) -> bool:
        return self.state in self.automaton.finals

    def step(self, event: Event) -> Transition:
        scope = EvalScope(self.valuation, strict=False, counters=self.counters)
        for t in self.automaton.out(self.state):
            if self.counters is not None:
                self.counters.condition_evals += 1
            if scope.evaluate(t.condition, event):
                self.state = t.target
                if t.writes:
                    self.valuation = self.valuation.set_many(t.writes, event)
                self.consumed += 1
                return t
        raise NoTransition(f"no transition fires at {self.state} on {event}")


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(a: Sra, name: str = "sra") -> str:
    """Graphviz rendering: finals double-circled, start marked, labels in
    pattern syntax with the written registers after a down arrow."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for state in sorted(a.states):
        shape = "doublecircle" if state in a.finals else "circle"
        lines.append(f"  {_dot_quote(state)} [shape={shape}];")
    lines.append(f"  __start -> {_dot_quote(a.start)};")
    for t in sorted(a.transitions, key=lambda t: (t.source, t.target)):
        if t.is_epsilon:
            label = "ε"
        else:
            label = unparse_condition(t.condition)
            if t.writes:
                label += " ↓ " + ",".join(sorted(r.name for r in t.writes))
        lines.append(
            f"  {_dot_quote(t.source)} -> {_dot_quote(t.target)} [label={_dot_quote(label)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
