"""Boolean-algebra substrate: events, registers, valuations, predicates,
conditions and minterm construction.

Everything here is immutable and hashable, so events, valuations and
conditions can be shared freely across threads and used as dictionary keys
(the streaming engine deduplicates configurations by (state, valuation)).
"""

from __future__ import annotations

import itertools
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

Value = Union[str, int, float]


class UnboundRegister(LookupError):
    """A condition atom read a register that holds no event."""


class NotAMinterm(ValueError):
    """The condition does not have the conjunct structure minterms() produces."""


class UnknownPredicate(KeyError):
    """No predicate with this name is registered in the library."""


# ---------------------------------------------------------------------------
# Events and registers


@dataclass(frozen=True)
class Event:
    """One element of the universe: a flat record of named attributes.

    Attribute values are text or numbers. Two events compare equal iff all
    their attributes match exactly.
    """

    attrs: tuple[tuple[str, Value], ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.attrs]
        if any(not n for n in names):
            raise ValueError("attribute names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique within an event")

    @classmethod
    def of(cls, **attrs: Value) -> "Event":
        return cls(tuple(sorted(attrs.items())))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Value]) -> "Event":
        return cls(tuple(sorted(mapping.items())))

    def get(self, name: str, default: Optional[Value] = None) -> Optional[Value]:
        for key, value in self.attrs:
            if key == name:
                return value
        return default

    def __getitem__(self, name: str) -> Value:
        value = self.get(name)
        if value is None and self.get(name, _MISSING) is _MISSING:
            raise KeyError(name)
        return value  # type: ignore[return-value]

    def as_dict(self) -> dict[str, Value]:
        return dict(self.attrs)

    def __str__(self) -> str:
        return "(" + ",".join(str(v) for _, v in self.attrs) + ")"


_MISSING = object()


@dataclass(frozen=True, order=True)
class Register:
    """A named storage cell for one event. The name is the identity; callers
    keep names unique within one expression/automaton scope."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CurrentElement:
    """Marker for the element currently being consumed (written ~)."""

    def __repr__(self) -> str:
        return "~"


CURRENT = CurrentElement()

Argument = Union[Register, CurrentElement]


@dataclass(frozen=True)
class Valuation:
    """Partial mapping from registers to events; an absent entry is an empty
    register. Substitution returns a fresh valuation."""

    entries: tuple[tuple[Register, Event], ...] = ()

    def get(self, register: Register) -> Event:
        for reg, event in self.entries:
            if reg == register:
                return event
        raise UnboundRegister(register.name)

    def lookup(self, register: Register) -> Optional[Event]:
        for reg, event in self.entries:
            if reg == register:
                return event
        return None

    def is_bound(self, register: Register) -> bool:
        return any(reg == register for reg, _ in self.entries)

    def set(self, register: Register, event: Event) -> "Valuation":
        kept = tuple((r, e) for r, e in self.entries if r != register)
        return Valuation(tuple(sorted(kept + ((register, event),))))

    def set_many(self, registers: Iterable[Register], event: Event) -> "Valuation":
        targets = set(registers)
        if not targets:
            return self
        kept = tuple((r, e) for r, e in self.entries if r not in targets)
        added = tuple((r, event) for r in sorted(targets))
        return Valuation(tuple(sorted(kept + added)))

    def bound_registers(self) -> frozenset[Register]:
        return frozenset(r for r, _ in self.entries)

    def __str__(self) -> str:
        if not self.entries:
            return "{}"
        return "{" + ", ".join(f"{r.name}={e}" for r, e in self.entries) + "}"


EMPTY_VALUATION = Valuation()


# ---------------------------------------------------------------------------
# Predicates


@dataclass(frozen=True)
class Predicate:
    """A named n-ary relation over events. The evaluator must be a pure, total
    function of its event arguments."""

    name: str
    arity: int
    evaluator: Callable[..., bool] = field(compare=False)
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError("predicate arity must be at least 1")

    def __call__(self, *events: Event) -> bool:
        if len(events) != self.arity:
            raise TypeError(f"{self.name} expects {self.arity} arguments")
        return bool(self.evaluator(*events))


def _compare_values(left: Optional[Value], op: str, right: Optional[Value]) -> bool:
    if left is None or right is None:
        return False
    numeric = isinstance(left, (int, float)) and isinstance(right, (int, float))
    textual = isinstance(left, str) and isinstance(right, str)
    if not (numeric or textual):
        return False
    fn = {
        "==": operator.eq,
        "!=": operator.ne,
        "<": operator.lt,
        "<=": operator.le,
        ">": operator.gt,
        ">=": operator.ge,
    }[op]
    return bool(fn(left, right))


def comparison_predicate(name: str, attr: str, op: str, constant: Value) -> Predicate:
    """Unary predicate comparing an attribute of the argument to a constant."""

    def ev(event: Event) -> bool:
        return _compare_values(event.get(attr), op, constant)

    rendered = f'"{constant}"' if isinstance(constant, str) else repr(constant)
    source = f"pred {name}(x): x.{attr} {op} {rendered}"
    return Predicate(name, 1, ev, source)


def join_predicate(name: str, left_attr: str, op: str, right_attr: str) -> Predicate:
    """Binary predicate comparing an attribute of the first argument to an
    attribute of the second (typically ~ against a register's event)."""

    def ev(left: Event, right: Event) -> bool:
        return _compare_values(left.get(left_attr), op, right.get(right_attr))

    source = f"pred {name}(x, y): x.{left_attr} {op} y.{right_attr}"
    return Predicate(name, 2, ev, source)


ALWAYS = Predicate("Always", 1, lambda event: True, "pred Always(x): x.Always == x.Always")


class PredicateLibrary:
    """Registry of named predicates; pattern atoms resolve against one."""

    def __init__(self, predicates: Iterable[Predicate] = ()) -> None:
        self._by_name: dict[str, Predicate] = {}
        for pred in predicates:
            self.define(pred)

    def define(self, predicate: Predicate) -> Predicate:
        existing = self._by_name.get(predicate.name)
        if existing is not None and existing is not predicate:
            raise ValueError(f"predicate {predicate.name} is already defined")
        self._by_name[predicate.name] = predicate
        return predicate

    def get(self, name: str) -> Predicate:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownPredicate(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def names(self) -> list[str]:
        return sorted(self._by_name)


# ---------------------------------------------------------------------------
# Conditions


class Condition:
    """Base class for Boolean formulas over predicate atoms whose arguments
    are registers or the current-element marker."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueCondition(Condition):
    def __repr__(self) -> str:
        return "TRUE"


TRUE = TrueCondition()


@dataclass(frozen=True)
class Atom(Condition):
    predicate: Predicate
    args: tuple[Argument, ...]

    def __post_init__(self) -> None:
        if len(self.args) != self.predicate.arity:
            raise ValueError(
                f"{self.predicate.name} has arity {self.predicate.arity}, got {len(self.args)} arguments"
            )


@dataclass(frozen=True)
class Not(Condition):
    operand: Condition


@dataclass(frozen=True)
class And(Condition):
    left: Condition
    right: Condition


@dataclass(frozen=True)
class Or(Condition):
    left: Condition
    right: Condition


def conjoin(conditions: Sequence[Condition]) -> Condition:
    """Left-fold a sequence into a conjunction; empty sequence is TRUE."""
    if not conditions:
        return TRUE
    result = conditions[0]
    for cond in conditions[1:]:
        result = And(result, cond)
    return result


def registers_of(condition: Condition) -> frozenset[Register]:
    """The register selection: every register appearing in any atom."""
    if isinstance(condition, Atom):
        return frozenset(a for a in condition.args if isinstance(a, Register))
    if isinstance(condition, Not):
        return registers_of(condition.operand)
    if isinstance(condition, (And, Or)):
        return registers_of(condition.left) | registers_of(condition.right)
    return frozenset()


def substitute_registers(condition: Condition, mapping: Mapping[Register, Register]) -> Condition:
    """Rewrite register arguments through a mapping (identity where absent)."""
    if isinstance(condition, Atom):
        args = tuple(
            mapping.get(a, a) if isinstance(a, Register) else a for a in condition.args
        )
        return Atom(condition.predicate, args)
    if isinstance(condition, Not):
        return Not(substitute_registers(condition.operand, mapping))
    if isinstance(condition, And):
        return And(
            substitute_registers(condition.left, mapping),
            substitute_registers(condition.right, mapping),
        )
    if isinstance(condition, Or):
        return Or(
            substitute_registers(condition.left, mapping),
            substitute_registers(condition.right, mapping),
        )
    return condition


@dataclass
class EvalCounters:
    """Instrumentation counters for the step-cost contract: one deterministic
    engine step must stay within c condition evaluations and k register reads."""

    condition_evals: int = 0
    register_reads: int = 0

    def reset(self) -> None:
        self.condition_evals = 0
        self.register_reads = 0


class EvalScope:
    """Per-event evaluation scope. Caches register lookups so each register is
    read from the valuation at most once per consumed event, which is what
    keeps the deterministic step within k register reads."""

    def __init__(
        self,
        valuation: Valuation,
        *,
        strict: bool = True,
        counters: Optional[EvalCounters] = None,
    ) -> None:
        self.valuation = valuation
        self.strict = strict
        self.counters = counters
        self._cache: dict[Register, Optional[Event]] = {}

    def _read(self, register: Register) -> Optional[Event]:
        if register not in self._cache:
            if self.counters is not None:
                self.counters.register_reads += 1
            self._cache[register] = self.valuation.lookup(register)
        return self._cache[register]

    def evaluate(self, condition: Condition, current: Event) -> bool:
        if isinstance(condition, TrueCondition):
            return True
        if isinstance(condition, Atom):
            resolved = []
            for arg in condition.args:
                if isinstance(arg, CurrentElement):
                    resolved.append(current)
                else:
                    event = self._read(arg)
                    if event is None:
                        if self.strict:
                            raise UnboundRegister(arg.name)
                        # Total semantics: an atom reading an empty register
                        # does not hold.
                        return False
                    resolved.append(event)
            return condition.predicate(*resolved)
        if isinstance(condition, Not):
            return not self.evaluate(condition.operand, current)
        if isinstance(condition, And):
            return self.evaluate(condition.left, current) and self.evaluate(
                condition.right, current
            )
        if isinstance(condition, Or):
            return self.evaluate(condition.left, current) or self.evaluate(
                condition.right, current
            )
        raise TypeError(f"not a condition: {condition!r}")


def evaluate_condition(
    condition: Condition,
    current: Event,
    valuation: Valuation,
    *,
    strict: bool = True,
) -> bool:
    """Truth value of a condition against the current element and valuation.

    With strict=True (the default) an atom that reads an unbound register
    raises UnboundRegister, signalling an ill-sequenced pattern. Engines and
    the derivation oracle evaluate with strict=False, where such an atom is
    simply false and Boolean operators stay classical.
    """
    return EvalScope(valuation, strict=strict).evaluate(condition, current)


# ---------------------------------------------------------------------------
# Minterms


def minterms(conditions: Sequence[Condition]) -> tuple[Condition, ...]:
    """Maximal satisfiable sign combinations of the given conditions.

    Each input condition appears exactly once per raw minterm, positively or
    negated. Simplification is syntactic only: positive TRUE conjuncts are
    dropped and any minterm containing a negated TRUE is removed as
    unsatisfiable. The returned minterms are pairwise mutually exclusive and
    exhaustive: exactly one holds for any (event, valuation).
    """
    base = list(dict.fromkeys(conditions))
    if not base:
        return (TRUE,)
    out: list[Condition] = []
    for signs in itertools.product((True, False), repeat=len(base)):
        if any(cond == TRUE and not positive for cond, positive in zip(base, signs)):
            continue  # contains a negated TRUE: syntactically unsatisfiable
        literals = [
            cond if positive else Not(cond)
            for cond, positive in zip(base, signs)
            if cond != TRUE
        ]
        out.append(conjoin(literals))
    return tuple(out)


def _and_closure(condition: Condition, acc: set) -> None:
    acc.add(condition)
    if isinstance(condition, And):
        _and_closure(condition.left, acc)
        _and_closure(condition.right, acc)


def entails(minterm: Condition, condition: Condition) -> bool:
    """Whether a minterm entails one of the conditions it was built from.

    True iff the condition occurs as a positive conjunct anywhere on the
    minterm's conjunction spine. The tautology is entailed by every minterm
    (its conjunct is dropped during simplification, but everything implies
    TRUE). Descending the full spine rather than only the top-level fold
    keeps the test exact when a base condition is itself a conjunction.
    """
    if not isinstance(minterm, (TrueCondition, Atom, Not, And, Or)):
        raise NotAMinterm(repr(minterm))
    if condition == TRUE:
        return True
    acc: set = set()
    _and_closure(minterm, acc)
    return condition in acc
