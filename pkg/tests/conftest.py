import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cerf.algebra import (
    CURRENT,
    And,
    Atom,
    Event,
    PredicateLibrary,
    Register,
    comparison_predicate,
    join_predicate,
)
from cerf.automaton import Sra, Transition
from cerf.forecast import Pst, SymbolMap

E1_TEXT = '''
pred TypeIsT(x): x.type == "T"
pred TypeIsH(x): x.type == "H"
pred EqualId(x, y): x.id == y.id

(TypeIsT(~) -> r1) ; TRUE* ; (TypeIsH(~) & EqualId(~, r1))
'''

E3_TEXT = '''
pred TypeIsT(x): x.type == "T"
pred TypeIsH(x): x.type == "H"
pred EqualId(x, y): x.id == y.id

(TRUE* ; (TypeIsT(~) -> r1) ; TRUE* ; (TypeIsH(~) & EqualId(~, r1))) within 3
'''


def make_table1() -> list[Event]:
    rows = [
        ("T", 1, 22),
        ("T", 1, 24),
        ("T", 2, 32),
        ("H", 1, 70),
        ("H", 1, 68),
        ("T", 2, 33),
    ]
    return [Event.of(type=t, id=i, value=v) for t, i, v in rows]


def make_sensor_library() -> PredicateLibrary:
    lib = PredicateLibrary()
    lib.define(comparison_predicate("TypeIsT", "type", "==", "T"))
    lib.define(comparison_predicate("TypeIsH", "type", "==", "H"))
    lib.define(join_predicate("EqualId", "id", "==", "id"))
    return lib


def make_t_then_h_automaton() -> Sra:
    """T stored, anything, then same-id H: states q_s, q_1, q_f."""
    lib = make_sensor_library()
    r1 = Register("r1")
    type_t = Atom(lib.get("TypeIsT"), (CURRENT,))
    type_h = Atom(lib.get("TypeIsH"), (CURRENT,))
    equal_id = Atom(lib.get("EqualId"), (CURRENT, r1))
    from cerf.algebra import TRUE

    return Sra(
        states=frozenset({"q_s", "q_1", "q_f"}),
        start="q_s",
        finals=frozenset({"q_f"}),
        registers=frozenset({r1}),
        transitions=(
            Transition("q_s", "q_s", TRUE),
            Transition("q_s", "q_1", type_t, frozenset({r1})),
            Transition("q_1", "q_1", TRUE),
            Transition("q_1", "q_f", And(type_h, equal_id)),
        ),
    )


def make_two_state_dfa() -> Sra:
    """Two-state deterministic automaton over symbols a and b (final on b)."""
    sym_a = Atom(comparison_predicate("SymA", "sym", "==", "a"), (CURRENT,))
    sym_b = Atom(comparison_predicate("SymB", "sym", "==", "b"), (CURRENT,))
    return Sra(
        states=frozenset({"1", "2"}),
        start="1",
        finals=frozenset({"2"}),
        registers=frozenset(),
        transitions=(
            Transition("1", "1", sym_a),
            Transition("1", "2", sym_b),
            Transition("2", "1", sym_a),
            Transition("2", "2", sym_b),
        ),
        deterministic=True,
    )


def make_reference_pst() -> Pst:
    nodes = {
        (): {"a": 0.5, "b": 0.5},
        ("a",): {"a": 0.75, "b": 0.25},
        ("b",): {"a": 0.5, "b": 0.5},
        ("a", "a"): {"a": 0.75, "b": 0.25},
    }
    return Pst(3, ["a", "b"], nodes)


@pytest.fixture
def table1():
    return make_table1()


@pytest.fixture
def sensor_library():
    return make_sensor_library()


@pytest.fixture
def t_then_h():
    return make_t_then_h_automaton()


@pytest.fixture
def two_state_dfa():
    return make_two_state_dfa()


@pytest.fixture
def reference_pst():
    return make_reference_pst()


@pytest.fixture
def dfa_symbol_map(two_state_dfa):
    return SymbolMap.for_automaton(two_state_dfa)
